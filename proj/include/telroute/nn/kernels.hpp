#pragma once

#include <cstddef>

// Dense inner loops of the autodiff engine. Every kernel has a portable
// scalar reference and an AVX2/FMA variant; the variant is picked once at
// startup from CPUID and can be overridden with TELROUTE_ISA=scalar|avx2.
// All matrices are row-major.
namespace telroute::nn::kernels {

enum class Isa { Scalar, Avx2 };

const char* to_string(Isa isa);
bool supported(Isa isa);
Isa active_isa();
// Switches the dispatch table; returns the previous ISA. Throws if unsupported.
Isa force_isa(Isa isa);

struct Table {
  // c[n x m] = a[n x k] * b[k x m]   (c += ... when accumulate)
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                  std::size_t m, bool accumulate);
  // c[k x m] += a[n x k]^T * g[n x m]
  void (*gemm_tn)(const double* a, const double* g, double* c, std::size_t n, std::size_t k,
                  std::size_t m);
  // c[n x k] += g[n x m] * b[k x m]^T
  void (*gemm_nt)(const double* g, const double* b, double* c, std::size_t n, std::size_t k,
                  std::size_t m);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
};

const Table& table(Isa isa);
const Table& active();

inline void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m, bool accumulate = false) {
  active().gemm_nn(a, b, c, n, k, m, accumulate);
}
inline void gemm_tn(const double* a, const double* g, double* c, std::size_t n, std::size_t k,
                    std::size_t m) {
  active().gemm_tn(a, g, c, n, k, m);
}
inline void gemm_nt(const double* g, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m) {
  active().gemm_nt(g, b, c, n, k, m);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline double dot(const double* x, const double* y, std::size_t n) { return active().dot(x, y, n); }

namespace scalar {
extern const Table kTable;
}
namespace avx2 {
// Only valid to call when supported(Isa::Avx2).
extern const Table kTable;
}

}  // namespace telroute::nn::kernels
