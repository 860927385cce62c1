#include "telroute/nn/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace telroute::nn::kernels {

namespace {

Isa detect() {
  if (const char* env = std::getenv("TELROUTE_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::Scalar;
    if (want == "avx2" && supported(Isa::Avx2)) return Isa::Avx2;
  }
  return supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

Isa& current() {
  static Isa isa = detect();
  return isa;
}

}  // namespace

const char* to_string(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "?";
}

bool supported(Isa isa) {
  if (isa == Isa::Scalar) return true;
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return current(); }

Isa force_isa(Isa isa) {
  if (!supported(isa)) {
    throw std::runtime_error(std::string("ISA not supported on this CPU: ") + to_string(isa));
  }
  const Isa previous = current();
  current() = isa;
  return previous;
}

const Table& table(Isa isa) { return isa == Isa::Avx2 ? avx2::kTable : scalar::kTable; }

const Table& active() { return table(current()); }

}  // namespace telroute::nn::kernels
