#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "telroute/nn/autodiff.hpp"
#include "telroute/nn/checkpoint.hpp"
#include "telroute/nn/kernels.hpp"
#include "telroute/nn/layers.hpp"
#include "telroute/nn/optim.hpp"

using namespace telroute;
using namespace telroute::nn;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
  Matrix m(r, c, 0.0);
  for (double& x : m.data) x = scale * rng.normal();
  return m;
}

// Reduces any matrix to a scalar with non-uniform weights so every entry's
// gradient differs.
Var weighted_sum(Tape& t, Var x) {
  Matrix w(x.rows(), x.cols(), 0.0);
  for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
  return sum(mul(x, t.constant(w)));
}

constexpr double kTol = 1e-4;

}  // namespace

TEST(Autodiff, SoftplusDerivativeAtZero) {
  Tape t;
  Var x = t.input(Matrix::scalar(0.0));
  Var y = sum(softplus(x));
  t.backward(y);
  EXPECT_NEAR(y.item(), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(x.grad().item(), 0.5);
}

TEST(Autodiff, LayerNormStandardizesRows) {
  Rng rng(1);
  Tape t;
  const Var y = layer_norm(t.input(random_matrix(rng, 6, 9, 3.0)));
  for (int r = 0; r < 6; ++r) {
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < 9; ++c) mean += y.value()(r, c);
    mean /= 9;
    for (int c = 0; c < 9; ++c) var += (y.value()(r, c) - mean) * (y.value()(r, c) - mean);
    var /= 9;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(Autodiff, ElementwiseOpsMatchFiniteDifferences) {
  Rng rng(2);
  const std::vector<std::pair<const char*, oracle::Builder>> ops = {
      {"add", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, v[0] + v[1]); }},
      {"sub", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, v[0] - v[1]); }},
      {"mul", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, v[0] * v[1]); }},
      {"leaky_relu", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, leaky_relu(v[0])); }},
      {"softplus", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, softplus(v[0])); }},
      {"exp", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, exp(v[0])); }},
      {"log", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, log(softplus(v[0]))); }},
      {"square", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, square(v[0])); }},
      {"minimum", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, minimum(v[0], v[1])); }},
      {"maximum", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, maximum(v[0], v[1])); }},
      {"clamp", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, clamp(v[0], -0.5, 0.7)); }},
      {"scale", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, add_scalar(scale(v[0], -2.5), 1.0)); }},
      {"neg", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, neg(v[0])); }},
      {"mean", [](Tape&, const std::vector<Var>& v) { return mean(square(v[0])); }},
      {"layer_norm", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, layer_norm(v[0])); }},
  };
  for (const auto& [name, f] : ops) {
    for (int trial = 0; trial < 3; ++trial) {
      const double err = oracle::input_gradient_error(f, {random_matrix(rng, 4, 5), random_matrix(rng, 4, 5)});
      EXPECT_LT(err, kTol) << name;
    }
  }
}

TEST(Autodiff, StructuralOpsMatchFiniteDifferences) {
  Rng rng(3);
  const std::vector<int> idx{2, 0, 0, 3, 1};
  const std::vector<int> seg{1, 0, 1, 3, 1, 0};  // segment 2 stays empty
  const std::vector<std::pair<const char*, oracle::Builder>> ops = {
      {"matmul", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, matmul(v[0], v[1])); }},
      {"add_row", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, add_row(v[0], slice_cols(v[2], 0, 5))); }},
      {"mul_row", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, mul_row(v[0], slice_cols(v[2], 0, 5))); }},
      {"scale_by", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, scale_by(v[0], slice_cols(v[2], 1, 1))); }},
      {"concat", [](Tape& t, const std::vector<Var>& v) {
         const std::vector<Var> parts{v[0], square(v[0]), slice_cols(v[0], 1, 2)};
         return weighted_sum(t, concat_cols(parts));
       }},
      {"gather", [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, gather_rows(v[3], idx)); }},
      {"segment_sum", [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, segment_sum(v[3], seg, 4)); }},
      {"segment_mean", [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, segment_mean(v[3], seg, 4)); }},
      {"segment_min", [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, segment_min(v[3], seg, 4)); }},
      {"segment_max", [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, segment_max(v[3], seg, 4)); }},
  };
  for (const auto& [name, f] : ops) {
    for (int trial = 0; trial < 3; ++trial) {
      const double err = oracle::input_gradient_error(
          f, {random_matrix(rng, 4, 5), random_matrix(rng, 5, 3), random_matrix(rng, 1, 6), random_matrix(rng, 6, 3)});
      EXPECT_LT(err, kTol) << name;
    }
  }
}

TEST(Autodiff, MinAggregationRoutesToFirstArgmin) {
  Tape t;
  Var x = t.input(Matrix(3, 1, {2.0, 1.0, 1.0}));
  const std::vector<int> seg{0, 0, 0};
  t.backward(sum(segment_min(x, seg, 1)));
  EXPECT_EQ(x.grad().data, (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(Autodiff, EmptySegmentsGiveZero) {
  Tape t;
  Var x = t.input(Matrix(2, 2, {1.0, 2.0, 3.0, 4.0}));
  const std::vector<int> seg{0, 0};
  EXPECT_EQ(segment_min(x, seg, 2).value().row(1)[0], 0.0);
  EXPECT_EQ(segment_mean(x, seg, 2).value().row(1)[1], 0.0);
}

TEST(Autodiff, ShapeMismatchThrows) {
  Tape t;
  Var a = t.input(Matrix(2, 3, 0.0));
  Var b = t.input(Matrix(2, 2, 0.0));
  EXPECT_ANY_THROW(add(a, b));
  EXPECT_ANY_THROW(matmul(a, b));
}

TEST(Autodiff, ThreeLayerMlpMatchesFiniteDifferences) {
  Rng rng(4);
  ParameterSet params;
  Mlp mlp(params, "mlp", 6, {16, 16}, 3, rng);
  const Matrix x = random_matrix(rng, 5, 6);
  const double err = oracle::parameter_gradient_error(
      [&](Tape& t) { return weighted_sum(t, mlp(t, t.constant(x))); }, params, rng, 20);
  EXPECT_LT(err, kTol);
  const double input_err = oracle::input_gradient_error(
      [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, mlp(t, v[0])); }, {x});
  EXPECT_LT(input_err, kTol);
}

TEST(Autodiff, GradientsAccumulateOverTapes) {
  ParameterSet params;
  Parameter& p = params.add("p", Matrix::scalar(3.0));
  for (int k = 0; k < 2; ++k) {
    Tape t;
    t.backward(sum(square(t.param(p))));
  }
  EXPECT_DOUBLE_EQ(p.grad.item(), 12.0);
  params.zero_grad();
  EXPECT_DOUBLE_EQ(p.grad.item(), 0.0);
}

TEST(Kernels, AvxMatchesScalarReference) {
  if (!kernels::supported(kernels::Isa::Avx2)) GTEST_SKIP() << "no AVX2 on this CPU";
  const kernels::Table& ref = kernels::table(kernels::Isa::Scalar);
  const kernels::Table& simd = kernels::table(kernels::Isa::Avx2);
  Rng rng(5);
  for (std::size_t n : {1u, 3u, 17u, 70u}) {
    for (std::size_t k : {1u, 5u, 32u, 33u}) {
      for (std::size_t m : {1u, 4u, 7u, 16u, 35u}) {
        const Matrix a = random_matrix(rng, static_cast<int>(n), static_cast<int>(k));
        const Matrix b = random_matrix(rng, static_cast<int>(k), static_cast<int>(m));
        const Matrix g = random_matrix(rng, static_cast<int>(n), static_cast<int>(m));
        for (bool acc : {false, true}) {
          Matrix c1 = random_matrix(rng, static_cast<int>(n), static_cast<int>(m));
          Matrix c2 = c1;
          ref.gemm_nn(a.data.data(), b.data.data(), c1.data.data(), n, k, m, acc);
          simd.gemm_nn(a.data.data(), b.data.data(), c2.data.data(), n, k, m, acc);
          EXPECT_LT(oracle::max_rel_error(c1, c2), 1e-12);
        }
        Matrix t1 = random_matrix(rng, static_cast<int>(k), static_cast<int>(m));
        Matrix t2 = t1;
        ref.gemm_tn(a.data.data(), g.data.data(), t1.data.data(), n, k, m);
        simd.gemm_tn(a.data.data(), g.data.data(), t2.data.data(), n, k, m);
        EXPECT_LT(oracle::max_rel_error(t1, t2), 1e-12);
        Matrix u1 = random_matrix(rng, static_cast<int>(n), static_cast<int>(k));
        Matrix u2 = u1;
        ref.gemm_nt(g.data.data(), b.data.data(), u1.data.data(), n, k, m);
        simd.gemm_nt(g.data.data(), b.data.data(), u2.data.data(), n, k, m);
        EXPECT_LT(oracle::max_rel_error(u1, u2), 1e-12);
      }
    }
  }
  for (std::size_t n : {0u, 1u, 3u, 4u, 9u, 31u, 64u}) {
    const Matrix x = random_matrix(rng, 1, static_cast<int>(n) + 1);
    Matrix y1 = random_matrix(rng, 1, static_cast<int>(n) + 1);
    Matrix y2 = y1;
    ref.axpy(0.7, x.data.data(), y1.data.data(), n);
    simd.axpy(0.7, x.data.data(), y2.data.data(), n);
    EXPECT_LT(oracle::max_rel_error(y1, y2), 1e-14);
    EXPECT_NEAR(ref.dot(x.data.data(), y1.data.data(), n), simd.dot(x.data.data(), y1.data.data(), n), 1e-12);
  }
}

TEST(Kernels, ForcedIsaGivesSameNetworkOutput) {
  if (!kernels::supported(kernels::Isa::Avx2)) GTEST_SKIP() << "no AVX2 on this CPU";
  Rng rng(6);
  ParameterSet params;
  Mlp mlp(params, "mlp", 8, {32, 32}, 2, rng);
  const Matrix x = random_matrix(rng, 40, 8);
  auto run = [&] {
    Tape t;
    return mlp(t, t.constant(x)).value();
  };
  const kernels::Isa before = kernels::force_isa(kernels::Isa::Scalar);
  const Matrix a = run();
  kernels::force_isa(kernels::Isa::Avx2);
  const Matrix b = run();
  kernels::force_isa(before);
  EXPECT_LT(oracle::max_rel_error(a, b), 1e-12);
}

TEST(Optim, ZeroGradientLeavesParametersUnchanged) {
  Rng rng(7);
  ParameterSet params;
  Linear l(params, "l", 3, 4, rng);
  const auto before = params.values();
  Adam opt(params, {});
  params.zero_grad();
  opt.step();
  EXPECT_EQ(params.values(), before);
}

TEST(Optim, ClipRescalesToMaxNorm) {
  ParameterSet params;
  Parameter& p = params.add("p", Matrix(1, 2, 0.0));
  Parameter& q = params.add("q", Matrix(1, 1, 0.0));
  p.grad = Matrix(1, 2, {3.0, 0.0});
  q.grad = Matrix(1, 1, {4.0});
  EXPECT_DOUBLE_EQ(grad_norm(params), 5.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 0.5), 5.0);
  EXPECT_NEAR(grad_norm(params), 0.5, 1e-15);
  EXPECT_NEAR(p.grad.data[0], 0.3, 1e-15);
  // Below the bound nothing changes.
  clip_grad_norm(params, 1.0);
  EXPECT_NEAR(grad_norm(params), 0.5, 1e-15);
}

TEST(Optim, AdamConvergesOnQuadratic) {
  ParameterSet params;
  Parameter& x = params.add("x", Matrix::scalar(-4.0));
  Adam opt(params, {.lr = 0.05});
  for (int i = 0; i < 1000; ++i) {
    params.zero_grad();
    Tape t;
    t.backward(sum(square(add_scalar(t.param(x), -1.5))));
    opt.step();
  }
  EXPECT_NEAR(x.value.item(), 1.5, 1e-3);
}

TEST(Optim, AdamFirstStepMovesByLearningRate) {
  ParameterSet params;
  Parameter& x = params.add("x", Matrix(1, 2, {1.0, 1.0}));
  Adam opt(params, {.lr = 0.1});
  x.grad = Matrix(1, 2, {2.0, -0.001});
  opt.step();
  EXPECT_NEAR(x.value.data[0], 0.9, 1e-6);
  EXPECT_NEAR(x.value.data[1], 1.1, 1e-4);
}

TEST(Optim, StateRoundTrip) {
  ParameterSet params;
  Parameter& x = params.add("x", Matrix(1, 2, {1.0, 2.0}));
  Adam a(params, {});
  x.grad = Matrix(1, 2, {0.5, -0.5});
  a.step();
  std::map<std::string, Matrix> state;
  a.export_state("opt/", state);
  Adam b(params, {});
  b.import_state("opt/", state);
  EXPECT_EQ(b.steps(), 1);
  std::map<std::string, Matrix> again;
  b.export_state("opt/", again);
  EXPECT_EQ(state, again);
}

TEST(Checkpoint, RoundTripAndDeterministicBytes) {
  std::map<std::string, Matrix> arrays{{"b", Matrix(2, 2, {1, 2, 3, 4})}, {"a", Matrix::scalar(-0.125)}};
  const auto dir = std::filesystem::temp_directory_path();
  save_arrays(dir / "telroute_ck1.bin", arrays);
  save_arrays(dir / "telroute_ck2.bin", arrays);
  EXPECT_EQ(load_arrays(dir / "telroute_ck1.bin"), arrays);
  std::ifstream f1(dir / "telroute_ck1.bin", std::ios::binary), f2(dir / "telroute_ck2.bin", std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(s1, s2);
  EXPECT_EQ(s1.substr(0, 8), "TELROUTE");
}

TEST(Checkpoint, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "telroute_bad.bin";
  std::ofstream(path, std::ios::binary) << "NOTACHECKPOINT";
  EXPECT_THROW(load_arrays(path), CheckpointError);
  EXPECT_THROW(load_arrays(path.string() + ".missing"), CheckpointError);
}

TEST(Layers, LoadValuesChecksNamesAndShapes) {
  Rng rng(8);
  ParameterSet a, b;
  Linear la(a, "l", 3, 2, rng);
  Linear lb(b, "l", 3, 2, rng);
  b.load_values(a.values());
  EXPECT_EQ(b.values(), a.values());
  auto wrong = a.values();
  wrong["l.w"] = Matrix(2, 2, 0.0);
  EXPECT_ANY_THROW(b.load_values(wrong));
  wrong = a.values();
  wrong.erase("l.b");
  EXPECT_ANY_THROW(b.load_values(wrong));
}
