#include <cmath>

#include <gtest/gtest.h>

#include "nrs/data.hpp"
#include "nrs/hessian.hpp"
#include "support/oracles.hpp"

using namespace nrs;

namespace {

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

MatVec diagonal(std::vector<double> d) {
  return [d](std::span<const double> v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = d[i] * v[i];
    return out;
  };
}

struct Problem {
  MlpSpec spec;
  ParameterVector theta;
  Batch batch;
};

Problem small_problem(std::uint64_t seed, std::vector<std::size_t> widths = {2, 8, 2},
                      Activation act = Activation::Tanh) {
  Problem pr{MlpSpec{std::move(widths), act}, {}, {}};
  pr.theta = init_params(pr.spec, seed);
  RngStream rng(seed + 100);
  for (double& v : pr.theta.span()) v += rng.normal(0.0, 0.2);  // non-zero biases
  const std::size_t K = pr.spec.num_classes();
  pr.batch.inputs = Tensor(Shape{12, pr.spec.input_dim()});
  for (double& v : pr.batch.inputs.data()) v = rng.normal();
  for (std::size_t i = 0; i < 12; ++i) pr.batch.labels.push_back(rng.below(K));
  return pr;
}

GradientFn grad_of(const Problem& pr) {
  return [&pr](const ParameterVector& p) { return empirical_loss(pr.spec, p, pr.batch).gradient; };
}

std::function<double(const oracle::Vec&)> loss_of(const Problem& pr) {
  return [&pr](const oracle::Vec& p) {
    return cross_entropy(forward(pr.spec, ParameterVector(p), pr.batch.inputs), pr.batch.labels);
  };
}

oracle::Mat to_mat(const Tensor& t) {
  oracle::Mat m(t.rows(), oracle::Vec(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

}  // namespace

TEST(Hvp, QuadraticIsExact) {
  const double lambda = 3.5;
  const GradientFn grad = [&](const ParameterVector& p) { return lambda * p; };
  const ParameterVector theta(std::vector<double>{0.3, -1.0, 2.0});
  const ParameterVector v(std::vector<double>{1.0, 2.0, -0.5});
  const ParameterVector hv = hvp(grad, theta, v);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(hv[i], lambda * v[i], 1e-9);
}

TEST(Hvp, LinearInDirection) {
  const Problem pr = small_problem(1);
  RngStream rng(2);
  ParameterVector v(pr.theta.size());
  for (double& x : v.span()) x = rng.normal();
  const ParameterVector a = hvp(grad_of(pr), pr.theta, v);
  for (double c : {0.01, 3.0, -7.0}) {
    const ParameterVector b = hvp(grad_of(pr), pr.theta, c * v);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], c * a[i], 1e-8 * std::max(1.0, std::abs(c * a[i])));
  }
}

TEST(Hvp, MatchesDenseFiniteDifferenceHessian) {
  for (std::uint64_t seed : {3u, 4u}) {
    const Problem pr = small_problem(seed);
    ASSERT_LE(pr.theta.size(), 200u);
    const oracle::Mat H = oracle::fd_hessian(loss_of(pr), pr.theta.values());
    RngStream rng(seed * 7);
    for (int trial = 0; trial < 3; ++trial) {
      const oracle::Vec v = oracle::uniform_vec(pr.theta.size(), rng, -1.0, 1.0);
      const ParameterVector hv = hvp(grad_of(pr), pr.theta, ParameterVector(v));
      EXPECT_LT(rel_diff(hv.values(), oracle::mat_vec(H, v)), 1e-4) << "seed " << seed;
    }
  }
}

TEST(Hvp, SymmetricBilinearForm) {
  const Problem pr = small_problem(5, {3, 10, 10, 3});
  RngStream rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    ParameterVector u(pr.theta.size()), v(pr.theta.size());
    for (double& x : u.span()) x = rng.normal();
    for (double& x : v.span()) x = rng.normal();
    const double uhv = dot(u, hvp(grad_of(pr), pr.theta, v));
    const double vhu = dot(v, hvp(grad_of(pr), pr.theta, u));
    EXPECT_NEAR(uhv, vhu, 1e-6 * std::max(std::abs(uhv), 1.0));
  }
}

TEST(Hvp, StepSizeSensitivity) {
  // Truncation error is O(h^2) and roundoff O(eps / h); the default sits in the flat part.
  const Problem pr = small_problem(7);
  RngStream rng(8);
  ParameterVector v(pr.theta.size());
  for (double& x : v.span()) x = rng.normal();
  const oracle::Mat H = oracle::fd_hessian(loss_of(pr), pr.theta.values());
  const oracle::Vec ref = oracle::mat_vec(H, v.values());
  for (double h : {1e-3, 1e-4, 1e-5}) EXPECT_LT(rel_diff(hvp(grad_of(pr), pr.theta, v, h).values(), ref), 1e-4) << h;
  EXPECT_GT(rel_diff(hvp(grad_of(pr), pr.theta, v, 1e-11).values(), ref),
            rel_diff(hvp(grad_of(pr), pr.theta, v, 1e-4).values(), ref));
}

TEST(Hvp, Errors) {
  const GradientFn grad = [](const ParameterVector& p) { return p; };
  EXPECT_THROW(hvp(grad, ParameterVector(3, 1.0), ParameterVector(3)), ContractError);
  EXPECT_THROW(hvp(grad, ParameterVector(3, 1.0), ParameterVector(2, 1.0)), ContractError);
  const GradientFn bad = [](const ParameterVector& p) { return ParameterVector(p.size(), std::nan("")); };
  EXPECT_THROW(hvp(bad, ParameterVector(3, 1.0), ParameterVector(3, 1.0)), NumericError);
}

TEST(LambdaMax, DiagonalOperator) {
  const SpectrumResult r = lambda_max(diagonal({1, 2, 5}), 3);
  EXPECT_NEAR(r.lambda_max, 5.0, 1e-6);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.residual, 1e-4 * 5.0);
}

TEST(LambdaMax, Identity) {
  for (std::size_t dim : {1u, 7u, 300u}) EXPECT_NEAR(lambda_max(diagonal(std::vector<double>(dim, 1.0)), dim).lambda_max, 1.0, 1e-12);
}

TEST(LambdaMax, ZeroOperator) {
  const SpectrumResult r = lambda_max(diagonal({0, 0, 0, 0}), 4);
  EXPECT_EQ(r.lambda_max, 0.0);
  EXPECT_EQ(r.residual, 0.0);
  EXPECT_TRUE(r.converged);
}

TEST(LambdaMax, NegativeDominantEigenvalue) {
  EXPECT_NEAR(lambda_max(diagonal({-5, 2, 0.5}), 3).lambda_max, 2.0, 1e-6);
  EXPECT_NEAR(lambda_max(diagonal({-1, -3}), 2).lambda_max, -1.0, 1e-6);
  EXPECT_NEAR(lambda_max(diagonal({-5, 5, 1}), 3).lambda_max, 5.0, 1e-6);
}

TEST(LambdaMax, RandomSymmetricMatchesJacobi) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(seed);
    const oracle::Mat m = oracle::random_symmetric(20, rng);
    const double top = oracle::jacobi_eigenvalues(m).back();
    const Tensor t = oracle::to_tensor(m);
    const SpectrumResult r = lambda_max(dense_operator(t), 20, PowerIterationOptions{1e-12, 200000, seed});
    EXPECT_NEAR(r.lambda_max, top, 1e-6) << "seed " << seed;
  }
}

TEST(LambdaMax, DimZeroRejected) { EXPECT_THROW(lambda_max(diagonal({}), 0), ContractError); }

TEST(LastLayerHessian, SymmetricPositiveSemidefinite) {
  const Problem pr = small_problem(9, {3, 6, 4}, Activation::Relu);
  const Tensor H = last_layer_hessian(pr.spec, pr.theta, pr.batch.inputs);
  ASSERT_EQ(H.rows(), 7u * 4);
  for (std::size_t i = 0; i < H.rows(); ++i)
    for (std::size_t j = 0; j < H.cols(); ++j) EXPECT_EQ(H.at(i, j), H.at(j, i));
  EXPECT_GE(oracle::jacobi_eigenvalues(to_mat(H)).front(), -1e-10);
}

TEST(LastLayerHessian, SaturatedPredictionsGiveNearZeroBlock) {
  Problem pr = small_problem(10, {2, 4, 3}, Activation::Tanh);
  const std::size_t bias = layer_slot(pr.spec, 1).bias_offset;
  pr.theta[bias] = 200.0;
  const Tensor H = last_layer_hessian(pr.spec, pr.theta, pr.batch.inputs);
  double fro = 0.0;
  for (double x : H.values()) fro += x * x;
  EXPECT_LT(std::sqrt(fro), 1e-8);
}

TEST(LastLayerHessian, MatchesRestrictedFiniteDifferences) {
  for (std::uint64_t seed : {11u, 12u}) {
    const Problem pr = small_problem(seed, {3, 5, 3}, Activation::Tanh);
    const std::size_t off = last_layer_offset(pr.spec);
    const std::size_t D = pr.theta.size() - off;
    const oracle::Vec last(pr.theta.values().begin() + static_cast<std::ptrdiff_t>(off), pr.theta.values().end());
    auto restricted = [&](const oracle::Vec& w) {
      oracle::Vec full = pr.theta.values();
      std::copy(w.begin(), w.end(), full.begin() + static_cast<std::ptrdiff_t>(off));
      return loss_of(pr)(full);
    };
    const oracle::Mat ref = oracle::fd_hessian(restricted, last);
    const Tensor H = last_layer_hessian(pr.spec, pr.theta, pr.batch.inputs);
    ASSERT_EQ(H.rows(), D);
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j) EXPECT_NEAR(H.at(i, j), ref[i][j], 1e-4 * std::max(1.0, std::abs(ref[i][j])));
  }
}

TEST(LastLayerHessian, PowerIterationMatchesDenseTopEigenvalue) {
  const Problem pr = small_problem(13, {4, 8, 3}, Activation::Relu);
  const Tensor H = last_layer_hessian(pr.spec, pr.theta, pr.batch.inputs);
  const double top = oracle::jacobi_eigenvalues(to_mat(H)).back();
  const PowerIterationOptions opt{1e-10, 200000, 0};
  const SpectrumResult r = last_layer_lambda_max(pr.spec, pr.theta, pr.batch.inputs, opt);
  EXPECT_EQ(r.scope, SpectrumScope::LastLayer);
  EXPECT_NEAR(r.lambda_max, top, 1e-8 * std::max(1.0, top));
}

TEST(LastLayerHessian, SeedInvariance) {
  const Dataset ds = gen_two_moons(200, 0.2, 1);
  const MlpSpec spec{{2, 16, 16, 2}, Activation::Relu};
  const ParameterVector theta = init_params(spec, 5);
  const double tol = 1e-8;
  const double a = last_layer_lambda_max(spec, theta, ds.inputs, {tol, 20000, 1}).lambda_max;
  for (std::uint64_t seed : {2u, 3u, 4u}) {
    const double b = last_layer_lambda_max(spec, theta, ds.inputs, {tol, 20000, seed}).lambda_max;
    EXPECT_NEAR(a, b, 2 * tol * std::abs(a)) << seed;
  }
}

TEST(LastLayerHessian, TooLargeIsScopeError) {
  const MlpSpec spec{{2, 100, 60}, Activation::Relu};
  const ParameterVector theta(param_count(spec));
  EXPECT_THROW(last_layer_hessian(spec, theta, Tensor(Shape{1, 2})), ScopeError);
  const MlpSpec small{{2, 4, 2}, Activation::Relu};
  EXPECT_THROW(last_layer_hessian(small, ParameterVector(param_count(small)), Tensor(Shape{1, 2}), 9), ScopeError);
}

TEST(FullModel, LambdaMatchesDenseOracle) {
  const Problem pr = small_problem(14);
  const double top = oracle::jacobi_eigenvalues(oracle::fd_hessian(loss_of(pr), pr.theta.values())).back();
  const SpectrumResult r = full_model_lambda_max(pr.spec, pr.theta, pr.batch, {1e-8, 20000, 0});
  EXPECT_EQ(r.scope, SpectrumScope::FullModel);
  EXPECT_NEAR(r.lambda_max, top, 1e-4 * std::abs(top));
}

TEST(FullModel, BoundsLastLayerFromAbove) {
  // The last-layer block is a principal submatrix, so its top eigenvalue cannot exceed the full one.
  const Problem pr = small_problem(15);
  const double full = full_model_lambda_max(pr.spec, pr.theta, pr.batch, {1e-9, 20000, 0}).lambda_max;
  const double last = last_layer_lambda_max(pr.spec, pr.theta, pr.batch.inputs, {1e-9, 20000, 0}).lambda_max;
  EXPECT_LE(last, full * (1 + 1e-4));
}

TEST(Scope, Parse) {
  EXPECT_EQ(parse_scope("full"), SpectrumScope::FullModel);
  EXPECT_EQ(parse_scope("last_layer"), SpectrumScope::LastLayer);
  EXPECT_THROW(parse_scope("middle"), ConfigError);
}
