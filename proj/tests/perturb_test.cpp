#include <cmath>

#include <gtest/gtest.h>

#include "nrs/perturb.hpp"

using namespace nrs;

TEST(WorkerRng, SameKeySameDraws) {
  RngStream a = worker_rng(7, 3, 1), b = worker_rng(7, 3, 1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(WorkerRng, EveryKeyComponentMatters) {
  const std::uint64_t ref = worker_rng(7, 3, 1).next_u64();
  EXPECT_NE(worker_rng(8, 3, 1).next_u64(), ref);
  EXPECT_NE(worker_rng(7, 4, 1).next_u64(), ref);
  EXPECT_NE(worker_rng(7, 3, 0).next_u64(), ref);
  // Swapping step and worker must not alias.
  EXPECT_NE(worker_rng(7, 1, 3).next_u64(), ref);
}

TEST(WorkerRng, WorkersAreUncorrelated) {
  RngStream a = worker_rng(123, 10, 0), b = worker_rng(123, 10, 1);
  const int n = 10000;
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < n; ++i) {
    const double x = a.normal(), y = b.normal();
    sa += x;
    sb += y;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  const double corr = cov / std::sqrt((saa / n - (sa / n) * (sa / n)) * (sbb / n - (sb / n) * (sb / n)));
  EXPECT_LT(std::abs(corr), 0.05);
}

TEST(SamplePerturbation, ZeroEpsilonIsZero) {
  RngStream rng = worker_rng(1, 0, 0);
  EXPECT_EQ(sample_perturbation(17, 0.0, rng), ParameterVector(17));
}

TEST(SamplePerturbation, NormIsExactlyEpsilon) {
  for (std::size_t dim : {1u, 2u, 10u, 1000u, 4482u}) {
    for (double eps : {0.05, 0.1, 0.5, 3.0}) {
      RngStream rng = worker_rng(dim, 1, 2);
      const double n = l2_norm(sample_perturbation(dim, eps, rng));
      EXPECT_NEAR(n, eps, 1e-12 * eps) << dim;
    }
  }
}

TEST(SamplePerturbation, DirectionIsIsotropic) {
  ParameterVector mean(10);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    RngStream rng = worker_rng(5, static_cast<std::uint64_t>(i), 0);
    mean = mean + sample_perturbation(10, 1.0, rng);
  }
  EXPECT_LT(l2_norm((1.0 / n) * mean), 0.05);
}

TEST(SamplePerturbation, BallInteriorStaysInsideBall) {
  double total = 0.0;
  for (int i = 0; i < 2000; ++i) {
    RngStream rng = worker_rng(9, static_cast<std::uint64_t>(i), 0);
    const double r = l2_norm(sample_perturbation(3, 0.5, rng, /*ball_interior=*/true));
    EXPECT_LE(r, 0.5 + 1e-15);
    total += r;
  }
  // E[radius] for the uniform 3-ball is 3/4 of the radius.
  EXPECT_NEAR(total / 2000.0, 0.375, 0.01);
}

TEST(SamplePerturbation, Errors) {
  RngStream rng(1);
  EXPECT_THROW(sample_perturbation(5, -0.1, rng), ConfigError);
  EXPECT_THROW(sample_perturbation(0, 0.1, rng), ContractError);
}

TEST(NormalizePerturbation, UnitNormThetaLeavesDelta) {
  const ParameterVector theta(std::vector<double>{0.6, 0.8});
  const ParameterVector delta(std::vector<double>{0.01, -0.02});
  const ParameterVector out = normalize_perturbation(delta, theta);
  EXPECT_DOUBLE_EQ(out[0], 0.01);
  EXPECT_DOUBLE_EQ(out[1], -0.02);
}

TEST(NormalizePerturbation, DividesByThetaNorm) {
  const ParameterVector theta(std::vector<double>{0.0, 2.0});
  const ParameterVector delta(std::vector<double>{0.06, 0.08});
  EXPECT_NEAR(l2_norm(normalize_perturbation(delta, theta)), 0.05, 1e-15);
}

TEST(NormalizePerturbation, InvertsByMultiplication) {
  RngStream rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterVector theta(50), delta(50);
    for (double& v : theta.span()) v = rng.normal(0.0, 2.0);
    for (double& v : delta.span()) v = rng.normal(0.0, 0.1);
    const ParameterVector out = normalize_perturbation(delta, theta);
    const double n = l2_norm(theta);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(out[i] * n, delta[i], 1e-12 * std::abs(delta[i]) + 1e-300);
  }
}

TEST(NormalizePerturbation, NormAfterPipeline) {
  RngStream trng(4);
  ParameterVector theta(300);
  for (double& v : theta.span()) v = trng.normal();
  RngStream rng = worker_rng(3, 8, 1);
  const double eps = 0.1;
  const ParameterVector out = normalize_perturbation(sample_perturbation(300, eps, rng), theta);
  const double expected = eps / l2_norm(theta);
  EXPECT_NEAR(l2_norm(out), expected, 1e-12 * expected);
}

TEST(NormalizePerturbation, ScaleModes) {
  const ParameterVector theta(std::vector<double>{0.0, 2.0});
  const ParameterVector delta(std::vector<double>{0.5, 1.0});
  EXPECT_EQ(normalize_perturbation(delta, theta, ScaleMode::None), delta);
  const ParameterVector m = normalize_perturbation(delta, theta, ScaleMode::Multiply);
  EXPECT_DOUBLE_EQ(m[0], 1.0);
  EXPECT_DOUBLE_EQ(m[1], 2.0);
  EXPECT_EQ(parse_scale_mode("multiply"), ScaleMode::Multiply);
  EXPECT_THROW(parse_scale_mode("scale"), ConfigError);
}

TEST(NormalizePerturbation, ZeroThetaRefused) {
  EXPECT_THROW(normalize_perturbation(ParameterVector(3, 0.1), ParameterVector(3)), NumericError);
  EXPECT_THROW(normalize_perturbation(ParameterVector(3), ParameterVector(4, 1.0)), ContractError);
}

TEST(PerturbationPipeline, ReproducibleAcrossCallOrder) {
  RngStream trng(2);
  ParameterVector theta(64);
  for (double& v : theta.span()) v = trng.normal();
  auto draw = [&](std::uint64_t worker) {
    RngStream rng = worker_rng(99, 17, worker);
    return normalize_perturbation(sample_perturbation(64, 0.1, rng), theta);
  };
  const ParameterVector w0 = draw(0), w1 = draw(1), w2 = draw(2);
  // Reverse order yields the same vectors.
  EXPECT_EQ(draw(2), w2);
  EXPECT_EQ(draw(1), w1);
  EXPECT_EQ(draw(0), w0);
  EXPECT_NE(w0, w1);
}
