#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "polymetro/chain.hpp"
#include "polymetro/stats.hpp"

using namespace polymetro;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Chord-length oracle by brute force on a fine t-grid.
double brute_rejection(const Polytope& p, const std::vector<Vector>& dirs, double h, const Vector& x) {
  const int n = 200000;
  double kept = 0.0;
  for (const auto& e : dirs) {
    int in = 0;
    for (int k = 0; k < n; ++k) {
      double t = -1.0 + 2.0 * (k + 0.5) / n;
      if (p.contains(x + h * t * e)) ++in;
    }
    kept += static_cast<double>(in) / n;
  }
  return 1.0 - kept / static_cast<double>(dirs.size());
}

}  // namespace

TEST(RejectionMass, SquareExamples) {
  Polytope sq = unit_cube(2);
  DirectionFamily e0 = canonical_family(2);
  EXPECT_DOUBLE_EQ(rejection_mass(sq, e0, 0.3, vec({0.5, 0.5})), 0.0);
  EXPECT_NEAR(rejection_mass(sq, e0, 0.5, vec({0.2, 0.5})), 0.15, 1e-15);
  EXPECT_NEAR(rejection_mass(sq, e0, 0.5, vec({0.1, 0.1})), 0.4, 1e-15);
}

TEST(RejectionMass, MatchesBruteForceOnTriangle) {
  Polytope tri = equilateral_triangle();
  DirectionFamily fam = angle_family({0.0, 30.0, 75.0});
  Rng rng(3);
  for (int k = 0; k < 5; ++k) {
    Vector x(2);
    do {
      x << rng.uniform(-1, 1), rng.uniform(0, 2);
    } while (!tri.contains(x));
    double h = rng.uniform(0.05, 0.8);
    EXPECT_NEAR(rejection_mass(tri, fam, h, x), brute_rejection(tri, fam.as_discrete().vectors, h, x), 2e-5);
  }
}

TEST(RejectionMass, ContinuousUniformInDisk) {
  Polytope sq = unit_cube(2);
  auto fam = DirectionFamily::continuous(SphereDensity("uniform", 2), {vec({1, 0}), vec({0, 1})}, 256);
  EXPECT_NEAR(rejection_mass(sq, fam, 0.3, vec({0.5, 0.5})), 0.0, 1e-15);
  // Near a single wall at distance a, direction phi loses the fraction
  // (1 - a / (h |cos phi|)) / 2 of its chord when h |cos phi| > a.
  double a = 0.1, h = 0.4;
  double lost = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    double phi = 2.0 * std::numbers::pi * (k + 0.5) / n;
    double c = std::abs(std::cos(phi));
    double reach = h * c;
    if (reach > a) lost += 0.5 * (1.0 - a / reach);
  }
  lost /= n;
  EXPECT_NEAR(rejection_mass(sq, fam, h, vec({a, 0.5})), lost, 2e-3);
}

TEST(MetropolisStep, RejectsOutsideStart) {
  Polytope sq = unit_cube(2);
  Rng rng(1);
  EXPECT_THROW(metropolis_step(sq, canonical_family(2), 0.1, vec({0.0, 0.5}), rng), Error);
  try {
    metropolis_step(sq, canonical_family(2), 0.1, vec({-0.1, 0.5}), rng);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidStart);
  }
}

TEST(MetropolisStep, InteriorAlwaysAccepts) {
  Polytope sq = unit_cube(2);
  DirectionFamily e0 = canonical_family(2);
  Rng rng(7);
  for (int k = 0; k < 10000; ++k) {
    auto r = metropolis_step(sq, e0, 0.3, vec({0.5, 0.5}), rng);
    ASSERT_TRUE(r.accepted);
  }
}

TEST(MetropolisStep, AcceptedInsideRejectedUnchanged) {
  Polytope tri = equilateral_triangle();
  DirectionFamily fam = angle_family({0.0, 90.0});
  Rng rng(11);
  Vector x = tri.witness();
  for (int k = 0; k < 100000; ++k) {
    auto r = metropolis_step(tri, fam, 0.5, x, rng);
    if (r.accepted) {
      ASSERT_TRUE(tri.contains(r.state));
    } else {
      ASSERT_EQ(r.state, x);
    }
    x = r.state;
  }
}

TEST(MetropolisStep, EmpiricalRejectionMatchesExample) {
  Polytope sq = unit_cube(2);
  DirectionFamily e0 = canonical_family(2);
  MetropolisKernel kernel(sq, e0, 0.5);
  Rng rng(42);
  const int n = 1000000;
  int rejected = 0;
  for (int k = 0; k < n; ++k) {
    double x[2] = {0.2, 0.5};
    if (!kernel.step(x, rng)) ++rejected;
  }
  double p = 0.15;
  double sigma = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(static_cast<double>(rejected) / n, p, 3 * sigma);
}

TEST(MetropolisStep, RejectionFrequencyAtRandomPoints) {
  Polytope tri = equilateral_triangle();
  DirectionFamily fam = angle_family({0.0, 90.0});
  MetropolisKernel kernel(tri, fam, 0.4);
  Rng pick(5), rng(6);
  const int trials = 100000;
  for (int k = 0; k < 10; ++k) {
    Vector x(2);
    do {
      x << pick.uniform(-1, 1), pick.uniform(0, 2);
    } while (!tri.contains(x));
    double m = rejection_mass(tri, fam, 0.4, x);
    int rejected = 0;
    for (int t = 0; t < trials; ++t) {
      double y[2] = {x(0), x(1)};
      if (!kernel.step(y, rng)) ++rejected;
    }
    double sigma = std::sqrt(std::max(m * (1 - m), 1e-12) / trials);
    EXPECT_NEAR(static_cast<double>(rejected) / trials, m, 3 * sigma + 1e-12) << "point " << k;
  }
}

TEST(RunChain, ZeroStepsIsStart) {
  Polytope sq = unit_cube(2);
  ChainConfig cfg{0.2, 42};
  auto traj = run_chain(sq, canonical_family(2), cfg, vec({0.3, 0.4}), 0);
  ASSERT_EQ(traj.size(), 1u);
  EXPECT_EQ(Vector(traj.state(0)), vec({0.3, 0.4}));
  EXPECT_EQ(traj.steps(), 0u);
}

TEST(RunChain, Deterministic) {
  Polytope tri = equilateral_triangle();
  ChainConfig cfg{0.3, 99, 0, 3, 10};
  auto a = run_chain(tri, canonical_family(2), cfg, tri.witness(), 5000);
  auto b = run_chain(tri, canonical_family(2), cfg, tri.witness(), 5000);
  std::ostringstream sa, sb;
  write_trajectory_csv(sa, a);
  write_trajectory_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  cfg.seed = 100;
  auto c = run_chain(tri, canonical_family(2), cfg, tri.witness(), 5000);
  std::ostringstream sc;
  write_trajectory_csv(sc, c);
  EXPECT_NE(sa.str(), sc.str());
}

TEST(RunChain, ThinningAndInvariants) {
  Polytope tri = equilateral_triangle();
  ChainConfig cfg{0.3, 1, 0, 7, 0};
  auto traj = run_chain(tri, canonical_family(2), cfg, tri.witness(), 700);
  EXPECT_EQ(traj.size(), 101u);
  EXPECT_EQ(traj.step_index(100), 700u);
  EXPECT_LE(traj.accepted(), traj.steps());
  for (std::size_t i = 0; i < traj.size(); ++i) EXPECT_TRUE(tri.contains(Vector(traj.state(i))));
  EXPECT_THROW(run_chain(tri, canonical_family(2), ChainConfig{0.3, 1, 0, 0, 0}, tri.witness(), 1), Error);
  EXPECT_THROW(run_chain(tri, canonical_family(2), ChainConfig{-1.0}, tri.witness(), 1), Error);
}

TEST(RunChain, CsvFormat) {
  Polytope sq = unit_cube(2);
  auto traj = run_chain(sq, canonical_family(2), ChainConfig{0.2, 42, 0, 1, 0}, vec({0.5, 0.25}), 0);
  std::ostringstream out;
  write_trajectory_csv(out, traj);
  EXPECT_EQ(out.str(), "step,x1,x2,accepted\n0,0.5,0.25,0\n");
}

TEST(RunChain, SquareMeanIsCentre) {
  Polytope sq = unit_cube(2);
  auto traj = run_chain(sq, canonical_family(2), ChainConfig{0.2, 42, 0, 1, 0}, vec({0.5, 0.5}), 1000000);
  for (int i = 0; i < 2; ++i) {
    std::vector<double> xs(traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k) xs[k] = traj.state(k)(i);
    double se = stats::batch_means_stderr(xs, 100);
    EXPECT_NEAR(stats::mean(xs), 0.5, 3 * se) << "coordinate " << i;
    EXPECT_LT(se, 0.01);
  }
}

TEST(RunChain, StationarityChiSquare) {
  // 10^7 steps, recording every 100th state to keep the occupancy counts
  // close to independent.
  Polytope sq = unit_cube(2);
  auto traj = run_chain(sq, canonical_family(2), ChainConfig{0.2, 2024, 0, 100, 1000}, vec({0.5, 0.5}), 10000000);
  const int bins = 32;
  std::vector<double> counts(bins * bins, 0.0);
  for (std::size_t k = 1; k < traj.size(); ++k) {
    auto s = traj.state(k);
    int a = std::min(bins - 1, static_cast<int>(s(0) * bins));
    int b = std::min(bins - 1, static_cast<int>(s(1) * bins));
    counts[static_cast<std::size_t>(a * bins + b)] += 1.0;
  }
  double expected = static_cast<double>(traj.size() - 1) / (bins * bins);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, stats::chi2_upper(bins * bins - 1, stats::kZ99));
}

TEST(DrawDirection, DiscreteFrequencies) {
  DirectionFamily fam = canonical_family(2);
  Rng rng(8);
  const int n = 100000;
  int first = 0;
  for (int k = 0; k < n; ++k)
    if (draw_direction(fam, rng)(0) == 1.0) ++first;
  EXPECT_NEAR(static_cast<double>(first) / n, 0.5, 3 * std::sqrt(0.25 / n));
}

TEST(DrawDirection, UniformCircleChiSquare) {
  auto fam = DirectionFamily::continuous(SphereDensity("uniform", 2), {vec({1, 0}), vec({0, 1})});
  Rng rng(9);
  const int n = 100000, bins = 36;
  std::vector<double> counts(bins, 0.0);
  for (int k = 0; k < n; ++k) {
    Vector e = draw_direction(fam, rng);
    ASSERT_NEAR(e.norm(), 1.0, 1e-12);
    double a = std::atan2(e(1), e(0)) + std::numbers::pi;
    counts[static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(a / (2 * std::numbers::pi) * bins)))] += 1;
  }
  double expected = static_cast<double>(n) / bins, chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, stats::chi2_upper(bins - 1, stats::kZ99));
}

TEST(DrawDirection, Cos2MomentsMatchQuadrature) {
  SphereDensity rho("cos2", 2, 1.0);
  auto fam = DirectionFamily::continuous(rho, {vec({1, 0}), vec({0, 1})});
  Matrix quad = fam.second_moment(4096);
  // E[cos^2] = (1/2 + 3k/8) / (1 + k/2) at kappa = 1 is 7/12.
  EXPECT_NEAR(quad(0, 0), 7.0 / 12.0, 1e-12);
  Rng rng(10);
  const int n = 100000;
  std::vector<double> c2(n);
  for (int k = 0; k < n; ++k) {
    Vector e = draw_direction(fam, rng);
    c2[static_cast<std::size_t>(k)] = e(0) * e(0);
  }
  double m = stats::mean(c2), var = 0.0;
  for (double v : c2) var += (v - m) * (v - m);
  var /= n - 1;
  EXPECT_NEAR(m, quad(0, 0), 3 * std::sqrt(var / n));
}

TEST(DrawDirection, BoundViolation) {
  auto fam = DirectionFamily::continuous(SphereDensity("cos2", 2, 1.0), {vec({1, 0})}, 64, 0.1);
  Rng rng(12);
  bool thrown = false;
  for (int k = 0; k < 1000 && !thrown; ++k) {
    try {
      draw_direction(fam, rng);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::SamplerBoundViolated);
      thrown = true;
    }
  }
  EXPECT_TRUE(thrown);
}

TEST(Birkhoff, SizeGuard) {
  try {
    birkhoff(1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadSize);
  }
}

TEST(Birkhoff, TwoByTwoIsSegment) {
  Birkhoff b = birkhoff(2);
  EXPECT_EQ(b.polytope.dim(), 1);
  EXPECT_EQ(b.moves.size(), 1u);
  EXPECT_NEAR(b.polytope.box_lo()(0), 0.0, 1e-9);
  EXPECT_NEAR(b.polytope.box_hi()(0), 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(std::abs(b.family.as_discrete().vectors[0](0)), 1.0);
  Matrix a = b.to_matrix(vec({0.3}));
  EXPECT_NEAR(a(0, 1), 0.7, 1e-15);
  EXPECT_NEAR(a(1, 0), 0.7, 1e-15);
  EXPECT_NEAR(a(1, 1), 0.3, 1e-15);
}

TEST(Birkhoff, ThreeByThreeStructure) {
  Birkhoff b = birkhoff(3);
  EXPECT_EQ(b.polytope.dim(), 4);
  EXPECT_EQ(b.polytope.num_facets(), 9);
  EXPECT_EQ(b.moves.size(), 9u);
  EXPECT_EQ(family_rank(b.family), 4);
  for (const auto& mv : b.moves) {
    Matrix f = mv.matrix(3);
    EXPECT_NEAR(f.rowwise().sum().cwiseAbs().maxCoeff(), 0.0, 0.0);
    EXPECT_NEAR(f.colwise().sum().cwiseAbs().maxCoeff(), 0.0, 0.0);
  }
  // The centre of A_3 is the flat matrix 1/3.
  Matrix centre = b.to_matrix(Vector::Constant(4, 1.0 / 3.0));
  EXPECT_NEAR((centre.array() - 1.0 / 3.0).abs().maxCoeff(), 0.0, 1e-15);
  EXPECT_TRUE(is_weakly_incoming(b.polytope, b.family).weakly_incoming);
}

TEST(Birkhoff, SamplingMeansAndMargins) {
  Birkhoff b = birkhoff(3);
  Vector x0 = Vector::Constant(4, 1.0 / 3.0);
  auto traj = run_chain(b.polytope, b.family, ChainConfig{0.1, 42, 0, 1, 0}, x0, 1000000);
  std::vector<std::vector<double>> entries(9, std::vector<double>(traj.size()));
  double drift = 0.0;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    Matrix a = b.to_matrix(Vector(traj.state(k)));
    ASSERT_GT(a.minCoeff(), 0.0);
    drift = std::max(drift, (a.rowwise().sum().array() - 1.0).abs().maxCoeff());
    drift = std::max(drift, (a.colwise().sum().array() - 1.0).abs().maxCoeff());
    for (int i = 0; i < 9; ++i) entries[static_cast<std::size_t>(i)][k] = a(i / 3, i % 3);
  }
  EXPECT_LE(drift, 1e-12);
  for (int i = 0; i < 9; ++i) {
    const auto& xs = entries[static_cast<std::size_t>(i)];
    EXPECT_NEAR(stats::mean(xs), 1.0 / 3.0, 0.01) << "entry " << i;
  }
}

TEST(Stats, ChiSquareQuantile) {
  // chi2_{0.99}(10) = 23.209, chi2_{0.99}(1023) ~ 1131.1
  EXPECT_NEAR(stats::chi2_upper(10, stats::kZ99), 23.209, 0.1);
  EXPECT_NEAR(stats::chi2_upper(1023, stats::kZ99), 1131.1, 1.0);
}
