#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <optional>
#include <numbers>
#include <sstream>

#include "polymetro/diagnostics.hpp"

using namespace polymetro;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

TVCurve synthetic(double c, double r, std::size_t n_max) {
  TVCurve t;
  t.mode = "exact";
  for (std::size_t n = 0; n <= n_max; ++n) {
    t.steps.push_back(n);
    t.tv.push_back(c * std::exp(-r * static_cast<double>(n)));
  }
  return t;
}

std::optional<ErrorCode> code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST(FitRate, RecoversSyntheticExponential) {
  TVCurve t = synthetic(0.8, 0.05, 200);
  RateFit f = fit_rate(t, 10, 150);
  EXPECT_NEAR(f.rate, 0.05, 1e-12);
  EXPECT_NEAR(f.constant, 0.8, 1e-10);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  EXPECT_EQ(f.points, 141u);
}

TEST(FitRate, DegenerateWindows) {
  TVCurve t = synthetic(0.8, 0.05, 20);
  EXPECT_EQ(code_of([&] { fit_rate(t, 5, 5); }), ErrorCode::WindowDegenerate);
  EXPECT_EQ(code_of([&] { fit_rate(t, 50, 60); }), ErrorCode::WindowDegenerate);
  t.tv[7] = 0.0;
  EXPECT_EQ(code_of([&] { fit_rate(t, 0, 20); }), ErrorCode::WindowDegenerate);
  EXPECT_NO_THROW(fit_rate(t, 8, 20));
}

TEST(FitRate, DefaultWindow) {
  TVCurve t = synthetic(1.0, 0.1, 400);
  auto [lo, hi] = default_fit_window(t, 0.01);
  EXPECT_EQ(lo, 100u);
  EXPECT_EQ(hi, 230u);  // exp(-23) ~ 1.03e-10, exp(-23.1) < 1e-10
  EXPECT_EQ(default_fit_window(t, 0.5).first, 10u);
}

TEST(TVExact, StartValue) {
  Polytope tri = equilateral_triangle();
  Grid g = discretize(tri, 0.05);
  OperatorMatrix m = assemble_metropolis(tri, canonical_family(2), 0.25, g);
  TVCurve t = tv_exact(m, 3, 5);
  EXPECT_NEAR(t.tv[0], 1.0 - 1.0 / static_cast<double>(g.size()), 1e-13);
  EXPECT_EQ(t.steps.back(), 5u);
}

TEST(TVExact, MatchesDenseMatrixPowers) {
  Polytope tri = equilateral_triangle();
  Grid g = discretize(tri, 0.06);
  ASSERT_LE(g.size(), 500u);
  OperatorMatrix m = assemble_metropolis(tri, canonical_family(2), 0.25, g);
  const std::size_t start = g.size() / 3;
  TVCurve t = tv_exact(m, start, 40);
  Matrix dense = Matrix(m.matrix);
  Matrix power = Matrix::Identity(dense.rows(), dense.cols());
  const double u = 1.0 / static_cast<double>(g.size());
  for (std::size_t n = 0; n <= 40; ++n) {
    if (n > 0) power = power * dense;
    double tv = 0.5 * (power.row(static_cast<Eigen::Index>(start)).array() - u).abs().sum();
    EXPECT_NEAR(t.tv[n], tv, 1e-12) << "n=" << n;
  }
}

TEST(TVExact, MonotoneAndUnderSpectralEnvelope) {
  Polytope sq = unit_cube(2);
  const double h = 0.25;
  Grid g = discretize(sq, h / 8);
  OperatorMatrix m = assemble_metropolis(sq, canonical_family(2), h, g);
  SpectralReport r = spectrum(m);
  ASSERT_LT(std::abs(r.min_eigenvalue), 1.0 - r.gap);
  Vector x0 = vec({0.1, 0.2});
  TVCurve t = tv_exact(m, g.cell_at(x0), 300);
  const double root = std::sqrt(static_cast<double>(g.size()));
  for (std::size_t n = 0; n < t.size(); ++n) {
    EXPECT_GE(t.tv[n], 0.0);
    EXPECT_LE(t.tv[n], 1.0);
    if (n > 0) {
      EXPECT_LE(t.tv[n], t.tv[n - 1] + 1e-14);
    }
    EXPECT_LE(t.tv[n], std::pow(1.0 - r.gap, static_cast<double>(n)) * root);
  }
}

TEST(TVExact, RateMatchesSecondEigenvalue) {
  Polytope sq = unit_cube(2);
  const double h = 0.25;
  Grid g = discretize(sq, h / 8);
  OperatorMatrix m = assemble_metropolis(sq, canonical_family(2), h, g);
  SpectralReport r = spectrum(m);
  TVCurve t = tv_exact(m, g.cell_at(vec({0.1, 0.2})), 2000);
  auto [lo, hi] = default_fit_window(t, r.gap);
  RateFit f = fit_rate(t, lo, hi);
  double expected = -std::log(r.lambda(1));
  EXPECT_NEAR(f.rate / expected, 1.0, 0.05);
}

TEST(TVExact, BinnedStartValue) {
  Polytope sq = unit_cube(2);
  Grid fine = discretize(sq, 1.0 / 64);
  Grid bins = discretize(sq, 1.0 / 16);
  OperatorMatrix m = assemble_metropolis(sq, canonical_family(2), 0.2, fine);
  TVCurve t = tv_exact(m, 0, 3, &bins);
  EXPECT_NEAR(t.tv[0], 1.0 - 1.0 / 256.0, 1e-14);
  EXPECT_LT(t.tv[3], t.tv[0]);
}

TEST(TVEmpirical, ReplicaFloor) {
  Polytope sq = unit_cube(2);
  Grid bins = discretize(sq, 0.25);
  EmpiricalOptions opt;
  opt.replicas = 319;
  EXPECT_EQ(code_of([&] { tv_empirical(sq, canonical_family(2), 0.2, vec({0.5, 0.5}), {1}, bins, opt); }),
            ErrorCode::TooFewReplicas);
  opt.replicas = 320;
  EXPECT_NO_THROW(tv_empirical(sq, canonical_family(2), 0.2, vec({0.5, 0.5}), {1}, bins, opt));
}

TEST(TVEmpirical, IndependentOfThreadCount) {
  Polytope sq = unit_cube(2);
  Grid bins = discretize(sq, 0.25);
  EmpiricalOptions opt;
  opt.replicas = 4000;
  opt.seed = 11;
  set_num_threads(1);
  TVCurve a = tv_empirical(sq, canonical_family(2), 0.2, vec({0.1, 0.1}), {0, 5, 20}, bins, opt);
  set_num_threads(4);
  TVCurve b = tv_empirical(sq, canonical_family(2), 0.2, vec({0.1, 0.1}), {20, 5, 0}, bins, opt);
  set_num_threads(0);
  EXPECT_EQ(a.tv, b.tv);
  EXPECT_EQ(b.steps, (std::vector<std::size_t>{0, 5, 20}));
  EXPECT_NEAR(a.tv[0], 1.0 - 1.0 / 16.0, 1e-12);
}

TEST(TVEmpirical, AgreesWithExactOnBins) {
  Polytope sq = unit_cube(2);
  const double h = 0.2;
  Grid fine = discretize(sq, 1.0 / 64);
  Grid bins = discretize(sq, 0.25);
  OperatorMatrix m = assemble_metropolis(sq, canonical_family(2), h, fine);
  Vector x0 = fine.center(fine.cell_at(vec({0.1, 0.1})));
  TVCurve exact = tv_exact(m, fine.cell_at(x0), 40, &bins);
  EmpiricalOptions opt;
  opt.replicas = 40000;
  opt.seed = 3;
  TVCurve emp = tv_empirical(sq, canonical_family(2), h, x0, {10, 20, 40}, bins, opt);
  // Cell discretization error plus sampling noise sqrt(16/40000) = 0.02.
  for (std::size_t i = 0; i < emp.size(); ++i) EXPECT_NEAR(emp.tv[i], exact.tv[emp.steps[i]], 0.03) << emp.steps[i];
}

TEST(GapSweep, SquareApproachesReference) {
  auto rows = gap_sweep(unit_cube(2), canonical_family(2), {0.4, 0.2});
  ASSERT_EQ(rows.size(), 2u);
  const double nu1 = std::numbers::pi * std::numbers::pi / 12.0;
  EXPECT_NEAR(rows[1].nu1_reference / nu1, 1.0, 0.02);
  EXPECT_DOUBLE_EQ(rows[0].gap_over_h2, rows[0].gap / 0.16);
  EXPECT_LT(std::abs(rows[1].gap_over_h2 - nu1), std::abs(rows[0].gap_over_h2 - nu1));
  EXPECT_EQ(code_of([] { gap_sweep(unit_cube(2), canonical_family(2), {0.1, 0.2}); }), ErrorCode::InvalidArgument);
}

TEST(Export, CsvHeaders) {
  TVCurve t = synthetic(0.5, 0.0, 1);
  std::ostringstream a;
  write_tv_csv(a, {&t});
  EXPECT_EQ(a.str(), "n,tv,mode\n0,0.5,exact\n1,0.5,exact\n");
  std::ostringstream b;
  write_sweep_csv(b, {{0.5, 0.25, 1.0, 0.75, 4}});
  EXPECT_EQ(b.str(), "h,gap,gap_over_h2,nu1_reference\n0.5,0.25,1,0.75\n");
}
