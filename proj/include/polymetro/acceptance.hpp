#pragma once

// Threshold checks shared by the acceptance binary and the --assert mode of
// the command-line tool. Each returns a named verdict with a one-line detail.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "polymetro/chain.hpp"
#include "polymetro/diagnostics.hpp"
#include "polymetro/spectral.hpp"

namespace polymetro {

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline std::string strf(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

// Prints tiny negative round-off as 0.
inline double tidy(double x) { return std::abs(x) < 1e-9 ? 0.0 : x; }

/// Relative error of g/h^2 against nu1: at most tol at the last h and
/// strictly decreasing along the list.
inline Verdict check_gap_convergence(const std::vector<SweepRow>& rows, double nu1, double tol = 0.10) {
  Verdict v{"gap convergence", true, ""};
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    double err = std::abs(r.gap_over_h2 - nu1) / nu1;
    v.detail += strf("h=%g g/h2=%.5f err=%.4f; ", r.h, r.gap_over_h2, err);
    if (!(err < prev)) v.pass = false;
    prev = err;
  }
  if (rows.empty() || !(prev <= tol)) v.pass = false;
  v.detail += strf("nu1=%.5f tol=%g", nu1, tol);
  return v;
}

/// Clusters of rescaled chain eigenvalues below `bound` must pair up with the
/// Laplacian clusters below `bound`: equal multiplicities, centers within tol.
inline Verdict check_multiplicities(const SpectralReport& chain, const NeumannReport& limit, double bound = 4.0,
                                    double tol = 0.10) {
  Verdict v{"multiplicity matching", true, ""};
  // A truncated report may cut its top cluster short; stay below it.
  if (!chain.complete && !chain.rescaled.empty())
    bound = std::min(bound, *std::max_element(chain.rescaled.begin(), chain.rescaled.end()) * (1.0 - 1e-6));
  if (!limit.complete && !limit.values.empty())
    bound = std::min(bound, *std::max_element(limit.values.begin(), limit.values.end()) * (1.0 - 1e-6));
  std::vector<Cluster> a, b;
  for (const auto& c : chain.clusters)
    if (c.center < bound) a.push_back(c);
  for (const auto& c : limit.clusters)
    if (c.center < bound) b.push_back(c);
  std::string ma, mb;
  for (const auto& c : a) ma += strf("%s%.4f(%d)", ma.empty() ? "" : " ", tidy(c.center), c.multiplicity);
  for (const auto& c : b) mb += strf("%s%.4f(%d)", mb.empty() ? "" : " ", tidy(c.center), c.multiplicity);
  v.detail = "chain [" + ma + "] limit [" + mb + "]" + strf(" below %.4g", bound);
  if (a.size() != b.size() || a.empty()) {
    v.pass = false;
    return v;
  }
  const double scale = b.size() > 1 ? b[1].center : 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].multiplicity != b[i].multiplicity) v.pass = false;
    double ref = std::max(std::abs(b[i].center), 1e-6 * scale);
    if (std::abs(a[i].center - b[i].center) > tol * ref + 1e-9 * scale) v.pass = false;
  }
  return v;
}

/// Top eigenvalue simple with lambda_2 < 1 - gap_floor, spectrum above min_floor.
inline Verdict check_simplicity_floor(const SpectralReport& r, const std::string& label, double gap_floor = 1e-8,
                                      double min_floor = -0.9) {
  Verdict v{"simplicity and floor " + label, false, ""};
  double l2 = r.eigenvalues.size() > 1 ? r.eigenvalues[1] : 1.0;
  v.pass = l2 < 1.0 - gap_floor && r.min_eigenvalue >= min_floor;
  v.detail = strf("h=%g lambda2=%.10f gap=%.3e min=%.4f", r.h, l2, 1.0 - l2, r.min_eigenvalue);
  return v;
}

/// Essential-spectrum signature: the failing family's gap collapses under
/// grid refinement by at least `factor`, the passing family's moves < tol.
inline Verdict check_refinement(double fail_coarse, double fail_fine, double pass_coarse, double pass_fine,
                                double factor = 3.0, double tol = 0.10) {
  Verdict v{"refinement collapse", false, ""};
  double shrink = fail_coarse / fail_fine;
  double change = std::abs(pass_fine - pass_coarse) / pass_coarse;
  v.pass = shrink >= factor && change < tol;
  v.detail = strf("failing %.4e -> %.4e (shrink %.3fx, need >= %g); passing %.4e -> %.4e (change %.2f%%, need < %g%%)",
                  fail_coarse, fail_fine, shrink, factor, pass_coarse, pass_fine, 100 * change, 100 * tol);
  return v;
}

/// Log-linear exact curve with rate near -log lambda_2; empirical points
/// within emp_tol of the exact curve at the same n.
inline Verdict check_tv(const TVCurve& exact, const RateFit& fit, double lambda2, const TVCurve* empirical,
                        double rate_tol = 0.05, double r2_min = 0.999, double emp_tol = 0.05) {
  Verdict v{"tv decay", true, ""};
  double expected = -std::log(lambda2);
  double rel = std::abs(fit.rate - expected) / expected;
  if (rel > rate_tol || fit.r_squared < r2_min) v.pass = false;
  v.detail = strf("rate=%.5f expected=%.5f rel=%.4f (tol %g) r2=%.6f (min %g) window=[%zu,%zu]", fit.rate, expected,
                  rel, rate_tol, fit.r_squared, r2_min, fit.first, fit.last);
  if (empirical) {
    double worst = 0.0;
    for (std::size_t i = 0; i < empirical->size(); ++i) {
      std::size_t n = empirical->steps[i];
      require(n < exact.size() && exact.steps[n] == n, ErrorCode::InvalidArgument,
              "exact curve does not cover the empirical checkpoints");
      worst = std::max(worst, std::abs(empirical->tv[i] - exact.tv[n]));
    }
    if (worst > emp_tol) v.pass = false;
    v.detail += strf(" empirical max |diff|=%.4f at %zu checkpoints (tol %g)", worst, empirical->size(), emp_tol);
  }
  return v;
}

/// C(h) = max over lambda of N_h(lambda) / (1 + lambda)^(d/2); stable if the
/// largest and smallest C(h) differ by at most `factor`.
inline Verdict check_weyl_stability(const std::vector<SpectralReport>& reports, int dim,
                                    const std::vector<double>& lambdas = {1, 2, 4, 8}, double factor = 2.0) {
  Verdict v{"weyl constant stability", true, ""};
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& r : reports) {
    double c = 0.0;
    std::string counts;
    for (double lam : lambdas) {
      std::size_t n = weyl_count(r, lam, r.h);
      c = std::max(c, static_cast<double>(n) / std::pow(1.0 + lam, 0.5 * dim));
      counts += strf("%s%zu", counts.empty() ? "" : ",", n);
    }
    lo = std::min(lo, c);
    hi = std::max(hi, c);
    v.detail += strf("h=%g N=(%s) C=%.4f; ", r.h, counts.c_str(), c);
  }
  v.pass = !reports.empty() && hi <= factor * lo;
  v.detail += strf("ratio=%.4f (max %g)", hi / lo, factor);
  return v;
}

struct BirkhoffStats {
  Matrix entry_means;
  double max_mean_error = 0.0;
  double max_drift = 0.0;
};

inline BirkhoffStats birkhoff_stats(const Birkhoff& b, const Trajectory& t) {
  BirkhoffStats s;
  s.entry_means = Matrix::Zero(b.n, b.n);
  for (std::size_t i = 0; i < t.size(); ++i) {
    Matrix a = b.to_matrix(t.state(i));
    s.entry_means += a;
    for (int k = 0; k < b.n; ++k) {
      s.max_drift = std::max(s.max_drift, std::abs(a.row(k).sum() - 1.0));
      s.max_drift = std::max(s.max_drift, std::abs(a.col(k).sum() - 1.0));
    }
  }
  s.entry_means /= static_cast<double>(t.size());
  s.max_mean_error = (s.entry_means.array() - 1.0 / b.n).abs().maxCoeff();
  return s;
}

inline Verdict check_birkhoff(const BirkhoffStats& s, int n, double tol = 0.01, double drift = 1e-12) {
  Verdict v{"birkhoff sampling", s.max_mean_error <= tol && s.max_drift <= drift, ""};
  v.detail = strf("max |mean - 1/%d|=%.5f (tol %g) max margin drift=%.2e (tol %g)", n, s.max_mean_error, tol,
                  s.max_drift, drift);
  return v;
}

}  // namespace polymetro
