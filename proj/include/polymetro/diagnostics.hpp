#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "polymetro/chain.hpp"
#include "polymetro/error.hpp"
#include "polymetro/grid.hpp"
#include "polymetro/parallel.hpp"
#include "polymetro/spectral.hpp"

namespace polymetro {

/// Total-variation distance to the uniform law along a run.
struct TVCurve {
  std::string mode;  // "exact" or "empirical"
  std::vector<std::size_t> steps;
  std::vector<double> tv;
  std::string note;

  std::size_t size() const { return steps.size(); }
};

namespace detail {

// Maps each fine cell to a bin (or to the trailing "elsewhere" slot).
inline std::vector<std::size_t> bin_map(const Grid& fine, const Grid& bins) {
  std::vector<std::size_t> map(fine.size());
  for (std::size_t i = 0; i < fine.size(); ++i) {
    std::size_t b = bins.cell_at(fine.center(i));
    map[i] = b == kOutside ? bins.size() : b;
  }
  return map;
}

inline double half_l1(const Vector& p, const Vector& target) { return 0.5 * (p - target).cwiseAbs().sum(); }

}  // namespace detail

/// TV_n = (1/2) sum |[M^n]_{start,.} - uniform| for n = 0..n_max by repeated
/// products. With `bins`, both laws are first pushed to the coarser cells.
inline TVCurve tv_exact(const OperatorMatrix& m, std::size_t start_cell, std::size_t n_max,
                        const Grid* bins = nullptr) {
  const auto n = static_cast<Eigen::Index>(m.size());
  require(start_cell < m.size(), ErrorCode::InvalidArgument, "start cell out of range");
  Vector p = Vector::Zero(n);
  p(static_cast<Eigen::Index>(start_cell)) = 1.0;
  Vector uniform = Vector::Constant(n, 1.0 / static_cast<double>(n));

  std::vector<std::size_t> map;
  Vector target;
  Eigen::Index nb = 0;
  if (bins) {
    map = detail::bin_map(*m.grid, *bins);
    nb = static_cast<Eigen::Index>(bins->size()) + 1;
    target = Vector::Zero(nb);
    for (std::size_t i = 0; i < map.size(); ++i) target(static_cast<Eigen::Index>(map[i])) += uniform(static_cast<Eigen::Index>(i));
  }
  auto distance = [&](const Vector& law) {
    if (!bins) return detail::half_l1(law, uniform);
    Vector agg = Vector::Zero(nb);
    for (std::size_t i = 0; i < map.size(); ++i) agg(static_cast<Eigen::Index>(map[i])) += law(static_cast<Eigen::Index>(i));
    return detail::half_l1(agg, target);
  };

  TVCurve curve;
  curve.mode = "exact";
  Vector next(n);
  for (std::size_t step = 0; step <= n_max; ++step) {
    if (step > 0) {
      // Row of M^n: p_{n+1} = M^T p_n = M p_n for symmetric M.
      next.noalias() = m.matrix.transpose() * p;
      p.swap(next);
    }
    curve.steps.push_back(step);
    curve.tv.push_back(std::clamp(distance(p), 0.0, 1.0));
  }
  curve.note = bins ? "aggregated to " + std::to_string(bins->size()) + " bins" : "cell resolution";
  return curve;
}

struct EmpiricalOptions {
  std::size_t replicas = 100000;
  std::uint64_t seed = 0;
  std::size_t min_per_bin = 20;
};

/// Histogram estimate over `bins` from independent replica chains started at
/// x0. Replica r uses stream r of the seed, so results do not depend on the
/// thread count. The bin algebra is coarser than the Borel sets, so this is
/// a lower-bound estimator of the true distance.
inline TVCurve tv_empirical(const Polytope& p, const DirectionFamily& family, double h, const Vector& x0,
                            std::vector<std::size_t> n_list, const Grid& bins, EmpiricalOptions opt = {}) {
  require(!n_list.empty(), ErrorCode::InvalidArgument, "checkpoint list is empty");
  require(opt.replicas >= opt.min_per_bin * bins.size(), ErrorCode::TooFewReplicas,
          "need at least " + std::to_string(opt.min_per_bin) + " replicas per bin on average");
  require(p.contains(x0), ErrorCode::InvalidStart, "start point is not inside the polytope");
  std::sort(n_list.begin(), n_list.end());
  n_list.erase(std::unique(n_list.begin(), n_list.end()), n_list.end());
  const std::size_t checkpoints = n_list.size();
  const std::size_t nb = bins.size();
  std::vector<std::uint32_t> hits(opt.replicas * checkpoints);

  parallel_for(opt.replicas, [&](std::size_t r) {
    Rng rng(opt.seed, r);
    MetropolisKernel kernel(p, family, h);
    Vector x = x0;
    std::size_t step = 0;
    for (std::size_t c = 0; c < checkpoints; ++c) {
      while (step < n_list[c]) {
        kernel.step(x.data(), rng);
        ++step;
      }
      std::size_t b = bins.cell_at(x);
      hits[r * checkpoints + c] = static_cast<std::uint32_t>(b == kOutside ? nb : b);
    }
  });

  TVCurve curve;
  curve.mode = "empirical";
  const double inv = 1.0 / static_cast<double>(opt.replicas);
  for (std::size_t c = 0; c < checkpoints; ++c) {
    std::vector<std::size_t> count(nb + 1, 0);
    for (std::size_t r = 0; r < opt.replicas; ++r) ++count[hits[r * checkpoints + c]];
    // Bin volumes by center membership; the uncovered rim has target 0.
    double tv = static_cast<double>(count[nb]) * inv;
    for (std::size_t b = 0; b < nb; ++b) tv += std::abs(static_cast<double>(count[b]) * inv - 1.0 / static_cast<double>(nb));
    curve.steps.push_back(n_list[c]);
    curve.tv.push_back(std::clamp(0.5 * tv, 0.0, 1.0));
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "histogram lower bound over %zu bins; noise scale about %.3g", nb,
                std::sqrt(static_cast<double>(nb) / static_cast<double>(opt.replicas)));
  curve.note = buf;
  return curve;
}

struct RateFit {
  double rate = 0.0;       // r in TV_n ~ C exp(-r n)
  double constant = 0.0;   // C
  double r_squared = 0.0;  // of the log-linear fit
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t points = 0;
};

/// Least-squares fit of log TV_n = log C - r n over first <= n <= last.
inline RateFit fit_rate(const TVCurve& curve, std::size_t first, std::size_t last) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve.steps[i] < first || curve.steps[i] > last) continue;
    require(curve.tv[i] > 1e-12, ErrorCode::WindowDegenerate, "fit window contains values at or below 1e-12");
    xs.push_back(static_cast<double>(curve.steps[i]));
    ys.push_back(std::log(curve.tv[i]));
  }
  require(xs.size() >= 2, ErrorCode::WindowDegenerate, "fit window holds fewer than two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  require(sxx > 0.0, ErrorCode::WindowDegenerate, "fit window has a single abscissa");
  RateFit fit;
  double slope = sxy / sxx;
  fit.rate = -slope;
  fit.constant = std::exp(my - slope * mx);
  fit.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  fit.first = static_cast<std::size_t>(xs.front());
  fit.last = static_cast<std::size_t>(xs.back());
  fit.points = xs.size();
  return fit;
}

/// Default window: skip max(10, 1/g) transient steps, stop at the last value >= floor.
inline std::pair<std::size_t, std::size_t> default_fit_window(const TVCurve& curve, double gap, double floor = 1e-10) {
  require(gap > 0.0, ErrorCode::WindowDegenerate, "spectral gap must be positive");
  auto first = static_cast<std::size_t>(std::max(10.0, std::ceil(1.0 / gap)));
  std::size_t last = 0;
  for (std::size_t i = 0; i < curve.size(); ++i)
    if (curve.tv[i] >= floor) last = std::max(last, curve.steps[i]);
  return {first, last};
}

struct SweepRow {
  double h = 0.0;
  double gap = 0.0;
  double gap_over_h2 = 0.0;
  double nu1_reference = 0.0;
  std::size_t cells = 0;
};

struct SweepOptions {
  double resolution = 8.0;  // s = h / resolution
  int quadrature = 0;
  SpectrumOptions spectrum{};
  bool reference = true;  // compute nu_1 of the limit operator on the finest grid
};

/// g(h) and g(h)/h^2 along h_list (decreasing), with nu_1 of the assembled
/// limit operator as the reference column. Per-h reports go to `reports` when given.
inline std::vector<SweepRow> gap_sweep(const Polytope& p, const DirectionFamily& family,
                                       const std::vector<double>& h_list, SweepOptions opt = {},
                                       std::vector<SpectralReport>* reports = nullptr) {
  require(!h_list.empty(), ErrorCode::InvalidArgument, "h list is empty");
  for (std::size_t i = 1; i < h_list.size(); ++i)
    require(h_list[i] < h_list[i - 1], ErrorCode::InvalidArgument, "h list must be decreasing");
  require(opt.resolution >= 4.0, ErrorCode::ResolutionTooCoarse, "resolution rule must give s <= h/4");

  double nu1 = std::numeric_limits<double>::quiet_NaN();
  if (opt.reference) {
    Grid fine = discretize(p, h_list.back() / opt.resolution);
    SpectrumOptions so = opt.spectrum;
    so.k = 2;
    NeumannReport ref = neumann_spectrum(assemble_laplacian(p, family, fine, opt.quadrature), so);
    nu1 = ref.values.at(1);
  }
  std::vector<SweepRow> rows;
  for (double h : h_list) {
    Grid g = discretize(p, h / opt.resolution);
    OperatorMatrix m = assemble_metropolis(p, family, h, g, {opt.quadrature, true});
    SpectrumOptions so = opt.spectrum;
    so.k = std::min<int>(so.k, static_cast<int>(g.size()));
    SpectralReport r = spectrum(m, so);
    rows.push_back({h, r.gap, r.gap / (h * h), nu1, g.size()});
    if (reports) reports->push_back(std::move(r));
  }
  return rows;
}

inline void write_tv_csv(std::ostream& out, const std::vector<const TVCurve*>& curves) {
  out << "n,tv,mode\n";
  for (const TVCurve* c : curves)
    for (std::size_t i = 0; i < c->size(); ++i) out << c->steps[i] << ',' << format_double(c->tv[i]) << ',' << c->mode << '\n';
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "h,gap,gap_over_h2,nu1_reference\n";
  for (const auto& r : rows)
    out << format_double(r.h) << ',' << format_double(r.gap) << ',' << format_double(r.gap_over_h2) << ','
        << format_double(r.nu1_reference) << '\n';
}

}  // namespace polymetro
