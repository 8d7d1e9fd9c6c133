#pragma once

// Commands behind the polymetro tool. Each reads an ExperimentConfig, writes
// CSV files into the output directory plus summary.json, and returns the
// process exit code: 0 ok, 1 error, 2 --assert violation, 3 check false.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "polymetro/acceptance.hpp"
#include "polymetro/config.hpp"
#include "polymetro/diagnostics.hpp"
#include "polymetro/geometry.hpp"
#include "polymetro/parallel.hpp"
#include "polymetro/spectral.hpp"

namespace polymetro {

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitAssert = 2, kExitFalse = 3 };

struct RunOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool assert_mode = false;
  std::optional<double> tol;
  unsigned threads = 0;
};

namespace fs = std::filesystem;

/// Output bookkeeping for a single command invocation.
class Run {
 public:
  Run(std::string command, ExperimentConfig cfg, const RunOptions& opt, std::ostream& log)
      : command_(std::move(command)), cfg_(std::move(cfg)), opt_(opt), log_(log),
        start_(std::chrono::steady_clock::now()) {
    seed_ = opt.seed ? *opt.seed : cfg_.seed;
    dir_ = opt.out ? fs::path(*opt.out) : fs::path(cfg_.output_dir);
    results_ = Json::object();
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  std::ostream& log() { return log_; }
  double tol(double fallback) const { return opt_.tol ? *opt_.tol : fallback; }
  bool asserting() const { return opt_.assert_mode; }
  Json& results() { return results_; }

  std::ofstream open(const std::string& name) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    require(!ec, ErrorCode::IO, "cannot create output directory '" + dir_.string() + "'");
    fs::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::IO, "cannot write '" + path.string() + "'");
    outputs_.push_back(path.string());
    return out;
  }

  void record(const Verdict& v) {
    assertions_.push_back(v);
    log_ << (v.pass ? "PASS " : "FAIL ") << v.name << ": " << v.detail << '\n';
  }

  std::string inputs_hash() const {
    std::uint64_t h = fnv1a(cfg_.canonical);
    h = fnv1a("|" + command_ + "|seed=" + std::to_string(seed_), h);
    return hex64(h);
  }

  /// Writes summary.json and maps assertion failures to exit code 2.
  int finish(int code) {
    if (code == kExitOk && opt_.assert_mode)
      for (const auto& v : assertions_)
        if (!v.pass) code = kExitAssert;
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    Json s;
    s["command"] = command_;
    s["config"] = cfg_.origin;
    s["inputs_hash"] = inputs_hash();
    s["seed"] = seed_;
    s["threads"] = num_threads();
    s["outputs"] = outputs_;
    s["results"] = results_;
    Json checks = Json::array();
    for (const auto& v : assertions_) checks.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
    s["assertions"] = checks;
    s["assert_mode"] = opt_.assert_mode;
    s["exit_code"] = code;
    s["wall_time_s"] = wall;
    std::ofstream out = open("summary.json");
    out << s.dump(2) << '\n';
    return code;
  }

 private:
  std::string command_;
  ExperimentConfig cfg_;
  RunOptions opt_;
  std::ostream& log_;
  std::chrono::steady_clock::time_point start_;
  std::uint64_t seed_ = 0;
  fs::path dir_;
  Json results_;
  std::vector<std::string> outputs_;
  std::vector<Verdict> assertions_;
};

namespace detail {

inline std::string point_string(const Vector& x) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? ", " : "") + strf("%.10g", x(i));
  return s + ")";
}

inline std::string h_tag(double h) { return strf("%g", h); }

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline SpectrumOptions spectrum_options(const SpectralSection& s, int k) {
  SpectrumOptions o;
  o.k = k;
  o.dense_limit = s.dense_limit;
  o.cluster_tol = s.cluster_tol;
  return o;
}

}  // namespace detail

inline int cmd_check(Run& run) {
  const auto& cfg = run.cfg();
  auto& log = run.log();
  IncomingVerdict v = is_weakly_incoming(cfg.polytope, cfg.family);
  bool spans = span_check(cfg.family);
  log << "polytope " << cfg.polytope_kind << " (dim " << cfg.polytope.dim() << ", " << cfg.polytope.num_facets()
      << " facets), family " << cfg.family_kind << '\n';
  log << "faces checked: " << v.certificates.size() << '\n';
  log << "weakly incoming: " << (v.weakly_incoming ? "true" : "false") << '\n';
  Json failing = Json::array();
  for (const auto& cert : v.certificates) {
    if (cert.escape) continue;
    std::string facets;
    for (auto i : cert.face.active) facets += (facets.empty() ? "" : ",") + std::to_string(i);
    log << "witness face: facets {" << facets << "} codim " << cert.face.codim() << " at "
        << detail::point_string(cert.face.witness) << '\n';
    failing.push_back({{"facets", cert.face.active}, {"point", detail::to_std(cert.face.witness)}});
  }
  log << "span check: " << (spans ? "spans" : "does not span") << " R^" << cfg.polytope.dim() << '\n';
  run.results() = {{"weakly_incoming", v.weakly_incoming},
                   {"faces", v.certificates.size()},
                   {"failing_faces", failing},
                   {"spans", spans}};
  return run.finish(v.weakly_incoming ? kExitOk : kExitFalse);
}

inline int cmd_sample(Run& run) {
  const auto& cfg = run.cfg();
  const auto& c = cfg.chain;
  auto& log = run.log();
  const int d = cfg.polytope.dim();
  Vector x0 = c.start ? *c.start : cfg.default_start();
  Vector mean = Vector::Zero(d);
  std::size_t accepted = 0, steps = 0, recorded = 0;
  BirkhoffStats bstats;
  if (cfg.birkhoff) bstats.entry_means = Matrix::Zero(cfg.birkhoff->n, cfg.birkhoff->n);

  for (std::size_t k = 0; k < c.chains; ++k) {
    std::string name = c.chains == 1 ? "trajectory.csv" : "trajectory_" + std::to_string(k) + ".csv";
    std::ofstream out = run.open(name);
    if (c.steps == 0) {
      // Nothing simulated: header only.
      out << "step";
      for (int i = 1; i <= d; ++i) out << ",x" << i;
      out << ",accepted\n";
      continue;
    }
    ChainConfig cc;
    cc.h = c.h;
    cc.seed = run.seed();
    cc.stream = k;
    cc.thinning = c.thinning;
    cc.burn_in = c.burn_in;
    Trajectory t = run_chain(cfg.polytope, cfg.family, cc, x0, c.steps);
    write_trajectory_csv(out, t);
    accepted += t.accepted();
    steps += t.steps();
    mean += t.mean() * static_cast<double>(t.size());
    recorded += t.size();
    if (cfg.birkhoff) {
      BirkhoffStats s = birkhoff_stats(*cfg.birkhoff, t);
      bstats.entry_means += s.entry_means * static_cast<double>(t.size());
      bstats.max_drift = std::max(bstats.max_drift, s.max_drift);
    }
  }
  Json res;
  res["steps"] = steps;
  res["chains"] = c.chains;
  if (recorded == 0) {
    log << "no steps simulated\n";
    run.results() = res;
    return run.finish(kExitOk);
  }
  mean /= static_cast<double>(recorded);
  double rate = steps ? static_cast<double>(accepted) / static_cast<double>(steps) : 0.0;
  log << strf("acceptance rate: %.6f over %zu steps\n", rate, steps);
  log << "coordinate means: " << detail::point_string(mean) << '\n';
  res["acceptance_rate"] = rate;
  res["means"] = detail::to_std(mean);
  if (cfg.birkhoff) {
    const int n = cfg.birkhoff->n;
    bstats.entry_means /= static_cast<double>(recorded);
    bstats.max_mean_error = (bstats.entry_means.array() - 1.0 / n).abs().maxCoeff();
    log << "entry means:\n";
    for (int i = 0; i < n; ++i) {
      log << " ";
      for (int j = 0; j < n; ++j) log << strf(" %.5f", bstats.entry_means(i, j));
      log << '\n';
    }
    log << strf("max |mean - 1/%d| = %.5f, max margin drift = %.2e\n", n, bstats.max_mean_error, bstats.max_drift);
    res["max_mean_error"] = bstats.max_mean_error;
    res["max_margin_drift"] = bstats.max_drift;
    run.record(check_birkhoff(bstats, n, run.tol(0.01)));
  }
  run.results() = res;
  return run.finish(kExitOk);
}

inline int cmd_spectrum(Run& run) {
  const auto& cfg = run.cfg();
  const auto& s = cfg.spectral;
  auto& log = run.log();
  Json rows = Json::array();
  std::optional<SpectralReport> finest;
  double finest_h = 0.0;
  for (double h : s.h) {
    Grid grid = discretize(cfg.polytope, s.spacing_for(h), s.cell_cap);
    OperatorMatrix m = assemble_metropolis(cfg.polytope, cfg.family, h, grid, {s.quadrature, true});
    SpectralReport r = spectrum(m, detail::spectrum_options(s, s.eigen_count));
    {
      std::ofstream out = run.open("spectrum_h" + detail::h_tag(h) + ".csv");
      write_spectrum_csv(out, r);
    }
    if (s.write_matrix) {
      std::ofstream out = run.open("matrix_h" + detail::h_tag(h) + ".coo");
      write_coo(out, m.matrix);
    }
    log << strf("h=%g cells=%zu method=%s gap=%.6e gap/h2=%.6f min=%.6f\n", h, grid.size(), r.method.c_str(), r.gap,
                r.gap / (h * h), r.min_eigenvalue);
    std::string cl;
    for (const auto& c : r.clusters)
      if (c.center < s.cluster_bound) cl += strf(" %.4f(%d)", tidy(c.center), c.multiplicity);
    log << "  clusters below " << s.cluster_bound << ":" << cl << '\n';
    rows.push_back({{"h", h},
                    {"cells", grid.size()},
                    {"method", r.method},
                    {"gap", r.gap},
                    {"gap_over_h2", r.gap / (h * h)},
                    {"min_eigenvalue", r.min_eigenvalue}});
    run.record(check_simplicity_floor(r, strf("h=%g", h)));
    if (!finest || h < finest_h) {
      finest = std::move(r);
      finest_h = h;
    }
  }
  Json res;
  res["rows"] = rows;
  if (s.laplacian) {
    Grid grid = discretize(cfg.polytope, s.spacing_for(finest_h), s.cell_cap);
    NeumannReport nr = neumann_spectrum(assemble_laplacian(cfg.polytope, cfg.family, grid, s.quadrature),
                                        detail::spectrum_options(s, s.eigen_count));
    std::ofstream out = run.open("laplacian.csv");
    write_spectrum_csv(out, nr);
    double nu1 = nr.values.size() > 1 ? nr.values[1] : std::nan("");
    log << strf("nu1 reference (limit operator, s=%g): %.6f\n", grid.spacing(), nu1);
    res["nu1_reference"] = nu1;
    run.record(check_multiplicities(*finest, nr, s.cluster_bound, run.tol(0.10)));
  }
  if (s.nu1) res["nu1_analytic"] = *s.nu1;
  run.results() = res;
  return run.finish(kExitOk);
}

inline int cmd_tv(Run& run) {
  const auto& cfg = run.cfg();
  const auto& dg = cfg.diagnostics;
  auto& log = run.log();
  Grid grid = discretize(cfg.polytope, dg.fine_spacing(), cfg.spectral.cell_cap);
  OperatorMatrix m = assemble_metropolis(cfg.polytope, cfg.family, dg.h, grid, {cfg.spectral.quadrature, true});
  SpectrumOptions so = detail::spectrum_options(cfg.spectral, 4);
  so.dense_limit = std::min<std::size_t>(so.dense_limit, 2000);
  SpectralReport r = spectrum(m, so);
  const double lambda2 = r.lambda(1);

  Vector x0 = dg.start ? *dg.start : cfg.default_start();
  require(cfg.polytope.contains(x0), ErrorCode::InvalidStart, "start point is not inside the polytope");
  std::size_t cell = grid.cell_at(x0);
  require(cell != kOutside, ErrorCode::InvalidStart, "start point lies in a cell whose center is outside");
  // Both curves start from the cell center so they describe the same chain.
  Vector start = grid.center(cell);

  std::optional<Grid> bins;
  if (dg.bin_spacing) bins = discretize(cfg.polytope, *dg.bin_spacing, cfg.spectral.cell_cap);

  std::size_t n_max = dg.n_max;
  if (n_max == 0) {
    double lead = std::log(1.0 / dg.fit_floor) + 0.5 * std::log(static_cast<double>(grid.size()));
    n_max = static_cast<std::size_t>(std::ceil(lead / r.gap)) + 10;
    n_max = std::min<std::size_t>(n_max, 1000000);
  }
  for (std::size_t c : dg.checkpoints) n_max = std::max(n_max, c);

  TVCurve exact = tv_exact(m, cell, n_max, bins ? &*bins : nullptr);
  auto [first, last] = default_fit_window(exact, r.gap, dg.fit_floor);
  RateFit fit = fit_rate(exact, first, last);
  log << strf("cells=%zu gap=%.6e lambda2=%.10f -log(lambda2)=%.6f\n", grid.size(), r.gap, lambda2, -std::log(lambda2));
  log << strf("fitted rate=%.6f C=%.4f r2=%.6f window=[%zu,%zu]\n", fit.rate, fit.constant, fit.r_squared, fit.first,
              fit.last);

  std::optional<TVCurve> emp;
  if (dg.mode != "exact") {
    EmpiricalOptions eo;
    eo.replicas = dg.replicas;
    eo.seed = run.seed();
    emp = tv_empirical(cfg.polytope, cfg.family, dg.h, start, dg.checkpoints, bins ? *bins : grid, eo);
    for (std::size_t i = 0; i < emp->size(); ++i)
      log << strf("n=%zu empirical=%.5f exact=%.5f\n", emp->steps[i], emp->tv[i], exact.tv[emp->steps[i]]);
    log << emp->note << '\n';
  }
  {
    std::ofstream out = run.open("tv.csv");
    std::vector<const TVCurve*> curves;
    if (dg.mode != "empirical") curves.push_back(&exact);
    if (emp) curves.push_back(&*emp);
    write_tv_csv(out, curves);
  }
  run.results() = {{"cells", grid.size()},
                   {"bins", bins ? bins->size() : grid.size()},
                   {"gap", r.gap},
                   {"lambda2", lambda2},
                   {"fitted_rate", fit.rate},
                   {"fitted_constant", fit.constant},
                   {"r_squared", fit.r_squared},
                   {"window", {fit.first, fit.last}}};
  run.record(check_tv(exact, fit, lambda2, emp ? &*emp : nullptr, run.tol(0.05)));
  return run.finish(kExitOk);
}

inline int cmd_sweep(Run& run) {
  const auto& cfg = run.cfg();
  const auto& s = cfg.spectral;
  auto& log = run.log();
  SweepOptions so;
  so.resolution = s.resolution;
  so.quadrature = s.quadrature;
  so.spectrum = detail::spectrum_options(s, std::min(s.eigen_count, 4));
  so.reference = s.laplacian;
  auto rows = gap_sweep(cfg.polytope, cfg.family, s.h, so);
  {
    std::ofstream out = run.open("sweep.csv");
    write_sweep_csv(out, rows);
  }
  for (const auto& r : rows)
    log << strf("h=%g cells=%zu gap=%.6e gap/h2=%.6f nu1_ref=%.6f\n", r.h, r.cells, r.gap, r.gap_over_h2,
                r.nu1_reference);
  double nu1 = s.nu1 ? *s.nu1 : rows.back().nu1_reference;
  Json res;
  res["nu1"] = nu1;
  res["nu1_source"] = s.nu1 ? "config" : "limit operator";
  Json jr = Json::array();
  for (const auto& r : rows) jr.push_back({{"h", r.h}, {"gap", r.gap}, {"gap_over_h2", r.gap_over_h2}});
  res["rows"] = jr;
  run.results() = res;
  if (std::isfinite(nu1)) run.record(check_gap_convergence(rows, nu1, run.tol(0.10)));
  return run.finish(kExitOk);
}

/// Loads the config, runs one command, and maps errors to exit code 1.
inline int run_command(const std::string& command, const RunOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    set_num_threads(opt.threads);
    require(!opt.config_path.empty(), ErrorCode::Config, "--config is required");
    Run run(command, load_config(opt.config_path), opt, out);
    if (command == "check") return cmd_check(run);
    if (command == "sample") return cmd_sample(run);
    if (command == "spectrum") return cmd_spectrum(run);
    if (command == "tv") return cmd_tv(run);
    if (command == "sweep") return cmd_sweep(run);
    fail(ErrorCode::InvalidArgument, "unknown command '" + command + "'");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return kExitError;
}

}  // namespace polymetro
