#pragma once

// Experiment documents. Every object is read through a Section that records
// which keys were consumed; leftovers are reported as unknown keys.

#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "polymetro/chain.hpp"
#include "polymetro/error.hpp"
#include "polymetro/family.hpp"
#include "polymetro/geometry.hpp"

namespace polymetro {

using Json = nlohmann::json;

struct ChainSection {
  double h = 0.1;
  std::size_t steps = 1000;
  std::size_t burn_in = 0;
  std::size_t thinning = 1;
  std::size_t chains = 1;
  std::optional<Vector> start;
};

struct SpectralSection {
  std::vector<double> h{0.2};
  double resolution = 8.0;       // s = h / resolution unless spacing is set
  std::optional<double> spacing;
  int eigen_count = 12;
  std::size_t dense_limit = 5000;
  double cluster_tol = 1e-3;
  double cluster_bound = 4.0;    // compare clusters with rescaled value below this
  int quadrature = 0;
  bool laplacian = true;
  std::optional<double> nu1;     // analytic reference, when known
  bool write_matrix = false;
  std::size_t cell_cap = 200000;

  double spacing_for(double hh) const { return spacing ? *spacing : hh / resolution; }
};

struct DiagnosticsSection {
  double h = 0.2;
  double resolution = 8.0;
  std::optional<double> spacing;
  std::optional<double> bin_spacing;
  std::optional<Vector> start;
  std::size_t n_max = 0;  // 0: run until the exact curve drops below fit_floor
  std::vector<std::size_t> checkpoints{10, 30, 90};
  std::size_t replicas = 100000;
  std::string mode = "both";
  double fit_floor = 1e-10;

  double fine_spacing() const { return spacing ? *spacing : h / resolution; }
};

struct ExperimentConfig {
  std::string name;
  std::string origin;
  std::uint64_t seed = 0;
  std::string polytope_kind;
  Polytope polytope;
  std::optional<Birkhoff> birkhoff;
  std::string family_kind;
  DirectionFamily family;
  ChainSection chain;
  SpectralSection spectral;
  DiagnosticsSection diagnostics;
  std::string output_dir = "out";
  std::string canonical;  // sorted compact dump of the document
  std::uint64_t hash = 0;

  Vector default_start() const {
    if (birkhoff) return Vector::Constant(polytope.dim(), 1.0 / birkhoff->n);
    return polytope.witness();
  }
};

inline std::uint64_t fnv1a(const std::string& text, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad("", "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  std::optional<T> opt(const char* key) {
    if (!j_.contains(key)) return std::nullopt;
    seen_.insert(key);
    const Json& v = j_.at(key);
    if (v.is_null()) return std::nullopt;
    return convert<T>(v, key);
  }

  template <class T>
  T get(const char* key, T fallback) {
    auto v = opt<T>(key);
    return v ? *v : fallback;
  }

  template <class T>
  T need(const char* key) {
    auto v = opt<T>(key);
    if (!v) bad(key, "is required");
    return *v;
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) bad(it.key(), "is not a recognized key");
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void bad(const std::string& key, const std::string& what) const {
    std::string at = key.empty() ? (path_.empty() ? "document" : path_) : where(key);
    fail(ErrorCode::Config, "config: '" + at + "' " + what);
  }

 private:
  template <class T>
  T convert(const Json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) bad(key, "must be true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) bad(key, "must be a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) bad(key, "must be a number");
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) bad(key, "must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) bad(key, "must be non-negative");
      }
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, Vector>) {
      auto xs = convert<std::vector<double>>(v, key);
      return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    } else if constexpr (std::is_same_v<T, Matrix>) {
      auto rows = convert<std::vector<std::vector<double>>>(v, key);
      if (rows.empty() || rows.front().empty()) bad(key, "must be a non-empty matrix");
      Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.front().size()) bad(key, "has rows of different lengths");
        for (std::size_t c = 0; c < rows[r].size(); ++c)
          m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
      return m;
    } else {
      // std::vector<U>
      if (!v.is_array()) bad(key, "must be an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<typename T::value_type>(v[i], key + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void line_column(const std::string& text, std::size_t byte, std::size_t& line, std::size_t& column) {
  line = 1;
  column = 1;
  std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
  for (std::size_t i = 0; i < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
}

inline void read_polytope(Section s, ExperimentConfig& cfg) {
  if (s.has("builtin")) {
    std::string kind = s.need<std::string>("builtin");
    cfg.polytope_kind = kind;
    if (kind == "square") {
      cfg.polytope = unit_cube(2);
    } else if (kind == "cube") {
      int d = s.get<int>("dim", 3);
      if (d < 1) s.bad("dim", "must be at least 1");
      cfg.polytope = unit_cube(d);
      cfg.polytope_kind = "cube(" + std::to_string(d) + ")";
    } else if (kind == "triangle") {
      cfg.polytope = equilateral_triangle();
    } else if (kind == "birkhoff") {
      int n = s.get<int>("n", 3);
      cfg.birkhoff = birkhoff(n);
      cfg.polytope = cfg.birkhoff->polytope;
      cfg.polytope_kind = "birkhoff(" + std::to_string(n) + ")";
    } else {
      s.bad("builtin", "must be one of square, cube, triangle, birkhoff");
    }
    s.finish();
    return;
  }
  Matrix forms = s.need<Matrix>("forms");
  Vector offsets = s.need<Vector>("offsets");
  std::optional<AffineEmbedding> embedding;
  if (s.has("embedding")) {
    Section e = s.child("embedding");
    AffineEmbedding emb;
    emb.linear = e.need<Matrix>("linear");
    emb.offset = e.need<Vector>("offset");
    e.finish();
    embedding = std::move(emb);
  }
  s.finish();
  cfg.polytope = Polytope::build(std::move(forms), std::move(offsets), std::move(embedding));
  cfg.polytope_kind = "explicit";
}

inline void read_family(Section s, ExperimentConfig& cfg) {
  const int d = cfg.polytope.dim();
  std::string type = s.need<std::string>("type");
  cfg.family_kind = type;
  if (type == "canonical") {
    cfg.family = canonical_family(d);
  } else if (type == "explicit") {
    auto rows = s.need<std::vector<Vector>>("vectors");
    for (const auto& v : rows)
      if (v.size() != d) s.bad("vectors", "entries must have the polytope dimension " + std::to_string(d));
    cfg.family = DirectionFamily::discrete(std::move(rows));
  } else if (type == "angles") {
    if (d != 2) s.bad("type", "'angles' needs a planar polytope");
    cfg.family = angle_family(s.need<std::vector<double>>("degrees"));
  } else if (type == "birkhoff") {
    if (!cfg.birkhoff) s.bad("type", "'birkhoff' needs the birkhoff builtin polytope");
    cfg.family = cfg.birkhoff->family;
  } else if (type == "sphere") {
    std::string density = s.get<std::string>("density", "uniform");
    double kappa = s.get<double>("kappa", 1.0);
    int q = s.get<int>("quadrature", 64);
    double bound = s.get<double>("bound", 0.0);
    std::vector<Vector> witnesses;
    if (auto w = s.opt<std::vector<Vector>>("witnesses")) {
      witnesses = std::move(*w);
    } else {
      for (int i = 0; i < d; ++i) witnesses.push_back(Vector::Unit(d, i));
    }
    cfg.family = DirectionFamily::continuous(SphereDensity(density, d, kappa), std::move(witnesses), q, bound);
    cfg.family_kind = "sphere(" + density + ")";
  } else {
    s.bad("type", "must be one of canonical, explicit, angles, birkhoff, sphere");
  }
  s.finish();
}

inline void check_start(Section& s, const char* key, const std::optional<Vector>& x, int d) {
  if (x && x->size() != d) s.bad(key, "must have " + std::to_string(d) + " coordinates");
}

}  // namespace detail

/// Parses an experiment document. Syntax errors carry line and column;
/// semantic errors name the offending key path.
inline ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>") {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 0, column = 0;
    detail::line_column(text, e.byte, line, column);
    std::string what = e.what();
    auto colon = what.find(": ");
    fail(ErrorCode::Config, origin + ":" + std::to_string(line) + ":" + std::to_string(column) +
                                ": malformed JSON at line " + std::to_string(line) + ", column " +
                                std::to_string(column) + (colon == std::string::npos ? "" : what.substr(colon)));
  }

  ExperimentConfig cfg;
  cfg.origin = origin;
  cfg.canonical = doc.dump();
  cfg.hash = fnv1a(cfg.canonical);
  try {
    detail::Section top(doc, "");
    cfg.name = top.get<std::string>("name", "");
    cfg.seed = top.get<std::uint64_t>("seed", 0);
    if (!top.has("polytope")) top.bad("polytope", "is required");
    detail::read_polytope(top.child("polytope"), cfg);
    if (!top.has("family")) top.bad("family", "is required");
    detail::read_family(top.child("family"), cfg);
    const int d = cfg.polytope.dim();

    if (top.has("chain")) {
      auto s = top.child("chain");
      auto& c = cfg.chain;
      c.h = s.get("h", c.h);
      c.steps = s.get("steps", c.steps);
      c.burn_in = s.get("burn_in", c.burn_in);
      c.thinning = s.get("thinning", c.thinning);
      c.chains = s.get("chains", c.chains);
      c.start = s.opt<Vector>("start");
      detail::check_start(s, "start", c.start, d);
      if (c.chains == 0) s.bad("chains", "must be at least 1");
      s.finish();
    }
    if (top.has("spectral")) {
      auto s = top.child("spectral");
      auto& c = cfg.spectral;
      c.h = s.get("h", c.h);
      c.resolution = s.get("resolution", c.resolution);
      c.spacing = s.opt<double>("spacing");
      c.eigen_count = s.get("eigen_count", c.eigen_count);
      c.dense_limit = s.get("dense_limit", c.dense_limit);
      c.cluster_tol = s.get("cluster_tol", c.cluster_tol);
      c.cluster_bound = s.get("cluster_bound", c.cluster_bound);
      c.quadrature = s.get("quadrature", c.quadrature);
      c.laplacian = s.get("laplacian", c.laplacian);
      c.nu1 = s.opt<double>("nu1");
      c.write_matrix = s.get("write_matrix", c.write_matrix);
      c.cell_cap = s.get("cell_cap", c.cell_cap);
      if (c.h.empty()) s.bad("h", "must list at least one step size");
      for (double hh : c.h)
        if (!(hh > 0.0)) s.bad("h", "entries must be positive");
      if (!(c.resolution > 0.0)) s.bad("resolution", "must be positive");
      if (c.spacing && !(*c.spacing > 0.0)) s.bad("spacing", "must be positive");
      if (c.eigen_count < 2) s.bad("eigen_count", "must be at least 2");
      s.finish();
    }
    if (top.has("diagnostics")) {
      auto s = top.child("diagnostics");
      auto& c = cfg.diagnostics;
      c.h = s.get("h", c.h);
      c.resolution = s.get("resolution", c.resolution);
      c.spacing = s.opt<double>("spacing");
      c.bin_spacing = s.opt<double>("bin_spacing");
      c.start = s.opt<Vector>("start");
      detail::check_start(s, "start", c.start, d);
      c.n_max = s.get("n_max", c.n_max);
      c.checkpoints = s.get("checkpoints", c.checkpoints);
      c.replicas = s.get("replicas", c.replicas);
      c.mode = s.get("mode", c.mode);
      c.fit_floor = s.get("fit_floor", c.fit_floor);
      if (c.mode != "exact" && c.mode != "empirical" && c.mode != "both")
        s.bad("mode", "must be exact, empirical or both");
      if (!(c.h > 0.0)) s.bad("h", "must be positive");
      s.finish();
    }
    if (top.has("output")) {
      auto s = top.child("output");
      cfg.output_dir = s.get<std::string>("dir", cfg.output_dir);
      s.finish();
    }
    top.finish();
  } catch (const Json::exception& e) {
    fail(ErrorCode::Config, std::string("config: ") + e.what());
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IO, "cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

}  // namespace polymetro
