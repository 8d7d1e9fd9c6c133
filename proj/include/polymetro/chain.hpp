#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "polymetro/error.hpp"
#include "polymetro/family.hpp"
#include "polymetro/geometry.hpp"
#include "polymetro/rng.hpp"

namespace polymetro {

struct ChainConfig {
  double h = 0.1;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::size_t thinning = 1;
  std::size_t burn_in = 0;

  void validate() const {
    require(h > 0.0, ErrorCode::InvalidArgument, "step scale h must be positive");
    require(thinning >= 1, ErrorCode::InvalidArgument, "thinning must be at least 1");
  }
};

/// Draws a move direction: a uniform family member, or a unit vector from
/// the continuous family's density by rejection against the uniform law.
inline void draw_direction_into(const DirectionFamily& family, Rng& rng, double* out) {
  const int d = family.dim();
  if (family.is_discrete()) {
    const auto& v = family.as_discrete().vectors[rng.index(family.as_discrete().vectors.size())];
    for (int i = 0; i < d; ++i) out[i] = v(i);
    return;
  }
  const auto& c = family.as_continuous();
  const bool uniform = c.density.name() == "uniform";
  Vector e(d);
  for (;;) {
    double norm2 = 0.0;
    for (int i = 0; i < d; ++i) {
      e(i) = rng.normal();
      norm2 += e(i) * e(i);
    }
    if (norm2 == 0.0) continue;
    e /= std::sqrt(norm2);
    if (!uniform) {
      double rho = c.density(e);
      if (rho > c.bound) fail(ErrorCode::SamplerBoundViolated, "density exceeds its declared bound");
      if (rng.uniform() * c.bound >= rho) continue;
    }
    for (int i = 0; i < d; ++i) out[i] = e(i);
    return;
  }
}

inline Vector draw_direction(const DirectionFamily& family, Rng& rng) {
  Vector e(family.dim());
  draw_direction_into(family, rng, e.data());
  return e;
}

/// Allocation-free Metropolis kernel for long runs.
class MetropolisKernel {
 public:
  MetropolisKernel(const Polytope& p, const DirectionFamily& family, double h)
      : p_(&p), family_(&family), h_(h), dir_(static_cast<std::size_t>(p.dim())),
        proposal_(static_cast<std::size_t>(p.dim())) {
    require(h > 0.0, ErrorCode::InvalidArgument, "step scale h must be positive");
    require(family.dim() == p.dim(), ErrorCode::InvalidArgument, "family and polytope dimensions differ");
  }

  /// Advances x in place; returns true if the proposal was accepted.
  bool step(double* x, Rng& rng) {
    const int d = p_->dim();
    draw_direction_into(*family_, rng, dir_.data());
    const double u = h_ * (2.0 * rng.uniform() - 1.0);
    for (int i = 0; i < d; ++i) proposal_[static_cast<std::size_t>(i)] = x[i] + u * dir_[static_cast<std::size_t>(i)];
    const Matrix& forms = p_->forms();
    for (Eigen::Index j = 0; j < forms.rows(); ++j) {
      double value = 0.0;
      for (int i = 0; i < d; ++i) value += forms(j, i) * proposal_[static_cast<std::size_t>(i)];
      if (!(value > p_->offsets()(j))) return false;
    }
    for (int i = 0; i < d; ++i) x[i] = proposal_[static_cast<std::size_t>(i)];
    return true;
  }

  const std::vector<double>& last_direction() const { return dir_; }

 private:
  const Polytope* p_;
  const DirectionFamily* family_;
  double h_;
  std::vector<double> dir_;
  std::vector<double> proposal_;
};

struct StepResult {
  Vector state;
  bool accepted = false;
  Vector direction;
};

/// One move: pick a direction, propose x + u e with u uniform on [-h, h],
/// keep it if it stays in the open polytope.
inline StepResult metropolis_step(const Polytope& p, const DirectionFamily& family, double h, const Vector& x,
                                  Rng& rng) {
  require(p.contains(x), ErrorCode::InvalidStart, "state is not inside the polytope");
  MetropolisKernel kernel(p, family, h);
  StepResult r{x, false, Vector()};
  r.accepted = kernel.step(r.state.data(), rng);
  r.direction = Eigen::Map<const Vector>(kernel.last_direction().data(), p.dim());
  return r;
}

/// Exact holding probability m_h(x) = 1 - sum_j w_j |chord_j| / 2.
inline double rejection_mass(const Polytope& p, const DirectionFamily& family, double h, const Vector& x) {
  WeightedDirections wd = family.weighted();
  double kept = 0.0;
  for (std::size_t j = 0; j < wd.size(); ++j) {
    kept += wd.weights[j] * chord_interval(p, x, wd.directions[j], h).length() / 2.0;
  }
  return std::clamp(1.0 - kept, 0.0, 1.0);
}

/// Recorded states of one chain, stored row-major in intrinsic coordinates.
class Trajectory {
 public:
  Trajectory(int dim, Vector start) : dim_(dim), start_(std::move(start)) {}

  int dim() const { return dim_; }
  const Vector& start() const { return start_; }
  std::size_t size() const { return steps_.size(); }
  std::size_t steps() const { return step_count_; }
  std::size_t accepted() const { return accept_count_; }
  double acceptance_rate() const {
    return step_count_ == 0 ? 0.0 : static_cast<double>(accept_count_) / static_cast<double>(step_count_);
  }

  Eigen::Map<const Vector> state(std::size_t i) const {
    return Eigen::Map<const Vector>(data_.data() + i * static_cast<std::size_t>(dim_), dim_);
  }
  std::size_t step_index(std::size_t i) const { return steps_[i]; }
  bool accepted_at(std::size_t i) const { return flags_[i] != 0; }

  void record(std::size_t step, const double* x, bool accepted) {
    data_.insert(data_.end(), x, x + dim_);
    steps_.push_back(step);
    flags_.push_back(accepted ? 1 : 0);
  }

  void count_step(bool accepted) {
    ++step_count_;
    if (accepted) ++accept_count_;
  }

  Vector mean() const {
    Vector m = Vector::Zero(dim_);
    for (std::size_t i = 0; i < size(); ++i) m += state(i);
    return size() == 0 ? m : Vector(m / static_cast<double>(size()));
  }

 private:
  int dim_;
  Vector start_;
  std::vector<double> data_;
  std::vector<std::size_t> steps_;
  std::vector<unsigned char> flags_;
  std::size_t step_count_ = 0;
  std::size_t accept_count_ = 0;
};

/// Runs burn_in discarded steps, then n steps, recording the state at step 0
/// and at every `thinning`-th step. Same (config, inputs) give identical output.
inline Trajectory run_chain(const Polytope& p, const DirectionFamily& family, const ChainConfig& config,
                            const Vector& x0, std::size_t n) {
  config.validate();
  require(x0.size() == p.dim(), ErrorCode::InvalidStart, "start point has the wrong dimension");
  require(p.contains(x0), ErrorCode::InvalidStart, "start point is not inside the polytope");
  Rng rng(config.seed, config.stream);
  MetropolisKernel kernel(p, family, config.h);
  Vector x = x0;
  for (std::size_t i = 0; i < config.burn_in; ++i) kernel.step(x.data(), rng);
  Trajectory traj(p.dim(), x0);
  traj.record(0, x.data(), false);
  for (std::size_t i = 1; i <= n; ++i) {
    bool ok = kernel.step(x.data(), rng);
    traj.count_step(ok);
    if (i % config.thinning == 0) traj.record(i, x.data(), ok);
  }
  return traj;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with header step,x1..xd,accepted.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "step";
  for (int i = 1; i <= traj.dim(); ++i) out << ",x" << i;
  out << ",accepted\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out << traj.step_index(k);
    auto s = traj.state(k);
    for (int i = 0; i < traj.dim(); ++i) out << ',' << format_double(s(i));
    out << ',' << (traj.accepted_at(k) ? 1 : 0) << '\n';
  }
}

/// A 2x2 minor perturbation: +1 at (i1, j1) and (i2, j2), -1 at (i1, j2) and (i2, j1).
struct BirkhoffMove {
  int i1, i2, j1, j2;

  Matrix matrix(int n) const {
    Matrix f = Matrix::Zero(n, n);
    f(i1, j1) = 1.0;
    f(i1, j2) = -1.0;
    f(i2, j1) = -1.0;
    f(i2, j2) = 1.0;
    return f;
  }
};

/// Doubly stochastic N x N matrices in intrinsic coordinates: the upper-left
/// (N-1) x (N-1) block, row-major. The last row and column are completed by
/// the unit margins.
struct Birkhoff {
  int n = 0;
  Polytope polytope;
  DirectionFamily family;
  std::vector<BirkhoffMove> moves;

  /// Full N x N matrix for an intrinsic point.
  Matrix to_matrix(const Vector& x) const {
    Vector flat = polytope.to_ambient(x);
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = flat(i * n + j);
    return a;
  }
};

inline Birkhoff birkhoff(int n) {
  require(n >= 2, ErrorCode::BadSize, "Birkhoff polytope needs N >= 2");
  const int k = n - 1;
  const int d = k * k;
  auto idx = [k](int i, int j) { return i * k + j; };

  // Ambient entry a_ij = linear.row(i n + j) . x + offset(i n + j).
  Matrix linear = Matrix::Zero(n * n, d);
  Vector offset = Vector::Zero(n * n);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      linear(i * n + j, idx(i, j)) = 1.0;
      linear(i * n + k, idx(i, j)) = -1.0;  // last column of row i
      linear(k * n + j, idx(i, j)) = -1.0;  // last row of column j
      linear(k * n + k, idx(i, j)) = 1.0;   // corner
    }
    offset(i * n + k) = 1.0;
    offset(k * n + i) = 1.0;
  }
  offset(k * n + k) = 2.0 - n;

  // Positivity of every entry; offsets are -offset because a_ij > 0.
  Matrix forms = linear;
  Vector offsets = -offset;
  Polytope p = Polytope::build(forms, offsets, AffineEmbedding{linear, offset});

  std::vector<BirkhoffMove> moves;
  std::vector<Vector> vectors;
  for (int i1 = 0; i1 < n; ++i1)
    for (int i2 = i1 + 1; i2 < n; ++i2)
      for (int j1 = 0; j1 < n; ++j1)
        for (int j2 = j1 + 1; j2 < n; ++j2) {
          BirkhoffMove mv{i1, i2, j1, j2};
          Matrix f = mv.matrix(n);
          Vector v(d);
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) v(idx(i, j)) = f(i, j);
          moves.push_back(mv);
          vectors.push_back(std::move(v));
        }
  return Birkhoff{n, std::move(p), DirectionFamily::discrete(std::move(vectors)), std::move(moves)};
}

}  // namespace polymetro
