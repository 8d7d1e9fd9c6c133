#pragma once

// Bounded open convex polytopes {x : l_j(x) > b_j} and the geometric
// questions the Metropolis chain asks of them: membership, activity counts,
// chords along a direction, faces, and whether a direction family can always
// step off the boundary.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "polymetro/error.hpp"
#include "polymetro/family.hpp"
#include "polymetro/lp.hpp"

namespace polymetro {

/// Affine map from intrinsic coordinates to ambient coordinates.
struct AffineEmbedding {
  Matrix linear;
  Vector offset;

  Vector apply(const Vector& x) const { return linear * x + offset; }
};

/// Count value meaning "outside the closure".
inline constexpr std::size_t kOutside = std::numeric_limits<std::size_t>::max();

class Polytope {
 public:
  /// Builds {x : forms.row(j) . x > offsets(j)}. Rows of `forms` are the
  /// linear forms in intrinsic coordinates.
  static Polytope build(Matrix forms, Vector offsets, std::optional<AffineEmbedding> embedding = std::nullopt) {
    const Eigen::Index m = forms.rows();
    const Eigen::Index d = forms.cols();
    require(d >= 1, ErrorCode::InvalidArgument, "polytope dimension must be positive");
    require(offsets.size() == m, ErrorCode::InvalidArgument, "forms and offsets disagree in length");
    for (Eigen::Index j = 0; j < m; ++j) {
      require(forms.row(j).norm() > 0.0, ErrorCode::DegenerateForm, "form " + std::to_string(j) + " is zero");
    }
    if (embedding) {
      require(embedding->linear.cols() == d && embedding->offset.size() == embedding->linear.rows(),
              ErrorCode::InvalidArgument, "embedding shape does not match the polytope");
    }

    Polytope p;
    p.forms_ = std::move(forms);
    p.offsets_ = std::move(offsets);
    p.norms_ = p.forms_.rowwise().norm();
    p.normals_ = p.norms_.cwiseInverse().asDiagonal() * p.forms_;
    p.embedding_ = std::move(embedding);
    p.find_interior_point();
    p.find_bounding_box();
    return p;
  }

  int dim() const { return static_cast<int>(forms_.cols()); }
  int ambient_dim() const { return embedding_ ? static_cast<int>(embedding_->linear.rows()) : dim(); }
  Eigen::Index num_facets() const { return forms_.rows(); }

  const Matrix& forms() const { return forms_; }
  const Vector& offsets() const { return offsets_; }
  /// Row k is the unit inward normal of facet k.
  const Matrix& normals() const { return normals_; }
  const Vector& witness() const { return witness_; }
  /// Largest inscribed-ball radius found by the interior-point LP.
  double inradius() const { return inradius_; }
  const Vector& box_lo() const { return box_lo_; }
  const Vector& box_hi() const { return box_hi_; }
  double diameter() const { return (box_hi_ - box_lo_).norm(); }
  const std::optional<AffineEmbedding>& embedding() const { return embedding_; }

  Vector to_ambient(const Vector& x) const { return embedding_ ? embedding_->apply(x) : x; }

  double slack(Eigen::Index j, const Vector& x) const { return forms_.row(j).dot(x) - offsets_(j); }
  double distance(Eigen::Index j, const Vector& x) const { return slack(j, x) / norms_(j); }

  /// Strict membership; points on the boundary are outside.
  bool contains(const Vector& x) const {
    for (Eigen::Index j = 0; j < forms_.rows(); ++j) {
      if (!(forms_.row(j).dot(x) > offsets_(j))) return false;
    }
    return true;
  }

 private:
  void find_interior_point() {
    // max eps s.t. nu_j . x - eps >= beta_j, with x = xp - xm free.
    const Eigen::Index m = forms_.rows();
    const Eigen::Index d = forms_.cols();
    constexpr double kCap = 1e6;
    lp::LinearProgram prog(2 * d + 1);
    Vector c = Vector::Zero(2 * d + 1);
    c(2 * d) = 1.0;
    prog.set_objective(c);
    for (Eigen::Index j = 0; j < m; ++j) {
      Vector row(2 * d + 1);
      row << normals_.row(j).transpose(), -normals_.row(j).transpose(), -1.0;
      prog.add_constraint(row, lp::Relation::GreaterEqual, offsets_(j) / norms_(j));
    }
    Vector cap = Vector::Zero(2 * d + 1);
    cap(2 * d) = 1.0;
    prog.add_constraint(cap, lp::Relation::LessEqual, kCap);
    lp::Result r = lp::solve(prog);
    double scale = 1.0 + (offsets_.array() / norms_.array()).abs().maxCoeff();
    if (r.status != lp::Status::Optimal || r.value <= 1e-9 * scale) {
      fail(ErrorCode::EmptyPolytope, "no interior point exists");
    }
    witness_ = r.x.head(d) - r.x.segment(d, d);
    inradius_ = r.value;
  }

  void find_bounding_box() {
    const Eigen::Index m = forms_.rows();
    const Eigen::Index d = forms_.cols();
    box_lo_.resize(d);
    box_hi_.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (double sense : {-1.0, 1.0}) {
        lp::LinearProgram prog(2 * d);
        Vector c = Vector::Zero(2 * d);
        c(i) = sense;
        c(d + i) = -sense;
        prog.set_objective(c);
        for (Eigen::Index j = 0; j < m; ++j) {
          Vector row(2 * d);
          row << forms_.row(j).transpose(), -forms_.row(j).transpose();
          prog.add_constraint(row, lp::Relation::GreaterEqual, offsets_(j));
        }
        lp::Result r = lp::solve(prog);
        if (r.status == lp::Status::Unbounded) {
          fail(ErrorCode::Unbounded, "coordinate " + std::to_string(i) + " is unbounded");
        }
        require(r.status == lp::Status::Optimal, ErrorCode::LPFailure, "bounding-box LP failed");
        (sense > 0 ? box_hi_ : box_lo_)(i) = sense * r.value;
      }
    }
  }

  Matrix forms_;
  Vector offsets_;
  Vector norms_;
  Matrix normals_;
  Vector witness_;
  double inradius_ = 0.0;
  Vector box_lo_;
  Vector box_hi_;
  std::optional<AffineEmbedding> embedding_;
};

/// Default geometric tolerance 1e-9 (1 + |b| + |x|).
inline double default_tolerance(const Polytope& p, const Vector& x) {
  return 1e-9 * (1.0 + p.offsets().cwiseAbs().maxCoeff() + x.norm());
}

/// Number of facets within `tol` of x; 0 inside, kOutside beyond the closure.
inline std::size_t activity_count(const Polytope& p, const Vector& x, double tol) {
  std::size_t count = 0;
  for (Eigen::Index j = 0; j < p.num_facets(); ++j) {
    double dist = p.distance(j, x);
    if (dist < -tol) return kOutside;
    if (dist <= tol) ++count;
  }
  return count;
}

enum class DirectionKind { StrictlyIncoming, Incoming, Parallel, StrictlyOutgoing };

struct DirectionClass {
  DirectionKind kind;
  double inner;  // <u, nu_k>
  double tolerance = 0.0;

  bool incoming() const { return inner >= -tolerance; }
};

/// Position of u relative to facet k. `kind` holds the most specific label;
/// incoming() also holds for StrictlyIncoming and Parallel.
inline DirectionClass classify_direction(const Polytope& p, const Vector& u, Eigen::Index k, double tol) {
  require(u.norm() > 0.0, ErrorCode::ZeroDirection, "cannot classify a zero direction");
  require(k >= 0 && k < p.num_facets(), ErrorCode::InvalidArgument, "facet index out of range");
  double inner = u.dot(p.normals().row(k).transpose());
  DirectionKind kind = DirectionKind::Incoming;
  if (inner > tol) kind = DirectionKind::StrictlyIncoming;
  else if (inner < -tol) kind = DirectionKind::StrictlyOutgoing;
  else kind = DirectionKind::Parallel;
  return DirectionClass{kind, inner, tol};
}

/// The open interval {t in [-1, 1] : x + h t e in Omega}.
struct Chord {
  double lo = -1.0;
  double hi = 1.0;

  bool empty() const { return !(hi > lo); }
  double length() const { return empty() ? 0.0 : hi - lo; }
};

inline Chord chord_interval(const Polytope& p, const Vector& x, const Vector& e, double h) {
  Chord c;
  for (Eigen::Index j = 0; j < p.num_facets(); ++j) {
    double rate = h * p.forms().row(j).dot(e);
    double slack = p.slack(j, x);
    if (rate > 0.0) c.lo = std::max(c.lo, -slack / rate);
    else if (rate < 0.0) c.hi = std::min(c.hi, -slack / rate);
    else if (!(slack > 0.0)) return Chord{0.0, 0.0};
  }
  if (c.empty()) return Chord{0.0, 0.0};
  return c;
}

struct Face {
  std::vector<Eigen::Index> active;  // indices of the tight facets
  Vector witness;                    // point in the relative interior
  double margin = 0.0;               // slack of the inactive facets at the witness

  std::size_t codim() const { return active.size(); }
};

namespace detail {

inline double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

struct FaceProbe {
  bool closed_nonempty = false;
  double margin = -std::numeric_limits<double>::infinity();
  Vector point;
};

// max eps s.t. nu_i.x = beta_i (i in I), nu_j.x - eps >= beta_j (j not in I),
// x in a slightly padded bounding box, eps <= 1.
inline FaceProbe probe_face(const Polytope& p, const std::vector<Eigen::Index>& active) {
  const Eigen::Index d = p.dim();
  const double pad = 1e-7 * (1.0 + p.diameter());
  const Vector lo = p.box_lo().array() - pad;
  const Vector hi = p.box_hi().array() + pad;
  const double shift = p.diameter() + 1.0;

  lp::LinearProgram prog(d + 1);
  Vector c = Vector::Zero(d + 1);
  c(d) = 1.0;
  prog.set_objective(c);
  std::vector<bool> in_set(static_cast<std::size_t>(p.num_facets()), false);
  for (auto i : active) in_set[static_cast<std::size_t>(i)] = true;
  for (Eigen::Index j = 0; j < p.num_facets(); ++j) {
    Vector nu = p.normals().row(j).transpose();
    double beta = p.offsets()(j) / p.forms().row(j).norm() - nu.dot(lo);
    Vector row(d + 1);
    if (in_set[static_cast<std::size_t>(j)]) {
      row << nu, 0.0;
      prog.add_constraint(row, lp::Relation::Equal, beta);
    } else {
      row << nu, -1.0;
      prog.add_constraint(row, lp::Relation::GreaterEqual, beta - shift);
    }
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    Vector row = Vector::Zero(d + 1);
    row(i) = 1.0;
    prog.add_constraint(row, lp::Relation::LessEqual, hi(i) - lo(i));
  }
  Vector cap = Vector::Zero(d + 1);
  cap(d) = 1.0;
  prog.add_constraint(cap, lp::Relation::LessEqual, shift + 1.0);

  lp::Result r = lp::solve(prog);
  FaceProbe probe;
  if (r.status == lp::Status::Unbounded) fail(ErrorCode::LPFailure, "face LP reported unbounded");
  if (r.status == lp::Status::Infeasible) return probe;
  probe.margin = r.value - shift;
  probe.point = r.x.head(d) + lo;
  probe.closed_nonempty = probe.margin >= -1e-9;
  return probe;
}

}  // namespace detail

/// All nonempty faces with at most `max_codim` tight facets, ordered by
/// codimension, then lexicographically by active set.
inline std::vector<Face> enumerate_faces(const Polytope& p, std::size_t max_codim, double tol = 1e-8) {
  const auto m = static_cast<std::size_t>(p.num_facets());
  max_codim = std::min(max_codim, m);
  double widest = 0.0;
  for (std::size_t k = 0; k <= max_codim; ++k) widest = std::max(widest, detail::binomial(m, k));
  require(widest <= 1e6, ErrorCode::TooManySubsets,
          "C(" + std::to_string(m) + ", k) exceeds 1e6 for some k <= " + std::to_string(max_codim));

  std::vector<Face> faces;
  std::vector<std::vector<Eigen::Index>> parents{{}};
  for (std::size_t k = 1; k <= max_codim && !parents.empty(); ++k) {
    std::vector<std::vector<Eigen::Index>> next;
    for (const auto& parent : parents) {
      Eigen::Index start = parent.empty() ? 0 : parent.back() + 1;
      for (auto j = start; j < static_cast<Eigen::Index>(m); ++j) {
        auto active = parent;
        active.push_back(j);
        detail::FaceProbe probe = detail::probe_face(p, active);
        if (!probe.closed_nonempty) continue;
        if (probe.margin > tol) faces.push_back(Face{active, probe.point, probe.margin});
        next.push_back(std::move(active));
      }
    }
    parents = std::move(next);
  }
  return faces;
}

/// A signed family vector that strictly lowers the activity count of a face.
struct EscapeDirection {
  std::size_t vector_index = 0;
  int sign = 1;
};

/// Returns a signed direction theta*e with <theta e, nu_i> >= -tol for every
/// active facet and > tol for at least one, if the family has one.
inline std::optional<EscapeDirection> find_escape(const Polytope& p, const Face& face,
                                                  const std::vector<Vector>& vectors, double tol = 1e-9) {
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    Vector unit = vectors[k].normalized();
    for (int sign : {1, -1}) {
      bool all_incoming = true;
      bool some_strict = false;
      for (auto i : face.active) {
        double inner = sign * unit.dot(p.normals().row(i).transpose());
        if (inner < -tol) {
          all_incoming = false;
          break;
        }
        if (inner > tol) some_strict = true;
      }
      if (all_incoming && some_strict) return EscapeDirection{k, sign};
    }
  }
  return std::nullopt;
}

struct FaceCertificate {
  Face face;
  std::optional<EscapeDirection> escape;
};

struct IncomingVerdict {
  bool weakly_incoming = true;
  std::optional<Face> witness;               // first face without an escape direction
  std::vector<FaceCertificate> certificates;  // one entry per boundary face
};

/// Decides the weakly-incoming condition face by face. Continuous families are
/// checked through their declared witness vectors.
inline IncomingVerdict is_weakly_incoming(const Polytope& p, const DirectionFamily& family, double tol = 1e-9) {
  require(family.dim() == p.dim(), ErrorCode::InvalidArgument, "family and polytope dimensions differ");
  const auto& vectors = family.checking_vectors();
  require(!vectors.empty(), ErrorCode::InvalidFamily, "continuous family declares no witness vectors");
  IncomingVerdict verdict;
  for (auto& face : enumerate_faces(p, static_cast<std::size_t>(p.num_facets()))) {
    auto escape = find_escape(p, face, vectors, tol);
    if (!escape && verdict.weakly_incoming) {
      verdict.weakly_incoming = false;
      verdict.witness = face;
    }
    verdict.certificates.push_back(FaceCertificate{std::move(face), escape});
  }
  return verdict;
}

/// Faces at which no signed family vector lowers the activity count.
inline std::vector<Face> failing_faces(const Polytope& p, const DirectionFamily& family, double tol = 1e-9) {
  std::vector<Face> out;
  for (auto& cert : is_weakly_incoming(p, family, tol).certificates) {
    if (!cert.escape) out.push_back(std::move(cert.face));
  }
  return out;
}

inline Eigen::Index family_rank(const DirectionFamily& family, double tol = 1e-10) {
  const auto& vectors = family.checking_vectors();
  if (vectors.empty()) return 0;
  Matrix m(family.dim(), static_cast<Eigen::Index>(vectors.size()));
  for (std::size_t k = 0; k < vectors.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = vectors[k].normalized();
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  qr.setThreshold(tol);
  return qr.rank();
}

/// True iff the family (or its witness set) spans R^d.
inline bool span_check(const DirectionFamily& family, double tol = 1e-10) {
  return family_rank(family, tol) == family.dim();
}

/// The open unit cube (0, 1)^d.
inline Polytope unit_cube(int d) {
  Matrix forms(2 * d, d);
  Vector offsets(2 * d);
  forms.setZero();
  for (int i = 0; i < d; ++i) {
    forms(2 * i, i) = 1.0;
    offsets(2 * i) = 0.0;
    forms(2 * i + 1, i) = -1.0;
    offsets(2 * i + 1) = -1.0;
  }
  return Polytope::build(forms, offsets);
}

/// Equilateral triangle with vertices A = (0, sqrt 3), B = (-1, 0), C = (1, 0).
/// Facet order: AB, AC, BC, so vertex A is the face {0, 1}, B is {0, 2}, C is {1, 2}.
inline Polytope equilateral_triangle() {
  const double r3 = std::sqrt(3.0);
  Matrix forms(3, 2);
  forms << r3, -1.0,
          -r3, -1.0,
           0.0, 1.0;
  Vector offsets(3);
  offsets << -r3, -r3, 0.0;
  return Polytope::build(forms, offsets);
}

}  // namespace polymetro
