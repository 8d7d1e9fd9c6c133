#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "polymetro/error.hpp"

namespace polymetro {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  require(n >= 1, ErrorCode::InvalidArgument, "Gauss-Legendre needs at least one node");
  Matrix jacobi = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    double beta = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = beta;
    jacobi(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  std::vector<double> nodes(static_cast<std::size_t>(n));
  std::vector<double> weights(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    nodes[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
    double v = es.eigenvectors()(0, k);
    weights[static_cast<std::size_t>(k)] = 2.0 * v * v;
  }
  return {nodes, weights};
}

inline double sphere_area(int dim) {
  double half = 0.5 * dim;
  return 2.0 * std::pow(std::numbers::pi, half) / std::tgamma(half);
}

/// Probability density on the unit sphere S^{d-1} with respect to surface measure.
///
/// "uniform" is available in every dimension. "cos2" (d = 2 only) is
/// proportional to 1 + kappa * cos^2(angle), angle measured from the first axis.
class SphereDensity {
 public:
  SphereDensity() = default;
  SphereDensity(std::string name, int dim, double kappa = 1.0)
      : name_(std::move(name)), dim_(dim), kappa_(kappa) {
    require(dim_ >= 2, ErrorCode::InvalidFamily, "sphere densities need dimension >= 2");
    if (name_ == "uniform") return;
    if (name_ == "cos2") {
      require(dim_ == 2, ErrorCode::InvalidFamily, "cos2 density is defined for d = 2 only");
      require(kappa_ > -1.0, ErrorCode::InvalidFamily, "cos2 density needs kappa > -1");
      return;
    }
    fail(ErrorCode::InvalidFamily, "unknown sphere density '" + name_ + "'");
  }

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  double kappa() const { return kappa_; }

  /// Density at a unit vector.
  double operator()(const Vector& unit) const {
    if (name_ == "uniform") return 1.0 / sphere_area(dim_);
    double c = unit(0);
    return (1.0 + kappa_ * c * c) / ((2.0 + kappa_) * std::numbers::pi);
  }

  double supremum() const {
    if (name_ == "uniform") return 1.0 / sphere_area(dim_);
    return (1.0 + std::max(kappa_, 0.0)) / ((2.0 + kappa_) * std::numbers::pi);
  }

 private:
  std::string name_ = "uniform";
  int dim_ = 2;
  double kappa_ = 1.0;
};

/// Directions with probability weights summing to one.
struct WeightedDirections {
  std::vector<Vector> directions;
  std::vector<double> weights;

  std::size_t size() const { return directions.size(); }
};

/// Quadrature rule on S^{d-1} for the measure density(w) dsigma(w), weights
/// renormalized to sum to one. d = 2: q equispaced angles. d = 3: product
/// rule, Gauss-Legendre in the polar cosine times equispaced azimuth, using
/// about q nodes in total.
inline WeightedDirections sphere_quadrature(const SphereDensity& density, int q) {
  require(q >= 4, ErrorCode::InvalidArgument, "sphere quadrature needs at least 4 nodes");
  WeightedDirections out;
  const int d = density.dim();
  if (d == 2) {
    for (int k = 0; k < q; ++k) {
      double angle = 2.0 * std::numbers::pi * k / q;
      Vector e(2);
      e << std::cos(angle), std::sin(angle);
      out.weights.push_back(density(e) * 2.0 * std::numbers::pi / q);
      out.directions.push_back(std::move(e));
    }
  } else if (d == 3) {
    int nz = std::max(2, static_cast<int>(std::lround(std::sqrt(q / 2.0))));
    int nphi = 2 * nz;
    auto [zs, wz] = gauss_legendre(nz);
    for (int a = 0; a < nz; ++a) {
      double z = zs[static_cast<std::size_t>(a)];
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      for (int b = 0; b < nphi; ++b) {
        double phi = 2.0 * std::numbers::pi * (b + 0.5) / nphi;
        Vector e(3);
        e << r * std::cos(phi), r * std::sin(phi), z;
        out.weights.push_back(density(e) * wz[static_cast<std::size_t>(a)] * 2.0 * std::numbers::pi / nphi);
        out.directions.push_back(std::move(e));
      }
    }
  } else {
    fail(ErrorCode::InvalidFamily, "sphere quadrature is implemented for d = 2 and d = 3");
  }
  double total = 0.0;
  for (double w : out.weights) {
    require(w >= 0.0, ErrorCode::InvalidFamily, "density is negative at a quadrature node");
    total += w;
  }
  require(total > 0.0, ErrorCode::InvalidFamily, "density integrates to zero");
  for (double& w : out.weights) w /= total;
  return out;
}

/// Raw quadrature integral of the density over the sphere (should be 1).
inline double sphere_integral(const SphereDensity& density, int q) {
  const int d = density.dim();
  double total = 0.0;
  if (d == 2) {
    for (int k = 0; k < q; ++k) {
      double angle = 2.0 * std::numbers::pi * k / q;
      Vector e(2);
      e << std::cos(angle), std::sin(angle);
      total += density(e) * 2.0 * std::numbers::pi / q;
    }
    return total;
  }
  if (d == 3) {
    int nz = std::max(2, static_cast<int>(std::lround(std::sqrt(q / 2.0))));
    int nphi = 2 * nz;
    auto [zs, wz] = gauss_legendre(nz);
    for (int a = 0; a < nz; ++a) {
      double r = std::sqrt(std::max(0.0, 1.0 - zs[static_cast<std::size_t>(a)] * zs[static_cast<std::size_t>(a)]));
      for (int b = 0; b < nphi; ++b) {
        double phi = 2.0 * std::numbers::pi * (b + 0.5) / nphi;
        Vector e(3);
        e << r * std::cos(phi), r * std::sin(phi), zs[static_cast<std::size_t>(a)];
        total += density(e) * wz[static_cast<std::size_t>(a)] * 2.0 * std::numbers::pi / nphi;
      }
    }
    return total;
  }
  // Uniform density integrates to one by construction in any dimension.
  require(density.name() == "uniform", ErrorCode::InvalidFamily,
          "only the uniform density is supported beyond d = 3");
  return 1.0;
}

struct DiscreteFamily {
  std::vector<Vector> vectors;
};

struct ContinuousFamily {
  SphereDensity density;
  double bound = 0.0;           // declared sup of the density, used by the sampler
  int quadrature_nodes = 64;
  std::vector<Vector> witnesses;  // vectors in supp(density) used by the geometric check
};

/// A finite list of move directions with uniform weights, or a probability
/// measure on the unit sphere with a quadrature rule and declared witnesses.
class DirectionFamily {
 public:
  static DirectionFamily discrete(std::vector<Vector> vectors) {
    require(!vectors.empty(), ErrorCode::InvalidFamily, "a discrete family needs at least one vector");
    const Eigen::Index d = vectors.front().size();
    for (const auto& v : vectors) {
      require(v.size() == d, ErrorCode::InvalidFamily, "family vectors have mixed dimensions");
      require(v.norm() > 0.0, ErrorCode::ZeroDirection, "family contains a zero vector");
    }
    DirectionFamily f;
    f.dim_ = static_cast<int>(d);
    f.data_ = DiscreteFamily{std::move(vectors)};
    return f;
  }

  static DirectionFamily continuous(SphereDensity density, std::vector<Vector> witnesses,
                                    int quadrature_nodes = 64, double bound = 0.0) {
    const int d = density.dim();
    require(quadrature_nodes >= 4, ErrorCode::InvalidFamily, "quadrature needs at least 4 nodes");
    double integral = sphere_integral(density, d == 2 ? 4096 : 20000);
    require(std::abs(integral - 1.0) <= 1e-6, ErrorCode::InvalidFamily,
            "density does not integrate to 1 over the sphere");
    for (auto& w : witnesses) {
      require(w.size() == d, ErrorCode::InvalidFamily, "witness dimension mismatch");
      require(w.norm() > 0.0, ErrorCode::ZeroDirection, "witness vector is zero");
      require(density(w.normalized()) > 0.0, ErrorCode::InvalidFamily, "witness lies outside supp(density)");
    }
    DirectionFamily f;
    f.dim_ = d;
    f.data_ = ContinuousFamily{density, bound > 0.0 ? bound : density.supremum(), quadrature_nodes,
                               std::move(witnesses)};
    return f;
  }

  int dim() const { return dim_; }
  bool is_discrete() const { return std::holds_alternative<DiscreteFamily>(data_); }

  const DiscreteFamily& as_discrete() const { return std::get<DiscreteFamily>(data_); }
  const ContinuousFamily& as_continuous() const { return std::get<ContinuousFamily>(data_); }

  /// Vectors used by geometric checks: the family itself, or the declared witnesses.
  const std::vector<Vector>& checking_vectors() const {
    if (is_discrete()) return as_discrete().vectors;
    return as_continuous().witnesses;
  }

  /// Directions with probability weights: uniform for discrete families,
  /// quadrature for continuous ones (q overrides the family's node count).
  WeightedDirections weighted(int q = 0) const {
    if (is_discrete()) {
      const auto& v = as_discrete().vectors;
      return WeightedDirections{v, std::vector<double>(v.size(), 1.0 / static_cast<double>(v.size()))};
    }
    const auto& c = as_continuous();
    return sphere_quadrature(c.density, q > 0 ? q : c.quadrature_nodes);
  }

  /// Second-moment matrix sum_j w_j e_j e_j^T of the direction measure.
  Matrix second_moment(int q = 0) const {
    WeightedDirections wd = weighted(q);
    Matrix m = Matrix::Zero(dim_, dim_);
    for (std::size_t j = 0; j < wd.size(); ++j) m += wd.weights[j] * wd.directions[j] * wd.directions[j].transpose();
    return m;
  }

 private:
  int dim_ = 0;
  std::variant<DiscreteFamily, ContinuousFamily> data_;
};

/// The canonical basis of R^d.
inline DirectionFamily canonical_family(int d) {
  std::vector<Vector> v;
  for (int i = 0; i < d; ++i) v.push_back(Vector::Unit(d, i));
  return DirectionFamily::discrete(std::move(v));
}

/// Planar unit vectors at the given polar angles (degrees).
inline DirectionFamily angle_family(const std::vector<double>& degrees) {
  std::vector<Vector> v;
  for (double deg : degrees) {
    double a = deg * std::numbers::pi / 180.0;
    Vector e(2);
    e << std::cos(a), std::sin(a);
    v.push_back(std::move(e));
  }
  return DirectionFamily::discrete(std::move(v));
}

}  // namespace polymetro
