#pragma once

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "polymetro/chain.hpp"
#include "polymetro/error.hpp"
#include "polymetro/family.hpp"
#include "polymetro/geometry.hpp"
#include "polymetro/grid.hpp"
#include "polymetro/lanczos.hpp"
#include "polymetro/lp.hpp"
#include "polymetro/parallel.hpp"

namespace polymetro {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using ScalarField = std::function<double(const Vector&)>;

/// Discretized Metropolis operator on grid cells.
struct OperatorMatrix {
  SparseMatrix matrix;
  double h = 0.0;
  std::shared_ptr<const Grid> grid;

  std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }
};

struct AssemblyOptions {
  int quadrature = 0;     // direction count for continuous families, 0 = family default
  bool symmetrize = true; // false returns the raw row-stochastic binning
};

namespace detail {

struct RowEntry {
  std::size_t col;
  double value;
};

// Bins the chord of cell i's center along each direction into lattice cells.
inline std::vector<RowEntry> metropolis_row(const Polytope& p, const WeightedDirections& wd, double h,
                                            const Grid& grid, std::size_t i) {
  const int d = grid.dim();
  const double s = grid.spacing();
  const Vector x = grid.center(i);
  std::vector<RowEntry> row;
  std::vector<double> cuts;
  Vector y(d);
  for (std::size_t j = 0; j < wd.size(); ++j) {
    const Vector& e = wd.directions[j];
    Chord c = chord_interval(p, x, e, h);
    if (c.empty()) continue;
    cuts.assign({c.lo, c.hi});
    for (int a = 0; a < d; ++a) {
      double step = h * e(a);
      if (step == 0.0) continue;
      // Lattice planes lo_a + k s crossed for t in (c.lo, c.hi).
      double k0 = (x(a) + c.lo * step - grid.origin()(a)) / s;
      double k1 = (x(a) + c.hi * step - grid.origin()(a)) / s;
      auto kmin = static_cast<long>(std::ceil(std::min(k0, k1)));
      auto kmax = static_cast<long>(std::floor(std::max(k0, k1)));
      for (long k = kmin; k <= kmax; ++k) {
        double t = (grid.origin()(a) + static_cast<double>(k) * s - x(a)) / step;
        if (t > c.lo && t < c.hi) cuts.push_back(t);
      }
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      double len = cuts[k + 1] - cuts[k];
      if (len <= 0.0) continue;
      double tm = 0.5 * (cuts[k] + cuts[k + 1]);
      y = x + (h * tm) * e;
      std::size_t target = grid.cell_at(y);
      if (target == kOutside || target == i) continue;  // held mass, lands on the diagonal
      row.push_back({target, wd.weights[j] * len / 2.0});
    }
  }
  std::sort(row.begin(), row.end(), [](const RowEntry& a, const RowEntry& b) { return a.col < b.col; });
  std::vector<RowEntry> merged;
  for (const auto& r : row) {
    if (!merged.empty() && merged.back().col == r.col) merged.back().value += r.value;
    else merged.push_back(r);
  }
  return merged;
}

inline SparseMatrix with_stochastic_diagonal(const SparseMatrix& offdiag) {
  const Eigen::Index n = offdiag.rows();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(offdiag.nonZeros() + n));
  for (Eigen::Index r = 0; r < n; ++r) {
    double sum = 0.0;
    for (SparseMatrix::InnerIterator it(offdiag, r); it; ++it) {
      if (it.col() == r) continue;
      sum += it.value();
      trips.emplace_back(r, it.col(), it.value());
    }
    double diag = 1.0 - sum;
    require(diag >= -1e-12, ErrorCode::ResolutionTooCoarse,
            "symmetrized binning leaves a negative holding mass; refine the grid");
    trips.emplace_back(r, r, std::max(diag, 0.0));
  }
  SparseMatrix out(n, n);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace detail

/// Grid version of M_h: each cell's chord along every direction is split at
/// lattice planes and each piece is credited to the cell containing its
/// midpoint. Off-grid and self mass stays on the diagonal.
inline OperatorMatrix assemble_metropolis(const Polytope& p, const DirectionFamily& family, double h, const Grid& grid,
                                          AssemblyOptions opt = {}) {
  require(h > 0.0, ErrorCode::InvalidArgument, "step scale h must be positive");
  require(grid.dim() == p.dim() && family.dim() == p.dim(), ErrorCode::InvalidArgument,
          "grid, family and polytope dimensions differ");
  require(grid.spacing() <= h / 4.0 * (1.0 + 1e-12), ErrorCode::ResolutionTooCoarse,
          "grid spacing must satisfy s <= h/4");
  const WeightedDirections wd = family.weighted(opt.quadrature);
  const std::size_t n = grid.size();
  std::vector<std::vector<detail::RowEntry>> rows(n);
  parallel_for(n, [&](std::size_t i) { rows[i] = detail::metropolis_row(p, wd, h, grid, i); });

  std::size_t nnz = 0;
  for (const auto& r : rows) nnz += r.size();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nnz);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& e : rows[i])
      trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e.col), e.value);
  rows.clear();
  SparseMatrix raw(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  raw.setFromTriplets(trips.begin(), trips.end());

  OperatorMatrix out;
  out.h = h;
  out.grid = std::make_shared<const Grid>(grid);
  if (opt.symmetrize) {
    SparseMatrix transposed = raw.transpose();
    SparseMatrix sym = 0.5 * (raw + transposed);
    out.matrix = detail::with_stochastic_diagonal(sym);
  } else {
    out.matrix = detail::with_stochastic_diagonal(raw);
  }
  out.matrix.makeCompressed();
  return out;
}

struct Cluster {
  double center = 0.0;
  int multiplicity = 0;
};

/// Groups ascending values whose neighbours differ by at most
/// rel_tol * max(|a|, |b|, floor).
inline std::pair<std::vector<int>, std::vector<Cluster>> cluster_values(const std::vector<double>& ascending,
                                                                        double rel_tol, double floor = 1e-6) {
  std::vector<int> ids(ascending.size(), 0);
  std::vector<Cluster> clusters;
  double sum = 0.0;
  for (std::size_t i = 0; i < ascending.size(); ++i) {
    bool join = i > 0 && std::abs(ascending[i] - ascending[i - 1]) <=
                             rel_tol * std::max({std::abs(ascending[i]), std::abs(ascending[i - 1]), floor});
    if (!join) {
      if (!clusters.empty()) clusters.back().center = sum / clusters.back().multiplicity;
      clusters.push_back({0.0, 0});
      sum = 0.0;
    }
    sum += ascending[i];
    ++clusters.back().multiplicity;
    ids[i] = static_cast<int>(clusters.size()) - 1;
  }
  if (!clusters.empty()) clusters.back().center = sum / clusters.back().multiplicity;
  return {ids, clusters};
}

struct SpectrumOptions {
  int k = 12;
  bool vectors = false;
  std::size_t dense_limit = 5000;
  double cluster_tol = 1e-3;
  LanczosOptions lanczos{};
};

struct SpectralReport {
  double h = 0.0;
  std::vector<double> eigenvalues;  // descending; the full spectrum in dense mode
  std::vector<double> rescaled;     // (1 - lambda) / h^2
  std::vector<int> cluster_id;      // clusters of rescaled values
  std::vector<Cluster> clusters;
  double min_eigenvalue = 0.0;
  double gap = 0.0;     // 1 - lambda_2
  double delta0 = 0.0;  // distance of the spectrum from -1
  bool complete = false;
  std::string method;
  Matrix vectors;  // columns for the leading eigenvalues when requested

  double lambda(std::size_t i) const { return eigenvalues.at(i); }
};

namespace detail {

inline BlockOperator sparse_operator(const SparseMatrix& a, double sign = 1.0) {
  return [&a, sign](const Matrix& in, Matrix& out) {
    out.noalias() = a * in;
    if (sign != 1.0) out *= sign;
  };
}

inline void finish_report(SpectralReport& r, double cluster_tol) {
  r.rescaled.clear();
  for (double l : r.eigenvalues) r.rescaled.push_back((1.0 - l) / (r.h * r.h));
  std::tie(r.cluster_id, r.clusters) = cluster_values(r.rescaled, cluster_tol);
  r.gap = r.eigenvalues.size() > 1 ? 1.0 - r.eigenvalues[1] : 1.0;
  r.delta0 = 1.0 + r.min_eigenvalue;
}

}  // namespace detail

/// Leading eigenvalues of the symmetric Metropolis matrix plus the bottom one.
inline SpectralReport spectrum(const OperatorMatrix& m, SpectrumOptions opt = {}) {
  const auto n = static_cast<Eigen::Index>(m.size());
  require(opt.k >= 1 && opt.k <= n, ErrorCode::InvalidArgument, "eigenvalue count exceeds the matrix size");
  SpectralReport r;
  r.h = m.h;
  if (m.size() <= opt.dense_limit) {
    Matrix dense = Matrix(m.matrix);
    Eigen::SelfAdjointEigenSolver<Matrix> es(dense, opt.vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    require(es.info() == Eigen::Success, ErrorCode::NoConvergence, "dense eigensolver failed");
    const Vector& ev = es.eigenvalues();
    for (Eigen::Index i = n - 1; i >= 0; --i) r.eigenvalues.push_back(ev(i));
    r.min_eigenvalue = ev(0);
    if (opt.vectors) r.vectors = es.eigenvectors().rightCols(opt.k).rowwise().reverse();
    r.complete = true;
    r.method = "dense";
  } else {
    LanczosOptions lo = opt.lanczos;
    EigenPairs top = largest_eigenpairs(detail::sparse_operator(m.matrix), n, opt.k, lo);
    lo.block = 2;
    EigenPairs bottom = largest_eigenpairs(detail::sparse_operator(m.matrix, -1.0), n, 1, lo);
    for (Eigen::Index i = 0; i < top.values.size(); ++i) r.eigenvalues.push_back(top.values(i));
    r.min_eigenvalue = -bottom.values(0);
    if (opt.vectors) r.vectors = std::move(top.vectors);
    r.method = "lanczos";
  }
  detail::finish_report(r, opt.cluster_tol);
  return r;
}

/// Number of eigenvalues in [1 - h^2 lambda, 1], with multiplicity.
inline std::size_t weyl_count(const SpectralReport& r, double lambda, double h) {
  require(lambda >= 0.0, ErrorCode::InvalidArgument, "Weyl window needs lambda >= 0");
  require(h * h * lambda <= r.delta0, ErrorCode::InvalidArgument, "Weyl window exceeds delta0 / h^2");
  const double cut = 1.0 - h * h * lambda - 1e-10;
  std::size_t count = 0;
  for (double l : r.eigenvalues)
    if (l >= cut) ++count;
  require(r.complete || count < r.eigenvalues.size(), ErrorCode::InvalidArgument,
          "spectral report is truncated inside the Weyl window; request more eigenvalues");
  return count;
}

// ---------------------------------------------------------------------------
// Limit operator

/// One lattice term c (v . grad u)^2 of the diffusion tensor decomposition.
struct StencilTerm {
  std::vector<int> offset;
  double weight = 0.0;
};

/// D = (1/6) int e e^T dmu, the tensor of the limit form int grad u^T D grad u.
inline Matrix diffusion_tensor(const DirectionFamily& family, int quadrature = 0) {
  return family.second_moment(quadrature) / 6.0;
}

namespace detail {

inline void primitive_offsets(int d, int radius, std::vector<std::vector<int>>& out) {
  std::vector<int> v(static_cast<std::size_t>(d), -radius);
  for (;;) {
    // Canonical sign: first nonzero entry positive; primitive: gcd of entries 1.
    int first = 0, g = 0, inf = 0;
    for (int x : v) {
      if (first == 0) first = x;
      g = std::gcd(g, std::abs(x));
      inf = std::max(inf, std::abs(x));
    }
    if (first > 0 && g == 1 && inf == radius) out.push_back(v);
    std::size_t a = 0;
    while (a < v.size() && ++v[a] > radius) v[a++] = -radius;
    if (a == v.size()) break;
  }
}

}  // namespace detail

/// Writes D as a nonnegative combination of v v^T over primitive lattice
/// vectors, preferring short stencils (minimizes sum c |v|^4). Searches
/// offsets of sup-norm up to max_radius.
inline std::vector<StencilTerm> lattice_decomposition(const Matrix& tensor, int max_radius = 8) {
  const auto d = static_cast<int>(tensor.rows());
  Matrix D = 0.5 * (tensor + tensor.transpose());
  const double scale = D.cwiseAbs().maxCoeff();
  require(scale > 0.0, ErrorCode::InvalidFamily, "diffusion tensor vanishes");
  for (Eigen::Index i = 0; i < D.size(); ++i)
    if (std::abs(D.data()[i]) < 1e-13 * scale) D.data()[i] = 0.0;

  std::vector<std::vector<int>> candidates;
  for (int radius = 1; radius <= max_radius; ++radius) {
    detail::primitive_offsets(d, radius, candidates);
    const auto nv = static_cast<Eigen::Index>(candidates.size());
    lp::LinearProgram prog(nv);
    Vector obj(nv);
    for (Eigen::Index k = 0; k < nv; ++k) {
      double n2 = 0.0;
      for (int x : candidates[static_cast<std::size_t>(k)]) n2 += x * x;
      obj(k) = -n2 * n2;
    }
    prog.set_objective(obj);
    for (int a = 0; a < d; ++a) {
      for (int b = a; b < d; ++b) {
        Vector row(nv);
        for (Eigen::Index k = 0; k < nv; ++k) {
          const auto& v = candidates[static_cast<std::size_t>(k)];
          row(k) = v[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(b)];
        }
        prog.add_constraint(row, lp::Relation::Equal, D(a, b) / scale);
      }
    }
    lp::Result res = lp::solve(prog, 1e-12);
    if (res.status != lp::Status::Optimal) continue;
    std::vector<StencilTerm> terms;
    for (Eigen::Index k = 0; k < nv; ++k)
      if (res.x(k) > 1e-14) terms.push_back({candidates[static_cast<std::size_t>(k)], res.x(k) * scale});
    return terms;
  }
  fail(ErrorCode::LPFailure, "diffusion tensor has no lattice decomposition within radius " +
                                 std::to_string(max_radius));
}

/// Stiffness A and lumped mass s^d I for the limit form on the grid. Pairs
/// (x, x + s v) with both cells kept are coupled; pairs leaving the grid are
/// dropped, which is the variational Neumann condition.
struct LaplacianMatrix {
  SparseMatrix stiffness;
  double mass = 0.0;
  std::shared_ptr<const Grid> grid;
  std::vector<StencilTerm> stencil;

  std::size_t size() const { return static_cast<std::size_t>(stiffness.rows()); }
};

inline LaplacianMatrix assemble_laplacian(const Polytope& p, const DirectionFamily& family, const Grid& grid,
                                          int quadrature = 0) {
  require(grid.dim() == p.dim() && family.dim() == p.dim(), ErrorCode::InvalidArgument,
          "grid, family and polytope dimensions differ");
  LaplacianMatrix L;
  L.stencil = lattice_decomposition(diffusion_tensor(family, quadrature));
  L.grid = std::make_shared<const Grid>(grid);
  const int d = grid.dim();
  const double s = grid.spacing();
  L.mass = std::pow(s, d);
  const double scale = std::pow(s, d - 2);
  const std::size_t n = grid.size();
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<char> linked(n, 0);
  for (const auto& term : L.stencil) {
    const double c = term.weight * scale;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = grid.shifted(i, term.offset);
      if (j == kOutside) continue;
      linked[i] = linked[j] = 1;
      auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
      trips.emplace_back(a, a, c);
      trips.emplace_back(b, b, c);
      trips.emplace_back(a, b, -c);
      trips.emplace_back(b, a, -c);
    }
  }
  if (n > 1) {
    for (std::size_t i = 0; i < n; ++i)
      require(linked[i] != 0, ErrorCode::DisconnectedStencil,
              "a grid cell has no stencil neighbour; refine the grid");
  }
  L.stiffness.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  L.stiffness.setFromTriplets(trips.begin(), trips.end());
  L.stiffness.makeCompressed();
  return L;
}

struct NeumannReport {
  std::vector<double> values;  // ascending nu
  std::vector<int> cluster_id;
  std::vector<Cluster> clusters;  // (nu_j, m_j)
  bool complete = false;
  std::string method;
  Matrix vectors;
};

/// Smallest k generalized eigenvalues of A v = nu M v.
inline NeumannReport neumann_spectrum(const LaplacianMatrix& L, SpectrumOptions opt = {}) {
  const auto n = static_cast<Eigen::Index>(L.size());
  require(opt.k >= 1 && opt.k <= n, ErrorCode::InvalidArgument, "eigenvalue count exceeds the matrix size");
  NeumannReport r;
  if (L.size() <= opt.dense_limit) {
    Matrix dense = Matrix(L.stiffness) / L.mass;
    Eigen::SelfAdjointEigenSolver<Matrix> es(dense, opt.vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    require(es.info() == Eigen::Success, ErrorCode::NoConvergence, "dense eigensolver failed");
    for (Eigen::Index i = 0; i < n; ++i) r.values.push_back(es.eigenvalues()(i));
    if (opt.vectors) r.vectors = es.eigenvectors().leftCols(opt.k);
    r.complete = true;
    r.method = "dense";
  } else {
    // Shift-invert: the largest eigenvalues of (A/M + sigma)^{-1} are 1/(nu + sigma).
    const double sigma = 1.0;
    Eigen::SparseMatrix<double> shifted = Eigen::SparseMatrix<double>(L.stiffness) / L.mass;
    Eigen::SparseMatrix<double> id(n, n);
    id.setIdentity();
    shifted += sigma * id;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
    require(solver.info() == Eigen::Success, ErrorCode::SolverFailure, "shifted stiffness factorization failed");
    BlockOperator op = [&solver](const Matrix& in, Matrix& out) { out = solver.solve(in); };
    EigenPairs top = largest_eigenpairs(op, n, opt.k, opt.lanczos);
    for (Eigen::Index i = 0; i < top.values.size(); ++i) r.values.push_back(1.0 / top.values(i) - sigma);
    if (opt.vectors) r.vectors = std::move(top.vectors);
    r.method = "shift-invert lanczos";
  }
  std::tie(r.cluster_id, r.clusters) = cluster_values(r.values, opt.cluster_tol);
  return r;
}

/// Range [lo, hi] of E_E(u) / E_E0(u): d times the extreme eigenvalues of
/// the direction second-moment matrix.
inline std::pair<double, double> form_equivalence_bounds(const DirectionFamily& family, int quadrature = 0) {
  Matrix s = family.second_moment(quadrature);
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const double d = static_cast<double>(family.dim());
  return {d * es.eigenvalues().minCoeff(), d * es.eigenvalues().maxCoeff()};
}

// ---------------------------------------------------------------------------
// Forms, resolvents, minorization

struct FormQuadrature {
  double cell = 0.0;  // x midpoint spacing, 0 = h/10
  int gauss = 16;     // Gauss-Legendre nodes along each chord
};

/// B_h(u, v) = sum_j w_j (1/4h) int int (u(x) - u(x+te))(v(x) - v(x+te)) dt dx
/// over x, x + te in Omega, |t| < h.
inline double dirichlet_form_Bh(const ScalarField& u, const ScalarField& v, const Polytope& p,
                                const DirectionFamily& family, double h, FormQuadrature quad = {}) {
  require(h > 0.0, ErrorCode::InvalidArgument, "step scale h must be positive");
  const double cell = quad.cell > 0.0 ? quad.cell : h / 10.0;
  Grid grid = discretize(p, cell, 4000000);
  const WeightedDirections wd = family.weighted();
  auto [nodes, weights] = gauss_legendre(quad.gauss);
  const std::size_t n = grid.size();
  std::vector<double> partial(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    Vector x = grid.center(i);
    const double ux = u(x), vx = v(x);
    double acc = 0.0;
    for (std::size_t j = 0; j < wd.size(); ++j) {
      Chord c = chord_interval(p, x, wd.directions[j], h);
      if (c.empty()) continue;
      const double half = 0.5 * (c.hi - c.lo), mid = 0.5 * (c.hi + c.lo);
      double line = 0.0;
      for (std::size_t g = 0; g < nodes.size(); ++g) {
        Vector y = x + (h * (mid + half * nodes[g])) * wd.directions[j];
        line += weights[g] * (ux - u(y)) * (vx - v(y));
      }
      // dt = h dtau over the chord in units of h.
      acc += wd.weights[j] * line * half * h / (4.0 * h);
    }
    partial[i] = acc;
  });
  double total = 0.0;
  for (double x : partial) total += x;
  return total * grid.cell_volume();
}

inline Vector sample_on_grid(const Grid& grid, const ScalarField& g) {
  Vector out(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) out(static_cast<Eigen::Index>(i)) = g(grid.center(i));
  return out;
}

struct ResolventComparison {
  double error = 0.0;  // L2 norm of f_h - f with cell-volume weights
  Vector chain_solution;
  Vector limit_solution;
  int iterations = 0;
};

/// Solves ((I - M_h)/h^2 - z) f_h = g and (-Delta_E - z) f = g on one grid.
inline ResolventComparison resolvent_error(const Polytope& p, const DirectionFamily& family, double z,
                                           const ScalarField& g, double h, const Grid& grid, int quadrature = 0) {
  require(z < 0.0, ErrorCode::InvalidArgument, "resolvent point z must be real negative");
  OperatorMatrix m = assemble_metropolis(p, family, h, grid, {quadrature, true});
  LaplacianMatrix L = assemble_laplacian(p, family, grid, quadrature);
  const auto n = static_cast<Eigen::Index>(grid.size());
  Vector rhs = sample_on_grid(grid, g);

  Eigen::SparseMatrix<double> id(n, n);
  id.setIdentity();
  Eigen::SparseMatrix<double> k = (id - Eigen::SparseMatrix<double>(m.matrix)) / (h * h) - z * id;
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-13);
  cg.setMaxIterations(100000);
  cg.compute(k);
  ResolventComparison out;
  out.chain_solution = cg.solve(rhs);
  require(cg.info() == Eigen::Success, ErrorCode::SolverFailure, "conjugate gradients did not converge");
  out.iterations = static_cast<int>(cg.iterations());

  Eigen::SparseMatrix<double> a = Eigen::SparseMatrix<double>(L.stiffness) / L.mass - z * id;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
  require(ldlt.info() == Eigen::Success, ErrorCode::SolverFailure, "limit resolvent factorization failed");
  out.limit_solution = ldlt.solve(rhs);
  require(ldlt.info() == Eigen::Success, ErrorCode::SolverFailure, "limit resolvent solve failed");

  out.error = std::sqrt(grid.cell_volume() * (out.chain_solution - out.limit_solution).squaredNorm());
  return out;
}

/// <(I - M^k) u, u> with cell-volume weights, the iterated form from matrix powers.
inline double iterated_form(const OperatorMatrix& m, const Vector& u, int k) {
  require(k >= 1, ErrorCode::InvalidArgument, "iterated form needs k >= 1");
  Vector w = u;
  for (int i = 0; i < k; ++i) w = m.matrix * w;
  return m.grid->cell_volume() * u.dot(u - w);
}

namespace detail {

// Lattice offsets with Euclidean length below radius (in cells).
inline std::vector<std::vector<int>> offsets_within(int d, double radius) {
  std::vector<std::vector<int>> out;
  const int r = static_cast<int>(std::ceil(radius));
  std::vector<int> v(static_cast<std::size_t>(d), -r);
  for (;;) {
    double n2 = 0.0;
    for (int x : v) n2 += static_cast<double>(x) * x;
    if (std::sqrt(n2) < radius) out.push_back(v);
    std::size_t a = 0;
    while (a < v.size() && ++v[a] > r) v[a++] = -r;
    if (a == v.size()) break;
  }
  return out;
}

inline double minorization_from_power(const OperatorMatrix& m, const Matrix& power, double c2) {
  const Grid& grid = *m.grid;
  const int d = grid.dim();
  const double s = grid.spacing();
  auto offsets = offsets_within(d, c2 * m.h / s);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (const auto& off : offsets) {
      std::size_t j = grid.shifted(i, off);
      if (j == kOutside) continue;
      best = std::min(best, power(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  return best * std::pow(m.h, d) / grid.cell_volume();
}

}  // namespace detail

inline constexpr std::size_t kMinorizationCellCap = 6000;

/// c1 for exactly N steps: h^d min [M^N]_{xy} / s^d over |x - y| < c2 h.
inline double minorization_constant(const OperatorMatrix& m, double c2, int steps) {
  require(steps >= 1, ErrorCode::InvalidArgument, "minorization needs N >= 1");
  require(m.size() <= kMinorizationCellCap, ErrorCode::TooManyCells, "dense matrix powers are capped at 6000 cells");
  Matrix power = Matrix(m.matrix);
  for (int k = 1; k < steps; ++k) power = m.matrix * power;
  return detail::minorization_from_power(m, power, c2);
}

struct Minorization {
  int steps = 0;
  double c1 = 0.0;
};

/// Smallest N <= max_steps with a positive local lower bound c1.
inline Minorization minorization_check(const OperatorMatrix& m, double c2, int max_steps = 12) {
  require(c2 > 0.0, ErrorCode::InvalidArgument, "c2 must be positive");
  require(m.size() <= kMinorizationCellCap, ErrorCode::TooManyCells, "dense matrix powers are capped at 6000 cells");
  Matrix power = Matrix(m.matrix);
  for (int k = 1; k <= max_steps; ++k) {
    if (k > 1) power = m.matrix * power;
    double c1 = detail::minorization_from_power(m, power, c2);
    if (c1 > 0.0) return {k, c1};
  }
  fail(ErrorCode::NotFound, "no N <= " + std::to_string(max_steps) + " gives a positive minorization constant");
}

// ---------------------------------------------------------------------------
// Export

/// Coordinate format, one "row col value" line per stored entry.
inline void write_coo(std::ostream& out, const SparseMatrix& a) {
  out << "row col value\n";
  for (Eigen::Index r = 0; r < a.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(a, r); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << format_double(it.value()) << '\n';
}

inline void write_spectrum_csv(std::ostream& out, const SpectralReport& r) {
  out << "index,eigenvalue,rescaled,cluster_id\n";
  for (std::size_t i = 0; i < r.eigenvalues.size(); ++i)
    out << i << ',' << format_double(r.eigenvalues[i]) << ',' << format_double(r.rescaled[i]) << ','
        << r.cluster_id[i] << '\n';
}

/// Same columns for the limit operator: eigenvalue and rescaled both hold nu.
inline void write_spectrum_csv(std::ostream& out, const NeumannReport& r) {
  out << "index,eigenvalue,rescaled,cluster_id\n";
  for (std::size_t i = 0; i < r.values.size(); ++i)
    out << i << ',' << format_double(r.values[i]) << ',' << format_double(r.values[i]) << ',' << r.cluster_id[i]
        << '\n';
}

}  // namespace polymetro
