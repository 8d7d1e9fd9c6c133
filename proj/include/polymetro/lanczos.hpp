#pragma once

// Thick-restart block Lanczos for the algebraically largest eigenpairs of a
// symmetric operator given only through block products. The projected
// matrix is formed explicitly from the stored images A V, so after a restart
// the kept Ritz vectors plus their residual block carry on exactly as in
// Krylov-Schur. Full reorthogonalization (two Gram-Schmidt passes) keeps the
// basis orthonormal to working precision, and the block size lets repeated
// eigenvalues appear together.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "polymetro/error.hpp"
#include "polymetro/rng.hpp"

namespace polymetro {

struct LanczosOptions {
  int block = 4;
  int max_basis = 0;      // 0: chosen from k and the block size
  int max_restarts = 400;
  double tol = 1e-10;     // residual tolerance relative to the spectral radius estimate
  std::uint64_t seed = 0x5eed;
};

struct EigenPairs {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // matching columns
  int restarts = 0;
  int products = 0;
};

using BlockOperator = std::function<void(const Eigen::MatrixXd& in, Eigen::MatrixXd& out)>;

namespace detail {

// Orthogonalizes the columns of w against basis.leftCols(used), twice.
inline void project_out(const Eigen::MatrixXd& basis, Eigen::Index used, Eigen::MatrixXd& w) {
  if (used == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::MatrixXd c = basis.leftCols(used).transpose() * w;
    w.noalias() -= basis.leftCols(used) * c;
  }
}

// Orthonormal block spanning w after projection; dependent directions are
// replaced by fresh random vectors so the basis keeps growing.
inline Eigen::MatrixXd orthonormal_block(const Eigen::MatrixXd& basis, Eigen::Index used, Eigen::MatrixXd w,
                                         Rng& rng) {
  const Eigen::Index n = w.rows();
  const double scale = std::max(1.0, w.colwise().norm().maxCoeff());
  project_out(basis, used, w);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (int attempt = 0; attempt < 4; ++attempt) {
      if (j > 0) {
        for (int pass = 0; pass < 2; ++pass) w.col(j) -= w.leftCols(j) * (w.leftCols(j).transpose() * w.col(j));
      }
      double norm = w.col(j).norm();
      if (norm > 1e-10 * scale) {
        w.col(j) /= norm;
        break;
      }
      for (Eigen::Index i = 0; i < n; ++i) w(i, j) = rng.normal();
      Eigen::MatrixXd col = w.col(j);
      project_out(basis, used, col);
      w.col(j) = col;
      if (attempt == 3) fail(ErrorCode::NoConvergence, "could not extend the Krylov basis");
    }
  }
  return w;
}

}  // namespace detail

/// Largest k eigenpairs of the symmetric n x n operator `apply`.
inline EigenPairs largest_eigenpairs(const BlockOperator& apply, Eigen::Index n, int k, LanczosOptions opt = {}) {
  require(k >= 1 && k <= n, ErrorCode::InvalidArgument, "requested eigenpair count out of range");
  const Eigen::Index b = std::min<Eigen::Index>(opt.block, n);
  Eigen::Index m = opt.max_basis > 0 ? opt.max_basis : std::max<Eigen::Index>(3 * k + 6 * b, 60);
  m = std::min<Eigen::Index>(((m + b - 1) / b) * b, n);
  require(m >= k + b || m == n, ErrorCode::InvalidArgument, "Krylov basis too small for the request");

  Rng rng(opt.seed);
  Eigen::MatrixXd v(n, m), av(n, m), h = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd next(n, b);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < b; ++j) next(i, j) = rng.normal();

  Eigen::Index used = 0;
  EigenPairs out;
  Eigen::MatrixXd image;
  for (int restart = 0; restart <= opt.max_restarts; ++restart) {
    while (used < m) {
      Eigen::Index cols = std::min(b, m - used);
      Eigen::MatrixXd q = detail::orthonormal_block(v, used, next.leftCols(cols), rng);
      apply(q, image);
      ++out.products;
      v.middleCols(used, cols) = q;
      av.middleCols(used, cols) = image;
      Eigen::MatrixXd proj = v.leftCols(used + cols).transpose() * image;
      h.block(0, used, used + cols, cols) = proj;
      h.block(used, 0, cols, used + cols) = proj.transpose();
      used += cols;
      next = image;
      if (next.cols() < b) next.conservativeResize(Eigen::NoChange, b);
    }

    Eigen::MatrixXd hs = 0.5 * (h + h.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hs);
    const Eigen::VectorXd& theta = es.eigenvalues();  // ascending
    const double radius = std::max(theta.cwiseAbs().maxCoeff(), 1e-300);

    Eigen::MatrixXd y = es.eigenvectors().rightCols(k).rowwise().reverse();
    Eigen::VectorXd tk = theta.tail(k).reverse();
    Eigen::MatrixXd ritz = v * y;
    Eigen::MatrixXd resid = av * y - ritz * tk.asDiagonal();
    double worst = resid.colwise().norm().maxCoeff();
    if (worst <= opt.tol * radius || m == n) {
      out.values = tk;
      out.vectors = std::move(ritz);
      out.restarts = restart;
      return out;
    }
    if (restart == opt.max_restarts) break;

    // Keep the top Ritz vectors, continue from the residual block of the
    // vectors we still want.
    Eigen::Index keep = std::min<Eigen::Index>(m - 2 * b, std::max<Eigen::Index>(k + b, m / 2));
    Eigen::MatrixXd yk = es.eigenvectors().rightCols(keep);
    Eigen::VectorXd thk = theta.tail(keep);
    Eigen::MatrixXd vk = v * yk;
    Eigen::MatrixXd avk = av * yk;
    Eigen::MatrixXd r = avk.rightCols(k) - vk.rightCols(k) * thk.tail(k).asDiagonal();
    v.leftCols(keep) = vk;
    av.leftCols(keep) = avk;
    h.setZero();
    h.topLeftCorner(keep, keep) = thk.asDiagonal();
    used = keep;
    detail::project_out(v, used, r);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(r);
    Eigen::MatrixXd qfull = qr.householderQ() * Eigen::MatrixXd::Identity(n, std::min<Eigen::Index>(b, r.cols()));
    next = Eigen::MatrixXd(n, b);
    next.leftCols(qfull.cols()) = qfull;
    for (Eigen::Index j = qfull.cols(); j < b; ++j)
      for (Eigen::Index i = 0; i < n; ++i) next(i, j) = rng.normal();
  }
  fail(ErrorCode::NoConvergence, "block Lanczos did not converge within " + std::to_string(opt.max_restarts) +
                                     " restarts");
}

}  // namespace polymetro
