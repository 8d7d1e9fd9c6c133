#pragma once

// Small dense linear programs: maximize c'x subject to a_i'x (<=,=,>=) b_i and
// x >= 0. Two-phase tableau simplex with Bland's anti-cycling rule. Sized for
// the handful of variables and constraints that polytope queries need.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "polymetro/error.hpp"

namespace polymetro::lp {

enum class Relation { LessEqual, Equal, GreaterEqual };

enum class Status { Optimal, Infeasible, Unbounded };

struct Result {
  Status status = Status::Infeasible;
  double value = 0.0;
  Eigen::VectorXd x;
};

class LinearProgram {
 public:
  explicit LinearProgram(Eigen::Index num_vars)
      : objective_(Eigen::VectorXd::Zero(num_vars)) {}

  Eigen::Index num_vars() const { return objective_.size(); }
  std::size_t num_constraints() const { return rows_.size(); }

  void set_objective(const Eigen::VectorXd& c) {
    require(c.size() == num_vars(), ErrorCode::InvalidArgument, "objective size mismatch");
    objective_ = c;
  }

  void add_constraint(const Eigen::VectorXd& row, Relation rel, double rhs) {
    require(row.size() == num_vars(), ErrorCode::InvalidArgument, "constraint size mismatch");
    rows_.push_back(row);
    relations_.push_back(rel);
    rhs_.push_back(rhs);
  }

  const Eigen::VectorXd& objective() const { return objective_; }
  const Eigen::VectorXd& row(std::size_t i) const { return rows_[i]; }
  Relation relation(std::size_t i) const { return relations_[i]; }
  double rhs(std::size_t i) const { return rhs_[i]; }

 private:
  Eigen::VectorXd objective_;
  std::vector<Eigen::VectorXd> rows_;
  std::vector<Relation> relations_;
  std::vector<double> rhs_;
};

namespace detail {

class Tableau {
 public:
  Tableau(Eigen::MatrixXd table, std::vector<Eigen::Index> basis, double tol)
      : t_(std::move(table)), basis_(std::move(basis)), tol_(tol) {}

  Eigen::Index rows() const { return t_.rows(); }
  Eigen::Index cols() const { return t_.cols() - 1; }
  double rhs(Eigen::Index i) const { return t_(i, t_.cols() - 1); }
  const std::vector<Eigen::Index>& basis() const { return basis_; }
  double at(Eigen::Index i, Eigen::Index j) const { return t_(i, j); }

  void pivot(Eigen::Index r, Eigen::Index c) {
    t_.row(r) /= t_(r, c);
    for (Eigen::Index i = 0; i < t_.rows(); ++i) {
      if (i != r && t_(i, c) != 0.0) t_.row(i) -= t_(i, c) * t_.row(r);
    }
    basis_[static_cast<std::size_t>(r)] = c;
  }

  void drop_row(Eigen::Index r) {
    Eigen::MatrixXd next(t_.rows() - 1, t_.cols());
    next << t_.topRows(r), t_.bottomRows(t_.rows() - r - 1);
    t_ = std::move(next);
    basis_.erase(basis_.begin() + r);
  }

  // Maximizes cost'x over columns flagged `allowed`. Returns false when
  // the objective is unbounded.
  bool optimize(const Eigen::VectorXd& cost, const std::vector<bool>& allowed) {
    constexpr int kMaxIterations = 100000;
    for (int iter = 0; iter < kMaxIterations; ++iter) {
      // Bland: smallest index with positive reduced cost enters.
      Eigen::Index enter = -1;
      for (Eigen::Index j = 0; j < cols(); ++j) {
        if (!allowed[static_cast<std::size_t>(j)]) continue;
        double reduced = cost(j);
        for (Eigen::Index i = 0; i < rows(); ++i) reduced -= cost(basis_[static_cast<std::size_t>(i)]) * t_(i, j);
        if (reduced > tol_) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;

      Eigen::Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < rows(); ++i) {
        if (t_(i, enter) <= tol_) continue;
        double ratio = rhs(i) / t_(i, enter);
        bool better = ratio < best - tol_;
        bool tie = !better && ratio <= best + tol_ &&
                   basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)];
        if (leave < 0 || better || tie) {
          best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    fail(ErrorCode::LPFailure, "simplex iteration limit reached");
  }

 private:
  Eigen::MatrixXd t_;
  std::vector<Eigen::Index> basis_;
  double tol_;
};

}  // namespace detail

inline Result solve(const LinearProgram& lp, double tol = 1e-10) {
  const Eigen::Index n = lp.num_vars();
  const auto m = static_cast<Eigen::Index>(lp.num_constraints());

  Eigen::Index num_slack = 0;
  Eigen::Index num_art = 0;
  std::vector<Relation> rel(static_cast<std::size_t>(m));
  std::vector<double> sign(static_cast<std::size_t>(m), 1.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    auto k = static_cast<std::size_t>(i);
    rel[k] = lp.relation(k);
    if (lp.rhs(k) < 0.0) {
      sign[k] = -1.0;
      if (rel[k] == Relation::LessEqual) rel[k] = Relation::GreaterEqual;
      else if (rel[k] == Relation::GreaterEqual) rel[k] = Relation::LessEqual;
    }
    if (rel[k] != Relation::Equal) ++num_slack;
    if (rel[k] != Relation::LessEqual) ++num_art;
  }

  const Eigen::Index art_begin = n + num_slack;
  const Eigen::Index total = art_begin + num_art;
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(m, total + 1);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  Eigen::Index slack = n;
  Eigen::Index art = art_begin;
  for (Eigen::Index i = 0; i < m; ++i) {
    auto k = static_cast<std::size_t>(i);
    double scale = std::max(lp.row(k).cwiseAbs().maxCoeff(), std::abs(lp.rhs(k)));
    if (scale == 0.0) scale = 1.0;
    double factor = sign[k] / scale;
    table.row(i).head(n) = lp.row(k).transpose() * factor;
    table(i, total) = lp.rhs(k) * factor;
    switch (rel[k]) {
      case Relation::LessEqual:
        table(i, slack) = 1.0;
        basis[k] = slack++;
        break;
      case Relation::GreaterEqual:
        table(i, slack++) = -1.0;
        table(i, art) = 1.0;
        basis[k] = art++;
        break;
      case Relation::Equal:
        table(i, art) = 1.0;
        basis[k] = art++;
        break;
    }
  }

  detail::Tableau tab(std::move(table), std::move(basis), tol);
  std::vector<bool> allowed(static_cast<std::size_t>(total), true);

  if (num_art > 0) {
    Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(total);
    phase1.tail(num_art).setConstant(-1.0);
    tab.optimize(phase1, allowed);
    double infeasibility = 0.0;
    for (Eigen::Index i = 0; i < tab.rows(); ++i) {
      if (tab.basis()[static_cast<std::size_t>(i)] >= art_begin) infeasibility += tab.rhs(i);
    }
    if (infeasibility > 1e3 * tol) return Result{Status::Infeasible, 0.0, {}};

    // Pivot remaining zero-level artificials out, or drop redundant rows.
    for (Eigen::Index i = tab.rows() - 1; i >= 0; --i) {
      if (tab.basis()[static_cast<std::size_t>(i)] < art_begin) continue;
      Eigen::Index col = -1;
      for (Eigen::Index j = 0; j < art_begin; ++j) {
        if (std::abs(tab.at(i, j)) > tol) {
          col = j;
          break;
        }
      }
      if (col >= 0) tab.pivot(i, col);
      else tab.drop_row(i);
    }
    for (Eigen::Index j = art_begin; j < total; ++j) allowed[static_cast<std::size_t>(j)] = false;
  }

  Eigen::VectorXd cost = Eigen::VectorXd::Zero(total);
  cost.head(n) = lp.objective();
  if (!tab.optimize(cost, allowed)) return Result{Status::Unbounded, 0.0, {}};

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < tab.rows(); ++i) {
    Eigen::Index b = tab.basis()[static_cast<std::size_t>(i)];
    if (b < n) x(b) = tab.rhs(i);
  }
  return Result{Status::Optimal, lp.objective().dot(x), x};
}

}  // namespace polymetro::lp
