#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "mpcrl/types.hpp"

namespace mpcrl {

/// Result of a standard-form linear program min c'x s.t. Ax = b, x >= 0.
struct LpSolution {
  bool feasible = false;
  bool bounded = true;
  Vec x;
  double objective = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Revised simplex with Bland's rule on an explicit basis. Problems here are
// tiny (a handful of rows), so the basis is refactorized every iteration.
class SimplexCore {
 public:
  SimplexCore(const Mat& a, const Vec& b) : a_(a), b_(b) {}

  // Runs simplex from the given starting basis for costs c. `blocked`
  // columns are never allowed to enter. Returns false if unbounded.
  bool run(const Vec& c, std::vector<int>& basis,
           const std::vector<bool>& blocked) {
    const int m = static_cast<int>(a_.rows());
    const int n = static_cast<int>(a_.cols());
    constexpr double kTol = 1e-11;

    for (int iter = 0; iter < 10000; ++iter) {
      Mat basis_mat(m, m);
      for (int i = 0; i < m; ++i) basis_mat.col(i) = a_.col(basis[i]);
      Eigen::PartialPivLU<Mat> lu(basis_mat);
      const Vec x_b = lu.solve(b_);
      Vec c_b(m);
      for (int i = 0; i < m; ++i) c_b[i] = c[basis[i]];
      const Vec y = lu.transpose().solve(c_b);

      // Entering column: smallest index with negative reduced cost.
      int enter = -1;
      for (int j = 0; j < n; ++j) {
        if (blocked[j]) continue;
        if (std::find(basis.begin(), basis.end(), j) != basis.end()) continue;
        if (c[j] - y.dot(a_.col(j)) < -kTol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) {
        x_ = Vec::Zero(n);
        for (int i = 0; i < m; ++i) x_[basis[i]] = x_b[i];
        return true;
      }

      const Vec w = lu.solve(a_.col(enter));
      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        if (w[i] > kTol) {
          const double ratio = x_b[i] / w[i];
          if (ratio < best_ratio - kTol ||
              (ratio < best_ratio + kTol &&
               (leave < 0 || basis[i] < basis[leave]))) {
            best_ratio = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return false;  // unbounded
      basis[leave] = enter;
    }
    return false;
  }

  const Vec& solution() const { return x_; }

 private:
  Mat a_;
  Vec b_;
  Vec x_;
};

}  // namespace detail

/// Two-phase simplex for min c'x s.t. Ax = b, x >= 0.
inline LpSolution solve_standard_form_lp(Mat a, Vec b, const Vec& c) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  require_dims(b.size() == m && c.size() == n, "LP dimension mismatch");

  // Phase 1 with nonnegative right-hand side and artificial variables.
  for (int i = 0; i < m; ++i) {
    if (b[i] < 0.0) {
      a.row(i) *= -1.0;
      b[i] *= -1.0;
    }
  }
  Mat a1(m, n + m);
  a1 << a, Mat::Identity(m, m);
  Vec c1 = Vec::Zero(n + m);
  c1.tail(m).setOnes();

  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;
  std::vector<bool> blocked(n + m, false);

  detail::SimplexCore core(a1, b);
  LpSolution out;
  if (!core.run(c1, basis, blocked)) return out;  // cannot happen: bounded
  const double phase1 = c1.dot(core.solution());
  if (phase1 > 1e-9) return out;  // infeasible

  // Phase 2: artificials may linger in the basis at value zero but must
  // never re-enter.
  for (int j = n; j < n + m; ++j) blocked[j] = true;
  Vec c2 = Vec::Zero(n + m);
  c2.head(n) = c;
  if (!core.run(c2, basis, blocked)) {
    out.feasible = true;
    out.bounded = false;
    return out;
  }

  out.feasible = true;
  out.x = core.solution().head(n);
  out.objective = c.dot(out.x);
  return out;
}

}  // namespace mpcrl
