#pragma once

#include <cmath>
#include <vector>

#include "mpcrl/rng.hpp"
#include "mpcrl/simplex_lp.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

/// Outcome of a convex-hull membership test. When the target is outside the
/// hull, `violation` carries the minimal infinity-norm distance by which any
/// convex combination misses it, as a diagnostic.
struct MembershipResult {
  bool feasible = false;
  Vec weights;
  double violation = 0.0;
};

/// Tests target in Conv(vertices) by solving the linear program
///
///   min t  s.t.  |target - sum_i w_i v_i|_inf <= t,  sum w = 1,  w >= 0.
///
/// The optimal t is zero (up to roundoff) exactly when the point is in the
/// hull; membership is declared for t <= tolerance.
inline MembershipResult convex_membership(const std::vector<Vec>& vertices,
                                          const Vec& target,
                                          double tolerance = 1e-8) {
  require(!vertices.empty(), "membership test needs at least one vertex");
  const int dim = static_cast<int>(target.size());
  const int n_v = static_cast<int>(vertices.size());
  for (const Vec& v : vertices)
    require_dims(v.size() == dim, "vertex dimension mismatch");

  // Variables: [w (n_v); t; slack+ (dim); slack- (dim)] >= 0.
  const int n_x = n_v + 1 + 2 * dim;
  Mat a = Mat::Zero(2 * dim + 1, n_x);
  Vec b(2 * dim + 1);
  for (int c = 0; c < dim; ++c) {
    for (int i = 0; i < n_v; ++i) {
      a(c, i) = vertices[i][c];
      a(dim + c, i) = -vertices[i][c];
    }
    a(c, n_v) = -1.0;
    a(dim + c, n_v) = -1.0;
    a(c, n_v + 1 + c) = 1.0;
    a(dim + c, n_v + 1 + dim + c) = 1.0;
    b[c] = target[c];
    b[dim + c] = -target[c];
  }
  a.row(2 * dim).head(n_v).setOnes();
  b[2 * dim] = 1.0;

  Vec cost = Vec::Zero(n_x);
  cost[n_v] = 1.0;

  const LpSolution lp = solve_standard_form_lp(a, b, cost);
  require(lp.feasible && lp.bounded, "membership LP failed unexpectedly");

  MembershipResult out;
  out.weights = lp.x.head(n_v);
  out.violation = std::max(0.0, lp.objective);
  out.feasible = out.violation <= tolerance;
  return out;
}

/// Random point inside Conv(vertices), drawn as a flat-Dirichlet convex
/// combination of the vertices.
inline Vec sample_in_hull(const std::vector<Vec>& vertices, RngStream& rng) {
  require(!vertices.empty(), "cannot sample from an empty vertex set");
  const int n_v = static_cast<int>(vertices.size());
  Vec w(n_v);
  for (int i = 0; i < n_v; ++i) w[i] = -std::log(1.0 - rng.uniform());
  w /= w.sum();
  Vec point = Vec::Zero(vertices[0].size());
  for (int i = 0; i < n_v; ++i) point += w[i] * vertices[i];
  return point;
}

}  // namespace mpcrl
