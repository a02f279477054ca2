#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "mpcrl/nlp_problem.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

/// Primal-dual point of the relaxed KKT system. At every accepted solver
/// iterate h(y) < 0 and mu > 0 hold componentwise, not just at convergence.
struct PrimalDualPoint {
  Vec y;       ///< primal variables
  Vec lambda;  ///< equality multipliers
  Vec mu;      ///< inequality multipliers
  double tau = 0.0;

  Vec stacked() const {
    Vec z(y.size() + lambda.size() + mu.size());
    z << y, lambda, mu;
    return z;
  }
};

namespace kkt {

inline void check_dims(const NlpInstance& inst, const PrimalDualPoint& z) {
  const NlpDims d = inst.dims();
  require_dims(z.y.size() == d.n_y, "primal dimension mismatch");
  require_dims(z.lambda.size() == d.n_eq, "equality multiplier mismatch");
  require_dims(z.mu.size() == d.n_in, "inequality multiplier mismatch");
  require_dims(inst.params.d.size() == 0 ||
                   inst.params.d.size() == inst.problem->action_dim(),
               "disturbance dimension mismatch");
  require_dims(inst.params.theta.size() == 0 ||
                   inst.params.theta.size() == inst.problem->theta_dim(),
               "theta dimension mismatch");
}

/// Relaxed KKT residual, stacked as
///   [ nabla_y Phi^d + nabla_y h' mu + nabla_y f' lambda ;
///     f ;
///     diag(mu) h + tau ].
inline Vec residual(const NlpInstance& inst, const PrimalDualPoint& z) {
  check_dims(inst, z);
  const NlpDims dm = inst.dims();
  const NlpProblem& pb = *inst.problem;
  const NlpParams& p = inst.params;

  Vec grad = pb.cost_gradient(z.y, p);
  require_dims(grad.size() == dm.n_y, "cost gradient dimension mismatch");
  if (p.d.size() > 0) grad.head(p.d.size()) += p.d;
  if (dm.n_eq > 0) {
    const Mat jf = pb.equality_jacobian(z.y, p);
    require_dims(jf.rows() == dm.n_eq && jf.cols() == dm.n_y,
                 "equality Jacobian dimension mismatch");
    grad += jf.transpose() * z.lambda;
  }
  Vec h;
  if (dm.n_in > 0) {
    const Mat jh = pb.inequality_jacobian(z.y, p);
    require_dims(jh.rows() == dm.n_in && jh.cols() == dm.n_y,
                 "inequality Jacobian dimension mismatch");
    grad += jh.transpose() * z.mu;
    h = pb.inequality(z.y, p);
    require_dims(h.size() == dm.n_in, "inequality dimension mismatch");
  }

  Vec r(dm.dim_z());
  r.head(dm.n_y) = grad;
  if (dm.n_eq > 0) {
    const Vec f = pb.equality(z.y, p);
    require_dims(f.size() == dm.n_eq, "equality dimension mismatch");
    r.segment(dm.n_y, dm.n_eq) = f;
  }
  if (dm.n_in > 0)
    r.tail(dm.n_in) =
        (z.mu.array() * h.array() + z.tau).matrix();
  return r;
}

/// Dense Jacobian of the residual with respect to z = (y, lambda, mu):
///
///   [ H_L          Jf'   Jh'     ]
///   [ Jf           0     0       ]
///   [ diag(mu) Jh  0     diag(h) ]
inline Mat residual_jacobian(const NlpInstance& inst,
                             const PrimalDualPoint& z) {
  check_dims(inst, z);
  const NlpDims dm = inst.dims();
  const NlpProblem& pb = *inst.problem;
  const NlpParams& p = inst.params;

  Mat jac = Mat::Zero(dm.dim_z(), dm.dim_z());
  Mat hl = pb.cost_hessian(z.y, p);
  require_dims(hl.rows() == dm.n_y && hl.cols() == dm.n_y,
               "cost Hessian dimension mismatch");
  if (dm.n_eq > 0) hl += pb.weighted_equality_hessian(z.y, p, z.lambda);
  if (dm.n_in > 0) hl += pb.weighted_inequality_hessian(z.y, p, z.mu);
  jac.topLeftCorner(dm.n_y, dm.n_y) = hl;

  if (dm.n_eq > 0) {
    const Mat jf = pb.equality_jacobian(z.y, p);
    jac.block(0, dm.n_y, dm.n_y, dm.n_eq) = jf.transpose();
    jac.block(dm.n_y, 0, dm.n_eq, dm.n_y) = jf;
  }
  if (dm.n_in > 0) {
    const Mat jh = pb.inequality_jacobian(z.y, p);
    const Vec h = pb.inequality(z.y, p);
    jac.block(0, dm.n_y + dm.n_eq, dm.n_y, dm.n_in) = jh.transpose();
    jac.block(dm.n_y + dm.n_eq, 0, dm.n_in, dm.n_y) =
        z.mu.asDiagonal() * jh;
    jac.block(dm.n_y + dm.n_eq, dm.n_y + dm.n_eq, dm.n_in, dm.n_in)
        .diagonal() = h;
  }
  return jac;
}

/// Sparse variant of residual_jacobian() for problems with sparse_kkt().
inline Eigen::SparseMatrix<double> residual_jacobian_sparse(
    const NlpInstance& inst, const PrimalDualPoint& z,
    double diagonal_shift = 0.0) {
  check_dims(inst, z);
  const NlpDims dm = inst.dims();
  const NlpProblem& pb = *inst.problem;
  const NlpParams& p = inst.params;

  NlpProblem::Triplets trip;
  pb.lagrangian_hessian_triplets(z.y, p, z.lambda, z.mu, trip);

  NlpProblem::Triplets jf_t;
  if (dm.n_eq > 0) pb.equality_jacobian_triplets(z.y, p, jf_t);
  for (const auto& t : jf_t) {
    trip.emplace_back(t.col(), dm.n_y + t.row(), t.value());  // Jf'
    trip.emplace_back(dm.n_y + t.row(), t.col(), t.value());  // Jf
  }

  NlpProblem::Triplets jh_t;
  if (dm.n_in > 0) pb.inequality_jacobian_triplets(z.y, p, jh_t);
  const int in_off = dm.n_y + dm.n_eq;
  for (const auto& t : jh_t) {
    trip.emplace_back(t.col(), in_off + t.row(), t.value());        // Jh'
    trip.emplace_back(in_off + t.row(), t.col(),
                      z.mu[t.row()] * t.value());                   // mu Jh
  }
  if (dm.n_in > 0) {
    const Vec h = pb.inequality(z.y, p);
    for (int i = 0; i < dm.n_in; ++i)
      trip.emplace_back(in_off + i, in_off + i, h[i]);
  }
  if (diagonal_shift != 0.0)
    for (int i = 0; i < dm.dim_z(); ++i)
      trip.emplace_back(i, i, diagonal_shift);

  Eigen::SparseMatrix<double> jac(dm.dim_z(), dm.dim_z());
  jac.setFromTriplets(trip.begin(), trip.end());
  return jac;
}

/// dr/dd. The disturbance enters the cost as d' y[0:n_a], so this is the
/// constant selection matrix [I_{n_a}; 0] stacked over the residual rows.
inline Mat residual_d_jacobian(const NlpInstance& inst) {
  const NlpDims dm = inst.dims();
  const int n_a = inst.problem->action_dim();
  Mat out = Mat::Zero(dm.dim_z(), n_a);
  out.topLeftCorner(n_a, n_a).setIdentity();
  return out;
}

/// dr/dtheta, assembled from the problem's exact parameter derivatives:
///   [ d(nabla Phi)/dth + d(Jf' lambda)/dth + d(Jh' mu)/dth ;
///     df/dth ;
///     diag(mu) dh/dth ].
inline Mat residual_theta_jacobian(const NlpInstance& inst,
                                   const PrimalDualPoint& z) {
  check_dims(inst, z);
  const NlpDims dm = inst.dims();
  const int n_th = inst.problem->theta_dim();
  const NlpProblem& pb = *inst.problem;
  const NlpParams& p = inst.params;

  Mat out = Mat::Zero(dm.dim_z(), n_th);
  Mat top = pb.cost_gradient_dtheta(z.y, p);
  require_dims(top.rows() == dm.n_y && top.cols() == n_th,
               "cost_gradient_dtheta dimension mismatch");
  if (dm.n_eq > 0) top += pb.equality_jact_mult_dtheta(z.y, p, z.lambda);
  if (dm.n_in > 0) top += pb.inequality_jact_mult_dtheta(z.y, p, z.mu);
  out.topRows(dm.n_y) = top;
  if (dm.n_eq > 0)
    out.middleRows(dm.n_y, dm.n_eq) = pb.equality_dtheta(z.y, p);
  if (dm.n_in > 0)
    out.bottomRows(dm.n_in) = z.mu.asDiagonal() * pb.inequality_dtheta(z.y, p);
  return out;
}

/// Contraction sum_k d(dr/dz)/dz_k v_k, i.e. the directional derivative of
/// the residual Jacobian along v. Within the supported problem class all
/// third-order primal derivatives vanish, so the result is exact and built
/// from constraint Hessians and Jacobians only.
inline Mat zz_contraction(const NlpInstance& inst, const PrimalDualPoint& z,
                          const Vec& v) {
  check_dims(inst, z);
  const NlpDims dm = inst.dims();
  require_dims(v.size() == dm.dim_z(), "contraction direction mismatch");
  const NlpProblem& pb = *inst.problem;
  const NlpParams& p = inst.params;

  const Vec v_y = v.head(dm.n_y);
  const Vec v_lambda = v.segment(dm.n_y, dm.n_eq);
  const Vec v_mu = v.tail(dm.n_in);

  Mat out = Mat::Zero(dm.dim_z(), dm.dim_z());
  Mat hl = Mat::Zero(dm.n_y, dm.n_y);
  if (dm.n_eq > 0) hl += pb.weighted_equality_hessian(z.y, p, v_lambda);
  if (dm.n_in > 0) hl += pb.weighted_inequality_hessian(z.y, p, v_mu);
  out.topLeftCorner(dm.n_y, dm.n_y) = hl;

  if (dm.n_eq > 0) {
    const Mat djf = pb.equality_hessian_vec(z.y, p, v_y);
    require_dims(djf.rows() == dm.n_eq && djf.cols() == dm.n_y,
                 "equality_hessian_vec dimension mismatch");
    out.block(0, dm.n_y, dm.n_y, dm.n_eq) = djf.transpose();
    out.block(dm.n_y, 0, dm.n_eq, dm.n_y) = djf;
  }
  if (dm.n_in > 0) {
    const Mat jh = pb.inequality_jacobian(z.y, p);
    const Mat djh = pb.inequality_hessian_vec(z.y, p, v_y);
    require_dims(djh.rows() == dm.n_in && djh.cols() == dm.n_y,
                 "inequality_hessian_vec dimension mismatch");
    const int in_off = dm.n_y + dm.n_eq;
    out.block(0, in_off, dm.n_y, dm.n_in) = djh.transpose();
    out.block(in_off, 0, dm.n_in, dm.n_y) =
        v_mu.asDiagonal() * jh + z.mu.asDiagonal() * djh;
    out.block(in_off, in_off, dm.n_in, dm.n_in).diagonal() = jh * v_y;
  }
  return out;
}

}  // namespace kkt

/// Relaxed KKT residual of an instance at a primal-dual point, stacked as
/// stationarity, equalities, perturbed complementarity.
inline Vec evaluate_residual(const NlpInstance& inst,
                             const PrimalDualPoint& z) {
  return kkt::residual(inst, z);
}

}  // namespace mpcrl
