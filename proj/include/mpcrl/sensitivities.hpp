#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "mpcrl/kkt.hpp"
#include "mpcrl/nlp_problem.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

/// First- and second-order parametric sensitivities of the relaxed KKT
/// solution map. g denotes the first action_dim primal rows of the solution
/// (the applied control input) as a function of (s, theta, d).
struct SensitivityBundle {
  Mat dz_dd;      ///< dim z x n_a
  Mat dz_dtheta;  ///< dim z x dim theta
  Mat dg_dd;      ///< n_a x n_a, first n_a rows of dz_dd
  Mat dg_dtheta;  ///< n_a x dim theta
  /// d2g_dd2[c](i, j) = d^2 g_c / (d_i d_j); symmetric in (i, j).
  std::vector<Mat> d2g_dd2;
};

namespace detail {

class SensitivityFactorization {
 public:
  SensitivityFactorization(const NlpInstance& inst, const PrimalDualPoint& z)
      : jac_(kkt::residual_jacobian(inst, z)), lu_(jac_) {
    const Vec pivots = lu_.matrixLU().diagonal().cwiseAbs();
    if (pivots.minCoeff() <= 1e-14 * pivots.maxCoeff())
      throw Error(
          "partial-pivot LU of the residual Jacobian dr/dz is singular; "
          "sensitivities are undefined (LICQ or SOSC violated)");
  }

  Mat solve(const Mat& rhs) const { return lu_.solve(rhs); }
  const Mat& jacobian() const { return jac_; }

 private:
  Mat jac_;
  Eigen::PartialPivLU<Mat> lu_;
};

}  // namespace detail

/// Solves the linear sensitivity equations
///   dr/dz dz/dd + dr/dd = 0,   dr/dz dz/dtheta + dr/dtheta = 0
/// at a solved point, sharing one factorization across both right-hand
/// sides. Each solve is checked to residual <= 1e-10 relative.
inline SensitivityBundle first_order(const NlpInstance& inst,
                                     const PrimalDualPoint& z_solved) {
  const int n_a = inst.problem->action_dim();
  const detail::SensitivityFactorization fact(inst, z_solved);

  const Mat dr_dd = kkt::residual_d_jacobian(inst);
  const Mat dr_dtheta = kkt::residual_theta_jacobian(inst, z_solved);

  SensitivityBundle bundle;
  bundle.dz_dd = fact.solve(-dr_dd);
  bundle.dz_dtheta = fact.solve(-dr_dtheta);

  const double scale = std::max(1.0, fact.jacobian().norm());
  const double res_d =
      (fact.jacobian() * bundle.dz_dd + dr_dd).norm() / scale;
  const double res_th =
      (fact.jacobian() * bundle.dz_dtheta + dr_dtheta).norm() / scale;
  require(res_d <= 1e-10 && res_th <= 1e-10,
          "first-order sensitivity solve exceeded the residual tolerance");

  bundle.dg_dd = bundle.dz_dd.topRows(n_a);
  bundle.dg_dtheta = bundle.dz_dtheta.topRows(n_a);
  return bundle;
}

/// Solves the second-order sensitivity equation for each disturbance pair
/// (i, j), reusing one factorization of dr/dz:
///
///   dr/dz d2z/(dd_i dd_j) + (sum_k d2r/(dz dz_k) dz_k/dd_i) dz/dd_j = 0.
///
/// The disturbance enters the residual linearly, so the mixed d-z and pure
/// d-d second derivatives vanish and only the z-z contraction remains. The
/// contraction is evaluated per direction rather than materializing the
/// third-order tensor. Fills bundle.d2g_dd2 (first n_a rows per pair).
inline void second_order(const NlpInstance& inst, const PrimalDualPoint& z_solved,
                         SensitivityBundle& bundle) {
  const int n_a = inst.problem->action_dim();
  require_dims(bundle.dz_dd.cols() == n_a,
               "first-order sensitivities must be computed first");
  const detail::SensitivityFactorization fact(inst, z_solved);

  bundle.d2g_dd2.assign(n_a, Mat::Zero(n_a, n_a));
  for (int i = 0; i < n_a; ++i) {
    const Mat contraction =
        kkt::zz_contraction(inst, z_solved, bundle.dz_dd.col(i));
    for (int j = i; j < n_a; ++j) {
      const Vec rhs = -(contraction * bundle.dz_dd.col(j));
      const Vec d2z = fact.solve(rhs);
      for (int c = 0; c < n_a; ++c) {
        bundle.d2g_dd2[c](i, j) = d2z[c];
        bundle.d2g_dd2[c](j, i) = d2z[c];
      }
    }
  }
}

/// Policy Jacobians extracted from a populated bundle:
/// nabla_theta pi = (dg/dtheta)' and dg/dd (first n_a rows of dz/dd).
struct PolicyJacobians {
  Mat nabla_theta_pi;  ///< dim theta x n_a
  Mat dg_dd;           ///< n_a x n_a
};

inline PolicyJacobians policy_jacobians(const SensitivityBundle& bundle) {
  return PolicyJacobians{bundle.dg_dtheta.transpose(), bundle.dg_dd};
}

}  // namespace mpcrl
