#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "mpcrl/rng.hpp"
#include "mpcrl/sensitivities.hpp"
#include "mpcrl/solver.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

struct ExplorationConfig {
  double sigma = 1e-3;  ///< exploration scale; Cov(d) = sigma * shape
  Mat shape;            ///< symmetric positive-definite shape matrix Sigma

  enum class MMode { plain_inverse, pseudo_inverse };
  MMode m_mode = MMode::plain_inverse;
  /// Relative singular-value floor for pseudo_inverse mode; directions with
  /// eigenvalues below floor * lambda_max are truncated.
  double pinv_floor_rel = 1e-8;
  /// Skips the corrections entirely (M = I, c = 0), for ablations.
  bool uncorrected = false;

  void validate(int n_a) const {
    require(sigma > 0.0, "exploration sigma must be positive");
    require_dims(shape.rows() == n_a && shape.cols() == n_a,
                 "exploration shape matrix dimension mismatch");
    require((shape - shape.transpose()).norm() <= 1e-12 * (1.0 + shape.norm()),
            "exploration shape matrix must be symmetric");
    Eigen::LLT<Mat> llt(shape);
    require(llt.info() == Eigen::Success,
            "exploration shape matrix must be positive definite");
  }
};

/// Everything the critic and the gradient estimator need about one
/// exploratory action.
struct ExplorationRecord {
  Vec s;               ///< state the action was taken in
  Vec a;               ///< applied action
  Vec e;               ///< exploration a - pi_theta(s)
  Mat nabla_theta_pi;  ///< dim theta x n_a
  Mat m;               ///< n_a x n_a symmetric correction
  Vec c;               ///< n_a mean correction
};

/// Correction statistics computed at the undisturbed solution.
struct ExplorationStats {
  Mat m;
  Vec c;
  Mat nabla_theta_pi;
  SensitivityBundle bundle;
};

/// Deterministic policy evaluation: solves the instance at d = 0 and
/// returns the first action_dim primal entries. The action satisfies the
/// instance constraints by construction. Solver failures are thrown with
/// the failing result attached.
inline std::pair<Vec, SolveResult> deterministic_action(
    const NlpInstance& inst, const SolverConfig& config,
    const std::optional<PrimalDualPoint>& warm_start = std::nullopt) {
  require(inst.params.d.size() == 0 || inst.params.d.norm() == 0.0,
          "deterministic_action expects an undisturbed instance");
  SolveResult result = solve(inst, config, warm_start);
  if (!result.ok())
    throw SolverError(std::string("policy solve failed: ") +
                          to_string(result.status),
                      result);
  const Vec action = result.point.y.head(inst.problem->action_dim());
  return {action, std::move(result)};
}

namespace detail {

// Symmetric inverse of a PSD matrix through its eigendecomposition.
// plain mode refuses rank-deficient input; pseudo mode truncates
// eigenvalues below the relative floor.
inline Mat correction_matrix(const Mat& a, const ExplorationConfig& config) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(a);
  require(eig.info() == Eigen::Success, "eigendecomposition failed");
  const Vec& lam = eig.eigenvalues();
  const double lam_max = lam.maxCoeff();
  require(lam_max > 0.0, "exploration covariance estimate is zero");

  Vec inv_lam(lam.size());
  if (config.m_mode == ExplorationConfig::MMode::plain_inverse) {
    if (lam.minCoeff() <= 1e-12 * lam_max)
      throw Error(
          "dg/dd Sigma dg/dd' is numerically rank deficient (strongly "
          "active constraints collapse the exploration); use "
          "pseudo_inverse mode");
    inv_lam = lam.cwiseInverse();
  } else {
    const double floor = config.pinv_floor_rel * lam_max;
    for (int i = 0; i < lam.size(); ++i)
      inv_lam[i] = (lam[i] < floor) ? 0.0 : 1.0 / lam[i];
  }
  Mat m = eig.eigenvectors() * inv_lam.asDiagonal() *
          eig.eigenvectors().transpose();
  return 0.5 * (m + m.transpose());
}

}  // namespace detail

/// Computes the exploration corrections at a solved undisturbed instance:
///   M = (dg/dd Sigma dg/dd')^{-1}   (or pseudo-inverse),
///   c = 1/2 sum_{ij} d2g/(dd_i dd_j) Cov(d)_{ij},  Cov(d) = sigma * Sigma,
/// plus nabla_theta pi from the first-order sensitivities.
inline ExplorationStats exploration_stats(const NlpInstance& inst,
                                          const PrimalDualPoint& z_solved,
                                          const ExplorationConfig& config) {
  const int n_a = inst.problem->action_dim();
  config.validate(n_a);

  ExplorationStats stats;
  stats.bundle = first_order(inst, z_solved);
  second_order(inst, z_solved, stats.bundle);
  stats.nabla_theta_pi = stats.bundle.dg_dtheta.transpose();

  if (config.uncorrected) {
    stats.m = Mat::Identity(n_a, n_a);
    stats.c = Vec::Zero(n_a);
    return stats;
  }

  const Mat cov_dir =
      stats.bundle.dg_dd * config.shape * stats.bundle.dg_dd.transpose();
  stats.m = detail::correction_matrix(cov_dir, config);

  const Mat cov_d = config.sigma * config.shape;
  stats.c = Vec::Zero(n_a);
  for (int comp = 0; comp < n_a; ++comp)
    stats.c[comp] =
        0.5 * (stats.bundle.d2g_dd2[comp].array() * cov_d.array()).sum();
  return stats;
}

struct ExploreOutcome {
  Vec action;
  ExplorationRecord record;
  SolveResult disturbed;
};

/// Draws d ~ N(0, sigma * Sigma), re-solves the instance with the disturbed
/// cost warm-started from the undisturbed solution, and assembles the
/// exploration record from the undisturbed statistics. The returned action
/// is feasible for any draw. A failed disturbed solve is retried once with
/// a fresh draw, then propagated.
inline ExploreOutcome explore_action(const NlpInstance& inst,
                                     const PrimalDualPoint& z0, const Vec& pi,
                                     const ExplorationStats& stats,
                                     const ExplorationConfig& config,
                                     const SolverConfig& solver_config,
                                     RngStream& rng) {
  const int n_a = inst.problem->action_dim();
  config.validate(n_a);
  const Mat chol_shape = Eigen::LLT<Mat>(config.shape).matrixL();
  const double scale = std::sqrt(config.sigma);

  NlpInstance disturbed = inst;
  SolveResult result;
  for (int attempt = 0; attempt < 2; ++attempt) {
    disturbed.params.d = scale * (chol_shape * rng.normal_vec(n_a));
    result = solve(disturbed, solver_config, z0);
    if (result.ok()) break;
  }
  if (!result.ok())
    throw SolverError(std::string("disturbed policy solve failed: ") +
                          to_string(result.status),
                      result);

  ExploreOutcome out;
  out.action = result.point.y.head(n_a);
  out.record.s = inst.params.s;
  out.record.a = out.action;
  out.record.e = out.action - pi;
  out.record.nabla_theta_pi = stats.nabla_theta_pi;
  out.record.m = stats.m;
  out.record.c = stats.c;
  out.disturbed = std::move(result);
  return out;
}

/// Range-space diagnostic: projects each column of dg/dtheta onto the range
/// of dg/dd Sigma dg/dd' and reports the per-parameter residual norms.
/// Near-zero residuals certify that the exploration spans every direction
/// the parameters can move the policy in; large residuals flag parameter
/// directions left unexplored by strongly active constraints.
inline Vec prop3_diagnostic(const SensitivityBundle& bundle,
                            const ExplorationConfig& config) {
  const int n_a = static_cast<int>(bundle.dg_dd.rows());
  const Mat a = bundle.dg_dd * config.shape * bundle.dg_dd.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> eig(a);
  const double lam_max = std::max(eig.eigenvalues().maxCoeff(), 0.0);

  Mat projector = Mat::Zero(n_a, n_a);
  for (int i = 0; i < n_a; ++i)
    if (lam_max > 0.0 &&
        eig.eigenvalues()[i] >= config.pinv_floor_rel * lam_max)
      projector += eig.eigenvectors().col(i) *
                   eig.eigenvectors().col(i).transpose();

  const int n_theta = static_cast<int>(bundle.dg_dtheta.cols());
  Vec residuals(n_theta);
  for (int j = 0; j < n_theta; ++j) {
    const Vec col = bundle.dg_dtheta.col(j);
    residuals[j] = (col - projector * col).norm();
  }
  return residuals;
}

}  // namespace mpcrl
