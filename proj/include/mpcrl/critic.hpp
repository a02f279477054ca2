#pragma once

#include <Eigen/Dense>

#include "mpcrl/transitions.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

/// Quadratic feature map: every monomial of (s - center) up to degree two,
/// including the constant. Dimension 1 + n + n(n+1)/2.
inline Vec value_features(const Vec& s, const Vec& center) {
  const int n = static_cast<int>(s.size());
  const Vec z = s - center;
  Vec out(1 + n + n * (n + 1) / 2);
  int at = 0;
  out[at++] = 1.0;
  for (int i = 0; i < n; ++i) out[at++] = z[i];
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out[at++] = z[i] * z[j];
  return out;
}

/// Value estimate over the quadratic features; `center` carries the
/// reference the features are centered at (pure re-parameterization that
/// improves the conditioning of the fit).
struct ValueModel {
  Vec v;
  Vec center;

  double value(const Vec& s) const { return value_features(s, center).dot(v); }
};

/// Compatible advantage weights; dimension equals the flat theta vector.
struct AdvantageModel {
  Vec w;
};

namespace detail {

// Least-squares solve via SVD with the smallest singular values saturated
// at floor_rel * sigma_max (saturated, not truncated).
inline Vec saturated_solve(const Mat& a, const Vec& b, double floor_rel) {
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sing = svd.singularValues();
  require(sing.size() > 0 && sing.maxCoeff() > 0.0,
          "singular value saturation needs a nonzero matrix");
  const double floor = floor_rel * sing.maxCoeff();
  Vec inv(sing.size());
  for (int i = 0; i < sing.size(); ++i)
    inv[i] = 1.0 / std::max(sing[i], floor);
  return svd.matrixV() * inv.asDiagonal() *
         (svd.matrixU().transpose() * b);
}

}  // namespace detail

struct CriticConfig {
  double gamma = 0.99;
  /// Relative saturation floor for the pseudo-inverse in both fits.
  double sv_floor_rel = 1e-6;
};

/// Batch least-squares temporal-difference fit of the value weights:
/// solves sum_k delta_k rho(s_k) = 0 with
/// delta = L + gamma V(s+) - V(s) over all recorded transitions.
inline ValueModel fit_value(const TransitionBatch& batch, const Vec& center,
                            const CriticConfig& config) {
  require(batch.transition_count() > 0, "cannot fit a value on an empty batch");
  const int dim =
      static_cast<int>(value_features(batch.rollouts[0][0].s, center).size());
  Mat a = Mat::Zero(dim, dim);
  Vec b = Vec::Zero(dim);
  for (const auto& rollout : batch.rollouts) {
    for (const auto& tr : rollout) {
      const Vec rho = value_features(tr.s, center);
      const Vec rho_plus = value_features(tr.s_plus, center);
      a += rho * (rho - config.gamma * rho_plus).transpose();
      b += tr.cost * rho;
    }
  }
  require(a.norm() > 0.0, "value features are identically zero");
  ValueModel model;
  model.center = center;
  model.v = detail::saturated_solve(a, b, config.sv_floor_rel);
  return model;
}

/// Advantage feature nabla_theta pi M (a - pi - c) of one record.
inline Vec advantage_features(const ExplorationRecord& rec, const Vec& a) {
  const Vec pi = rec.a - rec.e;
  return rec.nabla_theta_pi * (rec.m * (a - pi - rec.c));
}

/// Batch least-squares temporal-difference fit of the compatible advantage
/// weights on top of a fitted value baseline: solves
/// sum_k delta_k phi_k = 0 with delta = L + gamma V(s+) - V(s) - phi' w.
inline AdvantageModel fit_advantage(const TransitionBatch& batch,
                                    const ValueModel& value,
                                    const CriticConfig& config) {
  require(batch.transition_count() > 0,
          "cannot fit an advantage on an empty batch");
  int dim = 0;
  for (const auto& rollout : batch.rollouts)
    if (!rollout.empty()) {
      dim = static_cast<int>(rollout[0].record.nabla_theta_pi.rows());
      break;
    }
  Mat a = Mat::Zero(dim, dim);
  Vec b = Vec::Zero(dim);
  double feature_mass = 0.0;
  for (const auto& rollout : batch.rollouts) {
    for (const auto& tr : rollout) {
      const Vec phi = advantage_features(tr.record, tr.a);
      feature_mass += phi.lpNorm<Eigen::Infinity>();
      const double target = tr.cost + config.gamma * value.value(tr.s_plus) -
                            value.value(tr.s);
      a += phi * phi.transpose();
      b += target * phi;
    }
  }
  require(feature_mass > 0.0,
          "exploration degenerate: advantage features vanish on the whole "
          "batch");
  AdvantageModel model;
  model.w = detail::saturated_solve(a, b, config.sv_floor_rel);
  return model;
}

/// w' nabla_theta pi M (a - pi - c) for an arbitrary query action.
inline double advantage_value(const AdvantageModel& model,
                              const ExplorationRecord& rec, const Vec& a) {
  return model.w.dot(advantage_features(rec, a));
}

}  // namespace mpcrl
