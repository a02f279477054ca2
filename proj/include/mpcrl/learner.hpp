#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mpcrl/critic.hpp"
#include "mpcrl/robust_mpc.hpp"
#include "mpcrl/solver.hpp"
#include "mpcrl/theta.hpp"
#include "mpcrl/transitions.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

struct UpdateConfig {
  double alpha = 0.05;
  int dataset_window = 600;
  enum class Mode { unconstrained_gradient, safe_constrained };
  Mode update_mode = Mode::safe_constrained;

  // Interior-point settings for the constrained update solve. The small
  // fixed tau keeps the barrier distortion of the projected parameters
  // below the membership tolerance scale.
  double tau = 1e-5;
  double residual_tolerance = 1e-9;
  int max_newton_iterations = 500;
  double membership_tolerance = 1e-8;

  void validate() const {
    require(alpha >= 0.0, "alpha must be nonnegative");
    require(dataset_window >= 1, "dataset_window must be >= 1");
  }
};

/// Policy-gradient estimate assembled from the batch records:
/// sum over all records of nabla_theta pi M nabla_theta pi' w.
inline Vec estimate_policy_gradient(const TransitionBatch& batch,
                                    const AdvantageModel& advantage) {
  Vec grad = Vec::Zero(advantage.w.size());
  for (const auto& rollout : batch.rollouts)
    for (const auto& tr : rollout)
      grad += tr.record.nabla_theta_pi *
              (tr.record.m * (tr.record.nabla_theta_pi.transpose() *
                              advantage.w));
  return grad;
}

struct PerformanceEstimate {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Sample mean and standard deviation of the per-rollout discounted return
/// sum_k gamma^k L_k across the batch.
inline PerformanceEstimate performance_estimate(const TransitionBatch& batch,
                                                double gamma) {
  const int n = batch.rollout_count();
  require(n > 0, "performance estimate needs at least one rollout");
  Vec returns(n);
  for (int i = 0; i < n; ++i) {
    double value = 0.0;
    double discount = 1.0;
    for (const auto& tr : batch.rollouts[i]) {
      value += discount * tr.cost;
      discount *= gamma;
    }
    returns[i] = value;
  }
  PerformanceEstimate est;
  est.mean = returns.mean();
  est.stddev = (n > 1)
                   ? std::sqrt((returns.array() - est.mean).square().sum() /
                               (n - 1))
                   : 0.0;
  return est;
}

/// Thrown when the constrained update cannot produce a data-consistent
/// parameter vector; carries the transitions violating membership at the
/// previous parameters.
class SafeUpdateError : public Error {
 public:
  SafeUpdateError(const std::string& what, std::vector<int> violating)
      : Error(what), violating_transitions(std::move(violating)) {}
  std::vector<int> violating_transitions;
};

namespace detail {

/// Constrained parameter-update problem: minimize the gradient-step
/// objective 1/2 ||theta - theta_-||^2 + alpha g'(theta - theta_-) subject
/// to every retained transition residual being a convex combination of the
/// W vertices. Primal variables are [theta; vartheta_{k,i}]; the products
/// vartheta * W make the membership equalities bilinear in the primal.
class SafeUpdateProblem final : public NlpProblem {
 public:
  SafeUpdateProblem(const ThetaParams& theta_minus, const Vec& scaled_gradient,
                    std::vector<Transition> transitions)
      : layout_(theta_minus.n_s(), theta_minus.n_a(), theta_minus.w.count()),
        start_theta_(theta_minus),
        theta_minus_flat_(theta_minus.flatten()),
        scaled_gradient_(scaled_gradient),
        transitions_(std::move(transitions)) {
    require_dims(scaled_gradient_.size() == layout_.size,
                 "gradient dimension mismatch");
    require(!transitions_.empty(), "safe update needs at least one transition");

    // If a residual sits on (or beyond) the boundary of W at the previous
    // parameters, start from a slightly inflated polytope so the barrier
    // has room to work with.
    double worst = 0.0;
    for (const auto& tr : transitions_) {
      const MembershipResult member = membership_residual(
          theta_minus, tr.s, tr.a, tr.s_plus, 1e-12);
      worst = std::max(worst, member.violation);
    }
    if (worst > 1e-9) {
      const Vec centroid = start_theta_.w.centroid();
      const double spread = polytope_spread(start_theta_.w);
      const double inflate = 1.05 + (worst > 0.0 ? worst / spread : 0.0);
      for (auto& v : start_theta_.w.vertices)
        v = centroid + inflate * (v - centroid);
    }
  }

  NlpDims dims() const override {
    const int n_d = static_cast<int>(transitions_.size());
    return NlpDims{layout_.size + n_d * layout_.n_vertices,
                   n_d * (layout_.ns + 1), n_d * layout_.n_vertices};
  }
  int action_dim() const override { return 0; }
  int theta_dim() const override { return 0; }
  bool sparse_kkt() const override { return dims().dim_z() > 512; }

  int weight_index(int k, int i) const {
    return layout_.size + k * layout_.n_vertices + i;
  }
  int membership_row(int k, int c) const { return k * (layout_.ns + 1) + c; }
  int sum_row(int k) const { return k * (layout_.ns + 1) + layout_.ns; }

  Vec initial_flat_theta() const { return start_theta_.flatten(); }

  double cost_value(const Vec& y) const {
    const Vec dtheta = y.head(layout_.size) - theta_minus_flat_;
    return 0.5 * dtheta.squaredNorm() + scaled_gradient_.dot(dtheta);
  }

  Vec cost_gradient(const Vec& y, const NlpParams&) const override {
    Vec g = Vec::Zero(dims().n_y);
    g.head(layout_.size) =
        (y.head(layout_.size) - theta_minus_flat_) + scaled_gradient_;
    return g;
  }
  Mat cost_hessian(const Vec&, const NlpParams&) const override {
    Mat h = Mat::Zero(dims().n_y, dims().n_y);
    h.topLeftCorner(layout_.size, layout_.size).setIdentity();
    return h;
  }

  Vec equality(const Vec& y, const NlpParams&) const override {
    Vec f(dims().n_eq);
    for (int k = 0; k < static_cast<int>(transitions_.size()); ++k) {
      const Transition& tr = transitions_[k];
      Vec combo = Vec::Zero(layout_.ns);
      double weight_sum = 0.0;
      for (int i = 0; i < layout_.n_vertices; ++i) {
        const double w = y[weight_index(k, i)];
        weight_sum += w;
        for (int c = 0; c < layout_.ns; ++c)
          combo[c] += w * y[layout_.w_entry(i, c)];
      }
      const Vec f0 = nominal_step(y, tr.s, tr.a);
      for (int c = 0; c < layout_.ns; ++c)
        f[membership_row(k, c)] = tr.s_plus[c] - f0[c] - combo[c];
      f[sum_row(k)] = weight_sum - 1.0;
    }
    return f;
  }

  Mat equality_jacobian(const Vec& y, const NlpParams& p) const override {
    Triplets trip;
    equality_jacobian_triplets(y, p, trip);
    Mat jf = Mat::Zero(dims().n_eq, dims().n_y);
    for (const auto& t : trip) jf(t.row(), t.col()) += t.value();
    return jf;
  }

  void equality_jacobian_triplets(const Vec& y, const NlpParams&,
                                  Triplets& out) const override {
    for (int k = 0; k < static_cast<int>(transitions_.size()); ++k) {
      const Transition& tr = transitions_[k];
      for (int c = 0; c < layout_.ns; ++c) {
        const int row = membership_row(k, c);
        for (int b = 0; b < layout_.ns; ++b)
          out.emplace_back(row, layout_.a0_entry(c, b), -tr.s[b]);
        for (int b = 0; b < layout_.na; ++b)
          out.emplace_back(row, layout_.b0_mat_entry(c, b), -tr.a[b]);
        out.emplace_back(row, layout_.b0_off + c, -1.0);
        for (int i = 0; i < layout_.n_vertices; ++i) {
          out.emplace_back(row, layout_.w_entry(i, c),
                           -y[weight_index(k, i)]);
          out.emplace_back(row, weight_index(k, i),
                           -y[layout_.w_entry(i, c)]);
        }
      }
      for (int i = 0; i < layout_.n_vertices; ++i)
        out.emplace_back(sum_row(k), weight_index(k, i), 1.0);
    }
  }

  Vec inequality(const Vec& y, const NlpParams&) const override {
    return -y.tail(dims().n_in);
  }
  Mat inequality_jacobian(const Vec&, const NlpParams& p) const override {
    Triplets trip;
    inequality_jacobian_triplets(Vec(), p, trip);
    Mat jh = Mat::Zero(dims().n_in, dims().n_y);
    for (const auto& t : trip) jh(t.row(), t.col()) += t.value();
    return jh;
  }
  void inequality_jacobian_triplets(const Vec&, const NlpParams&,
                                    Triplets& out) const override {
    for (int i = 0; i < dims().n_in; ++i)
      out.emplace_back(i, layout_.size + i, -1.0);
  }

  Mat weighted_equality_hessian(const Vec&, const NlpParams&,
                                const Vec& w) const override {
    Mat h = Mat::Zero(dims().n_y, dims().n_y);
    for (int k = 0; k < static_cast<int>(transitions_.size()); ++k)
      for (int c = 0; c < layout_.ns; ++c) {
        const double wk = w[membership_row(k, c)];
        for (int i = 0; i < layout_.n_vertices; ++i) {
          h(weight_index(k, i), layout_.w_entry(i, c)) -= wk;
          h(layout_.w_entry(i, c), weight_index(k, i)) -= wk;
        }
      }
    return h;
  }

  Mat equality_hessian_vec(const Vec&, const NlpParams&,
                           const Vec& v) const override {
    Mat out = Mat::Zero(dims().n_eq, dims().n_y);
    for (int k = 0; k < static_cast<int>(transitions_.size()); ++k)
      for (int c = 0; c < layout_.ns; ++c) {
        const int row = membership_row(k, c);
        for (int i = 0; i < layout_.n_vertices; ++i) {
          out(row, weight_index(k, i)) -= v[layout_.w_entry(i, c)];
          out(row, layout_.w_entry(i, c)) -= v[weight_index(k, i)];
        }
      }
    return out;
  }

  void lagrangian_hessian_triplets(const Vec&, const NlpParams&,
                                   const Vec& lambda, const Vec&,
                                   Triplets& out) const override {
    for (int i = 0; i < layout_.size; ++i) out.emplace_back(i, i, 1.0);
    for (int k = 0; k < static_cast<int>(transitions_.size()); ++k)
      for (int c = 0; c < layout_.ns; ++c) {
        const double lam = lambda[membership_row(k, c)];
        if (lam == 0.0) continue;
        for (int i = 0; i < layout_.n_vertices; ++i) {
          out.emplace_back(weight_index(k, i), layout_.w_entry(i, c), -lam);
          out.emplace_back(layout_.w_entry(i, c), weight_index(k, i), -lam);
        }
      }
  }

  Vec interior_initial_point(const NlpParams&) const override {
    Vec y = Vec::Zero(dims().n_y);
    y.head(layout_.size) = start_theta_.flatten();
    y.tail(dims().n_in).setConstant(1.0 / layout_.n_vertices);
    return y;
  }

 private:
  Vec nominal_step(const Vec& y, const Vec& s, const Vec& a) const {
    Vec f0 = Vec::Zero(layout_.ns);
    for (int r = 0; r < layout_.ns; ++r) {
      for (int c = 0; c < layout_.ns; ++c)
        f0[r] += y[layout_.a0_entry(r, c)] * s[c];
      for (int c = 0; c < layout_.na; ++c)
        f0[r] += y[layout_.b0_mat_entry(r, c)] * a[c];
      f0[r] += y[layout_.b0_off + r];
    }
    return f0;
  }

  static double polytope_spread(const PolytopeW& w) {
    const Vec centroid = w.centroid();
    double spread = 0.0;
    for (const auto& v : w.vertices)
      spread = std::max(spread, (v - centroid).lpNorm<Eigen::Infinity>());
    return std::max(spread, 1e-12);
  }

  ThetaLayout layout_;
  ThetaParams start_theta_;
  Vec theta_minus_flat_;
  Vec scaled_gradient_;
  std::vector<Transition> transitions_;
};

}  // namespace detail

/// Keeps the most recent `window` transitions (batch order preserved).
inline std::vector<Transition> windowed_dataset(
    const std::vector<Transition>& dataset, int window) {
  if (static_cast<int>(dataset.size()) <= window) return dataset;
  return {dataset.end() - window, dataset.end()};
}

/// Gradient-step objective used by the constrained update.
inline double update_objective(const Vec& theta, const Vec& theta_minus,
                               const Vec& scaled_gradient) {
  const Vec d = theta - theta_minus;
  return 0.5 * d.squaredNorm() + scaled_gradient.dot(d);
}

/// Parameter update. In unconstrained_gradient mode this is exactly
/// theta_- - alpha * gradient. In safe_constrained mode it solves the
/// projection-style problem whose constraints keep every retained
/// transition residual inside the (possibly reshaped) polytope W, and
/// verifies membership of the whole dataset under the returned parameters.
inline ThetaParams safe_update(const ThetaParams& theta_minus,
                               const Vec& gradient,
                               const std::vector<Transition>& dataset,
                               const UpdateConfig& config) {
  config.validate();
  const Vec theta_minus_flat = theta_minus.flatten();
  require_dims(gradient.size() == theta_minus_flat.size(),
               "gradient does not match the flat theta layout");

  if (config.update_mode == UpdateConfig::Mode::unconstrained_gradient) {
    return ThetaParams::unflatten(theta_minus_flat - config.alpha * gradient,
                                  theta_minus.n_s(), theta_minus.n_a(),
                                  theta_minus.w.count());
  }

  const std::vector<Transition> window =
      windowed_dataset(dataset, config.dataset_window);
  require(!window.empty(), "safe update needs observed transitions");

  NlpInstance inst;
  inst.problem = std::make_shared<detail::SafeUpdateProblem>(
      theta_minus, config.alpha * gradient, window);

  SolverConfig solver_config;
  solver_config.tau = config.tau;
  solver_config.residual_tolerance = config.residual_tolerance;
  solver_config.max_newton_iterations = config.max_newton_iterations;

  const SolveResult result = solve(inst, solver_config);
  if (!result.ok()) {
    std::vector<int> violating;
    for (int k = 0; k < static_cast<int>(window.size()); ++k)
      if (!membership_residual(theta_minus, window[k].s, window[k].a,
                               window[k].s_plus,
                               config.membership_tolerance)
               .feasible)
        violating.push_back(k);
    throw SafeUpdateError(
        std::string("constrained parameter update failed (") +
            to_string(result.status) + ", residual " +
            std::to_string(result.residual_norm) + "); " +
            std::to_string(violating.size()) +
            " transitions violate membership at the previous parameters",
        violating);
  }

  const ThetaParams theta = ThetaParams::unflatten(
      result.point.y.head(theta_minus_flat.size()), theta_minus.n_s(),
      theta_minus.n_a(), theta_minus.w.count());

  std::vector<int> violating;
  for (int k = 0; k < static_cast<int>(window.size()); ++k)
    if (!membership_residual(theta, window[k].s, window[k].a,
                             window[k].s_plus, config.membership_tolerance)
             .feasible)
      violating.push_back(k);
  if (!violating.empty())
    throw SafeUpdateError(
        "constrained update converged but " +
            std::to_string(violating.size()) +
            " transitions still violate membership under the new parameters",
        violating);
  return theta;
}

}  // namespace mpcrl
