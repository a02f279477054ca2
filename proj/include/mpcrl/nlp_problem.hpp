#pragma once

#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "mpcrl/types.hpp"

namespace mpcrl {

struct NlpDims {
  int n_y = 0;   ///< primal decision variables
  int n_eq = 0;  ///< equality constraints f
  int n_in = 0;  ///< inequality constraints h
  int dim_z() const { return n_y + n_eq + n_in; }
};

/// Parameter blocks a problem is evaluated at. `theta` are the learnable
/// parameters, `d` the cost-gradient disturbance (dimension action_dim),
/// `s` the current state. Blocks a problem does not use stay empty.
struct NlpParams {
  Vec theta;
  Vec d;
  Vec s;
};

/// Structured quadratically-constrained problem
///
///   min_y  Phi(y, theta, s) + d' y[0:n_a]
///   s.t.   f(y, theta, s) = 0
///          h(y, theta, s) <= 0
///
/// Supported problem class: Phi at most quadratic in y, f and h at most
/// quadratic/bilinear in (y, theta), so every third-order derivative in y
/// vanishes identically and the second-order sensitivities computed from the
/// callbacks below are exact. The disturbance d enters only through the
/// linear cost term on the first action_dim() primal variables, which by
/// convention carry the first control input.
///
/// All evaluation methods must return exact values and exact derivatives;
/// dimensions are checked by the residual assembler on every call.
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual NlpDims dims() const = 0;
  /// Number of leading primal variables carrying the action (= dim of d).
  virtual int action_dim() const = 0;
  virtual int theta_dim() const = 0;

  /// Gradient of the undisturbed cost, nabla_y Phi.
  virtual Vec cost_gradient(const Vec& y, const NlpParams& p) const = 0;
  /// Hessian of the cost in y (constant in y within the supported class).
  virtual Mat cost_hessian(const Vec& y, const NlpParams& p) const = 0;

  virtual Vec equality(const Vec& y, const NlpParams& p) const = 0;
  virtual Mat equality_jacobian(const Vec& y, const NlpParams& p) const = 0;
  virtual Vec inequality(const Vec& y, const NlpParams& p) const = 0;
  virtual Mat inequality_jacobian(const Vec& y, const NlpParams& p) const = 0;

  /// Sum_i w_i nabla^2_yy f_i. Zero for problems with linear equalities.
  virtual Mat weighted_equality_hessian(const Vec& y, const NlpParams& p,
                                        const Vec& w) const {
    (void)y;
    (void)p;
    (void)w;
    return Mat::Zero(dims().n_y, dims().n_y);
  }

  /// Sum_i w_i nabla^2_yy h_i. Zero for problems with linear inequalities.
  virtual Mat weighted_inequality_hessian(const Vec& y, const NlpParams& p,
                                          const Vec& w) const {
    (void)y;
    (void)p;
    (void)w;
    return Mat::Zero(dims().n_y, dims().n_y);
  }

  /// Directional derivative of the equality Jacobian along v:
  /// row i equals (nabla^2_yy f_i v)'.
  virtual Mat equality_hessian_vec(const Vec& y, const NlpParams& p,
                                   const Vec& v) const {
    (void)y;
    (void)p;
    (void)v;
    return Mat::Zero(dims().n_eq, dims().n_y);
  }

  /// Directional derivative of the inequality Jacobian along v:
  /// row i equals (nabla^2_yy h_i v)'.
  virtual Mat inequality_hessian_vec(const Vec& y, const NlpParams& p,
                                     const Vec& v) const {
    (void)y;
    (void)p;
    (void)v;
    return Mat::Zero(dims().n_in, dims().n_y);
  }

  // Exact theta-derivatives of the problem data, needed for parametric
  // sensitivities. Problems that are never differentiated in theta (e.g.
  // the safe parameter-update NLP, theta_dim() == 0) keep the defaults.

  /// d(nabla_y Phi)/d(theta), n_y x theta_dim.
  virtual Mat cost_gradient_dtheta(const Vec& y, const NlpParams& p) const {
    (void)y;
    (void)p;
    return Mat::Zero(dims().n_y, theta_dim());
  }
  /// df/d(theta), n_eq x theta_dim.
  virtual Mat equality_dtheta(const Vec& y, const NlpParams& p) const {
    (void)y;
    (void)p;
    return Mat::Zero(dims().n_eq, theta_dim());
  }
  /// dh/d(theta), n_in x theta_dim.
  virtual Mat inequality_dtheta(const Vec& y, const NlpParams& p) const {
    (void)y;
    (void)p;
    return Mat::Zero(dims().n_in, theta_dim());
  }
  /// d(nabla_y f' lambda)/d(theta) at fixed lambda, n_y x theta_dim.
  virtual Mat equality_jact_mult_dtheta(const Vec& y, const NlpParams& p,
                                        const Vec& lambda) const {
    (void)y;
    (void)p;
    (void)lambda;
    return Mat::Zero(dims().n_y, theta_dim());
  }
  /// d(nabla_y h' mu)/d(theta) at fixed mu, n_y x theta_dim.
  virtual Mat inequality_jact_mult_dtheta(const Vec& y, const NlpParams& p,
                                          const Vec& mu) const {
    (void)y;
    (void)p;
    (void)mu;
    return Mat::Zero(dims().n_y, theta_dim());
  }

  /// A primal point with h < 0 componentwise, used to start the solver.
  virtual Vec interior_initial_point(const NlpParams& p) const = 0;

  // Optional sparse KKT support for large block-separable instances (the
  // safe-update problem grows with the retained dataset). When
  // sparse_kkt() is true the solver assembles the residual Jacobian from
  // triplets instead of the dense callbacks above.

  virtual bool sparse_kkt() const { return false; }

  using Triplets = std::vector<Eigen::Triplet<double>>;

  /// Triplets of nabla^2_yy [Phi + lambda' f + mu' h].
  virtual void lagrangian_hessian_triplets(const Vec& y, const NlpParams& p,
                                           const Vec& lambda, const Vec& mu,
                                           Triplets& out) const {
    (void)y;
    (void)p;
    (void)lambda;
    (void)mu;
    (void)out;
    throw Error("sparse KKT assembly not implemented for this problem");
  }
  virtual void equality_jacobian_triplets(const Vec& y, const NlpParams& p,
                                          Triplets& out) const {
    (void)y;
    (void)p;
    (void)out;
    throw Error("sparse KKT assembly not implemented for this problem");
  }
  virtual void inequality_jacobian_triplets(const Vec& y, const NlpParams& p,
                                            Triplets& out) const {
    (void)y;
    (void)p;
    (void)out;
    throw Error("sparse KKT assembly not implemented for this problem");
  }
};

/// A problem together with the parameter values it is evaluated at.
struct NlpInstance {
  std::shared_ptr<const NlpProblem> problem;
  NlpParams params;

  NlpDims dims() const { return problem->dims(); }
};

}  // namespace mpcrl
