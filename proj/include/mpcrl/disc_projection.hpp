#pragma once

#include <cmath>
#include <memory>

#include "mpcrl/nlp_problem.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

/// Two-dimensional target-tracking problem with a disc constraint,
///
///   min_y 1/2 ||y - (theta_1, theta_2)||^2   s.t.  ||y||^2 <= theta_3,
///
/// the smallest member of the supported problem class with one quadratic
/// inequality. The whole primal vector is the action (action_dim == 2).
class DiscProjectionProblem final : public NlpProblem {
 public:
  NlpDims dims() const override { return NlpDims{2, 0, 1}; }
  int action_dim() const override { return 2; }
  int theta_dim() const override { return 3; }

  Vec cost_gradient(const Vec& y, const NlpParams& p) const override {
    return y - p.theta.head<2>();
  }
  Mat cost_hessian(const Vec&, const NlpParams&) const override {
    return Mat::Identity(2, 2);
  }

  Vec equality(const Vec&, const NlpParams&) const override { return Vec(0); }
  Mat equality_jacobian(const Vec&, const NlpParams&) const override {
    return Mat(0, 2);
  }

  Vec inequality(const Vec& y, const NlpParams& p) const override {
    Vec h(1);
    h[0] = y.squaredNorm() - p.theta[2];
    return h;
  }
  Mat inequality_jacobian(const Vec& y, const NlpParams&) const override {
    return 2.0 * y.transpose();
  }
  Mat weighted_inequality_hessian(const Vec&, const NlpParams&,
                                  const Vec& w) const override {
    return 2.0 * w[0] * Mat::Identity(2, 2);
  }
  Mat inequality_hessian_vec(const Vec&, const NlpParams&,
                             const Vec& v) const override {
    return 2.0 * v.transpose();
  }

  Mat cost_gradient_dtheta(const Vec&, const NlpParams&) const override {
    Mat out = Mat::Zero(2, 3);
    out(0, 0) = -1.0;
    out(1, 1) = -1.0;
    return out;
  }
  Mat inequality_dtheta(const Vec&, const NlpParams&) const override {
    Mat out = Mat::Zero(1, 3);
    out(0, 2) = -1.0;
    return out;
  }

  Vec interior_initial_point(const NlpParams& p) const override {
    const Vec c = p.theta.head<2>();
    const double radius = std::sqrt(p.theta[2]);
    const double norm = c.norm();
    if (norm < 0.9 * radius) return c;
    if (norm == 0.0) return Vec::Zero(2);
    return c * (0.9 * radius / norm);
  }
};

/// Instance of the disc-projection problem at given theta (and optional
/// cost-gradient disturbance d).
inline NlpInstance disc_projection_instance(const Vec& theta,
                                            const Vec& d = Vec(0)) {
  require(theta.size() == 3 && theta[2] > 0.0,
          "disc projection needs theta = (c1, c2, radius^2) with radius^2 > 0");
  NlpInstance inst;
  inst.problem = std::make_shared<DiscProjectionProblem>();
  inst.params.theta = theta;
  inst.params.d = d;
  return inst;
}

}  // namespace mpcrl
