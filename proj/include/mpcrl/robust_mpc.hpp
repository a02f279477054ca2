#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "mpcrl/membership.hpp"
#include "mpcrl/nlp_problem.hpp"
#include "mpcrl/theta.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

/// Scenario-tree robust linear MPC over a nominal model and N_M disturbed
/// copies of it, shifted by the vertices of W:
///
///   min  sum_{j=0..N_M} ( ||x_{j,N} - x_bar||^2
///                         + sum_{k=0..N-1} ||x_{j,k} - x_bar||^2
///                                        + ||u_{j,k} - u_bar||^2 )
///   s.t. x_{j,k+1} = A0 x_{j,k} + B0 u_{j,k} + b0 + W^j,   W^0 = 0,
///        ||x_{j,k}||^2 <= 1                      (k = 1..N, all j),
///        x_{j,0} = s,
///        u_{j,k} = u_{0,k} - K (x_{j,k} - x_{0,k})   (j >= 1).
///
/// The ancillary inputs u_{j,k} (j >= 1) are eliminated by substitution, so
/// the free primal variables are the nominal input profile u_{0,0..N-1}
/// followed by all scenario states x_{j,1..N} (scenario-major). The first
/// input is shared across scenarios by construction, which provides
/// non-anticipativity. The feedback K multiplying states makes the scenario
/// dynamics rows bilinear in (theta, primal); all cross derivatives below
/// are exact.
///
/// Primal layout: [u_{0,0}, ..., u_{0,N-1}, x_{0,1..N}, x_{1,1..N}, ...].
class RobustLinearMpcProblem final : public NlpProblem {
 public:
  explicit RobustLinearMpcProblem(MpcDims dims) : md_(dims), layout_(dims.n_s, dims.n_a, dims.scenario_count) {
    md_.validate();
  }

  const MpcDims& mpc_dims() const { return md_; }

  NlpDims dims() const override {
    const int n_y = md_.n_a * md_.horizon +
                    md_.n_s * md_.horizon * (md_.scenario_count + 1);
    const int n_eq = md_.n_s * md_.horizon * (md_.scenario_count + 1);
    const int n_in = md_.horizon * (md_.scenario_count + 1);
    return NlpDims{n_y, n_eq, n_in};
  }
  int action_dim() const override { return md_.n_a; }
  int theta_dim() const override { return layout_.size; }

  // Primal offsets.
  int iu(int k) const { return k * md_.n_a; }
  int ix(int j, int k) const {
    return md_.n_a * md_.horizon + (j * md_.horizon + (k - 1)) * md_.n_s;
  }
  // Row offsets of the dynamics equalities (per scenario j, step k).
  int ieq(int j, int k) const { return (j * md_.horizon + k) * md_.n_s; }
  // Row of the state-norm inequality for (j, k), k = 1..N.
  int iin(int j, int k) const { return j * md_.horizon + (k - 1); }

  double cost_value(const Vec& y, const NlpParams& p) const {
    const ThetaParams th = unpack(p);
    const Vec& s = p.s;
    double val = 0.0;
    for (int j = 0; j <= md_.scenario_count; ++j) {
      val += (s - th.x_bar).squaredNorm();
      for (int k = 1; k <= md_.horizon; ++k)
        val += (state(y, j, k) - th.x_bar).squaredNorm();
      for (int k = 0; k < md_.horizon; ++k)
        val += (ancillary_input(y, th, j, k) - th.u_bar).squaredNorm();
    }
    return val;
  }

  Vec cost_gradient(const Vec& y, const NlpParams& p) const override {
    const ThetaParams th = unpack(p);
    Vec g = Vec::Zero(dims().n_y);
    const Mat kt = th.feedback_k.transpose();

    g.segment(iu(0), md_.n_a) +=
        2.0 * (md_.scenario_count + 1) * (input(y, 0) - th.u_bar);
    for (int k = 1; k < md_.horizon; ++k)
      g.segment(iu(k), md_.n_a) += 2.0 * (input(y, k) - th.u_bar);

    for (int j = 0; j <= md_.scenario_count; ++j)
      for (int k = 1; k <= md_.horizon; ++k)
        g.segment(ix(j, k), md_.n_s) += 2.0 * (state(y, j, k) - th.x_bar);

    for (int j = 1; j <= md_.scenario_count; ++j) {
      for (int k = 1; k < md_.horizon; ++k) {
        const Vec dv = ancillary_input(y, th, j, k) - th.u_bar;
        g.segment(iu(k), md_.n_a) += 2.0 * dv;
        g.segment(ix(j, k), md_.n_s) -= 2.0 * kt * dv;
        g.segment(ix(0, k), md_.n_s) += 2.0 * kt * dv;
      }
    }
    return g;
  }

  Mat cost_hessian(const Vec&, const NlpParams& p) const override {
    const ThetaParams th = unpack(p);
    Mat hess = Mat::Zero(dims().n_y, dims().n_y);
    const Mat ktk = th.feedback_k.transpose() * th.feedback_k;

    hess.block(iu(0), iu(0), md_.n_a, md_.n_a) +=
        2.0 * (md_.scenario_count + 1) * Mat::Identity(md_.n_a, md_.n_a);
    for (int k = 1; k < md_.horizon; ++k)
      hess.block(iu(k), iu(k), md_.n_a, md_.n_a) +=
          2.0 * Mat::Identity(md_.n_a, md_.n_a);

    for (int j = 0; j <= md_.scenario_count; ++j)
      for (int k = 1; k <= md_.horizon; ++k)
        hess.block(ix(j, k), ix(j, k), md_.n_s, md_.n_s) +=
            2.0 * Mat::Identity(md_.n_s, md_.n_s);

    for (int j = 1; j <= md_.scenario_count; ++j) {
      for (int k = 1; k < md_.horizon; ++k) {
        const int u = iu(k);
        const int xj = ix(j, k);
        const int x0 = ix(0, k);
        hess.block(u, u, md_.n_a, md_.n_a) +=
            2.0 * Mat::Identity(md_.n_a, md_.n_a);
        hess.block(u, xj, md_.n_a, md_.n_s) -= 2.0 * th.feedback_k;
        hess.block(xj, u, md_.n_s, md_.n_a) -= 2.0 * th.feedback_k.transpose();
        hess.block(u, x0, md_.n_a, md_.n_s) += 2.0 * th.feedback_k;
        hess.block(x0, u, md_.n_s, md_.n_a) += 2.0 * th.feedback_k.transpose();
        hess.block(xj, xj, md_.n_s, md_.n_s) += 2.0 * ktk;
        hess.block(x0, x0, md_.n_s, md_.n_s) += 2.0 * ktk;
        hess.block(xj, x0, md_.n_s, md_.n_s) -= 2.0 * ktk;
        hess.block(x0, xj, md_.n_s, md_.n_s) -= 2.0 * ktk;
      }
    }
    return hess;
  }

  Vec equality(const Vec& y, const NlpParams& p) const override {
    const ThetaParams th = unpack(p);
    Vec f(dims().n_eq);
    for (int j = 0; j <= md_.scenario_count; ++j) {
      const Vec shift = (j == 0) ? Vec::Zero(md_.n_s).eval()
                                 : th.w.vertices[j - 1];
      for (int k = 0; k < md_.horizon; ++k) {
        const Vec xjk = state_or_initial(y, p, j, k);
        const Vec ujk = ancillary_input(y, th, j, k);
        f.segment(ieq(j, k), md_.n_s) =
            state(y, j, k + 1) -
            (th.a0 * xjk + th.b0_mat * ujk + th.b0 + shift);
      }
    }
    return f;
  }

  Mat equality_jacobian(const Vec&, const NlpParams& p) const override {
    const ThetaParams th = unpack(p);
    Mat jf = Mat::Zero(dims().n_eq, dims().n_y);
    const Mat b0k = th.b0_mat * th.feedback_k;
    for (int j = 0; j <= md_.scenario_count; ++j) {
      const Mat a_closed = (j == 0) ? th.a0 : (th.a0 - b0k).eval();
      for (int k = 0; k < md_.horizon; ++k) {
        const int row = ieq(j, k);
        jf.block(row, ix(j, k + 1), md_.n_s, md_.n_s).setIdentity();
        jf.block(row, iu(k), md_.n_s, md_.n_a) = -th.b0_mat;
        if (k >= 1) {
          jf.block(row, ix(j, k), md_.n_s, md_.n_s) -= a_closed;
          if (j >= 1) jf.block(row, ix(0, k), md_.n_s, md_.n_s) -= b0k;
        }
      }
    }
    return jf;
  }

  Vec inequality(const Vec& y, const NlpParams&) const override {
    Vec h(dims().n_in);
    for (int j = 0; j <= md_.scenario_count; ++j)
      for (int k = 1; k <= md_.horizon; ++k)
        h[iin(j, k)] = state(y, j, k).squaredNorm() - 1.0;
    return h;
  }

  Mat inequality_jacobian(const Vec& y, const NlpParams&) const override {
    Mat jh = Mat::Zero(dims().n_in, dims().n_y);
    for (int j = 0; j <= md_.scenario_count; ++j)
      for (int k = 1; k <= md_.horizon; ++k)
        jh.block(iin(j, k), ix(j, k), 1, md_.n_s) =
            2.0 * state(y, j, k).transpose();
    return jh;
  }

  Mat weighted_inequality_hessian(const Vec&, const NlpParams&,
                                  const Vec& w) const override {
    Mat out = Mat::Zero(dims().n_y, dims().n_y);
    for (int j = 0; j <= md_.scenario_count; ++j)
      for (int k = 1; k <= md_.horizon; ++k)
        out.block(ix(j, k), ix(j, k), md_.n_s, md_.n_s).diagonal().array() +=
            2.0 * w[iin(j, k)];
    return out;
  }

  Mat inequality_hessian_vec(const Vec&, const NlpParams&,
                             const Vec& v) const override {
    Mat out = Mat::Zero(dims().n_in, dims().n_y);
    for (int j = 0; j <= md_.scenario_count; ++j)
      for (int k = 1; k <= md_.horizon; ++k)
        out.block(iin(j, k), ix(j, k), 1, md_.n_s) =
            2.0 * v.segment(ix(j, k), md_.n_s).transpose();
    return out;
  }

  Mat cost_gradient_dtheta(const Vec& y, const NlpParams& p) const override {
    const ThetaParams th = unpack(p);
    Mat out = Mat::Zero(dims().n_y, layout_.size);

    // d/d(x_bar): state-tracking gradient rows lose the reference.
    for (int j = 0; j <= md_.scenario_count; ++j)
      for (int k = 1; k <= md_.horizon; ++k)
        for (int c = 0; c < md_.n_s; ++c)
          out(ix(j, k) + c, layout_.x_bar_off + c) -= 2.0;

    // d/d(u_bar): every input-tracking term contributes -2 I on its
    // gradient rows; scenario terms also touch the state rows through K'.
    for (int c = 0; c < md_.n_a; ++c)
      out(iu(0) + c, layout_.u_bar_off + c) -=
          2.0 * (md_.scenario_count + 1);
    for (int k = 1; k < md_.horizon; ++k)
      for (int c = 0; c < md_.n_a; ++c)
        out(iu(k) + c, layout_.u_bar_off + c) -=
            2.0 * (md_.scenario_count + 1);
    for (int j = 1; j <= md_.scenario_count; ++j) {
      for (int k = 1; k < md_.horizon; ++k) {
        for (int a = 0; a < md_.n_a; ++a) {
          for (int b = 0; b < md_.n_s; ++b) {
            out(ix(j, k) + b, layout_.u_bar_off + a) +=
                2.0 * th.feedback_k(a, b);
            out(ix(0, k) + b, layout_.u_bar_off + a) -=
                2.0 * th.feedback_k(a, b);
          }
        }
      }
    }

    // d/dK: both the ancillary input value and the K' factor move.
    for (int j = 1; j <= md_.scenario_count; ++j) {
      for (int k = 1; k < md_.horizon; ++k) {
        const Vec dx = state(y, j, k) - state(y, 0, k);
        const Vec dv = ancillary_input(y, th, j, k) - th.u_bar;
        for (int a = 0; a < md_.n_a; ++a) {
          for (int b = 0; b < md_.n_s; ++b) {
            const int col = layout_.k_entry(a, b);
            out(iu(k) + a, col) -= 2.0 * dx[b];
            for (int c = 0; c < md_.n_s; ++c) {
              out(ix(j, k) + c, col) += 2.0 * dx[b] * th.feedback_k(a, c) -
                                        ((c == b) ? 2.0 * dv[a] : 0.0);
              out(ix(0, k) + c, col) += -2.0 * dx[b] * th.feedback_k(a, c) +
                                        ((c == b) ? 2.0 * dv[a] : 0.0);
            }
          }
        }
      }
    }
    return out;
  }

  Mat equality_dtheta(const Vec& y, const NlpParams& p) const override {
    const ThetaParams th = unpack(p);
    Mat out = Mat::Zero(dims().n_eq, layout_.size);
    for (int j = 0; j <= md_.scenario_count; ++j) {
      for (int k = 0; k < md_.horizon; ++k) {
        const int row = ieq(j, k);
        const Vec xjk = state_or_initial(y, p, j, k);
        const Vec ujk = ancillary_input(y, th, j, k);
        const Vec dx = (j >= 1 && k >= 1)
                           ? (state(y, j, k) - state(y, 0, k)).eval()
                           : Vec::Zero(md_.n_s).eval();
        for (int a = 0; a < md_.n_s; ++a)
          for (int b = 0; b < md_.n_s; ++b)
            out(row + a, layout_.a0_entry(a, b)) -= xjk[b];
        for (int a = 0; a < md_.n_s; ++a)
          for (int b = 0; b < md_.n_a; ++b)
            out(row + a, layout_.b0_mat_entry(a, b)) -= ujk[b];
        for (int c = 0; c < md_.n_s; ++c)
          out(row + c, layout_.b0_off + c) -= 1.0;
        if (j >= 1) {
          for (int a = 0; a < md_.n_a; ++a)
            for (int b = 0; b < md_.n_s; ++b)
              for (int c = 0; c < md_.n_s; ++c)
                out(row + c, layout_.k_entry(a, b)) +=
                    th.b0_mat(c, a) * dx[b];
          for (int c = 0; c < md_.n_s; ++c)
            out(row + c, layout_.w_entry(j - 1, c)) -= 1.0;
        }
      }
    }
    return out;
  }

  Mat equality_jact_mult_dtheta(const Vec&, const NlpParams& p,
                                const Vec& lambda) const override {
    const ThetaParams th = unpack(p);
    Mat out = Mat::Zero(dims().n_y, layout_.size);
    for (int j = 0; j <= md_.scenario_count; ++j) {
      for (int k = 0; k < md_.horizon; ++k) {
        const Vec lam = lambda.segment(ieq(j, k), md_.n_s);
        // -B0' lam on the input rows.
        for (int a = 0; a < md_.n_s; ++a)
          for (int b = 0; b < md_.n_a; ++b)
            out(iu(k) + b, layout_.b0_mat_entry(a, b)) -= lam[a];
        if (k >= 1) {
          // -(A0 - [j>=1] B0 K)' lam on the scenario state rows.
          for (int a = 0; a < md_.n_s; ++a)
            for (int b = 0; b < md_.n_s; ++b)
              out(ix(j, k) + b, layout_.a0_entry(a, b)) -= lam[a];
          if (j >= 1) {
            for (int a = 0; a < md_.n_s; ++a)
              for (int b = 0; b < md_.n_a; ++b)
                for (int c = 0; c < md_.n_s; ++c) {
                  // +(B0 K)' lam via A_j on x_{j,k}; -(B0 K)' lam on x_{0,k}.
                  out(ix(j, k) + c, layout_.b0_mat_entry(a, b)) +=
                      th.feedback_k(b, c) * lam[a];
                  out(ix(0, k) + c, layout_.b0_mat_entry(a, b)) -=
                      th.feedback_k(b, c) * lam[a];
                }
            for (int a = 0; a < md_.n_a; ++a) {
              const double b0col_lam = th.b0_mat.col(a).dot(lam);
              for (int b = 0; b < md_.n_s; ++b) {
                out(ix(j, k) + b, layout_.k_entry(a, b)) += b0col_lam;
                out(ix(0, k) + b, layout_.k_entry(a, b)) -= b0col_lam;
              }
            }
          }
        }
      }
    }
    return out;
  }

  /// Nominal rollout from s with the reference-tracking feedback input
  /// u_k = u_bar - K (x_k - x_bar), propagated consistently through every
  /// scenario's dynamics, then scaled into the interior of the state
  /// constraints.
  Vec interior_initial_point(const NlpParams& p) const override {
    const ThetaParams th = unpack(p);
    Vec y = Vec::Zero(dims().n_y);

    std::vector<Vec> nominal(md_.horizon + 1);
    nominal[0] = p.s;
    for (int k = 0; k < md_.horizon; ++k) {
      const Vec u = th.u_bar - th.feedback_k * (nominal[k] - th.x_bar);
      y.segment(iu(k), md_.n_a) = u;
      nominal[k + 1] = th.a0 * nominal[k] + th.b0_mat * u + th.b0;
      y.segment(ix(0, k + 1), md_.n_s) = nominal[k + 1];
    }
    for (int j = 1; j <= md_.scenario_count; ++j) {
      Vec x = p.s;
      for (int k = 0; k < md_.horizon; ++k) {
        const Vec u = input(y, k) -
                      th.feedback_k * (x - (k == 0 ? p.s : nominal[k]));
        x = th.a0 * x + th.b0_mat * u + th.b0 + th.w.vertices[j - 1];
        y.segment(ix(j, k + 1), md_.n_s) = x;
      }
    }

    double max_norm = 1.0;
    for (int j = 0; j <= md_.scenario_count; ++j)
      for (int k = 1; k <= md_.horizon; ++k)
        max_norm = std::max(max_norm, state(y, j, k).norm());
    const double scale = 0.99 / max_norm;
    for (int j = 0; j <= md_.scenario_count; ++j)
      for (int k = 1; k <= md_.horizon; ++k)
        y.segment(ix(j, k), md_.n_s) *= scale;
    return y;
  }

  // Trajectory accessors on a primal vector.
  Vec input(const Vec& y, int k) const { return y.segment(iu(k), md_.n_a); }
  Vec state(const Vec& y, int j, int k) const {
    return y.segment(ix(j, k), md_.n_s);
  }
  /// u_{j,k} = u_{0,k} - K (x_{j,k} - x_{0,k}), with x_{j,0} = x_{0,0}.
  Vec ancillary_input(const Vec& y, const ThetaParams& th, int j,
                      int k) const {
    Vec u = input(y, k);
    if (j >= 1 && k >= 1)
      u -= th.feedback_k * (state(y, j, k) - state(y, 0, k));
    return u;
  }

  ThetaParams unpack(const NlpParams& p) const {
    return ThetaParams::unflatten(p.theta, md_.n_s, md_.n_a,
                                  md_.scenario_count);
  }

 private:
  Vec state_or_initial(const Vec& y, const NlpParams& p, int j, int k) const {
    return (k == 0) ? p.s : state(y, j, k);
  }

  MpcDims md_;
  ThetaLayout layout_;
};

/// Builds the robust MPC problem as an NlpInstance at (theta, s, d). Pure
/// function: identical arguments produce an identical instance.
inline NlpInstance build_mpc_nlp(const ThetaParams& theta, const Vec& s,
                                 const MpcDims& dims, const Vec& d = Vec(0)) {
  dims.validate();
  theta.validate();
  require_dims(theta.n_s() == dims.n_s && theta.n_a() == dims.n_a &&
                   theta.w.count() == dims.scenario_count,
               "theta and MPC dimensions disagree");
  require_dims(s.size() == dims.n_s, "initial state dimension mismatch");
  require_dims(d.size() == 0 || d.size() == dims.n_a,
               "disturbance dimension mismatch");
  NlpInstance inst;
  inst.problem = std::make_shared<RobustLinearMpcProblem>(dims);
  inst.params.theta = theta.flatten();
  inst.params.d = d;
  inst.params.s = s;
  return inst;
}

/// Input reference delivering a steady state of the nominal model:
/// least-squares solution of B0 u_bar = (I - A0) x_bar - b0.
inline Vec steady_state_input(const ThetaParams& theta) {
  const int ns = theta.n_s();
  Eigen::ColPivHouseholderQR<Mat> qr(theta.b0_mat);
  require(qr.rank() == theta.n_a(),
          "B0 is rank deficient; steady-state input undefined");
  const Vec rhs = (Mat::Identity(ns, ns) - theta.a0) * theta.x_bar - theta.b0;
  return qr.solve(rhs);
}

/// Convex weights placing s_plus - F0(s, a) inside W, or an infeasibility
/// certificate with the minimal infinity-norm violation.
inline MembershipResult membership_residual(const ThetaParams& theta,
                                            const Vec& s, const Vec& a,
                                            const Vec& s_plus,
                                            double tolerance = 1e-8) {
  const Vec residual = s_plus - theta.nominal_step(s, a);
  return convex_membership(theta.w.vertices, residual, tolerance);
}

struct HullContainmentReport {
  int sequences = 0;
  int violations = 0;
  double max_violation = 0.0;
};

/// Simulates the closed loop x+ = A0 x + B0 u + b0 + w under the ancillary
/// feedback for each sampled noise sequence (w_k in W) and checks that every
/// visited state lies in the convex hull of the scenario states of the
/// solved MPC instance.
inline HullContainmentReport hull_containment_check(
    const ThetaParams& theta, const MpcDims& dims, const Vec& s,
    const Vec& primal, const std::vector<std::vector<Vec>>& noise_sequences,
    double tolerance = 1e-8) {
  const RobustLinearMpcProblem problem(dims);
  HullContainmentReport report;
  for (const auto& noise : noise_sequences) {
    require_dims(static_cast<int>(noise.size()) == dims.horizon,
                 "noise sequence length must equal the horizon");
    ++report.sequences;
    Vec x = s;
    bool violated = false;
    for (int k = 0; k < dims.horizon; ++k) {
      const Vec u =
          problem.input(primal, k) -
          theta.feedback_k * (x - (k == 0 ? s : problem.state(primal, 0, k)));
      x = theta.a0 * x + theta.b0_mat * u + theta.b0 + noise[k];
      std::vector<Vec> hull(dims.scenario_count);
      for (int j = 1; j <= dims.scenario_count; ++j)
        hull[j - 1] = problem.state(primal, j, k + 1);
      const MembershipResult member = convex_membership(hull, x, tolerance);
      report.max_violation = std::max(report.max_violation, member.violation);
      if (!member.feasible) violated = true;
    }
    if (violated) ++report.violations;
  }
  return report;
}

}  // namespace mpcrl
