#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mpcrl/kkt.hpp"
#include "mpcrl/membership.hpp"
#include "mpcrl/robust_mpc.hpp"
#include "mpcrl/rng.hpp"
#include "mpcrl/solver.hpp"
#include "mpcrl/theta.hpp"

using namespace mpcrl;

namespace {

constexpr double kDeg = M_PI / 180.0;

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Mat symmetric_cos_sin(double angle) {
  Mat m(2, 2);
  m << std::cos(angle), std::sin(angle), std::sin(angle), std::cos(angle);
  return m;
}

PolytopeW paper_square() {
  PolytopeW w;
  w.vertices = {vec2(-0.1, -0.1), vec2(0.1, -0.1), vec2(0.1, 0.1),
                vec2(-0.1, 0.1)};
  return w;
}

ThetaParams nominal_theta() {
  ThetaParams t;
  t.x_bar = 0.95 * vec2(std::cos(45.0 * kDeg), std::sin(45.0 * kDeg));
  t.a0 = symmetric_cos_sin(20.0 * kDeg);
  t.b0_mat = Mat::Identity(2, 2);
  t.b0 = Vec::Zero(2);
  // Asymmetric (to exercise every K index in the derivative code) but
  // stabilizing: the ancillary loop A0 - B0 K must be a contraction or the
  // scenario spread outgrows the state constraint and the instance turns
  // infeasible.
  t.feedback_k = Mat(2, 2);
  t.feedback_k << 0.45, 0.12, 0.20, 0.50;
  t.w = paper_square();
  t.u_bar = Vec::Zero(2);
  t.u_bar = steady_state_input(t);
  return t;
}

MpcDims table_dims() { return MpcDims{10, 4, 2, 2}; }

Vec initial_state() { return vec2(std::cos(60.0 * kDeg), std::sin(60.0 * kDeg)); }

PrimalDualPoint random_interior_point(const NlpInstance& inst,
                                      std::uint64_t seed) {
  RngStream rng(seed);
  const NlpDims dm = inst.dims();
  PrimalDualPoint z;
  z.tau = 1e-2;
  // Scale states toward the interior so h < 0 is plausible but iterate is
  // otherwise arbitrary.
  z.y = 0.05 * rng.normal_vec(dm.n_y);
  z.lambda = rng.normal_vec(dm.n_eq);
  z.mu = (rng.normal_vec(dm.n_in).array().abs() + 0.1).matrix();
  return z;
}

}  // namespace

TEST_CASE("table-size build exposes the documented dimensions", "[mpc]") {
  const NlpInstance inst =
      build_mpc_nlp(nominal_theta(), initial_state(), table_dims());
  REQUIRE(inst.dims().n_y == 120);
  REQUIRE(inst.dims().n_in == 50);
  REQUIRE(inst.dims().n_eq == 100);
  REQUIRE(inst.problem->theta_dim() == 26);
  REQUIRE(inst.problem->action_dim() == 2);
}

TEST_CASE("theta flat vector round-trips through the documented ordering",
          "[mpc]") {
  const ThetaParams t = nominal_theta();
  const Vec flat = t.flatten();
  REQUIRE(flat.size() == 26);
  const ThetaParams back = ThetaParams::unflatten(flat, 2, 2, 4);
  REQUIRE((back.flatten() - flat).norm() == 0.0);
  REQUIRE((back.a0 - t.a0).norm() == 0.0);
  REQUIRE((back.feedback_k - t.feedback_k).norm() == 0.0);
  REQUIRE((back.w.vertices[2] - t.w.vertices[2]).norm() == 0.0);

  // Layout offsets match the flattened positions.
  const ThetaLayout layout(2, 2, 4);
  REQUIRE(flat[layout.a0_entry(0, 1)] == t.a0(0, 1));
  REQUIRE(flat[layout.k_entry(1, 0)] == t.feedback_k(1, 0));
  REQUIRE(flat[layout.w_entry(2, 1)] == t.w.vertices[2][1]);
}

TEST_CASE("mpc problem data matches finite differences in the primal",
          "[mpc]") {
  const NlpInstance inst =
      build_mpc_nlp(nominal_theta(), initial_state(), table_dims());
  const auto& pb = *inst.problem;
  const auto* mpc = dynamic_cast<const RobustLinearMpcProblem*>(&pb);
  REQUIRE(mpc != nullptr);
  const PrimalDualPoint z = random_interior_point(inst, 11u);
  const double step = 1e-6;

  SECTION("cost gradient against cost value") {
    const Vec grad = pb.cost_gradient(z.y, inst.params);
    for (int i : {0, 1, 5, 20, 40, 80, 119}) {
      Vec yp = z.y, ym = z.y;
      yp[i] += step;
      ym[i] -= step;
      const double fd = (mpc->cost_value(yp, inst.params) -
                         mpc->cost_value(ym, inst.params)) /
                        (2.0 * step);
      REQUIRE(grad[i] == Catch::Approx(fd).margin(1e-6).epsilon(1e-6));
    }
  }

  SECTION("cost Hessian against cost gradient") {
    const Mat hess = pb.cost_hessian(z.y, inst.params);
    RngStream rng(3u);
    const Vec v = rng.normal_vec(inst.dims().n_y);
    const Vec fd = (pb.cost_gradient(z.y + step * v, inst.params) -
                    pb.cost_gradient(z.y - step * v, inst.params)) /
                   (2.0 * step);
    REQUIRE((hess * v - fd).lpNorm<Eigen::Infinity>() <= 1e-6);
    REQUIRE((hess - hess.transpose()).norm() <= 1e-12);
  }

  SECTION("equality Jacobian against equality values") {
    RngStream rng(4u);
    const Vec v = rng.normal_vec(inst.dims().n_y);
    const Vec fd = (pb.equality(z.y + step * v, inst.params) -
                    pb.equality(z.y - step * v, inst.params)) /
                   (2.0 * step);
    REQUIRE((pb.equality_jacobian(z.y, inst.params) * v - fd)
                .lpNorm<Eigen::Infinity>() <= 1e-6);
  }

  SECTION("inequality Jacobian and Hessian-vector products") {
    RngStream rng(5u);
    const Vec v = rng.normal_vec(inst.dims().n_y);
    const Vec fd = (pb.inequality(z.y + step * v, inst.params) -
                    pb.inequality(z.y - step * v, inst.params)) /
                   (2.0 * step);
    REQUIRE((pb.inequality_jacobian(z.y, inst.params) * v - fd)
                .lpNorm<Eigen::Infinity>() <= 1e-6);

    const Mat jac_fd =
        (pb.inequality_jacobian(z.y + step * v, inst.params) -
         pb.inequality_jacobian(z.y - step * v, inst.params)) /
        (2.0 * step);
    REQUIRE((pb.inequality_hessian_vec(z.y, inst.params, v) - jac_fd).norm() <=
            1e-6);

    const Vec w = rng.normal_vec(inst.dims().n_in);
    const Mat weighted = pb.weighted_inequality_hessian(z.y, inst.params, w);
    const Vec fd_weighted =
        ((pb.inequality_jacobian(z.y + step * v, inst.params).transpose() -
          pb.inequality_jacobian(z.y - step * v, inst.params).transpose()) *
         w) /
        (2.0 * step);
    REQUIRE((weighted * v - fd_weighted).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}

TEST_CASE("residual theta-Jacobian matches finite differences", "[mpc]") {
  const ThetaParams theta = nominal_theta();
  const NlpInstance inst =
      build_mpc_nlp(theta, initial_state(), table_dims());
  const PrimalDualPoint z = random_interior_point(inst, 17u);
  const Mat drdth = kkt::residual_theta_jacobian(inst, z);
  const double step = 1e-6;

  for (int i = 0; i < inst.problem->theta_dim(); ++i) {
    NlpInstance plus = inst;
    plus.params.theta[i] += step;
    NlpInstance minus = inst;
    minus.params.theta[i] -= step;
    const Vec fd =
        (kkt::residual(plus, z) - kkt::residual(minus, z)) / (2.0 * step);
    REQUIRE((drdth.col(i) - fd).lpNorm<Eigen::Infinity>() <= 2e-6);
  }
}

TEST_CASE("residual Jacobian and z-contraction match finite differences",
          "[mpc]") {
  const NlpInstance inst =
      build_mpc_nlp(nominal_theta(), initial_state(), table_dims());
  const PrimalDualPoint z = random_interior_point(inst, 23u);
  RngStream rng(29u);
  const Vec v = rng.normal_vec(inst.dims().dim_z());
  const double step = 1e-6;

  const auto perturb = [&](double sign) {
    PrimalDualPoint out = z;
    const NlpDims dm = inst.dims();
    const Vec dz = sign * step * v;
    out.y += dz.head(dm.n_y);
    out.lambda += dz.segment(dm.n_y, dm.n_eq);
    out.mu += dz.tail(dm.n_in);
    return out;
  };

  const Vec fd_r =
      (kkt::residual(inst, perturb(1.0)) - kkt::residual(inst, perturb(-1.0))) /
      (2.0 * step);
  REQUIRE((kkt::residual_jacobian(inst, z) * v - fd_r)
              .lpNorm<Eigen::Infinity>() <= 1e-5);

  const Mat fd_jac = (kkt::residual_jacobian(inst, perturb(1.0)) -
                      kkt::residual_jacobian(inst, perturb(-1.0))) /
                     (2.0 * step);
  REQUIRE((kkt::zz_contraction(inst, z, v) - fd_jac).norm() <= 1e-5);
}

TEST_CASE("case-style instance solves with feasible scenario states", "[mpc]") {
  const ThetaParams theta = nominal_theta();
  const MpcDims dims = table_dims();
  const NlpInstance inst = build_mpc_nlp(theta, initial_state(), dims);
  SolverConfig config;
  config.tau = 1e-2;
  const SolveResult result = solve(inst, config);
  REQUIRE(result.ok());
  REQUIRE(result.residual_norm <= config.residual_tolerance);

  const Vec h = inst.problem->inequality(result.point.y, inst.params);
  REQUIRE(h.maxCoeff() < 0.0);
  REQUIRE(result.point.mu.minCoeff() > 0.0);

  // Non-anticipativity by reconstruction: every scenario's first input is
  // the shared decision variable.
  const auto& mpc = dynamic_cast<const RobustLinearMpcProblem&>(*inst.problem);
  const Vec u00 = mpc.input(result.point.y, 0);
  for (int j = 1; j <= dims.scenario_count; ++j)
    REQUIRE((mpc.ancillary_input(result.point.y, theta, j, 0) - u00).norm() ==
            0.0);
}

TEST_CASE("zero-width polytope collapses scenarios onto the nominal", "[mpc]") {
  ThetaParams theta = nominal_theta();
  for (auto& v : theta.w.vertices) v.setZero();
  const MpcDims dims = table_dims();
  const NlpInstance inst = build_mpc_nlp(theta, initial_state(), dims);
  SolverConfig config;
  config.tau = 1e-2;
  const SolveResult result = solve(inst, config);
  REQUIRE(result.ok());
  const auto& mpc = dynamic_cast<const RobustLinearMpcProblem&>(*inst.problem);
  for (int j = 1; j <= dims.scenario_count; ++j)
    for (int k = 1; k <= dims.horizon; ++k)
      REQUIRE((mpc.state(result.point.y, j, k) -
               mpc.state(result.point.y, 0, k))
                  .lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("builds are pure functions of their arguments", "[mpc]") {
  const ThetaParams theta = nominal_theta();
  const Vec s = initial_state();
  const NlpInstance a = build_mpc_nlp(theta, s, table_dims());
  const NlpInstance b = build_mpc_nlp(theta, s, table_dims());
  const PrimalDualPoint z = random_interior_point(a, 31u);
  const Vec ra = kkt::residual(a, z);
  const Vec rb = kkt::residual(b, z);
  REQUIRE(ra.size() == rb.size());
  for (int i = 0; i < ra.size(); ++i) REQUIRE(ra[i] == rb[i]);
}

TEST_CASE("undisturbed and zero-disturbance builds solve identically",
          "[mpc]") {
  const ThetaParams theta = nominal_theta();
  const Vec s = initial_state();
  SolverConfig config;
  config.tau = 1e-2;
  const SolveResult plain = solve(build_mpc_nlp(theta, s, table_dims()), config);
  const SolveResult disturbed =
      solve(build_mpc_nlp(theta, s, table_dims(), Vec::Zero(2)), config);
  REQUIRE(plain.ok());
  REQUIRE(disturbed.ok());
  for (int i = 0; i < plain.point.y.size(); ++i)
    REQUIRE(plain.point.y[i] == disturbed.point.y[i]);
}

TEST_CASE("steady-state input solves the nominal stationarity system",
          "[mpc]") {
  SECTION("origin with zero offset needs no input") {
    ThetaParams t = nominal_theta();
    t.x_bar = Vec::Zero(2);
    t.b0 = Vec::Zero(2);
    REQUIRE(steady_state_input(t).norm() <= 1e-14);
  }

  SECTION("pure rotation model") {
    ThetaParams t = nominal_theta();
    const double angle = 20.0 * kDeg;
    t.a0 << std::cos(angle), -std::sin(angle), std::sin(angle),
        std::cos(angle);
    t.b0_mat = Mat::Identity(2, 2);
    t.b0 = Vec::Zero(2);
    t.x_bar = vec2(1.0, 0.0);
    const Vec expected = (Mat::Identity(2, 2) - t.a0) * vec2(1.0, 0.0);
    REQUIRE((steady_state_input(t) - expected).norm() <= 1e-14);
  }

  SECTION("rank-deficient input matrix is rejected") {
    ThetaParams t = nominal_theta();
    t.b0_mat << 1.0, 1.0, 1.0, 1.0;
    REQUIRE_THROWS_AS(steady_state_input(t), Error);
  }
}

TEST_CASE("membership residual classifies transitions against W", "[mpc]") {
  const ThetaParams theta = nominal_theta();
  const Vec s = vec2(0.2, -0.1);
  const Vec a = vec2(0.05, 0.0);
  const Vec f0 = theta.nominal_step(s, a);

  SECTION("residual at the centroid") {
    const MembershipResult r = membership_residual(theta, s, a, f0);
    REQUIRE(r.feasible);
  }
  SECTION("residual outside W") {
    const MembershipResult r =
        membership_residual(theta, s, a, f0 + vec2(0.2, 0.0));
    REQUIRE_FALSE(r.feasible);
    REQUIRE(r.violation == Catch::Approx(0.1).margin(1e-9));
  }
  SECTION("residual on an edge") {
    const MembershipResult r =
        membership_residual(theta, s, a, f0 + vec2(0.1, 0.0));
    REQUIRE(r.feasible);
  }
}

TEST_CASE("hull containment holds along simulated noise sequences", "[mpc]") {
  const ThetaParams theta = nominal_theta();
  const MpcDims dims = table_dims();
  const Vec s = initial_state();
  const NlpInstance inst = build_mpc_nlp(theta, s, dims);
  SolverConfig config;
  config.tau = 1e-2;
  const SolveResult result = solve(inst, config);
  REQUIRE(result.ok());

  SECTION("noise pinned to a vertex reproduces that scenario") {
    std::vector<std::vector<Vec>> seq(1);
    seq[0].assign(dims.horizon, theta.w.vertices[1]);
    const HullContainmentReport report = hull_containment_check(
        theta, dims, s, result.point.y, seq);
    REQUIRE(report.violations == 0);
    REQUIRE(report.max_violation <= 1e-10);
  }

  SECTION("zero noise stays inside the hull") {
    std::vector<std::vector<Vec>> seq(1);
    seq[0].assign(dims.horizon, Vec::Zero(2));
    REQUIRE(hull_containment_check(theta, dims, s, result.point.y, seq)
                .violations == 0);
  }

  SECTION("sampled noise sequences stay inside the hull") {
    RngStream rng(101u);
    std::vector<std::vector<Vec>> seqs(50);
    for (auto& seq : seqs) {
      seq.resize(dims.horizon);
      for (auto& w : seq) w = sample_in_hull(theta.w.vertices, rng);
    }
    REQUIRE(hull_containment_check(theta, dims, s, result.point.y, seqs)
                .violations == 0);
  }
}

TEST_CASE("dimension mismatches in the builder are hard errors", "[mpc]") {
  ThetaParams theta = nominal_theta();
  REQUIRE_THROWS_AS(build_mpc_nlp(theta, Vec::Zero(3), table_dims()),
                    DimensionError);
  MpcDims bad = table_dims();
  bad.scenario_count = 3;
  REQUIRE_THROWS_AS(build_mpc_nlp(theta, initial_state(), bad),
                    DimensionError);
}

TEST_CASE("polytope geometry helpers", "[mpc]") {
  const PolytopeW w = paper_square();
  REQUIRE(w.full_dimensional());
  REQUIRE(w.contains_origin_strictly());
  REQUIRE(w.centroid().norm() <= 1e-15);

  PolytopeW flat;
  flat.vertices = {vec2(-0.1, 0.0), vec2(0.1, 0.0)};
  REQUIRE_FALSE(flat.full_dimensional());
}
