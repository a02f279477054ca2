#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mpcrl/disc_projection.hpp"
#include "mpcrl/policy.hpp"
#include "mpcrl/robust_mpc.hpp"
#include "mpcrl/serialization.hpp"
#include "support/test_problems.hpp"

using namespace mpcrl;
using mpcrl::testing::disc_axis_oracle;
using mpcrl::testing::quadratic_target_instance;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

ExplorationConfig isotropic(double sigma) {
  ExplorationConfig config;
  config.sigma = sigma;
  config.shape = Mat::Identity(2, 2);
  return config;
}

}  // namespace

TEST_CASE("deterministic action matches the scalar oracle on the disc",
          "[policy]") {
  SolverConfig config;
  config.tau = 1e-2;
  const NlpInstance inst = disc_projection_instance(vec3(0.5, 0.0, 1.0));
  const auto [action, result] = deterministic_action(inst, config);
  const auto oracle = disc_axis_oracle(0.5, config.tau);
  REQUIRE(action[0] == Catch::Approx(oracle.u).epsilon(1e-9));
  REQUIRE(action[1] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(result.ok());
}

TEST_CASE("deterministic action approaches the projection for tight tau",
          "[policy]") {
  SolverConfig config;
  config.tau = 1e-6;
  const NlpInstance inst = disc_projection_instance(vec3(2.0, 0.0, 1.0));
  const auto [action, result] = deterministic_action(inst, config);
  REQUIRE((action - vec2(1.0, 0.0)).norm() <= 1e-3);
}

TEST_CASE("solver failures propagate with the failing result attached",
          "[policy]") {
  SolverConfig config;
  config.tau = 1e-6;
  config.max_newton_iterations = 1;
  const NlpInstance inst = disc_projection_instance(vec3(2.0, 0.0, 1.0));
  try {
    deterministic_action(inst, config);
    FAIL("expected SolverError");
  } catch (const SolverError& err) {
    REQUIRE_FALSE(err.result.ok());
    REQUIRE(err.result.point.y.size() == 2);
  }
}

TEST_CASE("exploration statistics at the symmetric interior point",
          "[policy]") {
  SolverConfig config;
  config.tau = 1e-2;
  const NlpInstance inst = disc_projection_instance(vec3(0.0, 0.0, 1.0));
  const auto [action, result] = deterministic_action(inst, config);
  const ExplorationStats stats =
      exploration_stats(inst, result.point, isotropic(1e-3));

  // dg/dd = -I/(1+2 tau) so M = (1+2 tau)^2 I; c vanishes by symmetry.
  const double expected = (1.0 + 2.0 * config.tau) * (1.0 + 2.0 * config.tau);
  REQUIRE((stats.m - expected * Mat::Identity(2, 2)).norm() <= 1e-8);
  REQUIRE(stats.m(0, 0) == Catch::Approx(1.0404).epsilon(1e-6));
  REQUIRE(stats.c.norm() <= 1e-9);
  REQUIRE((stats.m - stats.m.transpose()).norm() == 0.0);
}

TEST_CASE("exploration statistics on the unconstrained quadratic",
          "[policy]") {
  const NlpInstance inst = quadratic_target_instance(vec2(0.4, -0.2));
  SolverConfig config;
  const auto [action, result] = deterministic_action(inst, config);
  const ExplorationStats stats =
      exploration_stats(inst, result.point, isotropic(1e-3));
  REQUIRE((stats.m - Mat::Identity(2, 2)).norm() <= 1e-12);
  REQUIRE(stats.c.norm() <= 1e-12);
  REQUIRE((stats.nabla_theta_pi - Mat::Identity(2, 2)).norm() <= 1e-12);
}

TEST_CASE("uncorrected mode returns identity statistics", "[policy]") {
  SolverConfig config;
  config.tau = 1e-2;
  const NlpInstance inst = disc_projection_instance(vec3(1.2, 0.0, 1.0));
  const auto [action, result] = deterministic_action(inst, config);
  ExplorationConfig econfig = isotropic(1e-3);
  econfig.uncorrected = true;
  const ExplorationStats stats =
      exploration_stats(inst, result.point, econfig);
  REQUIRE((stats.m - Mat::Identity(2, 2)).norm() == 0.0);
  REQUIRE(stats.c.norm() == 0.0);
  REQUIRE(stats.nabla_theta_pi.rows() == 3);
}

TEST_CASE("rank collapse aborts plain inverse and is handled by pseudo mode",
          "[policy]") {
  SolverConfig config;
  config.tau = 1e-8;
  const NlpInstance inst = disc_projection_instance(vec3(2.0, 0.0, 1.0));
  const auto [action, result] = deterministic_action(inst, config);

  ExplorationConfig plain = isotropic(1e-3);
  REQUIRE_THROWS_WITH(exploration_stats(inst, result.point, plain),
                      Catch::Matchers::ContainsSubstring("pseudo_inverse"));

  ExplorationConfig pseudo = isotropic(1e-3);
  pseudo.m_mode = ExplorationConfig::MMode::pseudo_inverse;
  const ExplorationStats stats =
      exploration_stats(inst, result.point, pseudo);
  // The radial direction is truncated; the tangential one survives.
  Eigen::SelfAdjointEigenSolver<Mat> eig(stats.m);
  REQUIRE(eig.eigenvalues().minCoeff() == Catch::Approx(0.0).margin(1e-9));
  REQUIRE(eig.eigenvalues().maxCoeff() > 0.1);
}

TEST_CASE("vanishing exploration scale reproduces the deterministic action",
          "[policy]") {
  SolverConfig config;
  config.tau = 1e-2;
  const NlpInstance inst = disc_projection_instance(vec3(0.5, 0.0, 1.0));
  const auto [pi, solved] = deterministic_action(inst, config);
  const ExplorationStats stats =
      exploration_stats(inst, solved.point, isotropic(1e-3));
  ExplorationConfig tiny = isotropic(1e-30);
  RngStream rng(5u);
  const ExploreOutcome out =
      explore_action(inst, solved.point, pi, stats, tiny, config, rng);
  REQUIRE((out.action - pi).norm() <= 1e-12);
  REQUIRE((out.record.e).norm() <= 1e-12);
}

TEST_CASE("exploration on the unconstrained quadratic is the drawn noise",
          "[policy]") {
  const NlpInstance inst = quadratic_target_instance(vec2(0.4, -0.2));
  SolverConfig config;
  const auto [pi, solved] = deterministic_action(inst, config);
  const ExplorationStats stats =
      exploration_stats(inst, solved.point, isotropic(1e-3));
  const ExplorationConfig econfig = isotropic(1e-2);

  RngStream rng(11u);
  Mat cov = Mat::Zero(2, 2);
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const ExploreOutcome out =
        explore_action(inst, solved.point, pi, stats, econfig, config, rng);
    // a = pi - d exactly, so e = -d.
    cov += out.record.e * out.record.e.transpose();
    REQUIRE((out.record.a - out.record.e - pi).norm() <= 1e-12);
  }
  cov /= n;
  REQUIRE((cov - econfig.sigma * Mat::Identity(2, 2)).norm() <=
          0.1 * econfig.sigma);
}

TEST_CASE("every sampled exploratory action stays strictly feasible",
          "[policy]") {
  SolverConfig config;
  config.tau = 1e-2;
  const NlpInstance inst = disc_projection_instance(vec3(1.2, 0.0, 1.0));
  const auto [pi, solved] = deterministic_action(inst, config);
  const ExplorationStats stats =
      exploration_stats(inst, solved.point, isotropic(1e-2));
  const ExplorationConfig econfig = isotropic(1e-2);
  RngStream rng(13u);
  for (int i = 0; i < 200; ++i) {
    const ExploreOutcome out =
        explore_action(inst, solved.point, pi, stats, econfig, config, rng);
    REQUIRE(out.action.squaredNorm() < 1.0);
    REQUIRE((out.record.a - out.record.e - pi).norm() <= 1e-12);
  }
}

TEST_CASE("exploration is deterministic per stream address", "[policy]") {
  SolverConfig config;
  config.tau = 1e-2;
  const NlpInstance inst = disc_projection_instance(vec3(1.2, 0.0, 1.0));
  const auto [pi, solved] = deterministic_action(inst, config);
  const ExplorationStats stats =
      exploration_stats(inst, solved.point, isotropic(1e-3));
  const ExplorationConfig econfig = isotropic(1e-3);
  RngStream a(9u, 3u, 1u, 7u);
  RngStream b(9u, 3u, 1u, 7u);
  const Vec ea =
      explore_action(inst, solved.point, pi, stats, econfig, config, a)
          .record.e;
  const Vec eb =
      explore_action(inst, solved.point, pi, stats, econfig, config, b)
          .record.e;
  REQUIRE((ea - eb).norm() == 0.0);
}

TEST_CASE("sampled exploration covariance collapses against the constraint",
          "[policy]") {
  // Policy pressed onto the disc boundary: the radial exploration variance
  // shrinks far below the tangential one.
  SolverConfig config;
  config.tau = 1e-3;
  const NlpInstance inst = disc_projection_instance(vec3(1.2, 0.0, 1.0));
  const auto [pi, solved] = deterministic_action(inst, config);
  const ExplorationStats stats =
      exploration_stats(inst, solved.point, isotropic(1e-3));
  const ExplorationConfig econfig = isotropic(1e-3);
  RngStream rng(17u);
  Mat cov = Mat::Zero(2, 2);
  const int n = 3000;
  for (int i = 0; i < n; ++i) {
    const Vec e =
        explore_action(inst, solved.point, pi, stats, econfig, config, rng)
            .record.e;
    cov += e * e.transpose();
  }
  cov /= n;
  // Radial is the x axis here (pi on the positive x axis).
  REQUIRE(cov(0, 0) * 5.0 < cov(1, 1));
  // M agrees: its radial eigenvalue dominates the tangential one.
  REQUIRE(stats.m(0, 0) > 5.0 * stats.m(1, 1));
}

TEST_CASE("mean correction c is the leading term of the exploration mean",
          "[policy]") {
  // Antithetic common-random-number sweep. Measured gaps
  // ||mean_MC(e) - c||: 3.25e-4 (sigma 0.01), 9.9e-5 (0.005), 2.8e-5
  // (0.0025); successive shrink factors 3.3 and 3.5 approach the
  // quadratic-order 4, and c explains >= 95% of the observed mean.
  SolverConfig config;
  config.tau = 1e-2;
  const NlpInstance inst = disc_projection_instance(vec3(1.2, 0.0, 1.0));
  const auto [pi, solved] = deterministic_action(inst, config);

  const int n = 20000;
  RngStream rng(42u);
  std::vector<Vec> pool(n);
  for (auto& x : pool) x = rng.normal_vec(2);

  std::vector<double> gaps;
  for (const double sigma : {0.01, 0.005, 0.0025}) {
    Vec mean = Vec::Zero(2);
    NlpInstance disturbed = inst;
    for (int i = 0; i < n; ++i) {
      for (const double sign : {1.0, -1.0}) {
        disturbed.params.d = sign * std::sqrt(sigma) * pool[i];
        const SolveResult r = solve(disturbed, config, solved.point);
        REQUIRE(r.ok());
        mean += r.point.y.head(2) - pi;
      }
    }
    mean /= 2.0 * n;
    const ExplorationStats stats =
        exploration_stats(inst, solved.point, isotropic(sigma));
    const double gap = (mean - stats.c).norm();
    REQUIRE(gap <= 0.12 * stats.c.norm());
    gaps.push_back(gap);
  }
  REQUIRE(gaps[1] <= gaps[0] / 2.2);
  REQUIRE(gaps[2] <= gaps[1] / 2.2);
  REQUIRE(gaps[2] <= gaps[0] / 8.0);
}

TEST_CASE("scaled covariance correction approaches identity as sigma shrinks",
          "[policy]") {
  // Common random numbers across the sweep keep the three estimates
  // comparable; measured values 0.83, 0.087, 0.050.
  SolverConfig config;
  config.tau = 1e-2;
  const NlpInstance inst = disc_projection_instance(vec3(1.2, 0.0, 1.0));
  const auto [pi, solved] = deterministic_action(inst, config);
  const ExplorationStats stats =
      exploration_stats(inst, solved.point, isotropic(1e-3));

  const int n = 20000;
  RngStream rng(42u);
  std::vector<Vec> pool(n);
  for (auto& x : pool) x = rng.normal_vec(2);

  std::vector<double> deviation;
  for (const double sigma : {1e-2, 1e-3, 1e-4}) {
    Vec mean = Vec::Zero(2);
    Mat second = Mat::Zero(2, 2);
    NlpInstance disturbed = inst;
    for (int i = 0; i < n; ++i) {
      disturbed.params.d = std::sqrt(sigma) * pool[i];
      const Vec e =
          solve(disturbed, config, solved.point).point.y.head(2) - pi;
      mean += e;
      second += e * e.transpose();
    }
    mean /= n;
    const Mat cov = second / n - mean * mean.transpose();
    deviation.push_back(
        ((stats.m * cov) / sigma - Mat::Identity(2, 2)).norm());
  }
  REQUIRE(deviation[1] < deviation[0]);
  REQUIRE(deviation[2] < deviation[1]);
}

TEST_CASE("range-space diagnostic separates explored from pinned directions",
          "[policy]") {
  SECTION("interior point: every parameter direction is explored") {
    SolverConfig config;
    config.tau = 1e-2;
    const NlpInstance inst = disc_projection_instance(vec3(0.3, 0.2, 1.0));
    const auto [pi, solved] = deterministic_action(inst, config);
    const SensitivityBundle bundle = first_order(inst, solved.point);
    const Vec residuals = prop3_diagnostic(bundle, isotropic(1e-3));
    REQUIRE(residuals.lpNorm<Eigen::Infinity>() <= 1e-6);
  }

  SECTION("strongly active constraint pins the radius direction") {
    SolverConfig config;
    config.tau = 1e-6;
    const NlpInstance inst = disc_projection_instance(vec3(2.0, 0.0, 1.0));
    const auto [pi, solved] = deterministic_action(inst, config);
    const SensitivityBundle bundle = first_order(inst, solved.point);
    const Vec residuals = prop3_diagnostic(bundle, isotropic(1e-3));
    REQUIRE(residuals[2] > 10.0 * residuals[0]);
    REQUIRE(residuals[2] > 10.0 * residuals[1]);
    REQUIRE(residuals[2] > 0.1);
  }

  SECTION("zero parameter Jacobian has zero residuals") {
    SensitivityBundle bundle;
    bundle.dg_dd = Mat::Identity(2, 2);
    bundle.dg_dtheta = Mat::Zero(2, 3);
    const Vec residuals = prop3_diagnostic(bundle, isotropic(1e-3));
    REQUIRE(residuals.norm() == 0.0);
  }
}

TEST_CASE("exploration records round-trip through JSON losslessly",
          "[policy]") {
  SolverConfig config;
  config.tau = 1e-2;
  const NlpInstance inst = disc_projection_instance(vec3(1.2, 0.0, 1.0));
  const auto [pi, solved] = deterministic_action(inst, config);
  const ExplorationStats stats =
      exploration_stats(inst, solved.point, isotropic(1e-3));
  RngStream rng(21u);
  const ExplorationRecord rec =
      explore_action(inst, solved.point, pi, stats, isotropic(1e-3), config,
                     rng)
          .record;

  const std::string text = to_json(rec).dump();
  const ExplorationRecord back =
      record_from_json(nlohmann::json::parse(text));
  REQUIRE(back.a.size() == rec.a.size());
  for (int i = 0; i < rec.a.size(); ++i) REQUIRE(back.a[i] == rec.a[i]);
  for (int i = 0; i < rec.e.size(); ++i) REQUIRE(back.e[i] == rec.e[i]);
  REQUIRE((back.m - rec.m).norm() == 0.0);
  REQUIRE((back.c - rec.c).norm() == 0.0);
  REQUIRE((back.nabla_theta_pi - rec.nabla_theta_pi).norm() == 0.0);
  // e remains consistent with the stored action and policy.
  REQUIRE((back.a - back.e - pi).norm() <= 1e-12);
}
