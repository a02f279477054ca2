#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include "mpcrl/kkt.hpp"
#include "mpcrl/nlp_problem.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

struct SolverConfig {
  double tau = 1e-2;
  double residual_tolerance = 1e-10;
  int max_newton_iterations = 100;
  double fraction_to_boundary = 0.995;
  double regularization_floor = 1e-10;

  void validate() const {
    require(tau > 0.0, "tau must be positive");
    require(fraction_to_boundary > 0.0 && fraction_to_boundary < 1.0,
            "fraction_to_boundary must lie in (0, 1)");
    require(residual_tolerance > 0.0, "residual_tolerance must be positive");
    require(max_newton_iterations > 0, "max_newton_iterations must be >= 1");
    require(regularization_floor >= 0.0,
            "regularization_floor must be nonnegative");
  }
};

enum class SolveStatus {
  converged,
  max_iterations,
  singular_kkt,
  line_search_stall,
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::singular_kkt: return "singular_kkt";
    case SolveStatus::line_search_stall: return "line_search_stall";
  }
  return "unknown";
}

/// Outcome of solve(). Failure results still carry the last iterate and its
/// residual norm so callers can attach diagnostics.
struct SolveResult {
  PrimalDualPoint point;
  SolveStatus status = SolveStatus::max_iterations;
  double residual_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;

  bool ok() const { return status == SolveStatus::converged; }
};

struct NewtonStep {
  Vec direction;
  double step_length = 0.0;
};

/// Thrown when a policy evaluation cannot proceed because the underlying
/// solve failed; carries the failure diagnostics.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, SolveResult result)
      : Error(what), result(std::move(result)) {}
  SolveResult result;
};

namespace detail {

// Solves jac * x = -rhs for several right-hand sides with diagonal
// regularization escalated from the floor when the factorization looks
// singular. Dense path.
class DenseKktSolver {
 public:
  bool factorize(Mat jac, double regularization_floor) {
    double shift = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Mat shifted = jac;
      if (shift > 0.0) shifted.diagonal().array() += shift;
      lu_.compute(shifted);
      const Vec pivots = lu_.matrixLU().diagonal().cwiseAbs();
      if (pivots.minCoeff() > 1e-14 * std::max(1.0, pivots.maxCoeff()))
        return true;
      shift = (shift == 0.0) ? std::max(regularization_floor, 1e-14)
                             : shift * 100.0;
    }
    return false;
  }

  template <typename Rhs>
  auto solve(const Rhs& rhs) const {
    return lu_.solve(rhs);
  }

 private:
  Eigen::PartialPivLU<Mat> lu_;
};

class SparseKktSolver {
 public:
  bool factorize(const NlpInstance& inst, const PrimalDualPoint& z,
                 double regularization_floor) {
    double shift = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::SparseMatrix<double> jac =
          kkt::residual_jacobian_sparse(inst, z, shift);
      jac.makeCompressed();
      lu_.compute(jac);
      if (lu_.info() == Eigen::Success) return true;
      shift = (shift == 0.0) ? std::max(regularization_floor, 1e-14)
                             : shift * 100.0;
    }
    return false;
  }

  Vec solve(const Vec& rhs) const { return lu_.solve(rhs); }

 private:
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

// Largest alpha <= 1 with mu + alpha*dmu >= (1 - fraction_to_boundary)*mu.
inline double fraction_to_boundary_alpha(const Vec& mu, const Vec& dmu,
                                         double ftb) {
  double alpha = 1.0;
  for (int i = 0; i < mu.size(); ++i)
    if (dmu[i] < 0.0) alpha = std::min(alpha, -ftb * mu[i] / dmu[i]);
  return alpha;
}

inline PrimalDualPoint advance(const PrimalDualPoint& z, const Vec& dz,
                               double alpha) {
  const int n_y = static_cast<int>(z.y.size());
  const int n_eq = static_cast<int>(z.lambda.size());
  const int n_in = static_cast<int>(z.mu.size());
  PrimalDualPoint out = z;
  out.y += alpha * dz.head(n_y);
  out.lambda += alpha * dz.segment(n_y, n_eq);
  out.mu += alpha * dz.tail(n_in);
  return out;
}

inline bool strictly_interior(const NlpInstance& inst,
                              const PrimalDualPoint& z) {
  if (z.mu.size() > 0 && z.mu.minCoeff() <= 0.0) return false;
  if (inst.dims().n_in > 0) {
    const Vec h = inst.problem->inequality(z.y, inst.params);
    if (h.maxCoeff() >= 0.0) return false;
  }
  return true;
}

}  // namespace detail

/// One Newton step on the relaxed KKT residual from a strictly interior
/// point: solves the linearized system (with diagonal regularization if the
/// factorization detects singularity), caps the step by the
/// fraction-to-boundary rule on mu, shortens it until h stays strictly
/// negative, then backtracks until the residual norm decreases.
inline NewtonStep newton_step(const NlpInstance& inst, const PrimalDualPoint& z,
                              const SolverConfig& config) {
  config.validate();
  require(detail::strictly_interior(inst, z),
          "newton_step requires a strictly interior point");

  const NlpDims dm = inst.dims();
  PrimalDualPoint zt = z;
  zt.tau = config.tau;
  const Vec r = kkt::residual(inst, zt);

  Vec dz;
  if (inst.problem->sparse_kkt()) {
    detail::SparseKktSolver lin;
    if (!lin.factorize(inst, zt, config.regularization_floor))
      throw Error("KKT matrix singular after regularization");
    dz = lin.solve(-r);
  } else {
    detail::DenseKktSolver lin;
    if (!lin.factorize(kkt::residual_jacobian(inst, zt),
                       config.regularization_floor))
      throw Error("KKT matrix singular after regularization");
    dz = lin.solve(-r);
  }

  const Vec dmu = dz.tail(dm.n_in);
  double alpha =
      detail::fraction_to_boundary_alpha(zt.mu, dmu, config.fraction_to_boundary);

  // Keep inequalities strictly negative along the primal step.
  for (int halvings = 0; halvings < 64; ++halvings) {
    const PrimalDualPoint trial = detail::advance(zt, dz, alpha);
    if (dm.n_in == 0 ||
        inst.problem->inequality(trial.y, inst.params).maxCoeff() < 0.0)
      break;
    alpha *= 0.5;
  }

  // Backtrack until the residual norm decreases.
  const double r_norm = r.lpNorm<Eigen::Infinity>();
  while (alpha > 1e-14) {
    const PrimalDualPoint trial = detail::advance(zt, dz, alpha);
    const double trial_norm =
        kkt::residual(inst, trial).lpNorm<Eigen::Infinity>();
    if (trial_norm < r_norm * (1.0 - 1e-4 * alpha)) break;
    alpha *= 0.5;
  }

  return NewtonStep{dz, alpha};
}

/// Constructs the default strictly interior start: primal point from the
/// problem builder, lambda = 0, mu = tau / (-h) componentwise (exact
/// perturbed complementarity at the start).
inline PrimalDualPoint interior_start(const NlpInstance& inst,
                                      const SolverConfig& config) {
  const NlpDims dm = inst.dims();
  PrimalDualPoint z;
  z.tau = config.tau;
  z.y = inst.problem->interior_initial_point(inst.params);
  require_dims(z.y.size() == dm.n_y, "interior point dimension mismatch");
  z.lambda = Vec::Zero(dm.n_eq);
  if (dm.n_in > 0) {
    const Vec h = inst.problem->inequality(z.y, inst.params);
    require(h.maxCoeff() < 0.0,
            "problem builder returned a non-interior initial point");
    z.mu = (config.tau / (-h.array())).matrix();
  } else {
    z.mu = Vec(0);
  }
  return z;
}

/// Newton iteration on the relaxed KKT system at fixed tau until
/// ||r_tau||_inf <= residual_tolerance. Deterministic given identical
/// inputs; failures return the last iterate and residual norm instead of
/// throwing.
inline SolveResult solve(const NlpInstance& inst, const SolverConfig& config,
                         const std::optional<PrimalDualPoint>& warm_start =
                             std::nullopt) {
  config.validate();
  PrimalDualPoint z;
  if (warm_start.has_value() && detail::strictly_interior(inst, *warm_start)) {
    z = *warm_start;
    z.tau = config.tau;
  } else {
    z = interior_start(inst, config);
  }

  SolveResult result;
  result.point = z;
  for (int it = 0; it < config.max_newton_iterations; ++it) {
    const double r_norm =
        kkt::residual(inst, z).lpNorm<Eigen::Infinity>();
    result.point = z;
    result.residual_norm = r_norm;
    result.iterations = it;
    if (r_norm <= config.residual_tolerance) {
      result.status = SolveStatus::converged;
      return result;
    }

    NewtonStep step;
    try {
      step = newton_step(inst, z, config);
    } catch (const Error&) {
      result.status = SolveStatus::singular_kkt;
      return result;
    }
    if (step.step_length <= 1e-14) {
      result.status = SolveStatus::line_search_stall;
      return result;
    }
    z = detail::advance(z, step.direction, step.step_length);
  }

  const double r_norm = kkt::residual(inst, z).lpNorm<Eigen::Infinity>();
  result.point = z;
  result.residual_norm = r_norm;
  result.iterations = config.max_newton_iterations;
  result.status = (r_norm <= config.residual_tolerance)
                      ? SolveStatus::converged
                      : SolveStatus::max_iterations;
  return result;
}

}  // namespace mpcrl
