#pragma once

#include <cstdint>
#include <vector>

#include "mpcrl/policy.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

/// One observed state transition with its stage cost and the exploration
/// record attached at decision time.
struct Transition {
  Vec s;
  Vec a;
  double cost = 0.0;
  Vec s_plus;
  ExplorationRecord record;
};

using Rollout = std::vector<Transition>;

/// S rollouts of N_t transitions each, plus the seed metadata that makes
/// the batch reproducible.
struct TransitionBatch {
  std::vector<Rollout> rollouts;
  std::uint64_t seed = 0;
  std::uint64_t rl_step = 0;

  int rollout_count() const { return static_cast<int>(rollouts.size()); }
  int transition_count() const {
    int n = 0;
    for (const auto& r : rollouts) n += static_cast<int>(r.size());
    return n;
  }

  /// Within-rollout chain consistency: s_plus of step k is s of step k+1.
  bool chain_consistent(double tol = 0.0) const {
    for (const auto& rollout : rollouts)
      for (std::size_t k = 0; k + 1 < rollout.size(); ++k)
        if ((rollout[k].s_plus - rollout[k + 1].s).lpNorm<Eigen::Infinity>() >
            tol)
          return false;
    return true;
  }
};

}  // namespace mpcrl
