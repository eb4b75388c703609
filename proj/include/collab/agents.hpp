#pragma once

#include <array>
#include <functional>
#include <span>

#include "collab/bargaining.hpp"
#include "collab/policy.hpp"

namespace collab {

struct ProposalDecision {
  ProposalAction action;
  Coalition coalition;
  double log_prob = 0.0;
};

struct ResponseDecision {
  bool accept = true;
  double log_prob = 0.0;
};

/// Anything that can sit at the bargaining table. Implementations must be
/// safe to call concurrently from several episodes.
class BargainingPolicy {
 public:
  virtual ~BargainingPolicy() = default;
  virtual ProposalDecision propose(const BargainState& state, RngStream& rng) const = 0;
  virtual ResponseDecision respond(const BargainState& state, RngStream& rng) const = 0;
};

/// Grand coalition, equal shares, accepts everything.
class HeuristicBot final : public BargainingPolicy {
 public:
  ProposalDecision propose(const BargainState& state, RngStream& rng) const override;
  ResponseDecision respond(const BargainState& state, RngStream& rng) const override;
};

/// Uniform over the four coalitions containing the proposer, payoff uniform
/// on the members' simplex, accepts with probability one half.
class RandomBot final : public BargainingPolicy {
 public:
  ProposalDecision propose(const BargainState& state, RngStream& rng) const override;
  ResponseDecision respond(const BargainState& state, RngStream& rng) const override;
};

/// A trained actor. Stochastic mode samples the heads and reports the joint
/// log-probability; deterministic mode takes per-bit argmax and the
/// Dirichlet mode.
class ActorPolicy final : public BargainingPolicy {
 public:
  ActorPolicy(const Actor& actor, const RunningNormalizer& normalizer, int max_rounds,
              bool deterministic)
      : actor_(&actor), normalizer_(&normalizer), max_rounds_(max_rounds), deterministic_(deterministic) {}

  ProposalDecision propose(const BargainState& state, RngStream& rng) const override;
  ResponseDecision respond(const BargainState& state, RngStream& rng) const override;

 private:
  const Actor* actor_;
  const RunningNormalizer* normalizer_;
  int max_rounds_;
  bool deterministic_;
};

struct EpisodeResult {
  int start_round = 1;
  int end_round = 1;
  int rounds = 1;  // rounds played, start to end inclusive
  bool agreed = false;
  bool truncated = false;
  bool ended_empty = false;  // singleton proposal under SingletonRule::TerminateEmpty
  int first_proposer = 0;
  Coalition first_coalition;
  std::array<double, kNumAgents> first_payoff{};
  Coalition agreed_coalition;
  std::array<double, kNumAgents> agreed_payoff{};
  std::array<double, kNumAgents> rewards{};
  BargainState final_state;
};

struct StepRecord {
  const BargainState& before;
  const ProposalDecision* proposal;  // set on proposing turns
  const ResponseDecision* response;  // set on responding turns
  const StepOutcome& outcome;
};

using StepObserver = std::function<void(const StepRecord&)>;

using PolicySet = std::array<const BargainingPolicy*, kNumAgents>;

EpisodeResult play_episode(const BargainingEnv& env, const PolicySet& policies, const Instance& instance,
                           int start_round, const ValueOracle& values, RngStream& rng,
                           const StepObserver& observer = {});

}  // namespace collab
