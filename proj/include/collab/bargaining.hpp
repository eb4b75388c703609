#pragma once

#include <array>
#include <functional>
#include <optional>
#include <ostream>

#include <nlohmann/json_fwd.hpp>

#include "collab/coalition.hpp"
#include "collab/instance.hpp"
#include "collab/rng.hpp"
#include "collab/values.hpp"

namespace collab {

enum class Phase { Proposing, Responding };

/// Full game state <D, c, x, r, t, p, a>. `actor` is the agent to move: the
/// proposer while proposing, otherwise the current responder.
struct BargainState {
  Instance instance;
  std::array<double, kNumAgents> coalition{};  // c
  std::array<double, kNumAgents> payoff{};     // x
  std::array<double, kNumAgents> responses{};  // r
  int round = 1;                               // t, 1-based
  int proposer = 0;                            // p, 0-based
  Phase phase = Phase::Proposing;              // a
  int actor = 0;
  std::array<int, kNumAgents - 1> responder_order{-1, -1};
  int responders_pending = 0;
  int responder_cursor = 0;

  Coalition proposed_coalition() const {
    return Coalition::from_flags(coalition[0] > 0.5, coalition[1] > 0.5, coalition[2] > 0.5);
  }
};

struct ProposalAction {
  std::array<bool, kNumAgents> members{};
  std::array<double, kNumAgents> payoff{};  // any nonnegative vector; repaired on step
};

struct StepOutcome {
  BargainState next;
  std::array<double, kNumAgents> rewards{};
  bool terminated = false;
  bool truncated = false;
  bool rejected = false;  // the round ended without agreement
  Coalition agreed;
  std::array<double, kNumAgents> agreed_payoff{};
};

// What happens when the proposer names only itself.
enum class SingletonRule {
  AutoReject,      // the round ends as if rejected (learning environment)
  TerminateEmpty,  // the game ends with zero payoffs (random-bot protocol check)
};

using ValueOracle = std::function<double(Coalition)>;

/// v(C) evaluated on demand for one instance; each coalition is solved at
/// most once.
class LazyValueOracle {
 public:
  explicit LazyValueOracle(const Instance& instance) : instance_(&instance) {}
  double operator()(Coalition c);
  int solves() const { return solves_; }

 private:
  const Instance* instance_;
  std::array<std::optional<double>, kNumCoalitions> cache_{};
  int solves_ = 0;
};

/// Forces the proposer into the mask, zeroes non-member shares and
/// renormalizes members to sum to one (equal split if they sum to zero).
ProposalAction repair_proposal(const ProposalAction& raw, int proposer);

class BargainingEnv {
 public:
  explicit BargainingEnv(int max_rounds = 10, SingletonRule rule = SingletonRule::AutoReject);

  int max_rounds() const { return max_rounds_; }
  SingletonRule singleton_rule() const { return rule_; }

  BargainState reset(const Instance& instance, int start_round, RngStream& rng) const;
  int sample_start_round(RngStream& rng) const;  // uniform on 1..T-1

  StepOutcome step_propose(const BargainState& state, const ProposalAction& action,
                           RngStream& rng) const;
  StepOutcome step_respond(const BargainState& state, bool accept, const ValueOracle& values,
                           RngStream& rng) const;

  /// Round T+1 state used only to query a critic after truncation.
  BargainState fictitious_bootstrap_state(const BargainState& state, RngStream& rng) const;

 private:
  StepOutcome end_round(const BargainState& state, RngStream& rng) const;

  int max_rounds_;
  SingletonRule rule_;
};

/// One JSON-lines trajectory record.
nlohmann::json transition_record(int episode, const BargainState& before, int actor,
                                 const nlohmann::json& action, const StepOutcome& outcome);

}  // namespace collab
