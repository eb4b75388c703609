#include "collab/bargaining.hpp"

#include <nlohmann/json.hpp>

#include "collab/errors.hpp"

namespace collab {

double LazyValueOracle::operator()(Coalition c) {
  auto& slot = cache_[c.mask()];
  if (!slot) {
    slot = collaboration_gain(*instance_, c);
    if (c.size() > 1) ++solves_;
  }
  return *slot;
}

ProposalAction repair_proposal(const ProposalAction& raw, int proposer) {
  ProposalAction out = raw;
  out.members[proposer] = true;
  double total = 0.0;
  int count = 0;
  for (int a = 0; a < kNumAgents; ++a) {
    if (out.members[a]) {
      out.payoff[a] = std::max(0.0, raw.payoff[a]);
      total += out.payoff[a];
      ++count;
    } else {
      out.payoff[a] = 0.0;
    }
  }
  for (int a = 0; a < kNumAgents; ++a) {
    if (!out.members[a]) continue;
    out.payoff[a] = total > 0.0 ? out.payoff[a] / total : 1.0 / count;
  }
  return out;
}

BargainingEnv::BargainingEnv(int max_rounds, SingletonRule rule)
    : max_rounds_(max_rounds), rule_(rule) {
  if (max_rounds < 1) throw InputError("max_rounds must be at least 1");
}

int BargainingEnv::sample_start_round(RngStream& rng) const {
  return rng.uniform_int(1, std::max(1, max_rounds_ - 1));
}

BargainState BargainingEnv::reset(const Instance& instance, int start_round,
                                  RngStream& rng) const {
  if (start_round < 1 || start_round > std::max(1, max_rounds_ - 1)) {
    throw InputError("start_round " + std::to_string(start_round) + " outside 1.." +
                     std::to_string(std::max(1, max_rounds_ - 1)));
  }
  BargainState s;
  s.instance = instance;
  s.round = start_round;
  s.proposer = rng.uniform_int(0, kNumAgents - 1);
  s.actor = s.proposer;
  s.phase = Phase::Proposing;
  return s;
}

StepOutcome BargainingEnv::end_round(const BargainState& state, RngStream& rng) const {
  StepOutcome out;
  out.rejected = true;
  out.next = state;
  if (state.round >= max_rounds_) {
    out.truncated = true;
    return out;
  }
  BargainState& n = out.next;
  n.coalition.fill(0.0);
  n.payoff.fill(0.0);
  n.responses.fill(0.0);
  n.round = state.round + 1;
  n.proposer = rng.uniform_int(0, kNumAgents - 1);
  n.actor = n.proposer;
  n.phase = Phase::Proposing;
  n.responder_order = {-1, -1};
  n.responders_pending = 0;
  n.responder_cursor = 0;
  return out;
}

StepOutcome BargainingEnv::step_propose(const BargainState& state, const ProposalAction& action,
                                        RngStream& rng) const {
  if (state.phase != Phase::Proposing) {
    throw ContractViolation("step_propose called while responding");
  }
  const ProposalAction fixed = repair_proposal(action, state.proposer);
  BargainState s = state;
  for (int a = 0; a < kNumAgents; ++a) {
    s.coalition[a] = fixed.members[a] ? 1.0 : 0.0;
    s.payoff[a] = fixed.payoff[a];
  }
  const Coalition c = s.proposed_coalition();

  if (c.size() == 1) {
    if (rule_ == SingletonRule::TerminateEmpty) {
      StepOutcome out;
      out.next = s;
      out.terminated = true;
      out.agreed = c;
      return out;
    }
    return end_round(s, rng);
  }

  // Responders: a uniformly random order of C \ {p}.
  std::array<int, kNumAgents - 1> order{-1, -1};
  int n = 0;
  for (int a = 0; a < kNumAgents; ++a) {
    if (a != s.proposer && c.contains(a)) order[n++] = a;
  }
  if (n == 2 && rng.bernoulli(0.5)) std::swap(order[0], order[1]);
  s.responder_order = order;
  s.responders_pending = n;
  s.responder_cursor = 0;
  s.phase = Phase::Responding;
  s.actor = order[0];

  StepOutcome out;
  out.next = s;
  return out;
}

StepOutcome BargainingEnv::step_respond(const BargainState& state, bool accept,
                                        const ValueOracle& values, RngStream& rng) const {
  if (state.phase != Phase::Responding) {
    throw ContractViolation("step_respond called while proposing");
  }
  if (!accept) return end_round(state, rng);

  BargainState s = state;
  s.responses[s.actor] = 1.0;
  ++s.responder_cursor;
  if (s.responder_cursor < s.responders_pending) {
    s.actor = s.responder_order[s.responder_cursor];
    StepOutcome out;
    out.next = s;
    return out;
  }

  StepOutcome out;
  out.next = s;
  out.terminated = true;
  out.agreed = s.proposed_coalition();
  const double gain = values(out.agreed);
  for (int a = 0; a < kNumAgents; ++a) {
    out.agreed_payoff[a] = s.payoff[a];
    out.rewards[a] = out.agreed.contains(a) ? s.payoff[a] * gain : 0.0;
  }
  return out;
}

BargainState BargainingEnv::fictitious_bootstrap_state(const BargainState& state,
                                                       RngStream& rng) const {
  // a cut state still carries the offer that was turned down at round T
  const bool offer_pending = state.coalition[0] + state.coalition[1] + state.coalition[2] > 0.0;
  if (state.round != max_rounds_ || !offer_pending) {
    throw ContractViolation("fictitious_bootstrap_state requires a state truncated at round T");
  }
  BargainState s = state;
  s.coalition.fill(0.0);
  s.payoff.fill(0.0);
  s.responses.fill(0.0);
  s.round = max_rounds_ + 1;
  s.proposer = rng.uniform_int(0, kNumAgents - 1);
  s.actor = s.proposer;
  s.phase = Phase::Proposing;
  s.responder_order = {-1, -1};
  s.responders_pending = 0;
  s.responder_cursor = 0;
  return s;
}

nlohmann::json transition_record(int episode, const BargainState& before, int actor,
                                 const nlohmann::json& action, const StepOutcome& outcome) {
  nlohmann::json summary = {
      {"c", before.coalition},
      {"x", before.payoff},
      {"r", before.responses},
      {"phase", before.phase == Phase::Proposing ? "proposing" : "responding"},
  };
  return {
      {"episode", episode},
      {"t", before.round},
      {"proposer", before.proposer + 1},
      {"actor", actor + 1},
      {"action", action},
      {"state", std::move(summary)},
      {"rewards", outcome.rewards},
      {"terminated", outcome.terminated},
      {"truncated", outcome.truncated},
  };
}

}  // namespace collab
