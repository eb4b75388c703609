#include "collab/agents.hpp"

#include "collab/errors.hpp"

namespace collab {

ProposalDecision HeuristicBot::propose(const BargainState&, RngStream&) const {
  ProposalDecision d;
  d.coalition = Coalition::grand();
  d.action.members.fill(true);
  d.action.payoff.fill(1.0 / kNumAgents);
  return d;
}

ResponseDecision HeuristicBot::respond(const BargainState&, RngStream&) const { return {true, 0.0}; }

ProposalDecision RandomBot::propose(const BargainState& state, RngStream& rng) const {
  ProposalDecision d;
  for (int a = 0; a < kNumAgents; ++a) {
    d.action.members[a] = a == state.proposer || rng.bernoulli(0.5);
  }
  d.coalition = Coalition::from_flags(d.action.members[0], d.action.members[1], d.action.members[2]);
  double total = 0.0;
  for (int a = 0; a < kNumAgents; ++a) {
    if (!d.action.members[a]) continue;
    d.action.payoff[a] = rng.gamma(1.0);
    total += d.action.payoff[a];
  }
  for (double& x : d.action.payoff) x /= total;
  return d;
}

ResponseDecision RandomBot::respond(const BargainState&, RngStream& rng) const {
  return {rng.bernoulli(0.5), 0.0};
}

ProposalDecision ActorPolicy::propose(const BargainState& state, RngStream& rng) const {
  const int self = state.actor;
  const Eigen::VectorXd obs = normalizer_->apply(encode_observation(state, max_rounds_));
  const ActorHeads bits = actor_->forward(obs, Coalition::singleton(self));

  ProposalDecision d;
  d.action.members[self] = true;
  for (int a = 0; a < kNumAgents; ++a) {
    if (a == self) continue;
    const bool in = deterministic_ ? bits.coalition_prob[a] > 0.5 : rng.bernoulli(bits.coalition_prob[a]);
    d.action.members[a] = in;
    d.log_prob += bernoulli::log_prob(bits.coalition_logit[a], in);
  }
  d.coalition = Coalition::from_flags(d.action.members[0], d.action.members[1], d.action.members[2]);

  const ActorHeads heads = actor_->forward(obs, d.coalition);
  const PayoffDistribution dist{heads.alpha, d.coalition};
  d.action.payoff = deterministic_ ? dist.mode() : dist.sample(rng);
  d.log_prob += dist.log_prob(d.action.payoff);
  return d;
}

ResponseDecision ActorPolicy::respond(const BargainState& state, RngStream& rng) const {
  const Eigen::VectorXd obs = normalizer_->apply(encode_observation(state, max_rounds_));
  const ActorHeads heads = actor_->forward(obs, state.proposed_coalition());
  const bool accept = deterministic_ ? heads.accept_prob > 0.5 : rng.bernoulli(heads.accept_prob);
  return {accept, bernoulli::log_prob(heads.accept_logit, accept)};
}

EpisodeResult play_episode(const BargainingEnv& env, const PolicySet& policies, const Instance& instance,
                           int start_round, const ValueOracle& values, RngStream& rng,
                           const StepObserver& observer) {
  EpisodeResult result;
  result.start_round = start_round;
  BargainState state = env.reset(instance, start_round, rng);
  bool first = true;
  for (;;) {
    StepOutcome out;
    if (state.phase == Phase::Proposing) {
      const ProposalDecision d = policies[state.actor]->propose(state, rng);
      if (first) {
        first = false;
        result.first_proposer = state.proposer;
        result.first_coalition = d.coalition;
        result.first_payoff = repair_proposal(d.action, state.proposer).payoff;
      }
      out = env.step_propose(state, d.action, rng);
      if (observer) observer(StepRecord{state, &d, nullptr, out});
    } else {
      const ResponseDecision d = policies[state.actor]->respond(state, rng);
      out = env.step_respond(state, d.accept, values, rng);
      if (observer) observer(StepRecord{state, nullptr, &d, out});
    }

    if (out.terminated || out.truncated) {
      result.end_round = out.next.round;
      result.rounds = result.end_round - start_round + 1;
      result.truncated = out.truncated;
      result.agreed = out.terminated && out.agreed.size() >= 2;
      result.ended_empty = out.terminated && out.agreed.size() < 2;
      result.agreed_coalition = out.agreed;
      result.agreed_payoff = out.agreed_payoff;
      result.rewards = out.rewards;
      result.final_state = out.next;
      return result;
    }
    state = std::move(out.next);
  }
}

}  // namespace collab
