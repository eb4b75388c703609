#include "collab/eval.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "collab/parallel.hpp"

namespace collab {

std::vector<Instance> generate_instances(std::size_t n, const RngStream& rng) {
  std::vector<Instance> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    RngStream child(rng.seed() + k, rng.stream_id());
    out.push_back(generate_instance(child));
  }
  return out;
}

EvalSet make_eval_set(std::vector<Instance> instances, bool with_tables, int threads) {
  EvalSet set;
  set.instances = std::move(instances);
  if (!with_tables) return set;
  const std::size_t n = set.instances.size();
  set.tables.resize(n);
  set.shapley.resize(n);
  set.best.resize(n);
  parallel_for(n, threads, [&](std::size_t k) {
    set.tables[k] = characteristic_table(set.instances[k]);
    set.shapley[k] = shapley(set.tables[k]);
    for (int a = 0; a < kNumAgents; ++a) set.best[k][a] = best_coalition_for(set.tables[k], a);
  });
  return set;
}

namespace {

nlohmann::json proposal_json(const ProposalDecision& d) {
  return {{"coalition", d.coalition.to_string()}, {"payoff", d.action.payoff}};
}

}  // namespace

std::vector<EpisodeResult> run_episodes(const BargainingEnv& env, const PolicySet& policies,
                                        const EvalSet& set, const RngStream& rng, int threads,
                                        std::ostream* log) {
  const std::size_t n = set.size();
  std::vector<EpisodeResult> out(n);
  std::vector<std::string> lines(log ? n : 0);
  parallel_for(n, threads, [&](std::size_t k) {
    RngStream episode_rng = rng.split(static_cast<std::uint64_t>(k));
    const Instance& inst = set.instances[k];
    LazyValueOracle lazy(inst);
    ValueOracle values;
    if (set.has_tables()) {
      values = [&table = set.tables[k]](Coalition c) { return table.v(c); };
    } else {
      values = [&lazy](Coalition c) { return lazy(c); };
    }
    StepObserver observer;
    std::ostringstream buffer;
    if (log) {
      observer = [&](const StepRecord& r) {
        nlohmann::json action = r.proposal ? proposal_json(*r.proposal)
                                           : nlohmann::json{{"accept", r.response->accept}};
        buffer << transition_record(static_cast<int>(k), r.before, r.before.actor, action, r.outcome).dump()
               << '\n';
      };
    }
    out[k] = play_episode(env, policies, inst, 1, values, episode_rng, observer);
    if (log) lines[k] = buffer.str();
  });
  if (log) {
    for (const std::string& l : lines) *log << l;
  }
  return out;
}

AccuracyStats accuracy(std::span<const EpisodeResult> outcomes, const EvalSet& set) {
  AccuracyStats s;
  std::array<int, kNumAgents> hits{};
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    if (set.tables[k].degenerate()) continue;
    const EpisodeResult& e = outcomes[k];
    const int p = e.first_proposer;
    ++s.counted[p];
    if (e.first_coalition == set.best[k][p].coalition) ++hits[p];
  }
  int total_hits = 0;
  for (int a = 0; a < kNumAgents; ++a) {
    s.per_agent[a] = s.counted[a] ? static_cast<double>(hits[a]) / s.counted[a] : 0.0;
    s.total += s.counted[a];
    total_hits += hits[a];
  }
  s.mean = s.total ? static_cast<double>(total_hits) / s.total : 0.0;
  return s;
}

GapStats optimality_gaps(std::span<const EpisodeResult> outcomes, const EvalSet& set) {
  GapStats g;
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const CharacteristicTable& t = set.tables[k];
    if (t.degenerate()) continue;
    const EpisodeResult& e = outcomes[k];
    const int p = e.first_proposer;
    const Coalition c = e.first_coalition;
    const double best = set.best[k][p].per_capita;
    const double gap = best - (c.size() >= 2 ? t.per_capita(c) : 0.0);

    ++g.counted_with_singletons;
    g.abs_gap_with_singletons += gap;
    g.rel_gap_with_singletons += gap / best;
    if (c.size() < 2) continue;

    double best_raw = 0.0;
    for (int m = 1; m < kNumCoalitions; ++m) {
      const Coalition d(static_cast<std::uint8_t>(m));
      if (d.contains(p)) best_raw = std::max(best_raw, t.v(d));
    }
    ++g.counted;
    g.abs_gap += gap;
    g.rel_gap += gap / best;
    g.raw_abs_gap += best_raw - t.v(c);
    g.raw_rel_gap += (best_raw - t.v(c)) / best_raw;
  }
  if (g.counted) {
    g.abs_gap /= g.counted;
    g.rel_gap /= g.counted;
    g.raw_abs_gap /= g.counted;
    g.raw_rel_gap /= g.counted;
  }
  if (g.counted_with_singletons) {
    g.abs_gap_with_singletons /= g.counted_with_singletons;
    g.rel_gap_with_singletons /= g.counted_with_singletons;
  }
  return g;
}

FitStats fit_stats(std::span<const double> truth, std::span<const double> predicted) {
  FitStats f;
  const std::size_t n = truth.size();
  if (n == 0) return f;
  double mean = 0.0;
  for (double y : truth) mean += y;
  mean /= static_cast<double>(n);
  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = truth[i] - predicted[i];
    ss_res += e * e;
    abs_sum += std::abs(e);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  f.mse = ss_res / static_cast<double>(n);
  f.mae = abs_sum / static_cast<double>(n);
  if (ss_tot > 0.0) {
    f.r2 = 1.0 - ss_res / ss_tot;
  } else {
    f.r2 = ss_res == 0.0 ? 1.0 : 0.0;
  }
  return f;
}

ShapleyFit shapley_correlation(std::span<const EpisodeResult> outcomes, const EvalSet& set) {
  ShapleyFit fit;
  for (int a = 0; a < kNumAgents; ++a) {
    std::vector<double> truth, realized;
    truth.reserve(outcomes.size());
    realized.reserve(outcomes.size());
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
      truth.push_back(set.shapley[k].phi[a]);
      realized.push_back(outcomes[k].rewards[a]);
    }
    fit.per_agent[a] = fit_stats(truth, realized);
    fit.mean.r2 += fit.per_agent[a].r2 / kNumAgents;
    fit.mean.mse += fit.per_agent[a].mse / kNumAgents;
    fit.mean.mae += fit.per_agent[a].mae / kNumAgents;
  }
  return fit;
}

EvalReport summarize(std::span<const EpisodeResult> outcomes, const EvalSet& set) {
  EvalReport r;
  r.episodes = static_cast<int>(outcomes.size());
  if (outcomes.empty()) return r;
  int agreements = 0;
  int round1 = 0;
  double deviation = 0.0;
  int deviation_terms = 0;
  for (const EpisodeResult& e : outcomes) {
    r.rounds_mean += e.rounds;
    if (!e.truncated && e.rounds == 1) ++round1;
    r.proposer_self_share += e.first_payoff[e.first_proposer];
    for (int a = 0; a < kNumAgents; ++a) r.realized_payoff_mean[a] += e.rewards[a];
    if (!e.agreed) continue;
    ++agreements;
    const double equal = 1.0 / e.agreed_coalition.size();
    for (int a = 0; a < kNumAgents; ++a) {
      r.payoff_share_mean[a] += e.agreed_payoff[a];
      if (e.agreed_coalition.contains(a)) {
        deviation += std::abs(e.agreed_payoff[a] - equal);
        ++deviation_terms;
      }
    }
  }
  const double n = static_cast<double>(outcomes.size());
  r.rounds_mean /= n;
  r.round1_termination_rate = round1 / n;
  r.agreement_rate = agreements / n;
  r.proposer_self_share /= n;
  r.equal_share_deviation = deviation_terms ? deviation / deviation_terms : 0.0;
  for (int a = 0; a < kNumAgents; ++a) {
    r.payoff_share_mean[a] /= n;
    r.realized_payoff_mean[a] /= n;
  }
  if (set.has_tables()) {
    for (const CharacteristicTable& t : set.tables) r.degenerate += t.degenerate() ? 1 : 0;
    r.accuracy = accuracy(outcomes, set);
    r.gaps = optimality_gaps(outcomes, set);
    r.shapley = shapley_correlation(outcomes, set);
  }
  return r;
}

namespace {

nlohmann::json fit_json(const FitStats& f) { return {{"r2", f.r2}, {"mse", f.mse}, {"mae", f.mae}}; }

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json shapley_agents = nlohmann::json::array();
  for (const FitStats& f : r.shapley.per_agent) shapley_agents.push_back(fit_json(f));
  return {
      {"episodes", r.episodes},
      {"degenerate_instances", r.degenerate},
      {"excluded_rate", r.excluded_rate()},
      {"accuracy", {{"mean", r.accuracy.mean}, {"per_agent", r.accuracy.per_agent}, {"counted", r.accuracy.total}}},
      {"optimality_gap",
       {{"abs", r.gaps.abs_gap},
        {"rel", r.gaps.rel_gap},
        {"counted", r.gaps.counted},
        {"abs_with_singletons", r.gaps.abs_gap_with_singletons},
        {"rel_with_singletons", r.gaps.rel_gap_with_singletons},
        {"raw_abs", r.gaps.raw_abs_gap},
        {"raw_rel", r.gaps.raw_rel_gap}}},
      {"shapley", {{"mean", fit_json(r.shapley.mean)}, {"per_agent", shapley_agents}}},
      {"rounds_mean", r.rounds_mean},
      {"round1_termination_rate", r.round1_termination_rate},
      {"agreement_rate", r.agreement_rate},
      {"equal_share_deviation", r.equal_share_deviation},
      {"proposer_self_share", r.proposer_self_share},
      {"payoff_share_mean", r.payoff_share_mean},
      {"realized_payoff_mean", r.realized_payoff_mean},
      {"seconds_per_instance", r.seconds_per_instance},
  };
}

void write_scatter_csv(std::ostream& os, std::span<const EpisodeResult> outcomes, const EvalSet& set) {
  os << "instance_id,agent,realized_payoff,shapley,in_coalition\n";
  os.precision(17);
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const EpisodeResult& e = outcomes[k];
    for (int a = 0; a < kNumAgents; ++a) {
      os << k << ',' << a + 1 << ',' << e.rewards[a] << ',' << set.shapley[k].phi[a] << ','
         << (e.agreed && e.agreed_coalition.contains(a) ? 1 : 0) << '\n';
    }
  }
}

std::vector<double> random_round_distribution(int max_rounds) {
  const double q = kRandomRoundEndProbability;
  std::vector<double> p(static_cast<std::size_t>(std::max(max_rounds, 0)));
  double survive = 1.0;
  for (int k = 1; k <= max_rounds; ++k) {
    p[k - 1] = k < max_rounds ? survive * q : survive;
    survive *= 1.0 - q;
  }
  return p;
}

double expected_rounds_random_analytic(int max_rounds) {
  const std::vector<double> p = random_round_distribution(max_rounds);
  double e = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) e += static_cast<double>(k + 1) * p[k];
  return e;
}

double expected_rounds_random_series(int max_rounds) {
  const double q = kRandomRoundEndProbability;
  double e = 0.0;
  for (int k = 1; k <= max_rounds; ++k) e += k * q * std::pow(1.0 - q, k - 1);
  return e;
}

}  // namespace collab
