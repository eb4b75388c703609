#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "collab/agents.hpp"
#include "collab/values.hpp"

namespace collab {

/// Evaluation instances with their brute-forced tables. When `tables` is
/// empty, episodes fall back to solving agreed coalitions on demand.
struct EvalSet {
  std::vector<Instance> instances;
  std::vector<CharacteristicTable> tables;
  std::vector<ShapleyVector> shapley;
  std::vector<std::array<BestCoalition, kNumAgents>> best;

  std::size_t size() const { return instances.size(); }
  bool has_tables() const { return !tables.empty(); }
};

/// Instance k comes from RngStream(rng.seed() + k, rng.stream_id()), so its
/// stored seed regenerates it on its own.
std::vector<Instance> generate_instances(std::size_t n, const RngStream& rng);
EvalSet make_eval_set(std::vector<Instance> instances, bool with_tables, int threads);

/// One episode per instance starting at round 1. Episode k draws from
/// rng.split(k), so results do not depend on the thread count. When `log` is
/// given, every transition is written to it as one JSON line.
std::vector<EpisodeResult> run_episodes(const BargainingEnv& env, const PolicySet& policies,
                                        const EvalSet& set, const RngStream& rng, int threads,
                                        std::ostream* log = nullptr);

struct AccuracyStats {
  std::array<double, kNumAgents> per_agent{};
  std::array<int, kNumAgents> counted{};
  double mean = 0.0;
  int total = 0;
};

/// Share of non-degenerate episodes whose first proposal is the proposer's
/// best coalition.
AccuracyStats accuracy(std::span<const EpisodeResult> outcomes, const EvalSet& set);

struct GapStats {
  // per-capita gaps over first proposals naming at least two agents
  double abs_gap = 0.0;
  double rel_gap = 0.0;
  int counted = 0;
  // the same, with singleton proposals scored as worth zero
  double abs_gap_with_singletons = 0.0;
  double rel_gap_with_singletons = 0.0;
  int counted_with_singletons = 0;
  // raw coalition values instead of per-capita values
  double raw_abs_gap = 0.0;
  double raw_rel_gap = 0.0;
};

GapStats optimality_gaps(std::span<const EpisodeResult> outcomes, const EvalSet& set);

struct FitStats {
  double r2 = 0.0;
  double mse = 0.0;
  double mae = 0.0;
};

struct ShapleyFit {
  std::array<FitStats, kNumAgents> per_agent{};
  FitStats mean;
};

/// Realized payoffs against Shapley values, Shapley taken as ground truth.
ShapleyFit shapley_correlation(std::span<const EpisodeResult> outcomes, const EvalSet& set);

FitStats fit_stats(std::span<const double> truth, std::span<const double> predicted);

struct EvalReport {
  int episodes = 0;
  int degenerate = 0;
  AccuracyStats accuracy;
  GapStats gaps;
  ShapleyFit shapley;
  double rounds_mean = 0.0;
  double round1_termination_rate = 0.0;
  double agreement_rate = 0.0;
  double equal_share_deviation = 0.0;
  double proposer_self_share = 0.0;
  std::array<double, kNumAgents> payoff_share_mean{};
  std::array<double, kNumAgents> realized_payoff_mean{};
  double seconds_per_instance = 0.0;

  double excluded_rate() const { return episodes ? static_cast<double>(degenerate) / episodes : 0.0; }
};

/// Table-dependent fields stay zero when the set has no tables.
EvalReport summarize(std::span<const EpisodeResult> outcomes, const EvalSet& set);

nlohmann::json to_json(const EvalReport& report);

/// CSV rows: instance_id, agent, realized_payoff, shapley, in_coalition.
void write_scatter_csv(std::ostream& os, std::span<const EpisodeResult> outcomes, const EvalSet& set);

/// Probability that a round between two random bots ends the game: a
/// singleton proposal (1/4), a pair accepted (1/2 * 1/2) or the grand
/// coalition accepted twice (1/4 * 1/4).
inline constexpr double kRandomRoundEndProbability = 0.25 + 0.5 * 0.5 + 0.25 * 0.25;

/// P(game lasts exactly k rounds), k = 1..T, with the game cut at T.
std::vector<double> random_round_distribution(int max_rounds);
/// Mean of random_round_distribution.
double expected_rounds_random_analytic(int max_rounds);
/// sum_{k=1..T} k q (1-q)^(k-1): the geometric series without the mass
/// the cut piles onto round T.
double expected_rounds_random_series(int max_rounds);

}  // namespace collab
