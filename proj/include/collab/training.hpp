#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "collab/agents.hpp"
#include "collab/eval.hpp"
#include "collab/policy.hpp"

namespace collab {

struct TrainConfig {
  double gamma = 0.95;
  int max_rounds = 10;
  int batch_episodes = 2048;
  double learning_rate = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double max_grad_norm = 1.0;
  double clip_epsilon = 0.05;
  double entropy_coef = 0.01;
  int ppo_passes = 1;
  int minibatches = 1;
  bool reinforce = false;
  int epochs = 10000;
  int eval_interval = 100;
  int eval_episodes = 2048;
  bool save_checkpoints = true;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: all available cores
  NetworkShape network;

  bool pretrain = true;
  std::string pretrained_path;  // load instead of pre-training when set
  int pretrain_records = 100000;
  int pretrain_epochs = 20;
  int pretrain_batch = 256;
  double pretrain_learning_rate = 1e-3;
  double pretrain_test_fraction = 0.2;

  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }
  void validate() const;  // throws ValidationError
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig read_train_config(const std::filesystem::path& path);

// ------------------------------------------------------------ pre-training

struct PretrainDataset {
  Eigen::MatrixXd inputs;  // kExtractorInputDim x N, unnormalized
  Eigen::VectorXd targets;
  std::vector<Coalition> coalitions;

  int size() const { return static_cast<int>(targets.size()); }
};

/// One fresh instance per record with a coalition drawn uniformly from the
/// seven nonempty ones; the target is its collaboration gain.
PretrainDataset make_pretrain_dataset(int records, const RngStream& rng, int threads);

/// Fits the regressor on the first (1 - test_fraction) of the records and
/// reports the held-out error next to the constant-predictor baseline.
PretrainedModel pretrain(const PretrainDataset& data, const TrainConfig& config, const RngStream& rng,
                         std::ostream* progress = nullptr);

// ---------------------------------------------------------------- rollouts

enum class SampleKind {
  Proposal,
  Response,
  RoundStart,  // a round beginning with someone else proposing; value target only
};

struct Transition {
  SampleKind kind = SampleKind::Proposal;
  int episode = 0;
  int round = 1;
  Eigen::VectorXd obs;  // raw observation
  Coalition coalition;
  std::array<double, kNumAgents> payoff{};
  bool accept = false;
  double log_prob = 0.0;  // behaviour policy
  double ret = 0.0;
  double advantage = 0.0;

  bool is_action() const { return kind != SampleKind::RoundStart; }
};

struct RolloutEpisode {
  EpisodeResult result;
  std::optional<BargainState> bootstrap;  // present when truncated
};

struct RolloutBuffer {
  std::array<std::vector<Transition>, kNumAgents> agent;
  std::vector<RolloutEpisode> episodes;
};

/// `episodes` games, each on a fresh instance from a uniformly drawn start
/// round. Episode k draws only from rng.split(k).
RolloutBuffer collect_rollouts(const PolicySet& policies, const TrainConfig& config, int episodes,
                               const RngStream& rng);

/// Discounted returns. Terminated episodes pay gamma^(end - t) * reward; cut
/// episodes pay gamma^(T + 1 - t) * V(bootstrap). Without models the
/// bootstrap value is zero.
void compute_returns(RolloutBuffer& buffer, const TrainConfig& config,
                     const std::vector<AgentModel>* models);

struct AdvantageStats {
  std::array<double, kNumAgents> raw_mean{};
  std::array<double, kNumAgents> raw_std{};
  std::array<bool, kNumAgents> normalized{};
};

/// Proposals: G - V(s). Responses: G - sum_a pi(a|s) Q(s, a). Then each
/// agent's advantages are shifted and scaled to zero mean, unit variance,
/// unless their spread is zero.
AdvantageStats compute_advantages(RolloutBuffer& buffer, const std::vector<AgentModel>& models);

struct AgentOptimizers {
  Adam actor;
  Adam critic;
};

struct UpdateStats {
  std::array<double, kNumAgents> actor_loss{};
  std::array<double, kNumAgents> value_loss{};
  std::array<double, kNumAgents> q_loss{};
  std::array<double, kNumAgents> entropy{};
  std::array<double, kNumAgents> clip_fraction{};
  double first_ratio_deviation = 0.0;  // max |ratio - 1| before any step this call
};

/// PPO (or REINFORCE) and critic regression for every agent on its own
/// transitions; minibatches are reshuffled each pass from `rng`.
UpdateStats policy_update(const RolloutBuffer& buffer, std::vector<AgentModel>& models,
                          std::vector<AgentOptimizers>& optimizers, const TrainConfig& config,
                          RngStream& rng);

/// Per-agent loss pieces of the clipped surrogate, exposed for tests:
/// weight on d log pi for one sample given its ratio and advantage.
double surrogate_logp_weight(double ratio, double advantage, double clip_epsilon, bool reinforce);

// ----------------------------------------------------------------- trainer

struct EpochRecord {
  int epoch = 0;
  std::array<double, kNumAgents> mean_return{};
  AdvantageStats advantages;
  UpdateStats update;
  EvalReport eval;
};

class Trainer {
 public:
  explicit Trainer(TrainConfig config, const PretrainedModel* pretrained = nullptr);

  const TrainConfig& config() const { return config_; }
  std::vector<AgentModel>& models() { return models_; }
  const std::vector<AgentModel>& models() const { return models_; }
  int epoch() const { return epoch_; }
  const EvalSet& eval_set() const { return eval_set_; }

  /// Rollouts, returns, advantages, update, then normalizer statistics.
  EpochRecord train_epoch();
  /// Deterministic actions on the fixed evaluation set, from round 1.
  EvalReport evaluate() const;

  /// Full run: evaluation at epoch 0, every eval_interval and at the end,
  /// metrics.csv, checkpoints and config snapshot written to `out_dir`.
  std::vector<EpochRecord> run(const std::filesystem::path& out_dir, std::ostream* progress = nullptr);

 private:
  TrainConfig config_;
  std::vector<AgentModel> models_;
  std::vector<AgentOptimizers> optimizers_;
  EvalSet eval_set_;
  RngStream rng_;
  int epoch_ = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochRecord& record);

/// Version string written next to every output.
std::string version_string();

}  // namespace collab
