#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "collab/bargaining.hpp"
#include "collab/distributions.hpp"
#include "collab/network.hpp"
#include "collab/normalizer.hpp"

namespace collab {

// Observation layout: deliveries matrix row-major (48), c (3), x (3), r (3),
// t / T (1), one-hot proposer (3), proposing flag (1).
inline constexpr int kDeliveriesDim = kNumLocations * kLocationFeatures;
inline constexpr int kObsDim = kDeliveriesDim + 3 * kNumAgents + 1 + kNumAgents + 1;
inline constexpr int kExtractorInputDim = kDeliveriesDim + kNumAgents;  // D and c
inline constexpr int kAuxOffset = kDeliveriesDim;
inline constexpr int kAuxDim = kObsDim - kAuxOffset;

Eigen::VectorXd encode_observation(const BargainState& state, int max_rounds);

/// Deliveries matrix plus a coalition indicator: the regression input used in
/// pre-training, laid out like the first kExtractorInputDim observation slots.
Eigen::VectorXd encode_coalition_query(const Instance& instance, Coalition coalition);

struct NetworkShape {
  int hidden = 256;        // width of the two feature-extractor layers
  int trunk_hidden = 256;  // width of the proposal/response trunk layer

  bool operator==(const NetworkShape&) const = default;
};

/// Two dense tanh layers over (D, c) followed by a scalar regression head;
/// the extractor layers are shared with the actors and critics.
class ValueRegressor {
 public:
  ValueRegressor() = default;
  ValueRegressor(NetworkShape shape, RngStream& rng);

  const Mlp& extractor() const { return extractor_; }
  std::span<const double> extractor_params() const {
    return std::span<const double>(params_.data(), extractor_.parameter_count());
  }

  Eigen::MatrixXd predict(const Eigen::MatrixXd& inputs) const;  // normalized inputs
  /// Mean squared error on the batch; accumulates its gradient into `grad`.
  double loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                           Eigen::VectorXd& grad) const;

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  const NetworkShape& shape() const { return shape_; }
  std::vector<std::pair<std::string, std::array<int, 2>>> tensor_shapes() const;

 private:
  NetworkShape shape_;
  Mlp extractor_;
  Mlp head_;
  Eigen::VectorXd params_;
};

/// Per-column description of what an agent did, for batched evaluation.
enum class ActionKind { Proposal, Response };

struct ActorBatch {
  Eigen::MatrixXd obs;                                      // normalized, kObsDim x B
  std::vector<ActionKind> kind;
  std::vector<Coalition> coalition;                         // chosen / proposed
  std::vector<std::array<double, kNumAgents>> payoff;       // executed payoff (proposals)
  std::vector<bool> accept;                                 // responses
  int self = 0;                                             // the acting agent

  int size() const { return static_cast<int>(kind.size()); }
};

struct ActorHeads {
  std::array<double, kNumAgents> coalition_logit{};
  std::array<double, kNumAgents> coalition_prob{};
  std::array<double, kNumAgents> alpha{};  // masked by the coalition passed in
  double accept_logit = 0.0;
  double accept_prob = 0.5;
};

/// Policy network of one agent: coalition head on the deliveries embedding,
/// proposal and response heads on a trunk fed with the embedding, the
/// auxiliary state and the coalition being proposed.
class Actor {
 public:
  struct Cache {
    Mlp::Cache extractor, coalition, trunk, proposal, response;
    Eigen::MatrixXd coalition_logits, proposal_raw, response_logit;
  };

  Actor() = default;
  Actor(NetworkShape shape, RngStream& rng);

  const NetworkShape& shape() const { return shape_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  void load_extractor(std::span<const double> extractor_params);

  ActorHeads forward(const Eigen::VectorXd& obs, Coalition chosen) const;

  /// Joint log-probability and entropy of each column's action.
  void evaluate(const ActorBatch& batch, Eigen::VectorXd& log_prob, Eigen::VectorXd& entropy,
                Cache* cache = nullptr) const;
  /// Accumulates d/dparams of sum_k (w_logp[k] * log_prob[k] + w_ent[k] * entropy[k]).
  void backward(const ActorBatch& batch, const Cache& cache, const Eigen::VectorXd& w_logp,
                const Eigen::VectorXd& w_ent, Eigen::VectorXd& grad) const;

  std::vector<std::pair<std::string, std::array<int, 2>>> tensor_shapes() const;

 private:
  Eigen::MatrixXd trunk_input(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& embedding,
                              const Eigen::MatrixXd& chosen) const;
  std::span<const double> block(std::size_t offset, const Mlp& m) const {
    return std::span<const double>(params_.data() + offset, m.parameter_count());
  }
  std::span<double> grad_block(Eigen::VectorXd& g, std::size_t offset, const Mlp& m) const {
    return std::span<double>(g.data() + offset, m.parameter_count());
  }

  NetworkShape shape_;
  Mlp extractor_, coalition_head_, trunk_, proposal_head_, response_head_;
  std::size_t off_extractor_ = 0, off_coalition_ = 0, off_trunk_ = 0, off_proposal_ = 0,
              off_response_ = 0;
  Eigen::VectorXd params_;
};

/// Baselines of one agent: V(s) for proposing-phase states and Q(s, .) over
/// {accept, reject} for responding states.
class Critic {
 public:
  struct Cache {
    Mlp::Cache extractor, trunk;
  };
  enum Output { kAccept = 0, kReject = 1 };

  Critic() = default;
  Critic(NetworkShape shape, RngStream& rng);

  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  void load_extractor(std::span<const double> extractor_params);

  double value(const Eigen::VectorXd& obs) const;
  std::array<double, 2> action_values(const Eigen::VectorXd& obs) const;

  Eigen::VectorXd values(const Eigen::MatrixXd& obs) const;
  Eigen::MatrixXd action_values(const Eigen::MatrixXd& obs) const;  // 2 x B

  /// Mean squared error of V against `targets` plus of Q(s, a_taken) against
  /// `q_targets`; gradients accumulate into `grad`. Returns {v_loss, q_loss}.
  std::array<double, 2> loss_and_gradient(const Eigen::MatrixXd& v_obs,
                                          const Eigen::VectorXd& v_targets,
                                          const Eigen::MatrixXd& q_obs,
                                          const std::vector<bool>& q_accept,
                                          const Eigen::VectorXd& q_targets,
                                          Eigen::VectorXd& grad) const;

  std::vector<std::pair<std::string, std::array<int, 2>>> tensor_shapes() const;

 private:
  Eigen::MatrixXd run(std::size_t ex_off, std::size_t tr_off, const Mlp& trunk,
                      const Eigen::MatrixXd& obs, Cache* cache) const;
  void back(std::size_t ex_off, std::size_t tr_off, const Mlp& trunk, const Cache& cache,
            const Eigen::MatrixXd& grad_out, Eigen::VectorXd& grad) const;

  NetworkShape shape_;
  Mlp extractor_, v_trunk_, q_trunk_;
  std::size_t off_v_extractor_ = 0, off_v_trunk_ = 0, off_q_extractor_ = 0, off_q_trunk_ = 0;
  Eigen::VectorXd params_;
};

/// COMA baseline: expected action value under the responder's policy.
double counterfactual_baseline(double accept_prob, const std::array<double, 2>& q);

/// Everything one learning agent owns.
struct AgentModel {
  Actor actor;
  Critic critic;
  RunningNormalizer normalizer{kObsDim};
};

/// Binary checkpoint: magic, format version, training step, then for each
/// agent its tensors (name, rows, cols, little-endian float64 data) and its
/// normalizer state. Loading checks every shape against `models`.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const std::vector<AgentModel>& models,
                     std::uint64_t training_step);
std::uint64_t load_checkpoint(const std::filesystem::path& path, std::vector<AgentModel>& models);

/// Reads only the network shape stored in a checkpoint header.
NetworkShape checkpoint_shape(const std::filesystem::path& path);

/// Pre-trained regressor and the input normalizer it was fitted with.
struct PretrainedModel {
  ValueRegressor regressor;
  RunningNormalizer normalizer{kExtractorInputDim};
  double test_mse = 0.0;
  double baseline_mse = 0.0;
};

void save_pretrained(const std::filesystem::path& path, const PretrainedModel& model);
PretrainedModel load_pretrained(const std::filesystem::path& path);

}  // namespace collab
