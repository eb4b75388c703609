#include "collab/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "collab/errors.hpp"
#include "collab/parallel.hpp"

#ifndef COLLAB_GIT_VERSION
#define COLLAB_GIT_VERSION "unknown"
#endif

namespace collab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string version_string() { return std::string("collab 0.1.0 (") + COLLAB_GIT_VERSION + ")"; }

// ------------------------------------------------------------------ config

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("config: " + what); };
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (max_rounds < 1) fail("max_rounds must be at least 1");
  if (batch_episodes < 1) fail("batch_episodes must be at least 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be positive");
  if (!(max_grad_norm > 0.0)) fail("max_grad_norm must be positive");
  if (!(clip_epsilon > 0.0)) fail("clip_epsilon must be positive");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef must be nonnegative");
  if (ppo_passes < 1) fail("ppo_passes must be at least 1");
  if (minibatches < 1) fail("minibatches must be at least 1");
  if (epochs < 0) fail("epochs must be nonnegative");
  if (eval_interval < 1) fail("eval_interval must be at least 1");
  if (eval_episodes < 1) fail("eval_episodes must be at least 1");
  if (threads < 0) fail("threads must be nonnegative");
  if (network.hidden < 1 || network.trunk_hidden < 1) fail("network widths must be positive");
  if (pretrain_records < 2) fail("pretrain_records must be at least 2");
  if (pretrain_epochs < 0) fail("pretrain_epochs must be nonnegative");
  if (pretrain_batch < 1) fail("pretrain_batch must be at least 1");
  if (!(pretrain_learning_rate > 0.0)) fail("pretrain_learning_rate must be positive");
  if (!(pretrain_test_fraction > 0.0 && pretrain_test_fraction < 1.0)) {
    fail("pretrain_test_fraction must lie in (0, 1)");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"gamma", c.gamma},
      {"max_rounds", c.max_rounds},
      {"batch_episodes", c.batch_episodes},
      {"learning_rate", c.learning_rate},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_epsilon", c.adam_epsilon},
      {"max_grad_norm", c.max_grad_norm},
      {"clip_epsilon", c.clip_epsilon},
      {"entropy_coef", c.entropy_coef},
      {"ppo_passes", c.ppo_passes},
      {"minibatches", c.minibatches},
      {"reinforce", c.reinforce},
      {"epochs", c.epochs},
      {"eval_interval", c.eval_interval},
      {"eval_episodes", c.eval_episodes},
      {"save_checkpoints", c.save_checkpoints},
      {"seed", c.seed},
      {"threads", c.threads},
      {"network", {{"hidden", c.network.hidden}, {"trunk_hidden", c.network.trunk_hidden}}},
      {"pretrain", c.pretrain},
      {"pretrained_path", c.pretrained_path},
      {"pretrain_records", c.pretrain_records},
      {"pretrain_epochs", c.pretrain_epochs},
      {"pretrain_batch", c.pretrain_batch},
      {"pretrain_learning_rate", c.pretrain_learning_rate},
      {"pretrain_test_fraction", c.pretrain_test_fraction},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  TrainConfig c;
  const nlohmann::json defaults = to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw ValidationError("config: unknown key \"" + it.key() + "\"");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("gamma", c.gamma);
    get("max_rounds", c.max_rounds);
    get("batch_episodes", c.batch_episodes);
    get("learning_rate", c.learning_rate);
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("adam_epsilon", c.adam_epsilon);
    get("max_grad_norm", c.max_grad_norm);
    get("clip_epsilon", c.clip_epsilon);
    get("entropy_coef", c.entropy_coef);
    get("ppo_passes", c.ppo_passes);
    get("minibatches", c.minibatches);
    get("reinforce", c.reinforce);
    get("epochs", c.epochs);
    get("eval_interval", c.eval_interval);
    get("eval_episodes", c.eval_episodes);
    get("save_checkpoints", c.save_checkpoints);
    get("seed", c.seed);
    get("threads", c.threads);
    if (j.contains("network")) {
      const nlohmann::json& n = j.at("network");
      for (auto it = n.begin(); it != n.end(); ++it) {
        if (it.key() != "hidden" && it.key() != "trunk_hidden") {
          throw ValidationError("config: unknown key \"network." + it.key() + "\"");
        }
      }
      if (n.contains("hidden")) c.network.hidden = n.at("hidden").get<int>();
      if (n.contains("trunk_hidden")) c.network.trunk_hidden = n.at("trunk_hidden").get<int>();
    }
    get("pretrain", c.pretrain);
    get("pretrained_path", c.pretrained_path);
    get("pretrain_records", c.pretrain_records);
    get("pretrain_epochs", c.pretrain_epochs);
    get("pretrain_batch", c.pretrain_batch);
    get("pretrain_learning_rate", c.pretrain_learning_rate);
    get("pretrain_test_fraction", c.pretrain_test_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig read_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

// ------------------------------------------------------------ pre-training

PretrainDataset make_pretrain_dataset(int records, const RngStream& rng, int threads) {
  PretrainDataset d;
  d.inputs.resize(kExtractorInputDim, records);
  d.targets.resize(records);
  d.coalitions.resize(static_cast<std::size_t>(records));
  parallel_for(static_cast<std::size_t>(records), threads, [&](std::size_t k) {
    RngStream r = rng.split(static_cast<std::uint64_t>(k));
    const Instance inst = generate_instance(r);
    const Coalition c(static_cast<std::uint8_t>(r.uniform_int(1, kNumCoalitions - 1)));
    const auto col = static_cast<Eigen::Index>(k);
    d.inputs.col(col) = encode_coalition_query(inst, c);
    d.targets[col] = collaboration_gain(inst, c);
    d.coalitions[k] = c;
  });
  return d;
}

namespace {

void shuffle_indices(std::vector<int>& idx, RngStream& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.uniform_int(0, i)]);
  }
}

MatrixXd gather_columns(const MatrixXd& m, std::span<const int> cols) {
  MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(cols[k]);
  return out;
}

double mse_of(const ValueRegressor& model, const MatrixXd& x, const VectorXd& y) {
  if (y.size() == 0) return 0.0;
  const MatrixXd pred = model.predict(x);
  return (pred.row(0).transpose() - y).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace

PretrainedModel pretrain(const PretrainDataset& data, const TrainConfig& config, const RngStream& rng,
                         std::ostream* progress) {
  const int n = data.size();
  const int n_test = std::max(1, static_cast<int>(std::lround(n * config.pretrain_test_fraction)));
  const int n_train = n - n_test;
  if (n_train < 1) throw InputError("pre-training needs at least one training record");

  RngStream init = rng.split("init");
  PretrainedModel out{ValueRegressor(config.network, init), RunningNormalizer(kExtractorInputDim), 0.0, 0.0};
  out.normalizer.update(MatrixXd(data.inputs.leftCols(n_train)));
  const MatrixXd x_train = out.normalizer.apply(MatrixXd(data.inputs.leftCols(n_train)));
  const MatrixXd x_test = out.normalizer.apply(MatrixXd(data.inputs.rightCols(n_test)));
  const VectorXd y_train = data.targets.head(n_train);
  const VectorXd y_test = data.targets.tail(n_test);
  out.baseline_mse = (y_test.array() - y_test.mean()).square().mean();

  Adam adam(static_cast<std::size_t>(out.regressor.params().size()),
            {config.pretrain_learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon});
  std::vector<int> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);
  RngStream shuffle_rng = rng.split("shuffle");
  VectorXd grad(out.regressor.params().size());

  for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (int lo = 0; lo < n_train; lo += config.pretrain_batch) {
      const int hi = std::min(n_train, lo + config.pretrain_batch);
      const std::span<const int> cols(order.data() + lo, static_cast<std::size_t>(hi - lo));
      VectorXd y(hi - lo);
      for (int k = lo; k < hi; ++k) y[k - lo] = y_train[order[k]];
      grad.setZero();
      const double loss = out.regressor.loss_and_gradient(gather_columns(x_train, cols), y, grad);
      if (!std::isfinite(loss)) {
        throw NumericalFault("pre-training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches) + " (loss " + std::to_string(loss) + ")");
      }
      clip_global_norm(grad, config.max_grad_norm);
      adam.step(out.regressor.params(), grad);
      loss_sum += loss;
      ++batches;
    }
    if (progress) {
      *progress << "pretrain epoch " << epoch + 1 << "/" << config.pretrain_epochs
                << " train_mse " << loss_sum / std::max(1, batches) << " test_mse "
                << mse_of(out.regressor, x_test, y_test) << " baseline " << out.baseline_mse << '\n';
    }
  }
  out.test_mse = mse_of(out.regressor, x_test, y_test);
  if (!std::isfinite(out.test_mse)) throw NumericalFault("pre-training produced a non-finite test error");
  return out;
}

// ---------------------------------------------------------------- rollouts

RolloutBuffer collect_rollouts(const PolicySet& policies, const TrainConfig& config, int episodes,
                               const RngStream& rng) {
  const BargainingEnv env(config.max_rounds, SingletonRule::AutoReject);
  struct Slot {
    std::array<std::vector<Transition>, kNumAgents> agent;
    RolloutEpisode episode;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(episodes));

  parallel_for(slots.size(), config.threads, [&](std::size_t k) {
    const RngStream base = rng.split(static_cast<std::uint64_t>(k));
    RngStream instance_rng = base.split("instance");
    const Instance inst = generate_instance(instance_rng);
    RngStream play = base.split("play");
    const int start = env.sample_start_round(play);
    LazyValueOracle oracle(inst);
    Slot& slot = slots[k];
    const int episode = static_cast<int>(k);

    auto observer = [&](const StepRecord& r) {
      const BargainState& s = r.before;
      VectorXd obs = encode_observation(s, config.max_rounds);
      Transition t;
      t.episode = episode;
      t.round = s.round;
      if (r.proposal) {
        for (int a = 0; a < kNumAgents; ++a) {
          if (a == s.proposer) continue;
          Transition seen;
          seen.kind = SampleKind::RoundStart;
          seen.episode = episode;
          seen.round = s.round;
          seen.obs = obs;
          slot.agent[a].push_back(std::move(seen));
        }
        t.kind = SampleKind::Proposal;
        t.coalition = r.proposal->coalition;
        t.payoff = r.proposal->action.payoff;
        t.log_prob = r.proposal->log_prob;
      } else {
        t.kind = SampleKind::Response;
        t.coalition = s.proposed_coalition();
        t.payoff = s.payoff;
        t.accept = r.response->accept;
        t.log_prob = r.response->log_prob;
      }
      t.obs = std::move(obs);
      slot.agent[s.actor].push_back(std::move(t));
    };

    slot.episode.result = play_episode(env, policies, inst, start,
                                       [&oracle](Coalition c) { return oracle(c); }, play, observer);
    if (slot.episode.result.truncated) {
      slot.episode.bootstrap = env.fictitious_bootstrap_state(slot.episode.result.final_state, play);
    }
  });

  RolloutBuffer buffer;
  buffer.episodes.reserve(slots.size());
  for (Slot& s : slots) {
    for (int a = 0; a < kNumAgents; ++a) {
      auto& dst = buffer.agent[a];
      dst.insert(dst.end(), std::make_move_iterator(s.agent[a].begin()),
                 std::make_move_iterator(s.agent[a].end()));
    }
    buffer.episodes.push_back(std::move(s.episode));
  }
  return buffer;
}

void compute_returns(RolloutBuffer& buffer, const TrainConfig& config, const std::vector<AgentModel>* models) {
  const std::size_t n = buffer.episodes.size();
  // bootstrap[e][a]: agent a's value of the round after the cut
  std::vector<std::array<double, kNumAgents>> bootstrap(n, std::array<double, kNumAgents>{});
  if (models) {
    std::vector<int> cut;
    for (std::size_t e = 0; e < n; ++e) {
      if (buffer.episodes[e].bootstrap) cut.push_back(static_cast<int>(e));
    }
    if (!cut.empty()) {
      MatrixXd raw(kObsDim, static_cast<Eigen::Index>(cut.size()));
      for (std::size_t k = 0; k < cut.size(); ++k) {
        raw.col(static_cast<Eigen::Index>(k)) =
            encode_observation(*buffer.episodes[cut[k]].bootstrap, config.max_rounds);
      }
      for (int a = 0; a < kNumAgents; ++a) {
        const AgentModel& m = (*models)[a];
        const VectorXd v = m.critic.values(m.normalizer.apply(raw));
        for (std::size_t k = 0; k < cut.size(); ++k) bootstrap[cut[k]][a] = v[static_cast<Eigen::Index>(k)];
      }
    }
  }

  for (int a = 0; a < kNumAgents; ++a) {
    for (Transition& t : buffer.agent[a]) {
      const RolloutEpisode& ep = buffer.episodes[t.episode];
      if (ep.result.truncated) {
        t.ret = std::pow(config.gamma, config.max_rounds + 1 - t.round) * bootstrap[t.episode][a];
      } else {
        t.ret = std::pow(config.gamma, ep.result.end_round - t.round) * ep.result.rewards[a];
      }
    }
  }
}

namespace {

ActorBatch make_actor_batch(const std::vector<Transition>& ts, std::span<const int> idx,
                            const RunningNormalizer& norm, int self) {
  ActorBatch b;
  b.self = self;
  MatrixXd raw(kObsDim, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Transition& t = ts[idx[k]];
    raw.col(static_cast<Eigen::Index>(k)) = t.obs;
    b.kind.push_back(t.kind == SampleKind::Proposal ? ActionKind::Proposal : ActionKind::Response);
    b.coalition.push_back(t.coalition);
    b.payoff.push_back(t.payoff);
    b.accept.push_back(t.accept);
  }
  b.obs = norm.apply(raw);
  return b;
}

MatrixXd normalized_obs(const std::vector<Transition>& ts, std::span<const int> idx, const RunningNormalizer& norm) {
  MatrixXd raw(kObsDim, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) raw.col(static_cast<Eigen::Index>(k)) = ts[idx[k]].obs;
  return norm.apply(raw);
}

}  // namespace

AdvantageStats compute_advantages(RolloutBuffer& buffer, const std::vector<AgentModel>& models) {
  AdvantageStats stats;
  for (int a = 0; a < kNumAgents; ++a) {
    std::vector<Transition>& ts = buffer.agent[a];
    const AgentModel& m = models[a];
    std::vector<int> proposals, responses;
    for (int k = 0; k < static_cast<int>(ts.size()); ++k) {
      if (ts[k].kind == SampleKind::Proposal) proposals.push_back(k);
      if (ts[k].kind == SampleKind::Response) responses.push_back(k);
    }
    if (!proposals.empty()) {
      const VectorXd v = m.critic.values(normalized_obs(ts, proposals, m.normalizer));
      for (std::size_t k = 0; k < proposals.size(); ++k) {
        Transition& t = ts[proposals[k]];
        t.advantage = t.ret - v[static_cast<Eigen::Index>(k)];
      }
    }
    if (!responses.empty()) {
      ActorBatch b = make_actor_batch(ts, responses, m.normalizer, a);
      std::fill(b.accept.begin(), b.accept.end(), true);
      VectorXd log_accept, entropy;
      m.actor.evaluate(b, log_accept, entropy);
      const MatrixXd q = m.critic.action_values(b.obs);
      for (std::size_t k = 0; k < responses.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        Transition& t = ts[responses[k]];
        t.advantage = t.ret - counterfactual_baseline(std::exp(log_accept[col]), {q(0, col), q(1, col)});
      }
    }

    double sum = 0.0;
    int count = 0;
    for (const Transition& t : ts) {
      if (!t.is_action()) continue;
      sum += t.advantage;
      ++count;
    }
    if (count == 0) continue;
    const double mean = sum / count;
    double sq = 0.0;
    for (const Transition& t : ts) {
      if (t.is_action()) sq += (t.advantage - mean) * (t.advantage - mean);
    }
    const double sd = std::sqrt(sq / count);
    stats.raw_mean[a] = mean;
    stats.raw_std[a] = sd;
    if (!(sd > 1e-12)) continue;
    stats.normalized[a] = true;
    for (Transition& t : ts) {
      if (t.is_action()) t.advantage = (t.advantage - mean) / sd;
    }
  }
  return stats;
}

double surrogate_logp_weight(double ratio, double advantage, double clip_epsilon, bool reinforce) {
  if (reinforce) return advantage;
  // the clipped branch is the smaller one, and constant in the parameters
  if (advantage > 0.0 && ratio > 1.0 + clip_epsilon) return 0.0;
  if (advantage < 0.0 && ratio < 1.0 - clip_epsilon) return 0.0;
  return ratio * advantage;
}

UpdateStats policy_update(const RolloutBuffer& buffer, std::vector<AgentModel>& models,
                          std::vector<AgentOptimizers>& optimizers, const TrainConfig& config, RngStream& rng) {
  UpdateStats stats;
  for (int a = 0; a < kNumAgents; ++a) {
    const std::vector<Transition>& ts = buffer.agent[a];
    AgentModel& m = models[a];
    AgentOptimizers& opt = optimizers[a];
    std::vector<int> order(ts.size());
    std::iota(order.begin(), order.end(), 0);
    RngStream agent_rng = rng.split(static_cast<std::uint64_t>(a));
    int steps = 0;
    int policy_samples = 0;
    int clipped = 0;
    bool first = true;

    for (int pass = 0; pass < config.ppo_passes; ++pass) {
      if (config.minibatches > 1) shuffle_indices(order, agent_rng);
      const int n = static_cast<int>(order.size());
      for (int mb = 0; mb < config.minibatches; ++mb) {
        const int lo = n * mb / config.minibatches;
        const int hi = n * (mb + 1) / config.minibatches;
        std::vector<int> act, vals, resp;
        std::vector<bool> accepts;
        for (int k = lo; k < hi; ++k) {
          const Transition& t = ts[order[k]];
          if (t.is_action()) act.push_back(order[k]);
          if (t.kind == SampleKind::Response) {
            resp.push_back(order[k]);
            accepts.push_back(t.accept);
          } else {
            vals.push_back(order[k]);
          }
        }

        if (!act.empty()) {
          const ActorBatch b = make_actor_batch(ts, act, m.normalizer, a);
          Actor::Cache cache;
          VectorXd logp, ent;
          m.actor.evaluate(b, logp, ent, &cache);
          const int B = b.size();
          VectorXd w_logp(B), w_ent = VectorXd::Constant(B, -config.entropy_coef / B);
          double surrogate = 0.0;
          for (int k = 0; k < B; ++k) {
            const Transition& t = ts[act[k]];
            const double ratio = std::exp(logp[k] - t.log_prob);
            if (first) stats.first_ratio_deviation = std::max(stats.first_ratio_deviation, std::abs(ratio - 1.0));
            const double clipped_ratio = std::clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
            surrogate += config.reinforce ? logp[k] * t.advantage
                                          : std::min(ratio * t.advantage, clipped_ratio * t.advantage);
            const double w = surrogate_logp_weight(ratio, t.advantage, config.clip_epsilon, config.reinforce);
            if (!config.reinforce && w == 0.0 && t.advantage != 0.0) ++clipped;
            w_logp[k] = -w / B;
          }
          const double loss = -surrogate / B - config.entropy_coef * ent.mean();
          if (!std::isfinite(loss)) {
            throw NumericalFault("policy loss of agent " + std::to_string(a + 1) + " is not finite");
          }
          VectorXd grad = VectorXd::Zero(m.actor.params().size());
          m.actor.backward(b, cache, w_logp, w_ent, grad);
          clip_global_norm(grad, config.max_grad_norm);
          opt.actor.step(m.actor.params(), grad);
          stats.actor_loss[a] += loss;
          stats.entropy[a] += ent.mean();
          policy_samples += B;
        }
        first = false;

        if (!vals.empty() || !resp.empty()) {
          VectorXd v_targets(static_cast<Eigen::Index>(vals.size()));
          for (std::size_t k = 0; k < vals.size(); ++k) v_targets[static_cast<Eigen::Index>(k)] = ts[vals[k]].ret;
          VectorXd q_targets(static_cast<Eigen::Index>(resp.size()));
          for (std::size_t k = 0; k < resp.size(); ++k) q_targets[static_cast<Eigen::Index>(k)] = ts[resp[k]].ret;
          VectorXd grad = VectorXd::Zero(m.critic.params().size());
          const auto loss = m.critic.loss_and_gradient(normalized_obs(ts, vals, m.normalizer), v_targets,
                                                       normalized_obs(ts, resp, m.normalizer), accepts,
                                                       q_targets, grad);
          if (!std::isfinite(loss[0]) || !std::isfinite(loss[1])) {
            throw NumericalFault("critic loss of agent " + std::to_string(a + 1) + " is not finite");
          }
          clip_global_norm(grad, config.max_grad_norm);
          opt.critic.step(m.critic.params(), grad);
          stats.value_loss[a] += loss[0];
          stats.q_loss[a] += loss[1];
        }
        ++steps;
      }
    }
    if (steps > 0) {
      stats.actor_loss[a] /= steps;
      stats.entropy[a] /= steps;
      stats.value_loss[a] /= steps;
      stats.q_loss[a] /= steps;
    }
    stats.clip_fraction[a] = policy_samples ? static_cast<double>(clipped) / policy_samples : 0.0;
  }
  return stats;
}

// ----------------------------------------------------------------- trainer

Trainer::Trainer(TrainConfig config, const PretrainedModel* pretrained)
    : config_(std::move(config)), rng_(config_.seed, 0) {
  config_.validate();
  const RngStream init = rng_.split("init");
  for (int a = 0; a < kNumAgents; ++a) {
    RngStream r = init.split(static_cast<std::uint64_t>(a));
    AgentModel m{Actor(config_.network, r), Critic(config_.network, r)};
    if (pretrained) {
      if (!(pretrained->regressor.shape().hidden == config_.network.hidden)) {
        throw ValidationError("pre-trained extractor width " + std::to_string(pretrained->regressor.shape().hidden) +
                              " does not match network.hidden " + std::to_string(config_.network.hidden));
      }
      m.actor.load_extractor(pretrained->regressor.extractor_params());
      m.critic.load_extractor(pretrained->regressor.extractor_params());
      m.normalizer.assign_slice(0, pretrained->normalizer);
    }
    optimizers_.push_back({Adam(m.actor.parameter_count(), config_.adam()),
                           Adam(m.critic.parameter_count(), config_.adam())});
    models_.push_back(std::move(m));
  }
  eval_set_ = make_eval_set(generate_instances(static_cast<std::size_t>(config_.eval_episodes),
                                               rng_.split("eval-instances")),
                            true, config_.threads);
}

EpochRecord Trainer::train_epoch() {
  const RngStream epoch_rng = rng_.split("epoch").split(static_cast<std::uint64_t>(epoch_));
  std::vector<ActorPolicy> actors;
  for (const AgentModel& m : models_) actors.emplace_back(m.actor, m.normalizer, config_.max_rounds, false);
  const PolicySet policies{&actors[0], &actors[1], &actors[2]};

  RolloutBuffer buffer = collect_rollouts(policies, config_, config_.batch_episodes, epoch_rng.split("rollouts"));
  compute_returns(buffer, config_, &models_);
  EpochRecord rec;
  rec.advantages = compute_advantages(buffer, models_);
  RngStream update_rng = epoch_rng.split("update");
  rec.update = policy_update(buffer, models_, optimizers_, config_, update_rng);
  for (int a = 0; a < kNumAgents; ++a) {
    for (const Transition& t : buffer.agent[a]) models_[a].normalizer.update(t.obs);
  }
  for (const RolloutEpisode& e : buffer.episodes) {
    for (int a = 0; a < kNumAgents; ++a) rec.mean_return[a] += e.result.rewards[a];
  }
  for (double& r : rec.mean_return) r /= static_cast<double>(buffer.episodes.size());
  ++epoch_;
  rec.epoch = epoch_;
  return rec;
}

EvalReport Trainer::evaluate() const {
  const auto start = std::chrono::steady_clock::now();
  std::vector<ActorPolicy> actors;
  for (const AgentModel& m : models_) actors.emplace_back(m.actor, m.normalizer, config_.max_rounds, true);
  const PolicySet policies{&actors[0], &actors[1], &actors[2]};
  const BargainingEnv env(config_.max_rounds, SingletonRule::AutoReject);
  const auto outcomes = run_episodes(env, policies, eval_set_, rng_.split("eval-episodes"), config_.threads);
  EvalReport r = summarize(outcomes, eval_set_);
  r.seconds_per_instance = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() /
                           std::max<std::size_t>(1, eval_set_.size());
  return r;
}

std::string metrics_csv_header() {
  return "epoch,mean_return_1,mean_return_2,mean_return_3,accuracy,abs_gap,rel_gap,rounds_mean,"
         "payoff_share_1,payoff_share_2,payoff_share_3,proposer_self_share,equal_share_deviation,"
         "shapley_r2,entropy,actor_loss,value_loss,q_loss";
}

std::string metrics_csv_row(const EpochRecord& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  auto mean3 = [](const std::array<double, kNumAgents>& v) { return (v[0] + v[1] + v[2]) / kNumAgents; };
  os << r.epoch;
  for (double x : r.mean_return) os << ',' << x;
  os << ',' << r.eval.accuracy.mean << ',' << r.eval.gaps.abs_gap << ',' << r.eval.gaps.rel_gap << ','
     << r.eval.rounds_mean;
  for (double x : r.eval.payoff_share_mean) os << ',' << x;
  os << ',' << r.eval.proposer_self_share << ',' << r.eval.equal_share_deviation << ','
     << r.eval.shapley.mean.r2 << ',' << mean3(r.update.entropy) << ',' << mean3(r.update.actor_loss) << ','
     << mean3(r.update.value_loss) << ',' << mean3(r.update.q_loss);
  return os.str();
}

std::vector<EpochRecord> Trainer::run(const std::filesystem::path& out_dir, std::ostream* progress) {
  std::filesystem::create_directories(out_dir);
  {
    nlohmann::json snapshot = to_json(config_);
    snapshot["version"] = version_string();
    std::ofstream(out_dir / "config.json") << snapshot.dump(2) << '\n';
  }
  std::ofstream csv(out_dir / "metrics.csv");
  if (!csv) throw InputError("cannot write " + (out_dir / "metrics.csv").string());
  csv << metrics_csv_header() << '\n';

  std::vector<EpochRecord> rows;
  auto report = [&](EpochRecord rec) {
    rec.eval = evaluate();
    csv << metrics_csv_row(rec) << '\n';
    csv.flush();
    if (progress) {
      *progress << "epoch " << rec.epoch << " accuracy " << rec.eval.accuracy.mean << " rel_gap "
                << rec.eval.gaps.rel_gap << " rounds " << rec.eval.rounds_mean << " self_share "
                << rec.eval.proposer_self_share << '\n';
    }
    if (config_.save_checkpoints) {
      std::ostringstream name;
      name << "checkpoint_" << std::setw(6) << std::setfill('0') << rec.epoch << ".bin";
      save_checkpoint(out_dir / name.str(), models_, static_cast<std::uint64_t>(rec.epoch));
    }
    rows.push_back(std::move(rec));
  };

  EpochRecord initial;
  initial.epoch = epoch_;
  report(initial);
  while (epoch_ < config_.epochs) {
    EpochRecord rec = train_epoch();
    for (int a = 0; a < kNumAgents; ++a) {
      if (progress && !rec.advantages.normalized[a]) {
        *progress << "warning: epoch " << rec.epoch << " agent " << a + 1
                  << " advantages have zero spread; left unnormalized\n";
      }
    }
    if (epoch_ % config_.eval_interval == 0 || epoch_ == config_.epochs) {
      report(std::move(rec));
    } else if (progress) {
      *progress << "epoch " << rec.epoch << " mean_return " << rec.mean_return[0] << ' ' << rec.mean_return[1]
                << ' ' << rec.mean_return[2] << '\n';
    }
  }
  save_checkpoint(out_dir / "final.bin", models_, static_cast<std::uint64_t>(epoch_));
  return rows;
}

}  // namespace collab
