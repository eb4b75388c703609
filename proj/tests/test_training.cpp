#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "collab/errors.hpp"
#include "collab/training.hpp"

using namespace collab;
using Eigen::VectorXd;

namespace {

class AlwaysReject final : public BargainingPolicy {
 public:
  ProposalDecision propose(const BargainState& s, RngStream&) const override {
    ProposalDecision d;
    d.action.members = {true, true, true};
    d.action.payoff = {1, 1, 1};
    d.coalition = Coalition::grand();
    (void)s;
    return d;
  }
  ResponseDecision respond(const BargainState&, RngStream&) const override { return {false, 0.0}; }
};

TrainConfig tiny_config() {
  TrainConfig c;
  c.network = {8, 6};
  c.batch_episodes = 32;
  c.epochs = 2;
  c.eval_interval = 1;
  c.eval_episodes = 16;
  c.pretrain = false;
  c.threads = 1;
  c.save_checkpoints = false;
  return c;
}

std::vector<AgentModel> make_models(NetworkShape shape, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<AgentModel> models;
  for (int a = 0; a < kNumAgents; ++a) models.push_back({Actor(shape, rng), Critic(shape, rng)});
  return models;
}

struct StochasticActors {
  std::vector<ActorPolicy> policies;
  PolicySet set() const { return {&policies[0], &policies[1], &policies[2]}; }
};

StochasticActors stochastic(const std::vector<AgentModel>& models, int max_rounds) {
  StochasticActors s;
  for (const AgentModel& m : models) s.policies.emplace_back(m.actor, m.normalizer, max_rounds, false);
  return s;
}

RolloutBuffer one_episode_buffer(int start, int end, bool truncated, std::array<double, 3> rewards,
                                 std::vector<int> transition_rounds) {
  RolloutBuffer b;
  RolloutEpisode ep;
  ep.result.start_round = start;
  ep.result.end_round = end;
  ep.result.truncated = truncated;
  ep.result.agreed = !truncated;
  ep.result.rewards = rewards;
  if (truncated) {
    ep.result.final_state.round = end;
    ep.bootstrap = BargainState{};
    ep.bootstrap->round = end + 1;
  }
  b.episodes.push_back(ep);
  for (int a = 0; a < kNumAgents; ++a) {
    for (int t : transition_rounds) {
      Transition tr;
      tr.kind = SampleKind::Response;
      tr.round = t;
      tr.obs = VectorXd::Zero(kObsDim);
      b.agent[a].push_back(tr);
    }
  }
  return b;
}

}  // namespace

TEST_CASE("discounted returns of an agreement") {
  TrainConfig c;
  const double share = 0.88 / 3;
  RolloutBuffer b = one_episode_buffer(1, 2, false, {share, share, share}, {1, 2});
  compute_returns(b, c, nullptr);
  CHECK(b.agent[0][1].ret == doctest::Approx(0.2933).epsilon(1e-3));
  CHECK(b.agent[0][0].ret == doctest::Approx(0.2786).epsilon(1e-3));
  CHECK(b.agent[0][0].ret == doctest::Approx(0.95 * share).epsilon(1e-12));

  c.gamma = 1.0;
  compute_returns(b, c, nullptr);
  CHECK(b.agent[2][0].ret == b.agent[2][1].ret);
}

TEST_CASE("cut episodes return the discounted bootstrap value") {
  TrainConfig c;
  RolloutBuffer b = one_episode_buffer(8, 10, true, {0, 0, 0}, {8, 9, 10});
  compute_returns(b, c, nullptr);
  for (const Transition& t : b.agent[1]) CHECK(t.ret == 0.0);

  std::vector<AgentModel> models = make_models({6, 5}, 1);
  for (AgentModel& m : models) m.critic.params().setZero();
  // a critic whose value head bias is its only nonzero weight outputs that bias everywhere
  for (int a = 0; a < kNumAgents; ++a) {
    const auto shapes = models[a].critic.tensor_shapes();
    std::size_t off = 0;
    for (const auto& [name, shape] : shapes) {
      const std::size_t size = static_cast<std::size_t>(shape[0]) * shape[1];
      if (name == "critic.v_trunk.1.bias") models[a].critic.params()[static_cast<Eigen::Index>(off)] = 0.5 + a;
      off += size;
    }
  }
  REQUIRE(models[0].critic.value(VectorXd::Zero(kObsDim)) == doctest::Approx(0.5));
  compute_returns(b, c, &models);
  for (int a = 0; a < kNumAgents; ++a) {
    CHECK(b.agent[a][0].ret == doctest::Approx(std::pow(0.95, 3) * (0.5 + a)));
    CHECK(b.agent[a][2].ret == doctest::Approx(0.95 * (0.5 + a)));
  }
}

TEST_CASE("scripted rollouts: everyone accepts") {
  TrainConfig c;
  c.threads = 1;
  const HeuristicBot bot;
  RolloutBuffer b = collect_rollouts({&bot, &bot, &bot}, c, 64, RngStream(3));
  REQUIRE(b.episodes.size() == 64);
  int proposals = 0;
  for (const RolloutEpisode& ep : b.episodes) {
    CHECK(ep.result.agreed);
    CHECK(ep.result.rounds == 1);
    CHECK_FALSE(ep.bootstrap.has_value());
  }
  for (int a = 0; a < kNumAgents; ++a) {
    for (const Transition& t : b.agent[a]) proposals += t.kind == SampleKind::Proposal;
  }
  CHECK(proposals == 64);
  compute_returns(b, c, nullptr);
  for (int a = 0; a < kNumAgents; ++a) {
    for (const Transition& t : b.agent[a]) {
      const RolloutEpisode& ep = b.episodes[t.episode];
      CHECK(t.ret == doctest::Approx(ep.result.rewards[a]));
    }
  }
}

TEST_CASE("scripted rollouts: everyone rejects") {
  TrainConfig c;
  c.threads = 1;
  const AlwaysReject bot;
  RolloutBuffer b = collect_rollouts({&bot, &bot, &bot}, c, 64, RngStream(4));
  for (const RolloutEpisode& ep : b.episodes) {
    CHECK(ep.result.truncated);
    CHECK(ep.result.end_round == c.max_rounds);
    CHECK(ep.result.rounds == c.max_rounds - ep.result.start_round + 1);
    REQUIRE(ep.bootstrap.has_value());
    CHECK(ep.bootstrap->round == c.max_rounds + 1);
  }
  // every agent sees every round: one proposal or one round-start sample, plus its responses
  for (int a = 0; a < kNumAgents; ++a) {
    int per_round = 0;
    for (const Transition& t : b.agent[a]) per_round += t.kind != SampleKind::Response;
    int rounds = 0;
    for (const RolloutEpisode& ep : b.episodes) rounds += ep.result.rounds;
    CHECK(per_round == rounds);
  }
  compute_returns(b, c, nullptr);
  for (const Transition& t : b.agent[0]) CHECK(t.ret == 0.0);
}

TEST_CASE("rollouts do not depend on the thread count") {
  const std::vector<AgentModel> models = make_models({8, 6}, 5);
  const StochasticActors actors = stochastic(models, 10);
  TrainConfig c;
  c.threads = 1;
  const RolloutBuffer one = collect_rollouts(actors.set(), c, 40, RngStream(6));
  c.threads = 4;
  const RolloutBuffer four = collect_rollouts(actors.set(), c, 40, RngStream(6));
  for (int a = 0; a < kNumAgents; ++a) {
    REQUIRE(one.agent[a].size() == four.agent[a].size());
    for (std::size_t k = 0; k < one.agent[a].size(); ++k) {
      CHECK(one.agent[a][k].obs == four.agent[a][k].obs);
      CHECK(one.agent[a][k].log_prob == four.agent[a][k].log_prob);
      CHECK(one.agent[a][k].payoff == four.agent[a][k].payoff);
    }
  }
}

TEST_CASE("advantages are normalized exactly per agent") {
  std::vector<AgentModel> models = make_models({8, 6}, 7);
  const StochasticActors actors = stochastic(models, 10);
  TrainConfig c;
  c.threads = 1;
  RolloutBuffer b = collect_rollouts(actors.set(), c, 128, RngStream(8));
  compute_returns(b, c, &models);
  const AdvantageStats stats = compute_advantages(b, models);
  for (int a = 0; a < kNumAgents; ++a) {
    CHECK(stats.normalized[a]);
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (const Transition& t : b.agent[a]) {
      if (!t.is_action()) continue;
      sum += t.advantage;
      sq += t.advantage * t.advantage;
      ++n;
    }
    CHECK(std::abs(sum / n) < 1e-12);
    CHECK(std::abs(sq / n - 1.0) < 1e-12);
  }
}

TEST_CASE("zero-spread advantages are left as they are") {
  std::vector<AgentModel> models = make_models({6, 5}, 9);
  for (AgentModel& m : models) m.critic.params().setZero();
  TrainConfig c;
  c.threads = 1;
  const AlwaysReject bot;
  RolloutBuffer b = collect_rollouts({&bot, &bot, &bot}, c, 8, RngStream(10));
  compute_returns(b, c, &models);
  const AdvantageStats stats = compute_advantages(b, models);
  for (int a = 0; a < kNumAgents; ++a) {
    CHECK_FALSE(stats.normalized[a]);
    for (const Transition& t : b.agent[a]) CHECK(t.advantage == 0.0);
  }
}

TEST_CASE("response advantage subtracts the policy-weighted action value") {
  std::vector<AgentModel> models = make_models({6, 5}, 11);
  TrainConfig c;
  c.threads = 1;
  const StochasticActors actors = stochastic(models, 10);
  RolloutBuffer b = collect_rollouts(actors.set(), c, 64, RngStream(12));
  compute_returns(b, c, &models);
  const RolloutBuffer before = b;
  const AdvantageStats stats = compute_advantages(b, models);
  for (int a = 0; a < kNumAgents; ++a) {
    const AgentModel& m = models[a];
    for (std::size_t k = 0; k < b.agent[a].size(); ++k) {
      const Transition& t = before.agent[a][k];
      if (t.kind != SampleKind::Response) continue;
      const VectorXd obs = m.normalizer.apply(t.obs);
      const ActorHeads h = m.actor.forward(obs, t.coalition);
      const double raw = t.ret - counterfactual_baseline(h.accept_prob, m.critic.action_values(obs));
      const double expected = stats.normalized[a] ? (raw - stats.raw_mean[a]) / stats.raw_std[a] : raw;
      CHECK(b.agent[a][k].advantage == doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("clipping rule of the surrogate") {
  const double eps = 0.05;
  CHECK(surrogate_logp_weight(1.02, 2.0, eps, false) == doctest::Approx(2.04));
  CHECK(surrogate_logp_weight(0.97, -1.0, eps, false) == doctest::Approx(-0.97));
  CHECK(surrogate_logp_weight(1.06, 2.0, eps, false) == 0.0);
  CHECK(surrogate_logp_weight(0.94, -1.0, eps, false) == 0.0);
  CHECK(surrogate_logp_weight(1.06, -1.0, eps, false) == doctest::Approx(-1.06));
  CHECK(surrogate_logp_weight(0.94, 2.0, eps, false) == doctest::Approx(1.88));
  CHECK(surrogate_logp_weight(3.0, 0.7, eps, true) == 0.7);
}

TEST_CASE("first pass on fresh data has unit ratios") {
  std::vector<AgentModel> models = make_models({8, 6}, 13);
  TrainConfig c = tiny_config();
  c.ppo_passes = 3;
  c.minibatches = 2;
  const StochasticActors actors = stochastic(models, c.max_rounds);
  RolloutBuffer b = collect_rollouts(actors.set(), c, 64, RngStream(14));
  compute_returns(b, c, &models);
  compute_advantages(b, models);
  std::vector<AgentOptimizers> opt;
  for (const AgentModel& m : models) {
    opt.push_back({Adam(m.actor.parameter_count(), c.adam()), Adam(m.critic.parameter_count(), c.adam())});
  }
  RngStream rng(15);
  const UpdateStats s = policy_update(b, models, opt, c, rng);
  CHECK(s.first_ratio_deviation < 1e-9);
}

TEST_CASE("a positive advantage raises the action's log-probability") {
  for (bool reinforce : {false, true}) {
    std::vector<AgentModel> models = make_models({8, 6}, 16);
    TrainConfig c = tiny_config();
    c.reinforce = reinforce;
    c.entropy_coef = 0.0;
    const StochasticActors actors = stochastic(models, c.max_rounds);
    RolloutBuffer b = collect_rollouts(actors.set(), c, 4, RngStream(17));
    RolloutBuffer single;
    single.episodes = b.episodes;
    for (const Transition& t : b.agent[0]) {
      if (t.kind == SampleKind::Proposal) {
        single.agent[0].push_back(t);
        single.agent[0].back().advantage = 1.0;
        break;
      }
    }
    REQUIRE(single.agent[0].size() == 1);
    std::vector<AgentOptimizers> opt;
    for (const AgentModel& m : models) {
      opt.push_back({Adam(m.actor.parameter_count(), c.adam()), Adam(m.critic.parameter_count(), c.adam())});
    }
    const Transition& t = single.agent[0][0];
    auto logp = [&] {
      ActorBatch batch;
      batch.self = 0;
      batch.obs = models[0].normalizer.apply(Eigen::MatrixXd(t.obs));
      batch.kind = {ActionKind::Proposal};
      batch.coalition = {t.coalition};
      batch.payoff = {t.payoff};
      batch.accept = {false};
      VectorXd lp, en;
      models[0].actor.evaluate(batch, lp, en);
      return lp[0];
    };
    const double before = logp();
    CHECK(before == doctest::Approx(t.log_prob).epsilon(1e-12));
    RngStream rng(18);
    policy_update(single, models, opt, c, rng);
    CHECK(logp() > before);
  }
}

TEST_CASE("critic regression loss falls over repeated steps") {
  std::vector<AgentModel> models = make_models({8, 6}, 19);
  TrainConfig c = tiny_config();
  const StochasticActors actors = stochastic(models, c.max_rounds);
  RolloutBuffer b = collect_rollouts(actors.set(), c, 64, RngStream(20));
  compute_returns(b, c, &models);
  compute_advantages(b, models);
  std::vector<AgentOptimizers> opt;
  for (const AgentModel& m : models) {
    opt.push_back({Adam(m.actor.parameter_count(), {1e-2, 0.9, 0.999, 1e-8}),
                   Adam(m.critic.parameter_count(), {1e-2, 0.9, 0.999, 1e-8})});
  }
  RngStream rng(21);
  std::vector<double> losses;
  for (int step = 0; step < 10; ++step) {
    const UpdateStats s = policy_update(b, models, opt, c, rng);
    losses.push_back(s.value_loss[0] + s.q_loss[0]);
  }
  CHECK(losses.back() < losses.front());
}

TEST_CASE("config JSON round trip and validation") {
  TrainConfig c;
  c.learning_rate = 1e-4;
  c.network = {64, 32};
  c.pretrained_path = "x.bin";
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(back.learning_rate == 1e-4);
  CHECK(back.network == NetworkShape{64, 32});
  CHECK(back.pretrained_path == "x.bin");
  CHECK(to_json(back) == to_json(c));

  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"learning_rat", 0.1}}), ValidationError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"gamma", 1.5}}), ValidationError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"batch_episodes", 0}}), ValidationError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"epochs", "many"}}), ValidationError);
  CHECK(train_config_from_json(nlohmann::json::object()).batch_episodes == 2048);
  CHECK_THROWS_AS(read_train_config("/nonexistent/config.json"), InputError);
}

TEST_CASE("pre-training beats the constant predictor") {
  TrainConfig c = tiny_config();
  c.network = {32, 16};
  c.pretrain_epochs = 15;
  c.pretrain_batch = 64;
  const PretrainDataset data = make_pretrain_dataset(3000, RngStream(22), 1);
  REQUIRE(data.size() == 3000);
  std::array<int, kNumCoalitions> seen{};
  for (int k = 0; k < data.size(); ++k) {
    const Coalition co = data.coalitions[static_cast<std::size_t>(k)];
    ++seen[co.mask()];
    if (co.size() == 1) CHECK(data.targets[k] == 0.0);
    CHECK(data.inputs(kDeliveriesDim + 0, k) == (co.contains(0) ? 1.0 : 0.0));
  }
  CHECK(seen[0] == 0);
  for (int m = 1; m < kNumCoalitions; ++m) CHECK(seen[m] > 300);
  const PretrainedModel model = pretrain(data, c, RngStream(23));
  CHECK(model.test_mse < 0.6 * model.baseline_mse);
  CHECK(make_pretrain_dataset(50, RngStream(22), 3).inputs == make_pretrain_dataset(50, RngStream(22), 1).inputs);
}

TEST_CASE("training is reproducible and independent of the thread count") {
  TrainConfig c = tiny_config();
  c.seed = 3;
  Trainer a(c);
  c.threads = 3;
  Trainer b(c);
  for (int e = 0; e < 2; ++e) {
    const EpochRecord ra = a.train_epoch();
    const EpochRecord rb = b.train_epoch();
    CHECK(ra.mean_return == rb.mean_return);
  }
  for (int k = 0; k < kNumAgents; ++k) {
    CHECK(a.models()[k].actor.params() == b.models()[k].actor.params());
    CHECK(a.models()[k].critic.params() == b.models()[k].critic.params());
    CHECK(a.models()[k].normalizer.mean() == b.models()[k].normalizer.mean());
  }
}

TEST_CASE("full run writes metrics and checkpoints") {
  const auto dir = std::filesystem::temp_directory_path() / "collab_training_run";
  std::filesystem::remove_all(dir);
  TrainConfig c = tiny_config();
  c.save_checkpoints = true;
  Trainer t(c);
  const std::vector<EpochRecord> records = t.run(dir);
  CHECK(records.size() == 3);
  CHECK(std::filesystem::exists(dir / "metrics.csv"));
  CHECK(std::filesystem::exists(dir / "config.json"));
  CHECK(std::filesystem::exists(dir / "final.bin"));
  std::ifstream in(dir / "metrics.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == metrics_csv_header());
  CHECK(header.rfind("epoch,mean_return_1", 0) == 0);
  std::vector<AgentModel> loaded = make_models(c.network, 99);
  CHECK(load_checkpoint(dir / "final.bin", loaded) == 2);
  CHECK(loaded[1].actor.params() == t.models()[1].actor.params());
}
