#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "collab/distributions.hpp"
#include "collab/parallel.hpp"
#include "collab/routing.hpp"
#include "collab/training.hpp"
#include "collab/values.hpp"

using namespace collab;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path workdir;
  int threads = 0;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << x;
  return os.str();
}

// First visiting order, in lexicographic order, whose cost is within 1e-12 of
// the cheapest permutation.
double brute_force_tsp(const Location& depot, std::span<const Location> customers) {
  std::vector<int> order(customers.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::pair<std::vector<int>, double>> all;
  double best = std::numeric_limits<double>::infinity();
  do {
    const double c = tour_cost(depot, customers, order);
    all.emplace_back(order, c);
    best = std::min(best, c);
  } while (std::next_permutation(order.begin(), order.end()));
  for (const auto& [o, c] : all) {
    if (c <= best + 1e-12) return c;
  }
  return best;
}

// Cheapest assignment of the pair's six customers to its two vehicles, each
// serving at least one, with every part routed by brute force.
double brute_force_pair(const Instance& inst, int a, int b) {
  std::vector<Location> pool;
  for (const Location& l : inst.customers(a)) pool.push_back(l);
  for (const Location& l : inst.customers(b)) pool.push_back(l);
  double best = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(pool.size());
  for (int mask = 1; mask + 1 < (1 << n); ++mask) {
    std::vector<Location> first, second;
    for (int k = 0; k < n; ++k) ((mask >> k) & 1 ? first : second).push_back(pool[k]);
    const double cost = brute_force_tsp(inst.depot(a), first) + brute_force_tsp(inst.depot(b), second);
    best = std::min(best, cost);
  }
  return best;
}

Outcome routing_equivalence(const Context&) {
  RngStream rng(1001);
  double worst_tsp = 0.0, worst_pair = 0.0;
  int tsp_cases = 0, pair_cases = 0;
  for (int i = 0; i < 1000; ++i) {
    const Instance inst = generate_instance(rng);
    std::vector<Location> all;
    for (int a = 0; a < kNumAgents; ++a) {
      for (const Location& l : inst.customers(a)) all.push_back(l);
    }
    for (int size = 1; size <= 8; ++size) {
      std::vector<Location> pool = all;
      std::shuffle(pool.begin(), pool.end(), rng.engine());
      pool.resize(size);
      const Location& depot = inst.depot(rng.uniform_int(0, kNumAgents - 1));
      const double dp = tsp_exact(depot, pool).cost;
      worst_tsp = std::max(worst_tsp, std::abs(dp - brute_force_tsp(depot, pool)));
      ++tsp_cases;
    }
    for (int a = 0; a < kNumAgents; ++a) {
      for (int b = a + 1; b < kNumAgents; ++b) {
        const double dp = mdvrp_exact(inst, Coalition::singleton(a).with(b)).total_cost;
        worst_pair = std::max(worst_pair, std::abs(dp - brute_force_pair(inst, a, b)));
        ++pair_cases;
      }
    }
  }
  const bool pass = worst_tsp == 0.0 && worst_pair <= 1e-12;
  return {pass, std::to_string(tsp_cases) + " tours, max diff " + fmt(worst_tsp, 17) + "; " +
                    std::to_string(pair_cases) + " pair routings, max diff " + fmt(worst_pair, 17)};
}

// Instance symmetric under x -> -x: agents 1 and 2 mirror each other, agent
// 3 sits on the axis with one customer on it and a mirrored pair.
Instance mirrored_instance(RngStream& rng) {
  Instance inst = generate_instance(rng);
  inst.radii[1] = inst.radii[0];
  for (int k = 0; k < kCustomersPerAgent; ++k) {
    Location m = inst.deliveries[Instance::customer_row(0, k)];
    m.x = -m.x;
    m.owner = 2;
    inst.deliveries[Instance::customer_row(1, k)] = m;
  }
  Location& on_axis = inst.deliveries[Instance::customer_row(2, 0)];
  on_axis.x = 0.0;
  Location& left = inst.deliveries[Instance::customer_row(2, 1)];
  Location& right = inst.deliveries[Instance::customer_row(2, 2)];
  right.x = -left.x;
  right.y = left.y;
  validate_instance(inst);
  return inst;
}

Outcome game_axioms(const Context&) {
  RngStream rng(2002);
  int failures = 0;
  double worst_efficiency = 0.0, worst_superadditivity = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const CharacteristicTable t = characteristic_table(generate_instance(rng));
    for (int a = 0; a < kNumAgents; ++a) failures += t.v(Coalition::singleton(a)) != 0.0;
    for (int m = 1; m < kNumCoalitions; ++m) failures += t.v(Coalition(std::uint8_t(m))) < 0.0;
    for (int m1 = 1; m1 < kNumCoalitions; ++m1) {
      for (int m2 = 1; m2 < kNumCoalitions; ++m2) {
        const Coalition c1(static_cast<std::uint8_t>(m1)), c2(static_cast<std::uint8_t>(m2));
        if (!c1.disjoint(c2)) continue;
        const double slack = t.v(c1 | c2) - t.v(c1) - t.v(c2);
        worst_superadditivity = std::min(worst_superadditivity, slack);
        failures += slack < -1e-12;
      }
    }
    const ShapleyVector s = shapley(t);
    const double err = std::abs(s.phi[0] + s.phi[1] + s.phi[2] - t.v(Coalition::grand()));
    worst_efficiency = std::max(worst_efficiency, err);
    failures += err >= 1e-9;
  }
  double worst_symmetry = 0.0;
  RngStream mrng(2003);
  for (int i = 0; i < 200; ++i) {
    const CharacteristicTable t = characteristic_table(mirrored_instance(mrng));
    const ShapleyVector s = shapley(t);
    worst_symmetry = std::max(worst_symmetry, std::abs(s.phi[0] - s.phi[1]));
    worst_symmetry = std::max(worst_symmetry,
                              std::abs(t.v(Coalition::from_members({0, 2})) - t.v(Coalition::from_members({1, 2}))));
  }
  failures += worst_symmetry >= 1e-9;
  return {failures == 0, "1000 tables, efficiency error " + fmt(worst_efficiency, 15) + ", super-additivity slack " +
                             fmt(worst_superadditivity, 15) + ", mirrored asymmetry " + fmt(worst_symmetry, 15) +
                             ", violations " + std::to_string(failures)};
}

Outcome worked_example(const Context&) {
  const CharacteristicTable t = CharacteristicTable::from_values(0.76, 0.24, 0.01, 0.88);
  const ShapleyVector s = shapley(t);
  const std::array<double, 3> expected{0.4567, 0.3417, 0.0817};
  bool pass = true;
  for (int a = 0; a < kNumAgents; ++a) pass = pass && std::abs(s.phi[a] - expected[a]) <= 1e-4;
  const BestCoalition best = best_coalition_for(t, 0);
  pass = pass && best.coalition == Coalition::from_members({0, 1});
  return {pass, "shapley (" + fmt(s.phi[0]) + ", " + fmt(s.phi[1]) + ", " + fmt(s.phi[2]) +
                    "), best for agent 1 " + best.coalition.to_string()};
}

Outcome random_bot_protocol(const Context& ctx) {
  const RngStream root(4004);
  const EvalSet set = make_eval_set(generate_instances(100000, root.split("instances")), false, ctx.threads);
  const RandomBot bot;
  const PolicySet policies{&bot, &bot, &bot};
  const BargainingEnv env(10, SingletonRule::TerminateEmpty);
  const EvalReport r = summarize(run_episodes(env, policies, set, root.split("episodes"), ctx.threads), set);
  const bool pass = std::abs(r.rounds_mean - 1.775) <= 0.05 && std::abs(r.round1_termination_rate - 0.5625) <= 0.01;
  return {pass, "mean rounds " + fmt(r.rounds_mean) + ", round-1 termination " + fmt(r.round1_termination_rate) +
                    " over " + std::to_string(r.episodes) + " games"};
}

EvalReport bot_report(const BargainingPolicy& bot, SingletonRule rule, const EvalSet& set, const RngStream& rng,
                      int threads) {
  const PolicySet policies{&bot, &bot, &bot};
  const BargainingEnv env(10, rule);
  return summarize(run_episodes(env, policies, set, rng, threads), set);
}

Outcome baseline_bots(const Context& ctx) {
  const RngStream root(5005);
  const EvalSet set = make_eval_set(generate_instances(10000, root.split("instances")), true, ctx.threads);
  const EvalReport h = bot_report(HeuristicBot{}, SingletonRule::AutoReject, set, root.split("heuristic"), ctx.threads);
  const EvalReport r = bot_report(RandomBot{}, SingletonRule::TerminateEmpty, set, root.split("random"), ctx.threads);
  const bool pass = std::abs(h.accuracy.mean - 0.62) <= 0.03 && std::abs(h.gaps.rel_gap - 0.08) <= 0.03 &&
                    std::abs(r.accuracy.mean - 0.25) <= 0.03 && std::abs(r.gaps.rel_gap - 0.32) <= 0.04;
  return {pass, "heuristic accuracy " + fmt(h.accuracy.mean) + " gap " + fmt(h.gaps.rel_gap) + "; random accuracy " +
                    fmt(r.accuracy.mean) + " gap " + fmt(r.gaps.rel_gap)};
}

Outcome degenerate_rate(const Context& ctx) {
  const std::size_t n = 50000;
  const std::vector<Instance> instances = generate_instances(n, RngStream(6006));
  std::vector<char> zero(n, 0);
  parallel_for(n, ctx.threads, [&](std::size_t k) {
    zero[k] = collaboration_gain(instances[k], Coalition::grand()) == 0.0;
  });
  const double rate = static_cast<double>(std::count(zero.begin(), zero.end(), 1)) / static_cast<double>(n);
  return {std::abs(rate - 0.019) <= 0.005, "v(N) = 0 on " + fmt(100.0 * rate, 2) + "% of " + std::to_string(n)};
}

TrainConfig desk_config() { return read_train_config(fs::path(COLLAB_SOURCE_DIR) / "configs" / "desk.json"); }

std::optional<PretrainedModel> pretrain_for(const TrainConfig& cfg) {
  if (!cfg.pretrain) return std::nullopt;
  const RngStream root(cfg.seed);
  const PretrainDataset data = make_pretrain_dataset(cfg.pretrain_records, root.split("pretrain-data"), cfg.threads);
  return pretrain(data, cfg, root.split("pretrain"));
}

Outcome learning_smoke(const Context& ctx) {
  TrainConfig cfg = desk_config();
  if (ctx.threads) cfg.threads = ctx.threads;
  const auto pretrained = pretrain_for(cfg);
  Trainer trainer(cfg, pretrained ? &*pretrained : nullptr);
  const auto rows = trainer.run(ctx.workdir / "learning_smoke");
  const EvalReport& first = rows.front().eval;
  const EvalReport& last = rows.back().eval;
  const EvalReport random = bot_report(RandomBot{}, SingletonRule::TerminateEmpty, trainer.eval_set(),
                                       RngStream(cfg.seed).split("random-reference"), cfg.threads);
  const double fair = 1.0 / kNumAgents;
  const bool accuracy_ok = last.accuracy.mean >= random.accuracy.mean + 0.10;
  const bool rounds_ok = last.rounds_mean < first.rounds_mean;
  const bool share_ok = std::abs(last.proposer_self_share - fair) < std::abs(first.proposer_self_share - fair);
  return {accuracy_ok && rounds_ok && share_ok,
          "epoch " + std::to_string(rows.back().epoch) + ": accuracy " + fmt(last.accuracy.mean) + " vs random " +
              fmt(random.accuracy.mean) + "; rounds " + fmt(first.rounds_mean) + " -> " + fmt(last.rounds_mean) +
              "; proposer share " + fmt(first.proposer_self_share) + " -> " + fmt(last.proposer_self_share)};
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

double worst_actor_gradient_error() {
  double worst = 0.0;
  for (int self = 0; self < kNumAgents; ++self) {
    RngStream rng(8100 + self);
    Actor actor(NetworkShape{6, 5}, rng);
    for (Eigen::Index i = 0; i < actor.params().size(); ++i) actor.params()[i] = 0.7 * (2.0 * rng.uniform() - 1.0);
    ActorBatch b;
    b.self = self;
    const std::vector<Coalition> coalitions{Coalition::singleton(self), Coalition::grand(),
                                            Coalition::singleton(self).with((self + 1) % 3),
                                            Coalition::singleton(self).with((self + 2) % 3)};
    const int n = 12;
    b.obs.resize(kObsDim, n);
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < kObsDim; ++i) b.obs(i, k) = 2.0 * rng.uniform() - 1.0;
      b.kind.push_back(k % 3 == 2 ? ActionKind::Response : ActionKind::Proposal);
      const Coalition c = coalitions[k % coalitions.size()];
      b.coalition.push_back(c);
      std::array<double, kNumAgents> x{};
      double total = 0.0;
      for (int a = 0; a < kNumAgents; ++a) {
        if (c.contains(a)) total += (x[a] = 0.05 + rng.uniform());
      }
      for (double& v : x) v /= total;
      b.payoff.push_back(x);
      b.accept.push_back(rng.bernoulli(0.5));
    }
    VectorXd w_logp(n), w_ent(n);
    for (int k = 0; k < n; ++k) {
      w_logp[k] = 2.0 * rng.uniform() - 1.0;
      w_ent[k] = 2.0 * rng.uniform() - 1.0;
    }
    auto objective = [&] {
      VectorXd lp, en;
      actor.evaluate(b, lp, en);
      return w_logp.dot(lp) + w_ent.dot(en);
    };
    Actor::Cache cache;
    VectorXd lp, en;
    actor.evaluate(b, lp, en, &cache);
    VectorXd grad = VectorXd::Zero(actor.params().size());
    actor.backward(b, cache, w_logp, w_ent, grad);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      const double keep = actor.params()[i];
      actor.params()[i] = keep + h;
      const double up = objective();
      actor.params()[i] = keep - h;
      const double dn = objective();
      actor.params()[i] = keep;
      worst = std::max(worst, relative_error(grad[i], (up - dn) / (2 * h)));
    }
  }
  return worst;
}

double worst_head_gradient_error() {
  double worst = 0.0;
  const double h = 1e-6;
  for (double logit : {-4.0, -0.3, 0.0, 1.7, 6.0}) {
    for (bool outcome : {false, true}) {
      const double fd = (bernoulli::log_prob(logit + h, outcome) - bernoulli::log_prob(logit - h, outcome)) / (2 * h);
      worst = std::max(worst, relative_error(bernoulli::dlog_prob_dlogit(logit, outcome), fd));
    }
    const double fd = (bernoulli::entropy(logit + h) - bernoulli::entropy(logit - h)) / (2 * h);
    worst = std::max(worst, relative_error(bernoulli::dentropy_dlogit(logit), fd));
  }
  const std::vector<std::array<double, 3>> alphas{{1.001, 1.5, 3.0}, {7.0, 2.2, 1.01}, {40.0, 40.0, 1.3}};
  const std::array<double, 3> y{0.2, 0.5, 0.3};
  for (const auto& alpha : alphas) {
    std::array<double, 3> g{}, ge{};
    dirichlet::grad_log_density(alpha, y, g);
    dirichlet::grad_entropy(alpha, ge);
    for (int j = 0; j < 3; ++j) {
      auto up = alpha, dn = alpha;
      up[j] += h;
      dn[j] -= h;
      worst = std::max(worst, relative_error(g[j], (dirichlet::log_density(up, y) - dirichlet::log_density(dn, y)) / (2 * h)));
      worst = std::max(worst, relative_error(ge[j], (dirichlet::entropy(up) - dirichlet::entropy(dn)) / (2 * h)));
    }
  }
  return worst;
}

Outcome numerical_properties(const Context&) {
  const double head_err = worst_head_gradient_error();
  const double actor_err = worst_actor_gradient_error();

  TrainConfig c;
  c.network = {8, 6};
  c.threads = 1;
  c.ppo_passes = 3;
  c.minibatches = 2;
  RngStream init(8200);
  std::vector<AgentModel> models;
  for (int a = 0; a < kNumAgents; ++a) models.push_back({Actor(c.network, init), Critic(c.network, init)});
  std::vector<ActorPolicy> actors;
  for (const AgentModel& m : models) actors.emplace_back(m.actor, m.normalizer, c.max_rounds, false);
  RolloutBuffer buffer = collect_rollouts({&actors[0], &actors[1], &actors[2]}, c, 128, RngStream(8201));
  compute_returns(buffer, c, &models);
  const AdvantageStats adv = compute_advantages(buffer, models);
  double worst_mean = 0.0, worst_var = 0.0;
  for (int a = 0; a < kNumAgents; ++a) {
    if (!adv.normalized[a]) continue;
    std::vector<double> v;
    for (const Transition& t : buffer.agent[a]) {
      if (t.is_action()) v.push_back(t.advantage);
    }
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_var = std::max(worst_var, std::abs(var - 1.0));
  }
  std::vector<AgentOptimizers> opt;
  for (const AgentModel& m : models) {
    opt.push_back({Adam(m.actor.parameter_count(), c.adam()), Adam(m.critic.parameter_count(), c.adam())});
  }
  RngStream update_rng(8202);
  const UpdateStats update = policy_update(buffer, models, opt, c, update_rng);

  RngStream wrng(8203);
  const int n = 20000;
  MatrixXd batch(3, n);
  for (int k = 0; k < n; ++k) {
    batch(0, k) = 5.0 + 3.0 * wrng.uniform();
    batch(1, k) = -1e4 + 1e-3 * wrng.uniform();
    batch(2, k) = wrng.bernoulli(0.3) ? 1.0 : 0.0;
  }
  RunningNormalizer norm(3);
  for (int k = 0; k < n; ++k) norm.update(VectorXd(batch.col(k)));
  const VectorXd mean = batch.rowwise().mean();
  const VectorXd var = (batch.colwise() - mean).array().square().rowwise().mean();
  const double welford_err =
      std::max((norm.mean() - mean).cwiseAbs().maxCoeff(), (norm.variance() - var).cwiseAbs().maxCoeff());

  const bool pass = head_err < 1e-4 && actor_err < 1e-4 && update.first_ratio_deviation < 1e-9 &&
                    worst_mean < 1e-12 && worst_var < 1e-12 && welford_err < 1e-9;
  std::ostringstream os;
  os.precision(3);
  os << "head grad err " << head_err << ", actor grad err " << actor_err << ", fresh ratio deviation "
     << update.first_ratio_deviation << ", advantage mean " << worst_mean << " var err " << worst_var
     << ", running stats err " << welford_err;
  return {pass, os.str()};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome determinism(const Context& ctx) {
  TrainConfig cfg = desk_config();
  cfg.epochs = 6;
  cfg.eval_interval = 3;
  cfg.batch_episodes = 64;
  cfg.eval_episodes = 128;
  cfg.pretrain_records = 2000;
  cfg.pretrain_epochs = 2;
  cfg.network = {32, 32};
  if (ctx.threads) cfg.threads = ctx.threads;
  std::vector<fs::path> dirs;
  for (const char* name : {"determinism_a", "determinism_b"}) {
    const fs::path dir = ctx.workdir / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto pretrained = pretrain_for(cfg);
    if (pretrained) save_pretrained(dir / "pretrained.bin", *pretrained);
    Trainer trainer(cfg, pretrained ? &*pretrained : nullptr);
    trainer.run(dir);
    dirs.push_back(dir);
  }
  int compared = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::recursive_directory_iterator(dirs[0])) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), dirs[0]);
    const std::string ext = rel.extension().string();
    if (ext != ".csv" && ext != ".bin") continue;
    ++compared;
    if (!fs::exists(dirs[1] / rel) || file_bytes(entry.path()) != file_bytes(dirs[1] / rel)) {
      differing.push_back(rel.string());
    }
  }
  std::string detail = std::to_string(compared) + " files compared";
  for (const std::string& d : differing) detail += ", differs: " + d;
  return {compared >= 3 && differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> checks{
      {"routing_equivalence", routing_equivalence}, {"game_axioms", game_axioms},
      {"worked_example", worked_example},           {"random_bot_protocol", random_bot_protocol},
      {"baseline_bots", baseline_bots},             {"degenerate_rate", degenerate_rate},
      {"learning_smoke", learning_smoke},           {"numerical_properties", numerical_properties},
      {"determinism", determinism},
  };
  CLI::App app{"Acceptance checks"};
  std::vector<std::string> only;
  std::string workdir = (fs::temp_directory_path() / "collab_acceptance").string();
  Context ctx;
  app.add_option("--only", only, "Run just these checks");
  app.add_option("--workdir", workdir, "Directory for training outputs");
  app.add_option("--threads", ctx.threads, "Worker threads (0: all cores)");
  CLI11_PARSE(app, argc, argv);
  for (const std::string& name : only) {
    if (std::none_of(checks.begin(), checks.end(), [&](const auto& c) { return c.first == name; })) {
      std::cerr << "unknown check " << name << '\n';
      return 2;
    }
  }
  ctx.workdir = workdir;
  fs::create_directories(ctx.workdir);

  int failed = 0;
  for (const auto& [name, run] : checks) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " (" << fmt(secs, 1) << " s)"
              << std::endl;
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
