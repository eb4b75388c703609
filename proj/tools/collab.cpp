#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "collab/errors.hpp"
#include "collab/eval.hpp"
#include "collab/routing.hpp"
#include "collab/training.hpp"
#include "collab/values.hpp"

using namespace collab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kValidation = 3, kRuntime = 4 };

Coalition parse_coalition(const std::string& text) {
  std::vector<int> members;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int agent = 0;
    try {
      std::size_t used = 0;
      agent = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError("coalition member \"" + item + "\" is not an integer");
    }
    if (agent < 1 || agent > kNumAgents) {
      throw InputError("coalition member " + std::to_string(agent) + " is not an agent (1.." +
                       std::to_string(kNumAgents) + ")");
    }
    members.push_back(agent - 1);
  }
  if (members.empty()) throw InputError("empty coalition");
  return Coalition::from_members(members);
}

json routing_json(const RoutingSolution& s) {
  json tours = json::array();
  for (const Tour& t : s.tours) {
    std::vector<int> rows;
    for (int r : t.customers) rows.push_back(r);
    tours.push_back({{"vehicle", t.vehicle + 1}, {"customers", rows}, {"cost", t.cost}});
  }
  return {{"tours", tours}, {"total_cost", s.total_cost}};
}

json values_json(const CharacteristicTable& t) {
  json values = json::object(), per_capita = json::object(), welfare = json::object();
  for (int m = 1; m < kNumCoalitions; ++m) {
    const Coalition c(static_cast<std::uint8_t>(m));
    values[c.to_string()] = t.v(c);
    per_capita[c.to_string()] = t.per_capita(c);
    welfare[c.to_string()] = t.post_welfare[m];
  }
  json best = json::array();
  for (int a = 0; a < kNumAgents; ++a) {
    const BestCoalition b = best_coalition_for(t, a);
    best.push_back({{"agent", a + 1}, {"coalition", b.coalition.to_string()}, {"per_capita", b.per_capita}});
  }
  return {{"values", values},
          {"per_capita", per_capita},
          {"pre_collab_profit", t.pre_profit},
          {"post_collab_welfare", welfare},
          {"shapley", shapley(t).phi},
          {"best_coalition", best},
          {"degenerate", t.degenerate()}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::vector<AgentModel> load_models(const fs::path& ckpt) {
  const NetworkShape shape = checkpoint_shape(ckpt);
  std::vector<AgentModel> models;
  RngStream unused(0);
  for (int a = 0; a < kNumAgents; ++a) models.push_back({Actor(shape, unused), Critic(shape, unused)});
  load_checkpoint(ckpt, models);
  return models;
}

int fail(ExitCode code, const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative vehicle routing as coalitional bargaining"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate random instances as JSON files");
  int gen_n = 1;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--n", gen_n, "Number of instances")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Seed of the first instance; instance k uses seed + k");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Exact routing and coalition-value oracles");
  oracle->require_subcommand(1);
  auto* route = oracle->add_subcommand("route", "Optimal routes of one coalition");
  std::string route_instance, route_coalition;
  route->add_option("--instance", route_instance, "Instance JSON file")->required();
  route->add_option("--coalition", route_coalition, "Comma-separated agents, e.g. 1,2")->required();
  auto* values = oracle->add_subcommand("values", "Characteristic table, Shapley values, best coalitions");
  std::string values_instance;
  values->add_option("--instance", values_instance, "Instance JSON file")->required();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Pre-train the deliveries feature extractor");
  int pre_n = 100000;
  std::string pre_out, pre_config;
  std::uint64_t pre_seed = 0;
  std::optional<int> pre_epochs, pre_threads;
  pre->add_option("--n", pre_n, "Number of records")->check(CLI::Range(2, 100000000));
  pre->add_option("--out", pre_out, "Output model file")->required();
  pre->add_option("--config", pre_config, "Training config supplying pre-training settings");
  pre->add_option("--seed", pre_seed, "Seed");
  pre->add_option("--epochs", pre_epochs, "Override pretrain_epochs");
  pre->add_option("--threads", pre_threads, "Worker threads (0: all cores)");

  // train
  auto* train = app.add_subcommand("train", "Multi-agent PPO self-play training");
  std::string train_config, train_out, train_pretrained;
  std::optional<std::uint64_t> train_seed;
  std::optional<int> train_epochs, train_threads;
  train->add_option("--config", train_config, "Config JSON file")->required();
  train->add_option("--seed", train_seed, "Override the config seed");
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--pretrained", train_pretrained, "Pre-trained extractor to load");
  train->add_option("--epochs", train_epochs, "Override the config epochs");
  train->add_option("--threads", train_threads, "Worker threads (0: all cores)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint or a baseline bot");
  std::string ev_ckpt, ev_bot, ev_out, ev_scatter, ev_log;
  int ev_n = 2048, ev_rounds = 10, ev_threads = 0;
  std::uint64_t ev_seed = 0;
  bool ev_no_tables = false;
  auto* ckpt_opt = ev->add_option("--ckpt", ev_ckpt, "Checkpoint file");
  auto* bot_opt = ev->add_option("--bot", ev_bot, "Baseline bot")->check(CLI::IsMember({"heuristic", "random"}));
  ckpt_opt->excludes(bot_opt);
  ev->add_option("--n", ev_n, "Episodes (one instance each)")->check(CLI::PositiveNumber);
  ev->add_option("--seed", ev_seed, "Seed");
  ev->add_option("--max-rounds", ev_rounds, "Round limit T")->check(CLI::PositiveNumber);
  ev->add_option("--out", ev_out, "Report JSON file (stdout when omitted)");
  ev->add_option("--scatter", ev_scatter, "Shapley scatter CSV");
  ev->add_option("--log", ev_log, "Trajectory JSON-lines file");
  ev->add_option("--threads", ev_threads, "Worker threads (0: all cores)");
  ev->add_flag("--no-tables", ev_no_tables, "Skip brute-forcing tables (protocol statistics only)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      fs::create_directories(gen_out);
      const auto instances = generate_instances(static_cast<std::size_t>(gen_n), RngStream(gen_seed));
      for (std::size_t k = 0; k < instances.size(); ++k) {
        std::ostringstream name;
        name << "instance_" << std::setw(6) << std::setfill('0') << k << ".json";
        write_instance(instances[k], fs::path(gen_out) / name.str());
      }
      std::cout << json{{"written", instances.size()}, {"out", gen_out}}.dump() << '\n';
    } else if (*route) {
      const Instance inst = read_instance(route_instance);
      const Coalition c = parse_coalition(route_coalition);
      json j = routing_json(mdvrp_exact(inst, c));
      j["coalition"] = c.to_string();
      std::cout << j.dump(2) << '\n';
    } else if (*values) {
      const Instance inst = read_instance(values_instance);
      std::cout << values_json(characteristic_table(inst)).dump(2) << '\n';
    } else if (*pre) {
      TrainConfig cfg = pre_config.empty() ? TrainConfig{} : read_train_config(pre_config);
      cfg.pretrain_records = pre_n;
      cfg.seed = pre_seed;
      if (pre_epochs) cfg.pretrain_epochs = *pre_epochs;
      if (pre_threads) cfg.threads = *pre_threads;
      cfg.validate();
      const RngStream root(cfg.seed);
      const PretrainDataset data = make_pretrain_dataset(cfg.pretrain_records, root.split("pretrain-data"), cfg.threads);
      const PretrainedModel model = pretrain(data, cfg, root.split("pretrain"), &std::cerr);
      if (fs::path(pre_out).has_parent_path()) fs::create_directories(fs::path(pre_out).parent_path());
      save_pretrained(pre_out, model);
      std::cout << json{{"records", data.size()},
                        {"test_mse", model.test_mse},
                        {"baseline_mse", model.baseline_mse},
                        {"out", pre_out}}
                       .dump()
                << '\n';
    } else if (*train) {
      TrainConfig cfg = read_train_config(train_config);
      if (train_seed) cfg.seed = *train_seed;
      if (train_epochs) cfg.epochs = *train_epochs;
      if (train_threads) cfg.threads = *train_threads;
      if (!train_pretrained.empty()) cfg.pretrained_path = train_pretrained;
      cfg.validate();
      fs::create_directories(train_out);
      std::optional<PretrainedModel> pretrained;
      if (!cfg.pretrained_path.empty()) {
        pretrained = load_pretrained(cfg.pretrained_path);
      } else if (cfg.pretrain) {
        const RngStream root(cfg.seed);
        const PretrainDataset data =
            make_pretrain_dataset(cfg.pretrain_records, root.split("pretrain-data"), cfg.threads);
        pretrained = pretrain(data, cfg, root.split("pretrain"), &std::cerr);
        save_pretrained(fs::path(train_out) / "pretrained.bin", *pretrained);
      }
      Trainer trainer(cfg, pretrained ? &*pretrained : nullptr);
      const auto rows = trainer.run(train_out, &std::cerr);
      std::cout << json{{"out", train_out}, {"epochs", trainer.epoch()}, {"final", to_json(rows.back().eval)}}.dump(2)
                << '\n';
    } else if (*ev) {
      if (ev_ckpt.empty() && ev_bot.empty()) throw InputError("eval needs --ckpt or --bot");
      const auto start = std::chrono::steady_clock::now();
      const bool random_bot = ev_bot == "random";
      const BargainingEnv env(ev_rounds, random_bot ? SingletonRule::TerminateEmpty : SingletonRule::AutoReject);
      const RngStream root(ev_seed);
      const EvalSet set = make_eval_set(generate_instances(static_cast<std::size_t>(ev_n), root.split("instances")),
                                        !ev_no_tables, ev_threads);
      if (ev_no_tables && !ev_scatter.empty()) throw InputError("--scatter needs characteristic tables");

      HeuristicBot heuristic;
      RandomBot random;
      std::vector<AgentModel> models;
      std::vector<ActorPolicy> actors;
      PolicySet policies{};
      if (!ev_ckpt.empty()) {
        models = load_models(ev_ckpt);
        for (const AgentModel& m : models) actors.emplace_back(m.actor, m.normalizer, ev_rounds, true);
        for (int a = 0; a < kNumAgents; ++a) policies[a] = &actors[a];
      } else {
        for (int a = 0; a < kNumAgents; ++a) {
          policies[a] = random_bot ? static_cast<const BargainingPolicy*>(&random) : &heuristic;
        }
      }

      std::ofstream log_file;
      if (!ev_log.empty()) {
        log_file.open(ev_log);
        if (!log_file) throw InputError("cannot write " + ev_log);
      }
      const auto outcomes = run_episodes(env, policies, set, root.split("episodes"), ev_threads,
                                         ev_log.empty() ? nullptr : &log_file);
      EvalReport report = summarize(outcomes, set);
      report.seconds_per_instance =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / ev_n;
      json j = to_json(report);
      j["policy"] = ev_ckpt.empty() ? ev_bot : ev_ckpt;
      j["seed"] = ev_seed;
      j["max_rounds"] = ev_rounds;
      j["version"] = version_string();
      if (random_bot) {
        j["expected_rounds_analytic"] = expected_rounds_random_analytic(ev_rounds);
        j["expected_rounds_series"] = expected_rounds_random_series(ev_rounds);
      }
      if (ev_out.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        write_text(ev_out, j.dump(2) + "\n");
      }
      if (!ev_scatter.empty()) {
        std::ostringstream csv;
        write_scatter_csv(csv, outcomes, set);
        write_text(ev_scatter, csv.str());
      }
    }
  } catch (const InputError& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const ValidationError& e) {
    return fail(kValidation, "validation", e.what());
  } catch (const std::exception& e) {
    return fail(kRuntime, "runtime", e.what());
  }
  return kOk;
}
