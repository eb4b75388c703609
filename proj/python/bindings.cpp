#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "collab/errors.hpp"
#include "collab/routing.hpp"
#include "collab/training.hpp"
#include "collab/values.hpp"

namespace py = pybind11;
using namespace collab;
using nlohmann::json;

namespace {

py::object to_python(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_python(const py::object& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

Instance instance_from_python(const py::object& o) {
  if (py::isinstance<py::str>(o)) return instance_from_json(o.cast<std::string>());
  return instance_from_json(from_python(o).dump());
}

Coalition coalition_from_members(const std::vector<int>& members) {
  std::vector<int> zero_based;
  for (int m : members) {
    if (m < 1 || m > kNumAgents) throw InputError("coalition member " + std::to_string(m) + " is not an agent");
    zero_based.push_back(m - 1);
  }
  if (zero_based.empty()) throw InputError("empty coalition");
  return Coalition::from_members(zero_based);
}

std::vector<int> one_based(Coalition c) {
  std::vector<int> out;
  for (int a : c.members()) out.push_back(a + 1);
  return out;
}

py::dict table_dict(const CharacteristicTable& t) {
  py::dict values;
  for (int m = 1; m < kNumCoalitions; ++m) {
    const Coalition c(static_cast<std::uint8_t>(m));
    values[py::tuple(py::cast(one_based(c)))] = t.v(c);
  }
  py::list best;
  for (int a = 0; a < kNumAgents; ++a) best.append(one_based(best_coalition_for(t, a).coalition));
  py::dict out;
  out["values"] = values;
  out["shapley"] = shapley(t).phi;
  out["best_coalition"] = best;
  out["degenerate"] = t.degenerate();
  return out;
}

py::dict evaluate_bot(const std::string& bot, int n, std::uint64_t seed, bool with_tables, int threads) {
  if (bot != "random" && bot != "heuristic") throw InputError("unknown bot " + bot);
  const bool random = bot == "random";
  const RngStream root(seed);
  const EvalSet set = make_eval_set(generate_instances(static_cast<std::size_t>(n), root.split("instances")),
                                    with_tables, threads);
  const RandomBot random_bot;
  const HeuristicBot heuristic_bot;
  const BargainingPolicy* p = random ? static_cast<const BargainingPolicy*>(&random_bot) : &heuristic_bot;
  const BargainingEnv env(10, random ? SingletonRule::TerminateEmpty : SingletonRule::AutoReject);
  const auto outcomes = run_episodes(env, {p, p, p}, set, root.split("episodes"), threads);
  return to_python(to_json(summarize(outcomes, set)));
}

py::dict train(const py::dict& config, const std::string& out_dir, std::optional<std::string> pretrained_path) {
  TrainConfig cfg = train_config_from_json(from_python(config));
  if (pretrained_path) cfg.pretrained_path = *pretrained_path;
  cfg.validate();
  std::optional<PretrainedModel> pretrained;
  if (!cfg.pretrained_path.empty()) {
    pretrained = load_pretrained(cfg.pretrained_path);
  } else if (cfg.pretrain) {
    const RngStream root(cfg.seed);
    const PretrainDataset data = make_pretrain_dataset(cfg.pretrain_records, root.split("pretrain-data"), cfg.threads);
    pretrained = pretrain(data, cfg, root.split("pretrain"));
  }
  std::vector<EpochRecord> rows;
  {
    py::gil_scoped_release release;
    Trainer trainer(cfg, pretrained ? &*pretrained : nullptr);
    rows = trainer.run(out_dir);
  }
  py::list evals;
  for (const EpochRecord& r : rows) {
    py::dict e = to_python(to_json(r.eval));
    e["epoch"] = r.epoch;
    evals.append(e);
  }
  py::dict out;
  out["evaluations"] = evals;
  out["out"] = out_dir;
  return out;
}

}  // namespace

PYBIND11_MODULE(collab, m) {
  m.doc() = "Coalition bargaining over shared vehicle routing";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalFault>(m, "NumericalFault", PyExc_RuntimeError);

  m.def("version", &version_string);
  m.def(
      "generate_instance",
      [](std::uint64_t seed) {
        RngStream rng(seed);
        return to_python(json::parse(instance_to_json(generate_instance(rng))));
      },
      py::arg("seed"));
  m.def(
      "validate_instance", [](const py::object& inst) { validate_instance(instance_from_python(inst)); },
      py::arg("instance"));
  m.def(
      "route",
      [](const py::object& inst, const std::vector<int>& coalition) {
        const RoutingSolution s = mdvrp_exact(instance_from_python(inst), coalition_from_members(coalition));
        py::list tours;
        for (const Tour& t : s.tours) {
          py::dict d;
          d["vehicle"] = t.vehicle + 1;
          d["customers"] = t.customers;
          d["cost"] = t.cost;
          tours.append(d);
        }
        py::dict out;
        out["tours"] = tours;
        out["total_cost"] = s.total_cost;
        return out;
      },
      py::arg("instance"), py::arg("coalition"));
  m.def(
      "characteristic_table", [](const py::object& inst) { return table_dict(characteristic_table(instance_from_python(inst))); },
      py::arg("instance"));
  m.def(
      "table_from_values",
      [](double v12, double v13, double v23, double v123) {
        return table_dict(CharacteristicTable::from_values(v12, v13, v23, v123));
      },
      py::arg("v12"), py::arg("v13"), py::arg("v23"), py::arg("v123"));
  m.def("expected_random_rounds", &expected_rounds_random_analytic, py::arg("max_rounds") = 10);
  m.def("evaluate_bot", &evaluate_bot, py::arg("bot"), py::arg("n"), py::arg("seed") = 0,
        py::arg("with_tables") = true, py::arg("threads") = 0);
  m.def("default_config", [] { return to_python(to_json(TrainConfig{})); });
  m.def("train", &train, py::arg("config"), py::arg("out_dir"), py::arg("pretrained") = std::nullopt);
}
