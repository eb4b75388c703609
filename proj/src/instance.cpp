#include "collab/instance.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "collab/errors.hpp"

namespace collab {

using nlohmann::json;

double euclidean_distance(const Location& a, const Location& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

Instance generate_instance(RngStream& rng) {
  Instance inst;
  inst.seed = rng.seed();
  for (int a = 0; a < kNumAgents; ++a) {
    inst.deliveries[a] = Location{kDepotCoordinates[a][0], kDepotCoordinates[a][1], a + 1, true};
  }
  for (int a = 0; a < kNumAgents; ++a) {
    inst.radii[a] = kServiceRadii[rng.uniform_int(0, static_cast<int>(kServiceRadii.size()) - 1)];
  }
  for (int a = 0; a < kNumAgents; ++a) {
    const Location& depot = inst.deliveries[a];
    for (int k = 0; k < kCustomersPerAgent; ++k) {
      // sqrt transform on the radius gives a uniform density over the disc.
      const double r = inst.radii[a] * std::sqrt(rng.uniform());
      const double theta = 2.0 * std::numbers::pi * rng.uniform();
      inst.deliveries[Instance::customer_row(a, k)] =
          Location{depot.x + r * std::cos(theta), depot.y + r * std::sin(theta), a + 1, false};
    }
  }
  return inst;
}

namespace {

std::string row_name(int row) { return "deliveries[" + std::to_string(row) + "]"; }

}  // namespace

void validate_instance(const Instance& inst) {
  for (int a = 0; a < kNumAgents; ++a) {
    bool allowed = false;
    for (double r : kServiceRadii) allowed = allowed || inst.radii[a] == r;
    if (!allowed) {
      throw ValidationError("radii[" + std::to_string(a) + "] = " + std::to_string(inst.radii[a]) +
                            " is not one of {0.3, 0.4, 0.6}");
    }
  }

  std::array<int, kNumAgents> depots_seen{};
  std::array<int, kNumAgents> customers_seen{};
  for (int row = 0; row < kNumLocations; ++row) {
    const Location& loc = inst.deliveries[row];
    if (loc.owner < 1 || loc.owner > kNumAgents) {
      throw ValidationError(row_name(row) + ": owner " + std::to_string(loc.owner) +
                            " outside 1..3");
    }
    const int a = loc.owner - 1;
    if (loc.is_depot) {
      if (++depots_seen[a] > 1) {
        throw ValidationError(row_name(row) + ": duplicate depot for agent " +
                              std::to_string(loc.owner));
      }
    } else if (++customers_seen[a] > kCustomersPerAgent) {
      throw ValidationError(row_name(row) + ": agent " + std::to_string(loc.owner) +
                            " owns more than 3 customers");
    }
  }
  for (int a = 0; a < kNumAgents; ++a) {
    if (depots_seen[a] != 1) {
      throw ValidationError("agent " + std::to_string(a + 1) + " has no depot");
    }
  }

  for (int a = 0; a < kNumAgents; ++a) {
    const Location& d = inst.deliveries[a];
    if (!d.is_depot || d.owner != a + 1) {
      throw ValidationError(row_name(a) + ": expected the depot of agent " + std::to_string(a + 1));
    }
    if (d.x != kDepotCoordinates[a][0] || d.y != kDepotCoordinates[a][1]) {
      throw ValidationError(row_name(a) + ": depot of agent " + std::to_string(a + 1) +
                            " is not at its fixed coordinates");
    }
    for (int k = 0; k < kCustomersPerAgent; ++k) {
      const int row = Instance::customer_row(a, k);
      const Location& c = inst.deliveries[row];
      if (c.is_depot || c.owner != a + 1) {
        throw ValidationError(row_name(row) + ": expected a customer of agent " +
                              std::to_string(a + 1));
      }
      const double dist = euclidean_distance(c, d);
      if (!(dist <= inst.radii[a])) {
        throw ValidationError(row_name(row) + ": customer at distance " + std::to_string(dist) +
                              " exceeds radius " + std::to_string(inst.radii[a]));
      }
    }
  }
}

std::string instance_to_json(const Instance& inst) {
  json j;
  j["seed"] = inst.seed;
  j["radii"] = inst.radii;
  json rows = json::array();
  for (const Location& loc : inst.deliveries) {
    rows.push_back({{"x", loc.x}, {"y", loc.y}, {"owner", loc.owner}, {"is_depot", loc.is_depot}});
  }
  j["deliveries"] = std::move(rows);
  return j.dump(2);
}

Instance instance_from_json(const std::string& text) {
  Instance inst;
  try {
    const json j = json::parse(text);
    inst.seed = j.at("seed").get<std::uint64_t>();
    const json& radii = j.at("radii");
    if (!radii.is_array() || radii.size() != kNumAgents) {
      throw ValidationError("radii: expected an array of 3 numbers");
    }
    for (int a = 0; a < kNumAgents; ++a) inst.radii[a] = radii[a].get<double>();
    const json& rows = j.at("deliveries");
    if (!rows.is_array() || rows.size() != kNumLocations) {
      throw ValidationError("deliveries: expected an array of 12 locations");
    }
    for (int row = 0; row < kNumLocations; ++row) {
      const json& r = rows[row];
      inst.deliveries[row] = Location{r.at("x").get<double>(), r.at("y").get<double>(),
                                      r.at("owner").get<int>(), r.at("is_depot").get<bool>()};
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("instance schema violation: ") + e.what());
  }
  validate_instance(inst);
  return inst;
}

Instance read_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open instance file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return instance_from_json(buf.str());
}

void write_instance(const Instance& instance, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write instance file " + path.string());
  out << instance_to_json(instance) << '\n';
}

}  // namespace collab
