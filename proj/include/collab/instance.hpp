#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "collab/rng.hpp"

namespace collab {

inline constexpr int kNumAgents = 3;
inline constexpr int kCustomersPerAgent = 3;
inline constexpr int kNumLocations = kNumAgents + kNumAgents * kCustomersPerAgent;
inline constexpr int kLocationFeatures = 4;

inline constexpr std::array<std::array<double, 2>, kNumAgents> kDepotCoordinates{{
    {-0.2, 0.173},
    {0.2, 0.173},
    {0.0, -0.173},
}};
inline constexpr std::array<double, 3> kServiceRadii{0.3, 0.4, 0.6};

// One row of the deliveries matrix. `owner` is 1-based, as in the feature
// encoding fed to the networks; every API taking an agent index is 0-based.
struct Location {
  double x = 0.0;
  double y = 0.0;
  int owner = 1;
  bool is_depot = false;

  bool operator==(const Location&) const = default;
};

// Rows 0..2 hold the depots of agents 0..2; rows 3+3a..5+3a hold agent a's
// customers.
struct Instance {
  std::array<Location, kNumLocations> deliveries{};
  std::array<double, kNumAgents> radii{};
  std::uint64_t seed = 0;

  const Location& depot(int agent) const { return deliveries[agent]; }
  std::span<const Location, kCustomersPerAgent> customers(int agent) const {
    return std::span<const Location, kCustomersPerAgent>(
        deliveries.data() + kNumAgents + agent * kCustomersPerAgent, kCustomersPerAgent);
  }
  static constexpr int customer_row(int agent, int k) {
    return kNumAgents + agent * kCustomersPerAgent + k;
  }

  bool operator==(const Instance&) const = default;
};

double euclidean_distance(const Location& a, const Location& b);

Instance generate_instance(RngStream& rng);

// Checks every distribution invariant; throws ValidationError naming the
// offending row.
void validate_instance(const Instance& instance);

std::string instance_to_json(const Instance& instance);
Instance instance_from_json(const std::string& text);

Instance read_instance(const std::filesystem::path& path);
void write_instance(const Instance& instance, const std::filesystem::path& path);

}  // namespace collab
