#pragma once

#include <span>
#include <vector>

#include "collab/coalition.hpp"
#include "collab/instance.hpp"

namespace collab {

// Dense symmetric distance matrix over the nodes of one routing subproblem.
class CostMatrix {
 public:
  explicit CostMatrix(std::span<const Location> nodes);

  int size() const { return n_; }
  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * n_ + j]; }

 private:
  int n_;
  std::vector<double> data_;
};

struct Tour {
  int vehicle = 0;              // 0-based agent index
  std::vector<int> customers;   // visiting order; indices into the caller's node list
  double cost = 0.0;
};

struct RoutingSolution {
  std::vector<Tour> tours;
  double total_cost = 0.0;
};

inline constexpr int kMaxTspCustomers = 12;

/// Minimum closed tour depot -> customers -> depot (Held-Karp). Among tours
/// within 1e-12 of the optimum the lexicographically smallest visiting order
/// is returned, and `cost` is re-summed along that order. Customer indices
/// refer to positions in `customers`.
Tour tsp_exact(const Location& depot, std::span<const Location> customers);

/// Cost of visiting `order` (indices into `customers`) from and back to `depot`.
double tour_cost(const Location& depot, std::span<const Location> customers,
                 std::span<const int> order);

/// Uncapacitated multi-depot routing over the coalition's customers: every
/// member vehicle starts and ends at its own depot and serves at least one
/// customer. Tour customer indices are deliveries-matrix rows. Tours are
/// ordered by vehicle index.
RoutingSolution mdvrp_exact(const Instance& instance, Coalition coalition);

}  // namespace collab
