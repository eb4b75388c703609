#include "collab/routing.hpp"

#include <limits>

#include "collab/errors.hpp"

namespace collab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTieTolerance = 1e-12;

std::vector<Location> with_depot(const Location& depot, std::span<const Location> customers) {
  std::vector<Location> nodes;
  nodes.reserve(customers.size() + 1);
  nodes.push_back(depot);
  nodes.insert(nodes.end(), customers.begin(), customers.end());
  return nodes;
}

// Held-Karp table for one depot: path_[S * m + j] is the cheapest path that
// leaves the depot, visits exactly the customers in S and ends at j (j in S).
class HeldKarp {
 public:
  HeldKarp(const Location& depot, std::span<const Location> customers)
      : m_(static_cast<int>(customers.size())),
        dist_(with_depot(depot, customers)),
        path_((std::size_t{1} << m_) * std::max(m_, 1), kInf) {
    for (int j = 0; j < m_; ++j) at(1u << j, j) = dist_(0, j + 1);
    for (unsigned s = 1; s < (1u << m_); ++s) {
      for (int j = 0; j < m_; ++j) {
        if (!(s & (1u << j))) continue;
        const double base = at(s, j);
        if (base == kInf) continue;
        for (int k = 0; k < m_; ++k) {
          if (s & (1u << k)) continue;
          double& slot = at(s | (1u << k), k);
          const double cand = base + dist_(j + 1, k + 1);
          if (cand < slot) slot = cand;
        }
      }
    }
  }

  double closed_cost(unsigned s) const {
    if (s == 0) return 0.0;
    double best = kInf;
    for (int j = 0; j < m_; ++j) {
      if (s & (1u << j)) best = std::min(best, at(s, j) + dist_(j + 1, 0));
    }
    return best;
  }

  // Lexicographically smallest visiting order among near-optimal tours over s.
  // Relies on symmetry: the cheapest completion from j over the remaining set
  // R back to the depot equals the cheapest depot->...->j path over R.
  std::vector<int> order(unsigned s) const {
    std::vector<int> seq;
    const double opt = closed_cost(s);
    double prefix = 0.0;
    int at_node = 0;
    unsigned remaining = s;
    while (remaining != 0) {
      int chosen = -1;
      double best = kInf;
      int best_j = -1;
      for (int j = 0; j < m_; ++j) {
        if (!(remaining & (1u << j))) continue;
        const double cand = prefix + dist_(at_node, j + 1) + at(remaining, j);
        if (cand <= opt + kTieTolerance) {
          chosen = j;
          break;
        }
        if (cand < best) {
          best = cand;
          best_j = j;
        }
      }
      if (chosen < 0) chosen = best_j;
      prefix += dist_(at_node, chosen + 1);
      at_node = chosen + 1;
      remaining &= ~(1u << chosen);
      seq.push_back(chosen);
    }
    return seq;
  }

 private:
  double& at(unsigned s, int j) { return path_[static_cast<std::size_t>(s) * m_ + j]; }
  double at(unsigned s, int j) const { return path_[static_cast<std::size_t>(s) * m_ + j]; }

  int m_;
  CostMatrix dist_;
  std::vector<double> path_;
};

}  // namespace

CostMatrix::CostMatrix(std::span<const Location> nodes)
    : n_(static_cast<int>(nodes.size())), data_(nodes.size() * nodes.size(), 0.0) {
  for (int i = 0; i < n_; ++i) {
    for (int j = i + 1; j < n_; ++j) {
      const double d = euclidean_distance(nodes[i], nodes[j]);
      data_[static_cast<std::size_t>(i) * n_ + j] = d;
      data_[static_cast<std::size_t>(j) * n_ + i] = d;
    }
  }
}

double tour_cost(const Location& depot, std::span<const Location> customers,
                 std::span<const int> order) {
  double cost = 0.0;
  const Location* prev = &depot;
  for (int idx : order) {
    cost += euclidean_distance(*prev, customers[idx]);
    prev = &customers[idx];
  }
  cost += euclidean_distance(*prev, depot);
  return cost;
}

Tour tsp_exact(const Location& depot, std::span<const Location> customers) {
  if (customers.size() > kMaxTspCustomers) {
    throw InputError("tsp_exact supports at most 12 customers, got " +
                     std::to_string(customers.size()));
  }
  Tour tour;
  tour.vehicle = depot.owner - 1;
  if (customers.empty()) return tour;
  const HeldKarp hk(depot, customers);
  tour.customers = hk.order((1u << customers.size()) - 1);
  tour.cost = tour_cost(depot, customers, tour.customers);
  return tour;
}

RoutingSolution mdvrp_exact(const Instance& instance, Coalition coalition) {
  if (coalition.empty()) throw InputError("mdvrp_exact: empty coalition");
  if (!coalition.is_subset_of(Coalition::grand())) {
    throw InputError("mdvrp_exact: coalition " + coalition.to_string() +
                     " names an agent absent from the instance");
  }

  const std::vector<int> members = coalition.members();
  std::vector<int> rows;
  std::vector<Location> pool;
  for (int a : members) {
    for (int k = 0; k < kCustomersPerAgent; ++k) {
      rows.push_back(Instance::customer_row(a, k));
      pool.push_back(instance.deliveries[rows.back()]);
    }
  }
  const int m = static_cast<int>(pool.size());
  const unsigned full = (1u << m) - 1;

  std::vector<HeldKarp> tables;
  std::vector<std::vector<double>> closed(members.size(), std::vector<double>(full + 1));
  tables.reserve(members.size());
  for (std::size_t v = 0; v < members.size(); ++v) {
    tables.emplace_back(instance.depot(members[v]), pool);
    for (unsigned s = 0; s <= full; ++s) closed[v][s] = tables[v].closed_cost(s);
  }

  // best[v][S]: cheapest way for vehicles 0..v to serve exactly S, each
  // vehicle taking a nonempty part; choice[v][S] is vehicle v's part.
  const std::size_t nv = members.size();
  std::vector<std::vector<double>> best(nv, std::vector<double>(full + 1, kInf));
  std::vector<std::vector<unsigned>> choice(nv, std::vector<unsigned>(full + 1, 0));
  for (unsigned s = 1; s <= full; ++s) {
    best[0][s] = closed[0][s];
    choice[0][s] = s;
  }
  for (std::size_t v = 1; v < nv; ++v) {
    for (unsigned s = 1; s <= full; ++s) {
      for (unsigned part = s; part != 0; part = (part - 1) & s) {
        const unsigned rest = s & ~part;
        if (rest == 0 || best[v - 1][rest] == kInf) continue;
        const double cand = best[v - 1][rest] + closed[v][part];
        if (cand < best[v][s]) {
          best[v][s] = cand;
          choice[v][s] = part;
        }
      }
    }
  }

  std::vector<unsigned> parts(nv);
  unsigned remaining = full;
  for (std::size_t v = nv; v-- > 0;) {
    parts[v] = choice[v][remaining];
    remaining &= ~parts[v];
  }

  RoutingSolution sol;
  for (std::size_t v = 0; v < nv; ++v) {
    Tour tour;
    tour.vehicle = members[v];
    std::vector<int> local = tables[v].order(parts[v]);
    tour.cost = tour_cost(instance.depot(members[v]), pool, local);
    for (int idx : local) tour.customers.push_back(rows[idx]);
    sol.total_cost += tour.cost;
    sol.tours.push_back(std::move(tour));
  }
  return sol;
}

}  // namespace collab
