#include "collab/values.hpp"

#include <sstream>
#include <vector>

#include "collab/errors.hpp"

namespace collab {

Coalition Coalition::from_members(const std::vector<int>& agents) {
  std::uint8_t mask = 0;
  for (int a : agents) {
    if (a < 0 || a >= kNumAgents) throw InputError("agent index " + std::to_string(a) + " out of range");
    mask |= std::uint8_t(1u << a);
  }
  return Coalition(mask);
}

Coalition Coalition::from_flags(bool a0, bool a1, bool a2) {
  return Coalition(std::uint8_t((a0 ? 1u : 0u) | (a1 ? 2u : 0u) | (a2 ? 4u : 0u)));
}

std::vector<int> Coalition::members() const {
  std::vector<int> out;
  for (int a = 0; a < kNumAgents; ++a) {
    if (contains(a)) out.push_back(a);
  }
  return out;
}

std::string Coalition::to_string() const {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (int a : members()) {
    if (!first) os << ',';
    os << a + 1;
    first = false;
  }
  os << '}';
  return os.str();
}

double CharacteristicTable::v(Coalition c) const {
  if (c.empty()) return 0.0;
  if (!known[c.mask()]) {
    throw ContractViolation("characteristic table has no value for " + c.to_string());
  }
  return value[c.mask()];
}

bool CharacteristicTable::complete() const {
  for (int mask = 1; mask < kNumCoalitions; ++mask) {
    if (!known[mask]) return false;
  }
  return true;
}

CharacteristicTable CharacteristicTable::from_values(double v12, double v13, double v23,
                                                     double v123) {
  CharacteristicTable t;
  t.known.fill(true);
  t.value[0b011] = v12;
  t.value[0b101] = v13;
  t.value[0b110] = v23;
  t.value[0b111] = v123;
  return t;
}

double pre_collab_profit(const Instance& instance, int agent) {
  if (agent < 0 || agent >= kNumAgents) throw InputError("agent index out of range");
  const auto customers = instance.customers(agent);
  return kRevenuePerDelivery * kCustomersPerAgent -
         tsp_exact(instance.depot(agent), customers).cost;
}

namespace {

double gain_from(double pre_welfare, double post_welfare) {
  const double gain = post_welfare - pre_welfare;
  return gain <= kZeroGainTolerance ? 0.0 : gain;
}

double revenue_of(Coalition c) { return kRevenuePerDelivery * kCustomersPerAgent * c.size(); }

}  // namespace

double collaboration_gain(const Instance& instance, Coalition coalition) {
  if (coalition.empty()) throw InputError("collaboration_gain: empty coalition");
  if (coalition.size() == 1) return 0.0;
  double pre = 0.0;
  for (int a : coalition.members()) pre += pre_collab_profit(instance, a);
  const double post = revenue_of(coalition) - mdvrp_exact(instance, coalition).total_cost;
  return gain_from(pre, post);
}

CharacteristicTable characteristic_table(const Instance& instance) {
  CharacteristicTable t;
  for (int a = 0; a < kNumAgents; ++a) t.pre_profit[a] = pre_collab_profit(instance, a);
  for (int mask = 1; mask < kNumCoalitions; ++mask) {
    const Coalition c(static_cast<std::uint8_t>(mask));
    double pre = 0.0;
    for (int a : c.members()) pre += t.pre_profit[a];
    if (c.size() == 1) {
      t.post_welfare[mask] = pre;
      t.value[mask] = 0.0;
    } else {
      t.post_welfare[mask] = revenue_of(c) - mdvrp_exact(instance, c).total_cost;
      t.value[mask] = gain_from(pre, t.post_welfare[mask]);
    }
    t.known[mask] = true;
  }
  return t;
}

ShapleyVector shapley(const CharacteristicTable& table) {
  if (!table.complete()) throw ContractViolation("shapley: characteristic table is incomplete");
  // weight[k] = k! (n-1-k)! / n! for n = 3
  constexpr std::array<double, kNumAgents> weight{1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0};
  ShapleyVector out;
  for (int i = 0; i < kNumAgents; ++i) {
    double phi = 0.0;
    for (int mask = 0; mask < kNumCoalitions; ++mask) {
      const Coalition c(static_cast<std::uint8_t>(mask));
      if (c.contains(i)) continue;
      phi += weight[c.size()] * (table.v(c.with(i)) - table.v(c));
    }
    out.phi[i] = phi;
  }
  return out;
}

BestCoalition best_coalition_for(const CharacteristicTable& table, int agent) {
  if (!table.complete()) throw ContractViolation("best_coalition_for: incomplete table");
  BestCoalition best;
  bool found = false;
  bool any_positive = false;
  for (int size = 2; size <= kNumAgents; ++size) {
    for (int mask = 1; mask < kNumCoalitions; ++mask) {
      const Coalition c(static_cast<std::uint8_t>(mask));
      if (c.size() != size || !c.contains(agent)) continue;
      const double pc = table.per_capita(c);
      any_positive = any_positive || pc > 0.0;
      if (!found || pc > best.per_capita) {
        best.coalition = c;
        best.per_capita = pc;
        found = true;
      }
    }
  }
  if (!any_positive) return BestCoalition{Coalition::grand(), 0.0, true};
  return best;
}

}  // namespace collab
