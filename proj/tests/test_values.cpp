#include <doctest.h>

#include <algorithm>
#include <array>
#include <numeric>

#include "collab/errors.hpp"
#include "collab/values.hpp"

using namespace collab;

namespace {

const Coalition k12 = Coalition::from_members({0, 1});
const Coalition k13 = Coalition::from_members({0, 2});
const Coalition k23 = Coalition::from_members({1, 2});

// Average marginal contribution over all orderings of the three agents.
std::array<double, 3> shapley_by_orderings(const CharacteristicTable& t) {
  std::array<int, 3> order{0, 1, 2};
  std::array<double, 3> phi{};
  int count = 0;
  do {
    Coalition so_far;
    for (int a : order) {
      const Coalition next = so_far.with(a);
      phi[a] += t.v(next) - (so_far.empty() ? 0.0 : t.v(so_far));
      so_far = next;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& p : phi) p /= count;
  return phi;
}

}  // namespace

TEST_CASE("worked example table") {
  const CharacteristicTable t = CharacteristicTable::from_values(0.76, 0.24, 0.01, 0.88);
  CHECK(t.v(Coalition::singleton(0)) == 0.0);
  CHECK(t.v(Coalition::grand()) == 0.88);
  const ShapleyVector s = shapley(t);
  CHECK(s.phi[0] == doctest::Approx(0.456666666666).epsilon(1e-9));
  CHECK(s.phi[1] == doctest::Approx(0.341666666666).epsilon(1e-9));
  CHECK(s.phi[2] == doctest::Approx(0.081666666666).epsilon(1e-9));
  const BestCoalition b = best_coalition_for(t, 0);
  CHECK(b.coalition == k12);
  CHECK(b.per_capita == doctest::Approx(0.38));
  CHECK_FALSE(b.degenerate);
  CHECK(best_coalition_for(t, 1).coalition == k12);
  CHECK(best_coalition_for(t, 2).coalition == Coalition::grand());
  CHECK(t.per_capita(Coalition::grand()) == doctest::Approx(0.88 / 3));
}

TEST_CASE("per-capita welfare arithmetic") {
  CHECK(6.53 - 5.65 == doctest::Approx(0.88));
  CHECK(3.0 - 1.42 == doctest::Approx(1.58));
}

TEST_CASE("Shapley axioms on constructed tables") {
  const ShapleyVector sym = shapley(CharacteristicTable::from_values(0.3, 0.3, 0.3, 0.9));
  for (double p : sym.phi) CHECK(p == doctest::Approx(0.3));

  // agent 3 is a dummy: it adds nothing to any coalition
  const ShapleyVector dummy = shapley(CharacteristicTable::from_values(0.5, 0.0, 0.0, 0.5));
  CHECK(dummy.phi[2] == doctest::Approx(0.0));
  CHECK(dummy.phi[0] == doctest::Approx(0.25));

  CharacteristicTable partial;
  CHECK_THROWS_AS(shapley(partial), ContractViolation);
}

TEST_CASE("subset formula equals ordering enumeration on random tables") {
  RngStream rng(8);
  for (int k = 0; k < 1000; ++k) {
    const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
    const double g = std::max({a, b, c}) + rng.uniform();
    const CharacteristicTable t = CharacteristicTable::from_values(a, b, c, g);
    const ShapleyVector s = shapley(t);
    const auto o = shapley_by_orderings(t);
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(s.phi[i] - o[i]) <= 1e-12);
      sum += s.phi[i];
    }
    CHECK(std::abs(sum - g) <= 1e-12);
  }
}

TEST_CASE("generated tables are zero-normalised, nonnegative and super-additive") {
  RngStream rng(9);
  for (int k = 0; k < 1000; ++k) {
    const Instance inst = generate_instance(rng);
    const CharacteristicTable t = characteristic_table(inst);
    REQUIRE(t.complete());
    for (int a = 0; a < kNumAgents; ++a) CHECK(t.v(Coalition::singleton(a)) == 0.0);
    for (int m1 = 1; m1 < kNumCoalitions; ++m1) {
      const Coalition c1(static_cast<std::uint8_t>(m1));
      CHECK(t.v(c1) >= 0.0);
      for (int m2 = 1; m2 < kNumCoalitions; ++m2) {
        const Coalition c2(static_cast<std::uint8_t>(m2));
        if (!c1.disjoint(c2)) continue;
        CHECK(t.v(c1 | c2) >= t.v(c1) + t.v(c2) - 1e-12);
      }
    }
  }
}

TEST_CASE("gain equals welfare difference and cost difference") {
  RngStream rng(10);
  for (int k = 0; k < 50; ++k) {
    const Instance inst = generate_instance(rng);
    const CharacteristicTable t = characteristic_table(inst);
    double pre_welfare = 0.0;
    for (int a = 0; a < kNumAgents; ++a) {
      const double solo = mdvrp_exact(inst, Coalition::singleton(a)).total_cost;
      CHECK(pre_collab_profit(inst, a) == doctest::Approx(3.0 - solo).epsilon(1e-12));
      CHECK(t.pre_profit[a] == pre_collab_profit(inst, a));
      pre_welfare += t.pre_profit[a];
    }
    double solo_costs = 0.0;
    for (int a = 0; a < kNumAgents; ++a) solo_costs += 3.0 - t.pre_profit[a];
    CHECK(pre_welfare == doctest::Approx(9.0 - solo_costs));
    for (Coalition c : {k12, k13, k23, Coalition::grand()}) {
      double pre = 0.0, solo = 0.0;
      for (int a : c.members()) {
        pre += t.pre_profit[a];
        solo += 3.0 - t.pre_profit[a];
      }
      const double by_welfare = t.post_welfare[c.mask()] - pre;
      const double by_cost = solo - mdvrp_exact(inst, c).total_cost;
      CHECK(std::abs(by_welfare - by_cost) <= 1e-9);
      CHECK(std::abs(collaboration_gain(inst, c) - t.v(c)) <= 1e-12);
    }
  }
}

TEST_CASE("mirror-symmetric instance gives equal pair values") {
  // customers of each agent placed at the same offsets around its depot
  Instance inst;
  const std::array<std::array<double, 2>, 3> offsets{{{0.05, 0.0}, {0.0, 0.05}, {-0.05, 0.0}}};
  for (int a = 0; a < kNumAgents; ++a) {
    inst.radii[a] = 0.3;
    inst.deliveries[a] = Location{kDepotCoordinates[a][0], kDepotCoordinates[a][1], a + 1, true};
    for (int k = 0; k < 3; ++k) {
      inst.deliveries[Instance::customer_row(a, k)] =
          Location{kDepotCoordinates[a][0] + offsets[k][0], kDepotCoordinates[a][1] + offsets[k][1], a + 1, false};
    }
  }
  const CharacteristicTable t = characteristic_table(inst);
  CHECK(t.v(k12) == doctest::Approx(t.v(k13)).epsilon(1e-6));
  CHECK(t.v(k12) == doctest::Approx(t.v(k23)).epsilon(1e-6));
}

TEST_CASE("best coalition agrees with a per-capita scan") {
  RngStream rng(13);
  int degenerate = 0;
  for (int k = 0; k < 512; ++k) {
    const CharacteristicTable t = characteristic_table(generate_instance(rng));
    for (int a = 0; a < kNumAgents; ++a) {
      Coalition best;
      double best_pc = -1.0;
      // smaller coalitions first, then by mask, so strict improvement keeps the tie rule
      for (int size = 2; size <= 3; ++size) {
        for (int m = 1; m < kNumCoalitions; ++m) {
          const Coalition c(static_cast<std::uint8_t>(m));
          if (c.size() != size || !c.contains(a)) continue;
          if (t.per_capita(c) > best_pc) {
            best_pc = t.per_capita(c);
            best = c;
          }
        }
      }
      const BestCoalition b = best_coalition_for(t, a);
      if (best_pc == 0.0) {
        CHECK(b.degenerate == t.degenerate());
        if (b.degenerate) CHECK(b.coalition == Coalition::grand());
        continue;
      }
      CHECK(b.coalition == best);
      CHECK(b.per_capita == best_pc);
    }
    degenerate += t.degenerate();
  }
  CHECK(degenerate < 40);
}

TEST_CASE("dominant grand coalition and degenerate tables") {
  const CharacteristicTable t = CharacteristicTable::from_values(0.1, 0.1, 0.1, 0.9);
  for (int a = 0; a < kNumAgents; ++a) CHECK(best_coalition_for(t, a).coalition == Coalition::grand());
  const CharacteristicTable z = CharacteristicTable::from_values(0, 0, 0, 0);
  CHECK(z.degenerate());
  const BestCoalition b = best_coalition_for(z, 1);
  CHECK(b.degenerate);
  CHECK(b.coalition == Coalition::grand());
  CHECK(b.per_capita == 0.0);
}
