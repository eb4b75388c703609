#pragma once

#include <array>
#include <optional>

#include "collab/coalition.hpp"
#include "collab/instance.hpp"
#include "collab/routing.hpp"

namespace collab {

inline constexpr double kRevenuePerDelivery = 1.0;

// Gains below this are floating-point residue from re-summing the same
// partition along different paths, and are reported as exactly zero.
inline constexpr double kZeroGainTolerance = 1e-12;

/// Collaboration gain v(C) for every coalition of one instance, plus the
/// routing quantities it was derived from. Index by Coalition::mask().
struct CharacteristicTable {
  std::array<double, kNumCoalitions> value{};
  std::array<bool, kNumCoalitions> known{};
  std::array<double, kNumAgents> pre_profit{};
  std::array<double, kNumCoalitions> post_welfare{};  // revenue minus joint routing cost

  double v(Coalition c) const;
  double per_capita(Coalition c) const { return c.empty() ? 0.0 : v(c) / c.size(); }
  bool complete() const;
  bool degenerate() const { return v(Coalition::grand()) == 0.0; }

  /// Table holding only the given nonempty-coalition values; singletons are 0.
  static CharacteristicTable from_values(double v12, double v13, double v23, double v123);
};

struct ShapleyVector {
  std::array<double, kNumAgents> phi{};
};

struct BestCoalition {
  Coalition coalition;
  double per_capita = 0.0;
  bool degenerate = false;
};

/// Revenue of the agent's own deliveries minus its solo tour cost.
double pre_collab_profit(const Instance& instance, int agent);

/// Welfare gain of serving C's customers jointly instead of separately.
double collaboration_gain(const Instance& instance, Coalition coalition);

CharacteristicTable characteristic_table(const Instance& instance);

ShapleyVector shapley(const CharacteristicTable& table);

/// Coalition containing `agent` (size >= 2) with the largest per-capita
/// value; ties go to the smaller coalition, then the smaller mask. If every
/// candidate is worth zero the grand coalition is returned, flagged.
BestCoalition best_coalition_for(const CharacteristicTable& table, int agent);

}  // namespace collab
