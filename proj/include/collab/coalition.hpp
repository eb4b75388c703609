#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "collab/instance.hpp"

namespace collab {

/// Subset of the agents as a bitmask; bit a is agent a (0-based).
class Coalition {
 public:
  constexpr Coalition() = default;
  constexpr explicit Coalition(std::uint8_t mask) : mask_(mask) {}

  static constexpr Coalition singleton(int agent) { return Coalition(std::uint8_t(1u << agent)); }
  static constexpr Coalition grand() { return Coalition(std::uint8_t((1u << kNumAgents) - 1)); }
  static Coalition from_members(const std::vector<int>& agents);
  static Coalition from_flags(bool a0, bool a1, bool a2);

  constexpr std::uint8_t mask() const { return mask_; }
  constexpr int size() const { return std::popcount(static_cast<unsigned>(mask_)); }
  constexpr bool empty() const { return mask_ == 0; }
  constexpr bool contains(int agent) const { return (mask_ >> agent) & 1u; }
  constexpr bool is_subset_of(Coalition other) const { return (mask_ & ~other.mask_) == 0; }
  constexpr bool disjoint(Coalition other) const { return (mask_ & other.mask_) == 0; }
  constexpr Coalition operator|(Coalition o) const { return Coalition(std::uint8_t(mask_ | o.mask_)); }
  constexpr Coalition with(int agent) const { return *this | singleton(agent); }
  constexpr Coalition without(int agent) const {
    return Coalition(std::uint8_t(mask_ & ~(1u << agent)));
  }

  std::vector<int> members() const;
  std::string to_string() const;  // 1-based, e.g. "{1,2}"

  constexpr bool operator==(const Coalition&) const = default;

 private:
  std::uint8_t mask_ = 0;
};

inline constexpr int kNumCoalitions = 1 << kNumAgents;  // including the empty set

}  // namespace collab
