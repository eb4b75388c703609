#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace collab {

/// Seeded random stream. Two streams built from the same (seed, stream id)
/// produce identical draw sequences; `split` derives independent children.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  RngStream split(std::uint64_t child) const;
  RngStream split(std::string_view label) const;

  std::mt19937_64& engine() { return engine_; }

  double uniform();                       // [0, 1)
  int uniform_int(int lo, int hi);        // inclusive
  bool bernoulli(double p);
  double gamma(double shape);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view s);

}  // namespace collab
