#include "collab/rng.hpp"

namespace collab {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      engine_(splitmix64(seed ^ splitmix64(stream_id + 0x632BE59BD9B4E019ULL))) {}

RngStream RngStream::split(std::uint64_t child) const {
  return RngStream(seed_, splitmix64(stream_id_ * 0x9E3779B97F4A7C15ULL + child + 1));
}

RngStream RngStream::split(std::string_view label) const { return split(fnv1a(label)); }

double RngStream::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

int RngStream::uniform_int(int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(engine_);
}

bool RngStream::bernoulli(double p) { return uniform() < p; }

double RngStream::gamma(double shape) {
  return std::gamma_distribution<double>(shape, 1.0)(engine_);
}

}  // namespace collab
