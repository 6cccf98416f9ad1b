#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace roughvol {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Normal variates for one path. The stream is a pure function of
/// (master seed, path index), so any partition of the path range into batches
/// or threads reproduces the same draws for every index.
class PathStream {
 public:
  PathStream(std::uint64_t master_seed, std::uint64_t path_index) {
    const std::uint64_t a = splitmix64(master_seed);
    const std::uint64_t b = splitmix64(a ^ splitmix64(path_index + 0x632BE59BD9B4E019ull));
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    engine_.seed(seq);
  }

  double normal() { return normal_(engine_); }

  void fill_normals(std::span<double> out, double sign = 1.0) {
    for (double& v : out) v = sign * normal_(engine_);
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace roughvol
