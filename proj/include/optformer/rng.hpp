// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "optformer/tensor.hpp"

namespace optformer {

// Deterministic RNG with hand-rolled transforms. std:: distributions are
// implementation-defined, so all sampling goes through this to keep runs
// bit-reproducible for a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // splitmix64 warmup so nearby seeds decorrelate
    for (int i = 0; i < 4; ++i) next_u64();
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  std::int64_t range(std::int64_t n) {
    return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // standard normal via Box-Muller (two uniforms per draw, no cached spare)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  Tensor normal_tensor(std::vector<int> shape, double stddev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = normal() * stddev;
    return t;
  }

  // derive an independent stream, e.g. per purpose ("eval", "init", ...)
  Rng fork(std::uint64_t salt) { return Rng(next_u64() ^ (salt * 0x9e3779b97f4a7c15ULL)); }

 private:
  std::uint64_t state_;
};

}  // namespace optformer
