// Copyright 2026 The CENAS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CENAS_RNG_HPP_
#define CENAS_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace cenas {

/// Seeded random stream. Every stochastic choice in the library draws from
/// one of these; the same seed always yields the same sequence of draws.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next() {
    ++counter_;
    return engine_();
  }

  /// Uniform in [lo, hi).
  double uniform(double lo = 0.0, double hi = 1.0) {
    double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    ++counter_;
    return dist(engine_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> dist(mean, stddev);
    ++counter_;
    return dist(engine_);
  }

  /// Derives an independent child stream; consumes exactly one draw.
  RngStream split() { return RngStream(mix(next() ^ 0x9e3779b97f4a7c15ULL)); }

  /// Full engine state, for checkpoints.
  std::string serialize() const {
    std::ostringstream os;
    os << seed_ << ' ' << counter_ << ' ' << engine_;
    return os.str();
  }

  static RngStream deserialize(const std::string& text) {
    std::istringstream is(text);
    RngStream r;
    is >> r.seed_ >> r.counter_ >> r.engine_;
    return r;
  }

  friend bool operator==(const RngStream& a, const RngStream& b) {
    return a.seed_ == b.seed_ && a.counter_ == b.counter_ &&
           a.engine_ == b.engine_;
  }

 private:
  // splitmix64 finalizer, so nearby seeds give unrelated streams
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace cenas

#endif  // CENAS_RNG_HPP_
