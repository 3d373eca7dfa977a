#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dmab {

/// Counter-based random stream.  Every draw is a pure function of
/// (seed, stream id, counter), so per-trial and per-arm streams are
/// independent of evaluation order and trivially parallelizable.
class RandomStream {
 public:
  RandomStream() = default;
  RandomStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  /// Uniform draw in [0, 1).
  double uniform();

  /// Bernoulli draw with success probability p.
  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Beta(a1, a0) draw for positive integer parameters, via the order
  /// statistic of a1+a0-1 uniforms.
  double beta_integer(int a1, int a0);

  /// Index draw from a finite weight vector (weights need not be normalized).
  std::size_t categorical(const std::vector<double>& weights);

  std::uint64_t raw();

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
};

/// Stable 64-bit mix of several identifiers, used to derive stream ids.
std::uint64_t mix_ids(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
                      std::uint64_t d = 0);

/// Stable hash of a short string (for arm ids).
std::uint64_t hash_label(const std::string& s);

}  // namespace dmab
