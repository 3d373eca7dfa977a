#include "dmab/rng.hpp"

#include <algorithm>
#include <stdexcept>

namespace dmab {
namespace {

// SplitMix64 finalizer; full-period mixing of a 64-bit counter.
std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t RandomStream::raw() {
  std::uint64_t h = splitmix(seed_);
  h = splitmix(h ^ stream_);
  h = splitmix(h ^ counter_);
  ++counter_;
  return h;
}

double RandomStream::uniform() {
  // 53 mantissa bits -> [0, 1).
  return static_cast<double>(raw() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RandomStream::below: n must be positive");
  // Rejection-free modulo is fine here; streams are not cryptographic and the
  // bias at n << 2^64 is far below every tolerance in use.
  return raw() % n;
}

double RandomStream::beta_integer(int a1, int a0) {
  if (a1 <= 0 || a0 <= 0)
    throw std::invalid_argument("beta_integer: parameters must be positive integers");
  const int n = a1 + a0 - 1;
  std::vector<double> u(static_cast<std::size_t>(n));
  for (auto& v : u) v = uniform();
  std::nth_element(u.begin(), u.begin() + (a1 - 1), u.end());
  return u[static_cast<std::size_t>(a1 - 1)];
}

std::size_t RandomStream::categorical(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (total <= 0.0) throw std::invalid_argument("categorical: weights must sum to > 0");
  double x = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    x -= weights[i];
    if (x < 0.0) return i;
  }
  return weights.size() - 1;
}

std::uint64_t mix_ids(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  std::uint64_t h = splitmix(a);
  h = splitmix(h ^ (b + 0x632be59bd9b4e019ULL));
  h = splitmix(h ^ (c + 0x9e3779b97f4a7c15ULL));
  h = splitmix(h ^ (d + 0xd1b54a32d192ed03ULL));
  return h;
}

std::uint64_t hash_label(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix(h);
}

}  // namespace dmab
