#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace coficot {

/// Logistic sigmoid. Written via tanh so the acceptance oracle's
/// 1/(1+exp(-x)) form is an independent evaluation route.
inline double logistic(double x) {
  return 0.5 * (1.0 + std::tanh(0.5 * x));
}

/// Count whitespace-separated words. This is the token definition used by
/// the mock backends; it keeps usage numbers invariant to digit width.
inline long count_tokens(std::string_view text) {
  long n = 0;
  bool in_word = false;
  for (char c : text) {
    bool ws = (c == ' ' || c == '\t' || c == '\n' || c == '\r');
    if (!ws && !in_word) ++n;
    in_word = !ws;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Seed derivation
//
// Every random decision in the system flows from an explicit 64-bit seed
// derived by mixing the run/world seed with stable identifiers (question id,
// sample index, purpose tag). No shared generators, so concurrent workers
// and repeated runs agree bit for bit.
// ---------------------------------------------------------------------------

inline std::uint64_t mix_seed(std::uint64_t h, std::uint64_t v) {
  // splitmix64 finalizer over an xor-combine
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  std::uint64_t z = h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_text(std::string_view s) {
  // FNV-1a, fixed independent of std::hash so runs are portable
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::string_view id,
                                 std::uint64_t tag,
                                 std::uint64_t index = 0) {
  return mix_seed(mix_seed(mix_seed(base, hash_text(id)), tag), index);
}

/// Small deterministic generator (splitmix64 stream). Used instead of the
/// standard distributions so mock behavior is identical across standard
/// library implementations.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double real() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [lo, hi], inclusive.
  long range(long lo, long hi) {
    auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<long>(next() % span);
  }

  bool bernoulli(double p) { return real() < p; }
};

/// Run fn(i) for i in [0, n) on up to max_workers threads. Results are
/// indexed, never interleaved, so call sites stay deterministic.
inline void parallel_for_index(std::size_t n,
                               unsigned max_workers,
                               const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  unsigned workers = max_workers == 0 ? 1 : max_workers;
  if (workers == 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::atomic<std::size_t> next{0};
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace coficot
