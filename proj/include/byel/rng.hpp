#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace byel {

// splitmix64; used to derive stream keys from (seed, tag, indices...) so that
// every epoch / step / image owns an independent, checkpoint-resumable stream.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_key(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t head, Rest... rest) {
  return mix_key(splitmix64(seed ^ (head + 0x6a09e667f3bcc909ULL)), rest...);
}

// Stream tags keeping derived RNG streams disjoint by purpose.
namespace rngtag {
constexpr std::uint64_t kInit = 0x11;
constexpr std::uint64_t kGlyph = 0x22;
constexpr std::uint64_t kCorrupt = 0x33;
constexpr std::uint64_t kShuffle = 0x44;
constexpr std::uint64_t kAugment = 0x55;
constexpr std::uint64_t kCompareSeed = 0x66;
}  // namespace rngtag

// mt19937_64 with hand-rolled uniform/normal mappings. std::uniform_*
// distributions are implementation-defined; these are pinned so that outputs
// are identical on any platform.
class DetRng {
 public:
  explicit DetRng(std::uint64_t key) : gen_(key) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi] inclusive
  int uniform_int(int lo, int hi) {
    if (hi <= lo) return lo;
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
  }

  // Box-Muller; no rejection, fixed draw count.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <typename It>
  void shuffle(It first, It last) {
    auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      auto j = static_cast<decltype(i)>(gen_() % static_cast<std::uint64_t>(i + 1));
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace byel
