#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace xfer {

// Counter-based randomness: every consumer derives its own stream key from
// (seed, tags...) so that generation order and scheduling never influence the
// values drawn. std:: distributions are avoided on purpose; their output is
// implementation-defined and would break byte-reproducibility of artifacts.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t key, std::uint64_t part) {
  std::uint64_t s = key ^ (part + 0x9e3779b97f4a7c15ull + (key << 6) + (key >> 2));
  return splitmix64(s);
}

template <typename... Parts>
std::uint64_t derive_key(std::uint64_t seed, Parts... parts) {
  std::uint64_t s = seed;
  std::uint64_t key = splitmix64(s);
  ((key = mix_key(key, static_cast<std::uint64_t>(parts))), ...);
  return key;
}

inline std::uint64_t double_bits(double x) {
  std::uint64_t u;
  std::memcpy(&u, &x, sizeof(u));
  return u;
}

// Stream tags keep independent consumers of the same seed decorrelated.
namespace rngtag {
inline constexpr std::uint64_t kVessel = 0x01;
inline constexpr std::uint64_t kNoise = 0x02;
inline constexpr std::uint64_t kLesion = 0x03;
inline constexpr std::uint64_t kTexture = 0x04;
inline constexpr std::uint64_t kSplit = 0x05;
inline constexpr std::uint64_t kReduce = 0x06;
inline constexpr std::uint64_t kInit = 0x07;
inline constexpr std::uint64_t kHeadInit = 0x08;
inline constexpr std::uint64_t kPretrain = 0x09;
inline constexpr std::uint64_t kFinetune = 0x0a;
}  // namespace rngtag

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), n > 0
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, used for content hashes (datasets, checkpoints, architectures).
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace xfer
