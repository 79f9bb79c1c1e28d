#pragma once
#include <cstdint>
#include <cstddef>
#include <array>
#include <vector>

// Deterministic randomness: Speck-128/128 in counter mode. Every secret in the
// system (dealer masks, DCF seeds, truncation correlations) is derived from a
// seed through domain-separated sub-keys, so a fixed seed reproduces bundles
// and transcripts byte for byte.
namespace hss {

using u8 = uint8_t;
using u16 = uint16_t;
using u32 = uint32_t;
using u64 = uint64_t;
using i64 = int64_t;

struct Block {
  u64 x = 0, y = 0;
  bool operator==(const Block&) const = default;
};

inline u64 rotl64(u64 v, int r) { return (v << r) | (v >> (64 - r)); }
inline u64 rotr64(u64 v, int r) { return (v >> r) | (v << (64 - r)); }

// Speck-128/128, 32 rounds.
struct Speck {
  std::array<u64, 32> rk{};

  explicit Speck(Block key) {
    u64 a = key.x, b = key.y;  // key = (b, a) per the reference ordering
    rk[0] = a;
    for (u64 i = 0; i + 1 < 32; i++) {
      b = (rotr64(b, 8) + a) ^ i;
      a = rotl64(a, 3) ^ b;
      rk[i + 1] = a;
    }
  }

  Block encrypt(Block pt) const {
    u64 x = pt.x, y = pt.y;
    for (int i = 0; i < 32; i++) {
      x = (rotr64(x, 8) + y) ^ rk[i];
      y = rotl64(y, 3) ^ x;
    }
    return {x, y};
  }
};

// Counter-mode stream over a Speck key.
struct Prg {
  Speck cipher;
  u64 ctr = 0;
  Block buf{};
  int have = 0;  // unread words in buf

  explicit Prg(Block seed) : cipher(seed) {}

  u64 next_u64() {
    if (have == 0) {
      buf = cipher.encrypt({ctr++, 0});
      have = 2;
    }
    u64 v = (have == 2) ? buf.x : buf.y;
    have--;
    return v;
  }

  Block next_block() { return cipher.encrypt({ctr++, 1}); }

  void fill(u64* out, size_t n) {
    for (size_t i = 0; i < n; i++) out[i] = next_u64();
  }

  // Domain-separated child seed; independent streams for sub-components.
  Block derive(u64 tag) const { return cipher.encrypt({tag, 0x6465726976ULL}); }
};

}  // namespace hss
