#pragma once
#include <vector>

#include "hss/ring.hpp"
#include "hss/rng.hpp"

// Distributed comparison function: two keys that together evaluate
//   f(x) = beta if x < alpha else 0   over n-bit inputs, output in Z_{2^l},
// each key alone revealing nothing about alpha. GGM tree construction with a
// 128-bit seed-expanding PRG; key size O(lambda * n).
namespace hss {

struct DcfCw {
  Block s;      // seed correction
  u64 v = 0;    // value correction
  u8 tl = 0, tr = 0;
};

struct DcfKey {
  int nbits = 64;
  RingConfig cfg;
  Block root;
  std::vector<DcfCw> cw;  // nbits entries
  u64 cw_last = 0;
};

std::pair<DcfKey, DcfKey> dcf_gen(RingConfig cfg, int nbits, u64 alpha, u64 beta,
                                  Prg& rng);

// Additive share of f(x); party 0 plus party 1 equals f(x) mod 2^l.
u64 dcf_eval(int party, const DcfKey& key, u64 x);

// Sign-test key: given public x_hat = x + r, shares of beta * 1{x < 0}
// (strict; x == 0 contributes 0). Two DCFs plus a constant share.
struct SignTestKey {
  DcfKey lo, hi;
  u64 const_share = 0;  // this party's share of the wrap constant
};

std::pair<SignTestKey, SignTestKey> sign_test_gen(RingConfig cfg, u64 r_in,
                                                  u64 beta, Prg& rng);
u64 sign_test_eval(int party, const SignTestKey& k, u64 x_hat);

// Flat serialization used by the bundle format: all words of a key in a fixed
// order (root, per-level cw, final cw).
std::vector<u64> dcf_flatten(const DcfKey& k);
DcfKey dcf_unflatten(RingConfig cfg, int nbits, const std::vector<u64>& w,
                     size_t& pos);

}  // namespace hss
