#include "hss/dcf.hpp"

#include <stdexcept>

namespace hss {

namespace {

struct NodeExp {
  Block sl, sr;
  u64 vl, vr;
  u8 tl, tr;
};

// Expand one node seed into two child seeds, two value words and two control
// bits. Three Speck calls keyed by the seed itself.
NodeExp expand(Block s) {
  Speck c(s);
  Block b0 = c.encrypt({0, 0});
  Block b1 = c.encrypt({1, 0});
  Block b2 = c.encrypt({2, 0});
  NodeExp e;
  e.tl = (u8)(b0.y & 1);
  e.tr = (u8)(b1.y & 1);
  b0.y &= ~1ULL;
  b1.y &= ~1ULL;
  e.sl = b0;
  e.sr = b1;
  e.vl = b2.x;
  e.vr = b2.y;
  return e;
}

inline Block bxor(Block a, Block b) { return {a.x ^ b.x, a.y ^ b.y}; }

}  // namespace

std::pair<DcfKey, DcfKey> dcf_gen(RingConfig cfg, int nbits, u64 alpha, u64 beta,
                                  Prg& rng) {
  DcfKey k0, k1;
  k0.nbits = k1.nbits = nbits;
  k0.cfg = k1.cfg = cfg;
  k0.root = rng.next_block();
  k1.root = rng.next_block();
  k0.cw.resize(nbits);

  Block s0 = k0.root, s1 = k1.root;
  u8 t0 = 0, t1 = 1;
  u64 V = 0;  // running correction of party-1-minus-party-0 value sums

  for (int i = 0; i < nbits; i++) {
    NodeExp e0 = expand(s0), e1 = expand(s1);
    int ai = (int)((alpha >> (nbits - 1 - i)) & 1);
    // Keep: the path bit of alpha. Lose: the sibling that leaves the path.
    Block s0l = ai ? e0.sl : e0.sr;  // lose side seeds
    Block s1l = ai ? e1.sl : e1.sr;
    u64 v0l = ai ? e0.vl : e0.vr;
    u64 v1l = ai ? e1.vl : e1.vr;
    u64 v0k = ai ? e0.vr : e0.vl;
    u64 v1k = ai ? e1.vr : e1.vl;

    DcfCw cw;
    cw.s = bxor(s0l, s1l);
    i64 sign = t1 ? -1 : 1;
    u64 vcw = cfg.reduce((u64)sign * cfg.reduce(v1l - v0l - V));
    if (ai == 1) {
      // Inputs diverging to the left of the path are below alpha: add beta.
      vcw = cfg.reduce(vcw + (u64)sign * beta);
    }
    cw.v = vcw;
    cw.tl = (u8)(e0.tl ^ e1.tl ^ ai ^ 1);
    cw.tr = (u8)(e0.tr ^ e1.tr ^ ai);
    k0.cw[i] = cw;

    V = cfg.reduce(V - v1k + v0k + (u64)sign * vcw);

    Block s0k = ai ? e0.sr : e0.sl;
    Block s1k = ai ? e1.sr : e1.sl;
    u8 t0k = ai ? e0.tr : e0.tl;
    u8 t1k = ai ? e1.tr : e1.tl;
    u8 tcwk = ai ? cw.tr : cw.tl;
    s0 = t0 ? bxor(s0k, cw.s) : s0k;
    s1 = t1 ? bxor(s1k, cw.s) : s1k;
    t0 = (u8)(t0k ^ (t0 & tcwk));
    t1 = (u8)(t1k ^ (t1 & tcwk));
  }
  i64 sign = t1 ? -1 : 1;
  k0.cw_last = cfg.reduce((u64)sign * cfg.reduce(s1.x - s0.x - V));
  k1.cw = k0.cw;
  k1.cw_last = k0.cw_last;
  return {k0, k1};
}

u64 dcf_eval(int party, const DcfKey& k, u64 x) {
  RingConfig cfg = k.cfg;
  Block s = k.root;
  u8 t = (u8)party;
  u64 V = 0;
  i64 sign = party ? -1 : 1;
  for (int i = 0; i < k.nbits; i++) {
    NodeExp e = expand(s);
    const DcfCw& cw = k.cw[i];
    if (t) {
      e.sl = bxor(e.sl, cw.s);
      e.sr = bxor(e.sr, cw.s);
      e.tl ^= cw.tl;
      e.tr ^= cw.tr;
    }
    int xi = (int)((x >> (k.nbits - 1 - i)) & 1);
    u64 v = xi ? e.vr : e.vl;
    V = cfg.reduce(V + (u64)sign * cfg.reduce(v + (t ? cw.v : 0)));
    // note: v correction rides on the pre-correction expansion values
    s = xi ? e.sr : e.sl;
    t = xi ? e.tr : e.tl;
  }
  V = cfg.reduce(V + (u64)sign * cfg.reduce(s.x + (t ? k.cw_last : 0)));
  return V;
}

std::pair<SignTestKey, SignTestKey> sign_test_gen(RingConfig cfg, u64 r_in,
                                                  u64 beta, Prg& rng) {
  // x < 0 iff x in [2^(l-1), 2^l), i.e. x_hat in [a, a + 2^(l-1)) mod 2^l
  // with a = 2^(l-1) + r. Wrapped-interval membership from two DCFs:
  //   1{x_hat in [a,b)} = 1{x_hat < b} - 1{x_hat < a} + (a >= b ? 1 : 0).
  u64 half = 1ULL << (cfg.l - 1);
  u64 a = cfg.reduce(half + r_in);
  u64 b = cfg.reduce(r_in);
  auto [lo0, lo1] = dcf_gen(cfg, cfg.l, a, beta, rng);
  auto [hi0, hi1] = dcf_gen(cfg, cfg.l, b, beta, rng);
  u64 wrap = (a >= b) ? beta : 0;
  u64 c0 = cfg.reduce(rng.next_u64());
  u64 c1 = cfg.reduce(wrap - c0);
  SignTestKey k0{lo0, hi0, c0}, k1{lo1, hi1, c1};
  return {k0, k1};
}

u64 sign_test_eval(int party, const SignTestKey& k, u64 x_hat) {
  RingConfig cfg = k.lo.cfg;
  u64 below_b = dcf_eval(party, k.hi, x_hat);
  u64 below_a = dcf_eval(party, k.lo, x_hat);
  return cfg.reduce(below_b - below_a + k.const_share);
}

std::vector<u64> dcf_flatten(const DcfKey& k) {
  std::vector<u64> w;
  w.reserve(2 + 4 * k.cw.size() + 1);
  w.push_back(k.root.x);
  w.push_back(k.root.y);
  for (const auto& c : k.cw) {
    w.push_back(c.s.x);
    w.push_back(c.s.y);
    w.push_back(c.v);
    w.push_back(((u64)c.tl) | ((u64)c.tr << 1));
  }
  w.push_back(k.cw_last);
  return w;
}

DcfKey dcf_unflatten(RingConfig cfg, int nbits, const std::vector<u64>& w,
                     size_t& pos) {
  DcfKey k;
  k.cfg = cfg;
  k.nbits = nbits;
  if (pos + 3 + 4 * (size_t)nbits > w.size())
    throw std::runtime_error("dcf_unflatten: short buffer");
  k.root = {w[pos], w[pos + 1]};
  pos += 2;
  k.cw.resize(nbits);
  for (int i = 0; i < nbits; i++) {
    k.cw[i].s = {w[pos], w[pos + 1]};
    k.cw[i].v = w[pos + 2];
    k.cw[i].tl = (u8)(w[pos + 3] & 1);
    k.cw[i].tr = (u8)((w[pos + 3] >> 1) & 1);
    pos += 4;
  }
  k.cw_last = w[pos++];
  return k;
}

}  // namespace hss
