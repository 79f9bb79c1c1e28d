#pragma once
#include <optional>
#include <stdexcept>

#include "hss/ring.hpp"
#include "hss/transport.hpp"

// Additive secret sharing and masked wires.
//   <x>_0 + <x>_1 = x  (mod 2^l)          additive share
//   x_hat = x + r_in                      masked wire, r_in the input offset
// Offsets are identified by a bundle-scoped 64-bit counter; wire/key pairing
// is checked at every gate entry.
namespace hss {

constexpr u64 kNoOffset = 0;

struct AdditiveShare {
  int party = 0;
  RingTensor val;

  AdditiveShare() = default;
  AdditiveShare(int p, RingTensor v) : party(p), val(std::move(v)) {}
};

inline std::pair<AdditiveShare, AdditiveShare> split(const RingTensor& x, Prg& g) {
  RingTensor a(x.cfg, x.shape, x.scale_bits);
  a.random_fill(g);
  RingTensor b = x;
  b.sub_(a);
  return {AdditiveShare(0, std::move(a)), AdditiveShare(1, std::move(b))};
}

inline RingTensor restore(const AdditiveShare& a, const AdditiveShare& b) {
  if (a.party == b.party) throw std::invalid_argument("restore: same party");
  RingTensor out = a.val;
  out.add_(b.val);
  return out;
}

// A wire carrying x masked by the offset bound to offset_id. Before opening,
// each party holds a share of x_hat; after opening, x_hat itself is public.
struct MaskedWire {
  int party = 0;
  u64 offset_id = kNoOffset;
  RingTensor share;                       // share of x_hat
  std::optional<RingTensor> public_hat;   // set once opened

  bool opened() const { return public_hat.has_value(); }
};

// Share of an input offset r, distributed by the dealer alongside keys that
// need it in the clear ("double split").
struct OffsetShare {
  u64 offset_id = kNoOffset;
  RingTensor share;
};

// x (additive) + <r> (offset share) -> wire of x masked by r. Zero-cost.
inline MaskedWire to_masked(const AdditiveShare& x, const OffsetShare& r) {
  MaskedWire w;
  w.party = x.party;
  w.offset_id = r.offset_id;
  w.share = x.val;
  w.share.add_(r.share);
  return w;
}

// Forget the output offset: a wire whose offset was never applied is already
// an additive sharing of the value.
inline AdditiveShare drop_output_offset(const MaskedWire& w) {
  return AdditiveShare(w.party, w.share);
}

// Open a masked wire: both parties exchange their shares of x_hat (2l bits per
// element total). Party 0 sends first so large tensors cannot deadlock TCP.
inline const RingTensor& open_masked(MaskedWire& w, Channel& ch, u32 label) {
  if (w.opened()) return *w.public_hat;
  if (ch.party == 0) {
    ch.send_frame(MsgType::OPEN, label, w.share.data);
    Frame f = ch.recv_frame(MsgType::OPEN);
    RingTensor pub = w.share;
    for (size_t i = 0; i < pub.data.size(); i++)
      pub.data[i] = pub.cfg.reduce(pub.data[i] + f.payload[i]);
    w.public_hat = std::move(pub);
  } else {
    Frame f = ch.recv_frame(MsgType::OPEN);
    ch.send_frame(MsgType::OPEN, label, w.share.data);
    RingTensor pub = w.share;
    for (size_t i = 0; i < pub.data.size(); i++)
      pub.data[i] = pub.cfg.reduce(pub.data[i] + f.payload[i]);
    w.public_hat = std::move(pub);
  }
  ch.meter.mark_round(label);
  return *w.public_hat;
}

enum class TruncMode { Local, Interactive };

// Local truncation: each party arithmetic-shifts its own share. Free, but the
// result can be off by one LSB from carry loss and, with probability about
// |x| / 2^l, off by a wrap of 2^(l-bits).
inline void trunc_local(AdditiveShare& x, int bits) {
  if (bits == 0) return;
  for (auto& v : x.val.data) v = x.val.cfg.arith_shift(v, bits);
}

// Interactive truncation, l bits per element total. The channel's shared
// correlation stream stands in for dealer-made pairs (r, floor(r / 2^bits)):
// both endpoints draw the same pseudorandom records and keep their own halves.
// Party 1 sends its share of c = (x + 2^(l-2)) + r; c never wraps because
// r < 2^(l-1) and the offset keeps the sum below 2^(l-1) + 2^(l-1). Party 0
// floors the public c. Result is floor(x / 2^bits) + eps, eps in {0,1}, with
// E[result] exact (stochastic rounding); eps = 0 whenever x is a multiple of
// 2^bits. Requires |x| < 2^(l-2).
inline void trunc_interactive(AdditiveShare& x, int bits, Channel& ch, u32 label) {
  RingConfig cfg = x.val.cfg;
  if (bits == 0 || cfg.l < 3) return;
  size_t n = x.val.data.size();
  u64 half_mask = (cfg.l == 64) ? (~0ULL >> 1) : ((1ULL << (cfg.l - 1)) - 1);
  u64 D = 1ULL << (cfg.l - 2);
  std::vector<u64> r0(n), r1(n), rp0(n), rp1(n);
  Prg& st = *ch.trunc_stream;
  for (size_t i = 0; i < n; i++) {
    u64 r = st.next_u64() & half_mask;   // correlation value, [0, 2^(l-1))
    u64 a = cfg.reduce(st.next_u64());
    u64 b = cfg.reduce(st.next_u64());
    r0[i] = a;              r1[i] = cfg.reduce(r - a);
    u64 rp = r >> bits;
    rp0[i] = b;             rp1[i] = cfg.reduce(rp - b);
  }
  if (ch.party == 1) {
    std::vector<u64> c1(n);
    for (size_t i = 0; i < n; i++) c1[i] = cfg.reduce(x.val.data[i] + r1[i]);
    ch.send_frame(MsgType::TRUNC, label, c1);
    for (size_t i = 0; i < n; i++) x.val.data[i] = cfg.reduce(0 - rp1[i]);
  } else {
    Frame f = ch.recv_frame(MsgType::TRUNC);
    u64 Dp = D >> bits;
    for (size_t i = 0; i < n; i++) {
      u64 c = cfg.reduce(x.val.data[i] + D + r0[i] + f.payload[i]);
      x.val.data[i] = cfg.reduce((c >> bits) - rp0[i] - Dp);
    }
  }
  ch.meter.mark_round(label);
}

inline void trunc(AdditiveShare& x, int bits, Channel& ch, u32 label, TruncMode m) {
  if (m == TruncMode::Interactive)
    trunc_interactive(x, bits, ch, label);
  else
    trunc_local(x, bits);
}

}  // namespace hss
