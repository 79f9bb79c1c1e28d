#pragma once
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hss/dcf.hpp"
#include "hss/ring.hpp"
#include "hss/shares.hpp"

// Trusted dealer: input-independent correlated randomness, generated offline
// from a seed and handed to the parties as per-party key bundles. Offsets are
// identified by a bundle-scoped counter so wires and keys can be paired and
// single-use enforced.
namespace hss {

struct DealerConfig {
  RingConfig cfg;
  Block seed{0x68737344656c7231ULL, 0x7365656400000001ULL};
};

// ---- gate keys (per party) -------------------------------------------------

struct BeaverKey {
  std::vector<u32> shape_a, shape_b;  // A: u x v, B: v x w (or equal shapes)
  RingTensor A, B, C;                 // shares; C = A*B (matmul or elementwise)
  bool elementwise = false;
};

struct MulKey {
  u64 in1 = kNoOffset, in2 = kNoOffset, out = kNoOffset;
  RingTensor r1, r2, q;  // shares of r1, r2, r1*r2 (elementwise)
  RingTensor rout;       // share of r_out; empty tensor if out == kNoOffset
};

struct SquareKey {
  u64 in = kNoOffset, out = kNoOffset;
  RingTensor rin, q;  // shares of r, r^2
  RingTensor rout;
};

struct PowerKey {
  u64 in = kNoOffset, out = kNoOffset;
  u64 n = 2;
  // Square chain for the even part plus muls folding in odd bits. segs[0].in
  // is the gate input offset.
  std::vector<SquareKey> segs;
  std::vector<MulKey> muls;
};

struct ExpKey {
  u64 in = kNoOffset, out = kNoOffset;
  int m = 8;
  RingTensor rin_split;  // share of r_in itself (recover <x> locally)
  std::vector<SquareKey> segs;  // chain offsets r^(1..m); segs carry rin splits
  std::vector<RingTensor> seg_splits;  // share of each segment input offset
  RingTensor rout;  // share of r_out; empty if none
};

struct LessThanKey {
  u64 in = kNoOffset;
  u64 beta = 0;  // payload (e.g. encode(1))
  std::vector<SignTestKey> elems;  // one sign test per element
};

struct RecipIter {
  SquareKey sq;   // input offset rho_{i-1}, additive out
  MulKey mul;     // (r_in, tau_i), additive out
  RingTensor rho_split;  // share of rho_{i-1}
  RingTensor tau_split;  // share of tau_i
};

struct RecipKey {
  u64 in = kNoOffset, out = kNoOffset;
  int m = 3;
  bool with_init = true;
  u64 y0_fx = 0;  // encode(y0) when with_init
  std::unique_ptr<ExpKey> exp;  // default-init path, keyed on -2*r_in
  RingTensor rin_split;
  MulKey init_a, init_b;  // zeroth Newton step, fresh wires
  RingTensor ra1_split, ra2_split, rb1_split, rb2_split;
  RingTensor rho0_split;  // mask of the t_0 wire
  std::vector<RecipIter> iters;
  RingTensor rout;
};

struct SoftmaxIter {
  MulKey mul1;  // z (x) y, additive out
  MulKey mul2;  // y (x) S broadcast, additive out
  RingTensor rho_split;  // y-wire mask shares, K elems
  RingTensor rs_split;   // S-wire mask share, scalar
};

struct SoftmaxKey {
  u64 in = kNoOffset;  // output is always additive
  int K = 2, m = 16;
  u64 a0_fx = 0, a1_fx = 0;  // clip bounds, encoded (two's complement)
  RingTensor rin_split;      // K elements
  LessThanKey lt_lo, lt_hi;  // sign tests on (a0 - x) and (x - a1)
  MulKey clip_lo, clip_hi;   // ReLU muls
  RingTensor s1_split, s2_split;  // sign-wire masks
  RingTensor rz_split;            // z-wire mask
  std::vector<SoftmaxIter> iters;
};

struct SigmoidKey {
  u64 in = kNoOffset, out = kNoOffset;
  bool is_tanh = false;  // evaluate at 2x and map 2y-1
  int m_exp = 8, m_recip = 3;
  LessThanKey lt;  // sign of the (possibly doubled) input
  RingTensor rs_split;  // sign-wire mask
  MulKey mul1;          // |x| = x * (1 - 2p)
  std::unique_ptr<ExpKey> exp;      // exp(-|x|), keyed on -r_abs
  std::unique_ptr<RecipKey> recip;  // 1/(1+e^-|x|), init 0.5 (exact at x=0)
  RingTensor r4_split, r5_split, r6_split, r7_split;
  MulKey mul2, mul3;  // select muls
  RingTensor rout;
};

struct DropoutKey {
  bool dynamic = false;
  u64 in = kNoOffset, out = kNoOffset;
  u64 p_fx = 0;        // static: the rate baked in at gen time
  RingTensor sigma_hat;  // static: public sigma + r_sigma (identical both keys)
  MulKey mul;            // binds (r_in, r_sigma) or (r_in, r_beta)
  RingTensor rbeta_split;       // dynamic
  std::vector<DcfKey> cmp;      // dynamic: keep-test per element
};

struct TpKey {
  u64 in1 = kNoOffset, in2 = kNoOffset, out = kNoOffset;
  RingTensor r1, r2;  // shares, shapes M and N
  RingTensor q;       // share of outer(r1, r2)
  RingTensor rout;    // M x N share; empty if none
};

using GateKey =
    std::variant<BeaverKey, MulKey, SquareKey, PowerKey, ExpKey, LessThanKey,
                 RecipKey, SoftmaxKey, SigmoidKey, DropoutKey, TpKey>;

enum class GateKind : u8 {
  Beaver = 1, Mul, Square, Power, Exp, Recip, Softmax, Sigmoid,
  DropoutStatic, DropoutDynamic, TP, LessThan,
};

GateKind kind_of(const GateKey& k);

// ---- dealer ----------------------------------------------------------------

// Offsets live in tensors held dealer-side during generation; a Dealer hands
// out key pairs plus the offset shares callers need to mask their inputs.
class Dealer {
 public:
  Dealer(DealerConfig dc) : cfg_(dc.cfg), rng_(dc.seed) {}

  RingConfig ring() const { return cfg_; }
  u64 fresh_offset_id() { return ++offset_ctr_; }

  // Each gen returns per-party keys; input-offset shares for wire building are
  // returned through the key's *_split tensors or the extra out-params.
  std::pair<BeaverKey, BeaverKey> gen_beaver(const std::vector<u32>& sa,
                                             const std::vector<u32>& sb,
                                             bool elementwise);
  struct WireMask {  // dealer-known offset + its two shares
    u64 id;
    RingTensor r, r0, r1;
  };
  WireMask fresh_mask(const std::vector<u32>& shape);

  std::pair<MulKey, MulKey> gen_mul(const WireMask& r1, const WireMask& r2,
                                    bool with_out);
  std::pair<SquareKey, SquareKey> gen_square(const WireMask& r, bool with_out);
  std::pair<PowerKey, PowerKey> gen_power(const WireMask& r, u64 n,
                                          const std::vector<u32>& shape,
                                          bool with_out);
  std::pair<ExpKey, ExpKey> gen_exp(const RingTensor& r_in_value, u64 in_id,
                                    int m, const std::vector<u32>& shape,
                                    bool with_out);
  std::pair<LessThanKey, LessThanKey> gen_less_than(const RingTensor& r_in_value,
                                                    u64 in_id, u64 beta);
  std::pair<RecipKey, RecipKey> gen_recip(const WireMask& r, int m,
                                          bool with_init, double y0,
                                          int m_exp, bool with_out);
  std::pair<SoftmaxKey, SoftmaxKey> gen_softmax(const WireMask& r, int K, int m,
                                                double a0, double a1);
  std::pair<SigmoidKey, SigmoidKey> gen_sigmoid(const WireMask& r, bool is_tanh,
                                                int m_exp, int m_recip,
                                                const std::vector<u32>& shape,
                                                bool with_out);
  std::pair<DropoutKey, DropoutKey> gen_dropout(const WireMask& r, double p,
                                                bool dynamic,
                                                const std::vector<u32>& shape,
                                                bool with_out);
  std::pair<TpKey, TpKey> gen_tp(const WireMask& r1, const WireMask& r2,
                                 bool with_out);

  Prg& rng() { return rng_; }

 private:
  RingConfig cfg_;
  Prg rng_;
  u64 offset_ctr_ = 0;

  RingTensor rand_tensor(const std::vector<u32>& shape, int scale);
  std::pair<RingTensor, RingTensor> split2(const RingTensor& v);
};

// ---- bundle serialization --------------------------------------------------
//
// File layout (little-endian unless noted):
//   magic "PFFT" | version u16 | l u8 | s u8 | party u8 | gate_count u32
//   per gate: gate_kind u8 | params_len u32 | params bytes |
//             tensor_count u16 | per tensor: rank u8, dims u32 each,
//             numel ceil(l/8)-byte words
//   crc32 u32 over everything after the magic.
// DCF material lives in the params block (raw 64-bit words) since seeds are
// full-width even when l < 64.

struct Bundle {
  RingConfig cfg;
  int party = 0;
  std::vector<GateKey> gates;
  size_t cursor = 0;  // consumption order for sequential protocols

  GateKey& next(GateKind expect);
};

std::vector<u8> serialize_bundle(const Bundle& b);
Bundle deserialize_bundle(const std::vector<u8>& bytes);

}  // namespace hss
