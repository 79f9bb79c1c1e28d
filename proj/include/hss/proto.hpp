#pragma once
#include "hss/dealer.hpp"
#include "hss/shares.hpp"
#include "hss/transport.hpp"

// Online phase: gate evaluations over masked wires plus ASS-only baselines.
// Both parties run the same function in lockstep against their halves of the
// key material. All costs below are total payload bits across both parties,
// per element, under interactive truncation.
namespace hss {

struct GateSession {
  int party = 0;
  Channel* chan = nullptr;
  TruncMode tmode = TruncMode::Interactive;
  u32 label = 0;

  RingConfig cfg() const { return chan->cfg; }
};

// ---- ASS layer -------------------------------------------------------------

// Beaver multiply, 5l: E/F exchange 4l + truncation l.
AdditiveShare ass_mul(GateSession& s, const BeaverKey& k, const AdditiveShare& x,
                      const AdditiveShare& y);
// (u x v)*(v x w) matmul: exchange 2l(uv+vw), truncation l*uw.
AdditiveShare ass_matmul(GateSession& s, const BeaverKey& k,
                         const AdditiveShare& X, const AdditiveShare& Y);

// ---- FSS gates -------------------------------------------------------------

// 5l (l if both wires already opened).
MaskedWire eval_mul(GateSession& s, const MulKey& k, MaskedWire& x, MaskedWire& y);
// 3l.
MaskedWire eval_square(GateSession& s, const SquareKey& k, MaskedWire& x);
// 3l per chain step (3lm for n = 2^m).
MaskedWire eval_power(GateSession& s, const PowerKey& k, MaskedWire& x);
// l + 3lm. Input as additive shares of x (scale s).
AdditiveShare eval_exp(GateSession& s, const ExpKey& k, const AdditiveShare& x);
AdditiveShare eval_exp_wire(GateSession& s, const ExpKey& k, MaskedWire& x);
// Zero online bits; x_hat must already be public.
AdditiveShare eval_less_than(GateSession& s, const LessThanKey& k,
                             const RingTensor& x_hat);
// 12l + 6lm with init, 13l + 3l m_exp + 6lm without.
MaskedWire eval_recip(GateSession& s, const RecipKey& k, MaskedWire& x);
// Additive output (gate keyed with empty output offsets).
AdditiveShare eval_softmax(GateSession& s, const SoftmaxKey& k, MaskedWire& x);
// Build the wire eval_sigmoid consumes (doubled input for tanh keys).
MaskedWire sigmoid_input_wire(const SigmoidKey& k, const AdditiveShare& x);
MaskedWire eval_sigmoid(GateSession& s, const SigmoidKey& k, MaskedWire& x);
// 3l static, 5l dynamic (p arrives online, public).
MaskedWire eval_dropout(GateSession& s, const DropoutKey& k, MaskedWire& x,
                        double p_online = 0.0);
// 2l(M+N) + lMN total.
MaskedWire eval_tp(GateSession& s, const TpKey& k, MaskedWire& x, MaskedWire& y);

// ---- baseline (ASS-only) compositions --------------------------------------

struct BaselineKeys {  // correlated randomness consumed by a baseline op
  std::vector<BeaverKey> triples;
  std::vector<AdditiveShare> extra;       // e.g. sigma shares, r shares
  std::vector<SignTestKey> signs;
  std::vector<OffsetShare> masks;
};

// l + 5lm.
AdditiveShare baseline_exp(GateSession& s, BaselineKeys& k,
                           const AdditiveShare& x, int m);
// 10l (1+m) with init; 11l + 5l m_exp + 10l m_recip without.
AdditiveShare baseline_recip(GateSession& s, BaselineKeys& k,
                             const AdditiveShare& x, int m, bool with_init,
                             double y0, int m_exp);
// 5l M N.
AdditiveShare baseline_tp(GateSession& s, BaselineKeys& k,
                          const AdditiveShare& x, const AdditiveShare& y);
// 5l static; 9l dynamic (open + sign + reshare + multiply).
AdditiveShare baseline_dropout(GateSession& s, BaselineKeys& k,
                               const AdditiveShare& x, bool dynamic, double p);
// Generic-multiply normalization loop, 10l per iteration per element.
AdditiveShare baseline_softmax(GateSession& s, BaselineKeys& k,
                               const AdditiveShare& x, int m);

// Dealer-side provisioning for the baselines.
BaselineKeys gen_baseline_exp(Dealer& d, const std::vector<u32>& shape, int m,
                              BaselineKeys* peer);
BaselineKeys gen_baseline_recip(Dealer& d, const std::vector<u32>& shape, int m,
                                bool with_init, int m_exp, BaselineKeys* peer);
BaselineKeys gen_baseline_tp(Dealer& d, u32 M, u32 N, BaselineKeys* peer);
BaselineKeys gen_baseline_dropout(Dealer& d, const std::vector<u32>& shape,
                                  bool dynamic, double p, BaselineKeys* peer);
BaselineKeys gen_baseline_softmax(Dealer& d, int K, int m, BaselineKeys* peer);

}  // namespace hss
