#pragma once
#include "hss/oracle.hpp"
#include "hss/proto.hpp"

// Two-layer classification head trained under two-party computation:
//   Z1 = X W1 + b1;  A1 = tanh(Z1);  Z2 = A1 W2 + b2;  P = softmax(Z2)
// Gradients use per-row tensor products for the weight updates and the
// square/multiply gates for the tanh derivative. A plaintext fixed-point twin
// with the identical schedule backs paired-run comparisons.
namespace hss {

struct HeadConfig {
  u32 d = 16, h = 8, c = 2;  // in, hidden, classes
  u32 B = 16;                // batch rows
  int m_softmax = 16;
  int m_exp = 8, m_recip = 3;
  double clip_lo = -4.0, clip_hi = 12.0;
};

struct HeadShares {
  AdditiveShare W1, b1, W2, b2;  // W1: d x h, W2: h x c
};

struct HeadGrads {
  AdditiveShare dW1, db1, dW2, db2;
};

struct HeadPlain {
  RingTensor W1, b1, W2, b2;
};

// Appends one training step's key material to both bundles, in the order
// secure_grads consumes it.
void gen_step_keys(Dealer& dl, const HeadConfig& hc, Bundle& b0, Bundle& b1);

// Forward + backward for one batch. X: B x d, Y: B x c one-hot, both additive.
// Gradients are batch means. Consumes one step's keys from the bundle.
HeadGrads secure_grads(GateSession& s, Bundle& keys, const HeadConfig& hc,
                       const HeadShares& P, const AdditiveShare& X,
                       const AdditiveShare& Y);

// W <- W - lr * dW on shares (public rate; one truncation per tensor).
void sgd_update(GateSession& s, HeadShares& P, const HeadGrads& g, double lr);

// Plaintext twin with the same fixed-point schedule.
void plain_grads(Oracle& o, const HeadConfig& hc, const HeadPlain& P,
                 const RingTensor& X, const RingTensor& Y, HeadPlain& grads);
void plain_update(Oracle& o, HeadPlain& P, const HeadPlain& g, double lr);

// Double-precision forward pass utilities (loss surface for finite
// differences, accuracy scoring).
double head_loss(const HeadPlain& P, const RingTensor& X, const RingTensor& Y);
double head_accuracy(const HeadPlain& P, const RingTensor& X,
                     const std::vector<u32>& labels);

HeadPlain head_init(RingConfig cfg, const HeadConfig& hc, Prg& g);
std::pair<HeadShares, HeadShares> split_head(const HeadPlain& P, Prg& g);
HeadPlain restore_head(const HeadShares& a, const HeadShares& b);

}  // namespace hss
