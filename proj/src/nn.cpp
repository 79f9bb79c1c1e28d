#include "hss/nn.hpp"

#include <cmath>

namespace hss {

namespace {

double unit_real(Prg& g) { return (double)(g.next_u64() >> 11) * 0x1p-53; }

AdditiveShare row_of(const AdditiveShare& X, u32 r, u32 cols) {
  RingTensor t(X.val.cfg, {cols}, X.val.scale_bits);
  for (u32 j = 0; j < cols; j++) t.data[j] = X.val.data[(size_t)r * cols + j];
  return AdditiveShare(X.party, std::move(t));
}

// batch mean: sum rows already accumulated; multiply 1/B and truncate
void mean_(GateSession& s, AdditiveShare& acc, u32 B) {
  acc.val.scale_const_(s.cfg().encode(1.0 / (double)B));
  trunc(acc, s.cfg().s, *s.chan, s.label, s.tmode);
  acc.val.scale_bits = s.cfg().s;
}

}  // namespace

void gen_step_keys(Dealer& dl, const HeadConfig& hc, Bundle& b0, Bundle& b1) {
  auto push = [&](auto&& pair) {
    b0.gates.emplace_back(std::move(pair.first));
    b1.gates.emplace_back(std::move(pair.second));
  };
  push(dl.gen_beaver({hc.B, hc.d}, {hc.d, hc.h}, false));
  push(dl.gen_sigmoid(dl.fresh_mask({hc.B, hc.h}), true, hc.m_exp, hc.m_recip,
                      {hc.B, hc.h}, false));
  push(dl.gen_beaver({hc.B, hc.h}, {hc.h, hc.c}, false));
  for (u32 r = 0; r < hc.B; r++)
    push(dl.gen_softmax(dl.fresh_mask({hc.c}), (int)hc.c, hc.m_softmax,
                        hc.clip_lo, hc.clip_hi));
  for (u32 r = 0; r < hc.B; r++)
    push(dl.gen_tp(dl.fresh_mask({hc.h}), dl.fresh_mask({hc.c}), false));
  push(dl.gen_beaver({hc.B, hc.c}, {hc.c, hc.h}, false));
  push(dl.gen_square(dl.fresh_mask({hc.B, hc.h}), false));
  push(dl.gen_mul(dl.fresh_mask({hc.B, hc.h}), dl.fresh_mask({hc.B, hc.h}),
                  false));
  for (u32 r = 0; r < hc.B; r++)
    push(dl.gen_tp(dl.fresh_mask({hc.d}), dl.fresh_mask({hc.h}), false));
}

HeadGrads secure_grads(GateSession& s, Bundle& keys, const HeadConfig& hc,
                       const HeadShares& P, const AdditiveShare& X,
                       const AdditiveShare& Y) {
  RingConfig cfg = s.cfg();
  int b = s.party;

  auto& mm1 = std::get<BeaverKey>(keys.next(GateKind::Beaver));
  AdditiveShare Z1 = ass_matmul(s, mm1, X, P.W1);
  for (u32 r = 0; r < hc.B; r++)
    for (u32 j = 0; j < hc.h; j++)
      Z1.val.data[(size_t)r * hc.h + j] =
          cfg.reduce(Z1.val.data[(size_t)r * hc.h + j] + P.b1.val.data[j]);

  auto& tk = std::get<SigmoidKey>(keys.next(GateKind::Sigmoid));
  MaskedWire wz1 = sigmoid_input_wire(tk, Z1);
  AdditiveShare A1 = drop_output_offset(eval_sigmoid(s, tk, wz1));
  A1.val.shape = {hc.B, hc.h};

  auto& mm2 = std::get<BeaverKey>(keys.next(GateKind::Beaver));
  AdditiveShare Z2 = ass_matmul(s, mm2, A1, P.W2);
  for (u32 r = 0; r < hc.B; r++)
    for (u32 j = 0; j < hc.c; j++)
      Z2.val.data[(size_t)r * hc.c + j] =
          cfg.reduce(Z2.val.data[(size_t)r * hc.c + j] + P.b2.val.data[j]);

  // G = softmax(Z2) - Y, row by row
  AdditiveShare G(b, RingTensor(cfg, {hc.B, hc.c}, cfg.s));
  for (u32 r = 0; r < hc.B; r++) {
    auto& sk = std::get<SoftmaxKey>(keys.next(GateKind::Softmax));
    AdditiveShare zr = row_of(Z2, r, hc.c);
    MaskedWire wz = to_masked(zr, {sk.in, sk.rin_split});
    AdditiveShare pr = eval_softmax(s, sk, wz);
    for (u32 j = 0; j < hc.c; j++)
      G.val.data[(size_t)r * hc.c + j] =
          cfg.reduce(pr.val.data[j] - Y.val.data[(size_t)r * hc.c + j]);
  }

  // dW2 = (1/B) A1^T G via per-row tensor products
  AdditiveShare dW2(b, RingTensor(cfg, {hc.h, hc.c}, cfg.s));
  for (u32 r = 0; r < hc.B; r++) {
    auto& tp = std::get<TpKey>(keys.next(GateKind::TP));
    AdditiveShare ar = row_of(A1, r, hc.h);
    AdditiveShare gr = row_of(G, r, hc.c);
    MaskedWire wa = to_masked(ar, {tp.in1, tp.r1});
    MaskedWire wg = to_masked(gr, {tp.in2, tp.r2});
    dW2.val.add_(eval_tp(s, tp, wa, wg).share);
  }
  mean_(s, dW2, hc.B);

  AdditiveShare db2(b, RingTensor(cfg, {hc.c}, cfg.s));
  for (u32 r = 0; r < hc.B; r++)
    for (u32 j = 0; j < hc.c; j++)
      db2.val.data[j] = cfg.reduce(db2.val.data[j] + G.val.data[(size_t)r * hc.c + j]);
  mean_(s, db2, hc.B);

  // dA1 = G W2^T
  auto& mm3 = std::get<BeaverKey>(keys.next(GateKind::Beaver));
  AdditiveShare W2T(b, transpose(P.W2.val));
  AdditiveShare dA1 = ass_matmul(s, mm3, G, W2T);

  // dZ1 = dA1 . (1 - A1^2)
  auto& sq = std::get<SquareKey>(keys.next(GateKind::Square));
  MaskedWire wa1 = to_masked(A1, {sq.in, sq.rin});
  AdditiveShare A1sq = drop_output_offset(eval_square(s, sq, wa1));
  AdditiveShare w(b, RingTensor(cfg, {hc.B, hc.h}, cfg.s));
  for (size_t i = 0; i < w.val.data.size(); i++)
    w.val.data[i] = cfg.reduce((b == 0 ? cfg.encode(1.0) : 0) - A1sq.val.data[i]);
  auto& mk = std::get<MulKey>(keys.next(GateKind::Mul));
  MaskedWire wd = to_masked(dA1, {mk.in1, mk.r1});
  MaskedWire ww = to_masked(w, {mk.in2, mk.r2});
  AdditiveShare dZ1 = drop_output_offset(eval_mul(s, mk, wd, ww));
  dZ1.val.shape = {hc.B, hc.h};

  // dW1 = (1/B) X^T dZ1
  AdditiveShare dW1(b, RingTensor(cfg, {hc.d, hc.h}, cfg.s));
  for (u32 r = 0; r < hc.B; r++) {
    auto& tp = std::get<TpKey>(keys.next(GateKind::TP));
    AdditiveShare xr = row_of(X, r, hc.d);
    AdditiveShare zr = row_of(dZ1, r, hc.h);
    MaskedWire wx = to_masked(xr, {tp.in1, tp.r1});
    MaskedWire wz = to_masked(zr, {tp.in2, tp.r2});
    dW1.val.add_(eval_tp(s, tp, wx, wz).share);
  }
  mean_(s, dW1, hc.B);

  AdditiveShare db1(b, RingTensor(cfg, {hc.h}, cfg.s));
  for (u32 r = 0; r < hc.B; r++)
    for (u32 j = 0; j < hc.h; j++)
      db1.val.data[j] = cfg.reduce(db1.val.data[j] + dZ1.val.data[(size_t)r * hc.h + j]);
  mean_(s, db1, hc.B);

  return HeadGrads{std::move(dW1), std::move(db1), std::move(dW2), std::move(db2)};
}

void sgd_update(GateSession& s, HeadShares& P, const HeadGrads& g, double lr) {
  RingConfig cfg = s.cfg();
  u64 lr_fx = cfg.encode(lr);
  auto step = [&](AdditiveShare& W, const AdditiveShare& dW) {
    AdditiveShare t = dW;
    t.val.scale_const_(lr_fx);
    trunc(t, cfg.s, *s.chan, s.label, s.tmode);
    W.val.sub_(t.val);
  };
  step(P.W1, g.dW1);
  step(P.b1, g.db1);
  step(P.W2, g.dW2);
  step(P.b2, g.db2);
}

// ---- plaintext twin --------------------------------------------------------

void plain_grads(Oracle& o, const HeadConfig& hc, const HeadPlain& P,
                 const RingTensor& X, const RingTensor& Y, HeadPlain& g) {
  RingConfig cfg = o.cfg;
  RingTensor Z1 = o.matmul_fx(X, P.W1);
  for (u32 r = 0; r < hc.B; r++)
    for (u32 j = 0; j < hc.h; j++)
      Z1.data[(size_t)r * hc.h + j] =
          cfg.reduce(Z1.data[(size_t)r * hc.h + j] + P.b1.data[j]);
  RingTensor A1 = Z1;
  A1.data = o.tanh_(Z1.data, hc.m_exp, hc.m_recip);

  RingTensor Z2 = o.matmul_fx(A1, P.W2);
  for (u32 r = 0; r < hc.B; r++)
    for (u32 j = 0; j < hc.c; j++)
      Z2.data[(size_t)r * hc.c + j] =
          cfg.reduce(Z2.data[(size_t)r * hc.c + j] + P.b2.data[j]);

  RingTensor G(cfg, {hc.B, hc.c}, cfg.s);
  for (u32 r = 0; r < hc.B; r++) {
    std::vector<u64> row(hc.c);
    for (u32 j = 0; j < hc.c; j++) row[j] = Z2.data[(size_t)r * hc.c + j];
    std::vector<u64> p = o.softmax(row, hc.m_softmax, hc.clip_lo, hc.clip_hi);
    for (u32 j = 0; j < hc.c; j++)
      G.data[(size_t)r * hc.c + j] =
          cfg.reduce(p[j] - Y.data[(size_t)r * hc.c + j]);
  }

  auto mean_of = [&](RingTensor& t) {
    t.scale_const_(cfg.encode(1.0 / (double)hc.B));
    o.trunc_vec(t.data, cfg.s);
    t.scale_bits = cfg.s;
  };
  RingTensor dW2(cfg, {hc.h, hc.c}, cfg.s);
  for (u32 r = 0; r < hc.B; r++) {
    std::vector<u64> a(hc.h), gg(hc.c);
    for (u32 j = 0; j < hc.h; j++) a[j] = A1.data[(size_t)r * hc.h + j];
    for (u32 j = 0; j < hc.c; j++) gg[j] = G.data[(size_t)r * hc.c + j];
    std::vector<u64> t = o.tp(a, gg);
    for (size_t i = 0; i < t.size(); i++) dW2.data[i] = cfg.reduce(dW2.data[i] + t[i]);
  }
  mean_of(dW2);

  RingTensor db2(cfg, {hc.c}, cfg.s);
  for (u32 r = 0; r < hc.B; r++)
    for (u32 j = 0; j < hc.c; j++)
      db2.data[j] = cfg.reduce(db2.data[j] + G.data[(size_t)r * hc.c + j]);
  mean_of(db2);

  RingTensor dA1 = o.matmul_fx(G, transpose(P.W2));
  std::vector<u64> A1sq = o.square(A1.data);
  std::vector<u64> w(A1sq.size());
  u64 one = cfg.encode(1.0);
  for (size_t i = 0; i < w.size(); i++) w[i] = cfg.reduce(one - A1sq[i]);
  std::vector<u64> dZ1 = o.mul(dA1.data, w);

  RingTensor dW1(cfg, {hc.d, hc.h}, cfg.s);
  for (u32 r = 0; r < hc.B; r++) {
    std::vector<u64> x(hc.d), z(hc.h);
    for (u32 j = 0; j < hc.d; j++) x[j] = X.data[(size_t)r * hc.d + j];
    for (u32 j = 0; j < hc.h; j++) z[j] = dZ1[(size_t)r * hc.h + j];
    std::vector<u64> t = o.tp(x, z);
    for (size_t i = 0; i < t.size(); i++) dW1.data[i] = cfg.reduce(dW1.data[i] + t[i]);
  }
  mean_of(dW1);

  RingTensor db1(cfg, {hc.h}, cfg.s);
  for (u32 r = 0; r < hc.B; r++)
    for (u32 j = 0; j < hc.h; j++)
      db1.data[j] = cfg.reduce(db1.data[j] + dZ1[(size_t)r * hc.h + j]);
  mean_of(db1);

  g.W1 = std::move(dW1);
  g.b1 = std::move(db1);
  g.W2 = std::move(dW2);
  g.b2 = std::move(db2);
}

void plain_update(Oracle& o, HeadPlain& P, const HeadPlain& g, double lr) {
  u64 lr_fx = o.cfg.encode(lr);
  auto step = [&](RingTensor& W, const RingTensor& dW) {
    RingTensor t = dW;
    t.scale_const_(lr_fx);
    o.trunc_vec(t.data, o.cfg.s);
    W.sub_(t);
  };
  step(P.W1, g.W1);
  step(P.b1, g.b1);
  step(P.W2, g.W2);
  step(P.b2, g.b2);
}

// ---- double-precision scoring ---------------------------------------------

namespace {
std::vector<double> forward_logits(const HeadPlain& P, const double* x, u32 d,
                                   u32 h, u32 c) {
  std::vector<double> W1 = P.W1.to_reals(), b1 = P.b1.to_reals();
  std::vector<double> W2 = P.W2.to_reals(), b2 = P.b2.to_reals();
  std::vector<double> a1(h);
  for (u32 j = 0; j < h; j++) {
    double z = b1[j];
    for (u32 i = 0; i < d; i++) z += x[i] * W1[(size_t)i * h + j];
    a1[j] = std::tanh(z);
  }
  std::vector<double> z2(c);
  for (u32 j = 0; j < c; j++) {
    double z = b2[j];
    for (u32 i = 0; i < h; i++) z += a1[i] * W2[(size_t)i * c + j];
    z2[j] = z;
  }
  return z2;
}
}  // namespace

double head_loss(const HeadPlain& P, const RingTensor& X, const RingTensor& Y) {
  u32 d = P.W1.shape[0], h = P.W1.shape[1], c = P.W2.shape[1];
  u32 B = X.shape[0];
  std::vector<double> xs = X.to_reals(), ys = Y.to_reals();
  double loss = 0;
  for (u32 r = 0; r < B; r++) {
    std::vector<double> z = forward_logits(P, &xs[(size_t)r * d], d, h, c);
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double den = 0;
    for (double v : z) den += std::exp(v - mx);
    for (u32 j = 0; j < c; j++)
      loss -= ys[(size_t)r * c + j] * (z[j] - mx - std::log(den));
  }
  return loss / B;
}

double head_accuracy(const HeadPlain& P, const RingTensor& X,
                     const std::vector<u32>& labels) {
  u32 d = P.W1.shape[0], h = P.W1.shape[1], c = P.W2.shape[1];
  u32 B = X.shape[0];
  std::vector<double> xs = X.to_reals();
  u32 hit = 0;
  for (u32 r = 0; r < B; r++) {
    std::vector<double> z = forward_logits(P, &xs[(size_t)r * d], d, h, c);
    u32 arg = 0;
    for (u32 j = 1; j < c; j++)
      if (z[j] > z[arg]) arg = j;
    if (arg == labels[r]) hit++;
  }
  return (double)hit / B;
}

HeadPlain head_init(RingConfig cfg, const HeadConfig& hc, Prg& g) {
  auto mk = [&](std::vector<u32> shape, double a) {
    RingTensor t(cfg, shape, cfg.s);
    for (auto& v : t.data) v = cfg.encode((unit_real(g) * 2 - 1) * a);
    return t;
  };
  HeadPlain P;
  P.W1 = mk({hc.d, hc.h}, 1.0 / std::sqrt((double)hc.d));
  P.b1 = RingTensor(cfg, {hc.h}, cfg.s);
  P.W2 = mk({hc.h, hc.c}, 1.0 / std::sqrt((double)hc.h));
  P.b2 = RingTensor(cfg, {hc.c}, cfg.s);
  return P;
}

std::pair<HeadShares, HeadShares> split_head(const HeadPlain& P, Prg& g) {
  auto [w10, w11] = split(P.W1, g);
  auto [b10, b11] = split(P.b1, g);
  auto [w20, w21] = split(P.W2, g);
  auto [b20, b21] = split(P.b2, g);
  HeadShares s0{std::move(w10), std::move(b10), std::move(w20), std::move(b20)};
  HeadShares s1{std::move(w11), std::move(b11), std::move(w21), std::move(b21)};
  return {std::move(s0), std::move(s1)};
}

HeadPlain restore_head(const HeadShares& a, const HeadShares& b) {
  HeadPlain P;
  P.W1 = restore(a.W1, b.W1);
  P.b1 = restore(a.b1, b.b1);
  P.W2 = restore(a.W2, b.W2);
  P.b2 = restore(a.b2, b.b2);
  return P;
}

}  // namespace hss
