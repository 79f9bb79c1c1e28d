#include "hss/proto.hpp"

#include <stdexcept>

namespace hss {

namespace {

void check_wire(const MaskedWire& w, u64 expect, const char* gate) {
  if (w.offset_id != expect)
    throw std::invalid_argument(std::string(gate) + ": wire/key offset mismatch");
}

void tr(GateSession& s, AdditiveShare& x, int bits) {
  trunc(x, bits, *s.chan, s.label, s.tmode);
}

const RingTensor& open_w(GateSession& s, MaskedWire& w) {
  return open_masked(w, *s.chan, s.label);
}

// <x*y> from public x_hat, y_hat and shares of (r1, r2, r1*r2). Broadcasts a
// scalar y over x. Result scale is the sum of the operand scales.
RingTensor mul_combine(RingConfig cfg, int party, const RingTensor& xh,
                       const RingTensor& yh, const RingTensor& r1,
                       const RingTensor& r2, const RingTensor& q) {
  size_t n = xh.data.size();
  bool ybc = yh.data.size() == 1 && n > 1;
  RingTensor out(cfg, xh.shape, 0);
  for (size_t i = 0; i < n; i++) {
    u64 xv = xh.data[i];
    u64 yv = ybc ? yh.data[0] : yh.data[i];
    u64 r2v = ybc ? r2.data[0] : r2.data[i];
    u64 acc = cfg.reduce(q.data[i] - xv * r2v - yv * r1.data[i]);
    if (party == 0) acc = cfg.reduce(acc + xv * yv);
    out.data[i] = acc;
  }
  return out;
}

// <x^2> from public x_hat and shares of (r, r^2).
RingTensor square_combine(RingConfig cfg, int party, const RingTensor& xh,
                          const RingTensor& r, const RingTensor& q) {
  RingTensor out(cfg, xh.shape, 0);
  for (size_t i = 0; i < xh.data.size(); i++) {
    u64 xv = xh.data[i];
    u64 acc = cfg.reduce(q.data[i] - 2 * xv * r.data[i]);
    if (party == 0) acc = cfg.reduce(acc + xv * xv);
    out.data[i] = acc;
  }
  return out;
}

MaskedWire wire_from(int party, u64 offset_id, RingTensor share) {
  MaskedWire w;
  w.party = party;
  w.offset_id = offset_id;
  w.share = std::move(share);
  return w;
}

// Additive result -> output wire (mask applied if the key carries one).
MaskedWire finish(GateSession& s, u64 out_id, const RingTensor& rout,
                  AdditiveShare u) {
  u.val.scale_bits = s.chan->cfg.s;
  MaskedWire w = wire_from(s.party, out_id, std::move(u.val));
  if (out_id != kNoOffset) w.share.add_(rout);
  return w;
}

u64 enc1(RingConfig cfg) { return cfg.encode(1.0); }

}  // namespace

// ---- ASS layer -------------------------------------------------------------

namespace {

// Simultaneous exchange of equal-length word vectors; party 0 sends first.
std::vector<u64> exchange(Channel& ch, u32 label, const std::vector<u64>& mine) {
  std::vector<u64> theirs;
  if (ch.party == 0) {
    ch.send_frame(MsgType::BEAVER_EF, label, mine);
    theirs = ch.recv_frame(MsgType::BEAVER_EF).payload;
  } else {
    theirs = ch.recv_frame(MsgType::BEAVER_EF).payload;
    ch.send_frame(MsgType::BEAVER_EF, label, mine);
  }
  ch.meter.mark_round(label);
  return theirs;
}

AdditiveShare beaver_mul(GateSession& s, const BeaverKey& k,
                         const AdditiveShare& x, const AdditiveShare& y,
                         int tbits) {
  RingConfig cfg = s.cfg();
  size_t n = x.val.data.size();
  if (k.elementwise == false || y.val.data.size() != n)
    throw std::invalid_argument("ass_mul: elementwise triple required");
  std::vector<u64> ef(2 * n);
  for (size_t i = 0; i < n; i++) {
    ef[i] = cfg.reduce(x.val.data[i] - k.A.data[i]);
    ef[n + i] = cfg.reduce(y.val.data[i] - k.B.data[i]);
  }
  std::vector<u64> theirs = exchange(*s.chan, s.label, ef);
  AdditiveShare z(s.party, RingTensor(cfg, x.val.shape, 0));
  for (size_t i = 0; i < n; i++) {
    u64 E = cfg.reduce(ef[i] + theirs[i]);
    u64 F = cfg.reduce(ef[n + i] + theirs[n + i]);
    u64 acc = cfg.reduce(E * k.B.data[i] + k.A.data[i] * F + k.C.data[i]);
    if (s.party == 0) acc = cfg.reduce(acc + E * F);
    z.val.data[i] = acc;
  }
  if (tbits > 0) tr(s, z, tbits);
  z.val.scale_bits = x.val.scale_bits + y.val.scale_bits - tbits;
  return z;
}

}  // namespace

AdditiveShare ass_mul(GateSession& s, const BeaverKey& k, const AdditiveShare& x,
                      const AdditiveShare& y) {
  return beaver_mul(s, k, x, y, s.cfg().s);
}

AdditiveShare ass_matmul(GateSession& s, const BeaverKey& k,
                         const AdditiveShare& X, const AdditiveShare& Y) {
  RingConfig cfg = s.cfg();
  if (X.val.shape != k.shape_a || Y.val.shape != k.shape_b)
    throw std::invalid_argument("ass_matmul: shape/key mismatch");
  size_t na = X.val.data.size(), nb = Y.val.data.size();
  std::vector<u64> ef(na + nb);
  for (size_t i = 0; i < na; i++) ef[i] = cfg.reduce(X.val.data[i] - k.A.data[i]);
  for (size_t i = 0; i < nb; i++)
    ef[na + i] = cfg.reduce(Y.val.data[i] - k.B.data[i]);
  std::vector<u64> theirs = exchange(*s.chan, s.label, ef);
  RingTensor E(cfg, X.val.shape, 0), F(cfg, Y.val.shape, 0);
  for (size_t i = 0; i < na; i++) E.data[i] = cfg.reduce(ef[i] + theirs[i]);
  for (size_t i = 0; i < nb; i++) F.data[i] = cfg.reduce(ef[na + i] + theirs[na + i]);
  RingTensor Z = matmul(E, k.B);
  Z.add_(matmul(k.A, F));
  Z.add_(k.C);
  if (s.party == 0) Z.add_(matmul(E, F));
  AdditiveShare z(s.party, std::move(Z));
  tr(s, z, cfg.s);
  z.val.scale_bits = X.val.scale_bits + Y.val.scale_bits - cfg.s;
  return z;
}

// ---- FSS gates -------------------------------------------------------------

MaskedWire eval_mul(GateSession& s, const MulKey& k, MaskedWire& x, MaskedWire& y) {
  check_wire(x, k.in1, "mul");
  check_wire(y, k.in2, "mul");
  RingConfig cfg = s.cfg();
  const RingTensor& xh = open_w(s, x);
  const RingTensor& yh = open_w(s, y);
  AdditiveShare u(s.party, mul_combine(cfg, s.party, xh, yh, k.r1, k.r2, k.q));
  tr(s, u, cfg.s);
  return finish(s, k.out, k.rout, std::move(u));
}

MaskedWire eval_square(GateSession& s, const SquareKey& k, MaskedWire& x) {
  check_wire(x, k.in, "square");
  RingConfig cfg = s.cfg();
  const RingTensor& xh = open_w(s, x);
  AdditiveShare u(s.party, square_combine(cfg, s.party, xh, k.rin, k.q));
  tr(s, u, cfg.s);
  return finish(s, k.out, k.rout, std::move(u));
}

MaskedWire eval_power(GateSession& s, const PowerKey& k, MaskedWire& x) {
  check_wire(x, k.in, "power");
  RingConfig cfg = s.cfg();
  int top = 63;
  while (!((k.n >> top) & 1)) top--;
  size_t si = 0, mi = 0;
  MaskedWire hold;          // storage for chained intermediate wires
  MaskedWire* cur = &x;
  for (int i = top - 1; i >= 0; i--) {
    const SquareKey& sq = k.segs.at(si++);
    check_wire(*cur, sq.in, "power");
    const RingTensor& ch = open_w(s, *cur);
    AdditiveShare u(s.party, square_combine(cfg, s.party, ch, sq.rin, sq.q));
    tr(s, u, cfg.s);
    hold = finish(s, sq.out, sq.rout, std::move(u));
    cur = &hold;
    if ((k.n >> i) & 1) {
      const MulKey& mk = k.muls.at(mi++);
      check_wire(*cur, mk.in1, "power");
      const RingTensor& ah = open_w(s, *cur);
      const RingTensor& xh = open_w(s, x);  // cached after the first square
      AdditiveShare u2(s.party,
                       mul_combine(cfg, s.party, ah, xh, mk.r1, mk.r2, mk.q));
      tr(s, u2, cfg.s);
      hold = finish(s, mk.out, mk.rout, std::move(u2));
      cur = &hold;
    }
  }
  return hold;
}

// exp(x) ~= (1 + x/2^m)^(2^m). The running value lives at scale s+m so the
// division by 2^m is a free left shift of the shares; only the final
// truncation by m is interactive. One square per segment: open + trunc = 3l,
// plus the final trunc: l + 3lm total.
AdditiveShare eval_exp(GateSession& s, const ExpKey& k, const AdditiveShare& x) {
  RingConfig cfg = s.cfg();
  int m = k.m;
  // Reinterpret x's raw words at scale s+m: x * 2^s == (x / 2^m) * 2^(s+m),
  // so t = 1 + x/2^m needs only the constant, no scaling multiply.
  AdditiveShare t = x;
  if (s.party == 0) t.val.add_const_(cfg.reduce(1ULL << (cfg.s + m)));
  for (int i = 0; i < m; i++) {
    const SquareKey& sq = k.segs.at(i);
    RingTensor sh = t.val;
    sh.add_(sq.rin);
    MaskedWire w = wire_from(s.party, sq.in, std::move(sh));
    const RingTensor& wh = open_w(s, w);
    t.val = square_combine(cfg, s.party, wh, sq.rin, sq.q);
    tr(s, t, cfg.s + m);
  }
  tr(s, t, m);  // back to scale s
  t.val.scale_bits = cfg.s;
  return t;
}

AdditiveShare eval_exp_wire(GateSession& s, const ExpKey& k, MaskedWire& x) {
  check_wire(x, k.in, "exp");
  AdditiveShare xs(s.party, x.share);
  xs.val.sub_(k.rin_split);
  return eval_exp(s, k, xs);
}

AdditiveShare eval_less_than(GateSession& s, const LessThanKey& k,
                             const RingTensor& x_hat) {
  RingConfig cfg = s.cfg();
  RingTensor out(cfg, x_hat.shape, cfg.s);
  for (size_t i = 0; i < x_hat.data.size(); i++)
    out.data[i] = sign_test_eval(s.party, k.elems.at(i), x_hat.data[i]);
  return AdditiveShare(s.party, std::move(out));
}

// Newton's method for 1/x. The zeroth step y0 (2 - x y0) runs on two freshly
// masked generic multiplies (5l each); the loop wire of x is opened once (2l);
// each iteration is one square and one multiply against the cached x_hat
// (6l). 12l + 6lm with the public init, plus the exp-based seed otherwise.
MaskedWire eval_recip(GateSession& s, const RecipKey& k, MaskedWire& x) {
  check_wire(x, k.in, "recip");
  RingConfig cfg = s.cfg();
  int b = s.party;
  AdditiveShare xs(b, x.share);
  xs.val.sub_(k.rin_split);  // <x>, local

  AdditiveShare y0(b, RingTensor(cfg, x.share.shape, cfg.s));
  if (k.with_init) {
    if (b == 0) y0.val.add_const_(k.y0_fx);
  } else {
    // y0 = 3 exp(1 - 2x) + 0.003; the exp key is bound to the offset -2 r_in.
    RingTensor wsh = x.share;
    wsh.scale_const_(cfg.reduce(0 - 2));
    if (b == 0) wsh.add_const_(enc1(cfg));
    MaskedWire we = wire_from(b, k.exp->in, std::move(wsh));
    AdditiveShare e = eval_exp_wire(s, *k.exp, we);
    e.val.scale_const_(3);  // integer, exact: no truncation
    if (b == 0) e.val.add_const_(cfg.encode(0.003));
    y0 = std::move(e);
  }

  // t1 = x * y0
  RingTensor sh = xs.val;
  sh.add_(k.ra1_split);
  MaskedWire wa = wire_from(b, k.init_a.in1, std::move(sh));
  sh = y0.val;
  sh.add_(k.ra2_split);
  MaskedWire wya = wire_from(b, k.init_a.in2, std::move(sh));
  const RingTensor& ah = open_w(s, wa);
  const RingTensor& ayh = open_w(s, wya);
  AdditiveShare t1(b, mul_combine(cfg, b, ah, ayh, k.init_a.r1, k.init_a.r2,
                                  k.init_a.q));
  tr(s, t1, cfg.s);

  // h0 = (2 - x y0) * y0
  RingTensor w2 = t1.val;
  w2.neg_();
  if (b == 0) w2.add_const_(cfg.encode(2.0));
  w2.add_(k.rb1_split);
  MaskedWire wb = wire_from(b, k.init_b.in1, std::move(w2));
  sh = y0.val;
  sh.add_(k.rb2_split);
  MaskedWire wyb = wire_from(b, k.init_b.in2, std::move(sh));
  const RingTensor& bh = open_w(s, wb);
  const RingTensor& byh = open_w(s, wyb);
  AdditiveShare y(b, mul_combine(cfg, b, bh, byh, k.init_b.r1, k.init_b.r2,
                                 k.init_b.q));
  tr(s, y, cfg.s);

  const RingTensor& xh = open_w(s, x);  // loop wire, opened once
  for (const RecipIter& it : k.iters) {
    sh = y.val;
    sh.add_(it.rho_split);
    MaskedWire wy = wire_from(b, it.sq.in, std::move(sh));
    const RingTensor& yh = open_w(s, wy);
    AdditiveShare y2(b, square_combine(cfg, b, yh, it.sq.rin, it.sq.q));
    tr(s, y2, cfg.s);
    sh = y2.val;
    sh.add_(it.tau_split);
    MaskedWire wt = wire_from(b, it.mul.in2, std::move(sh));
    const RingTensor& th = open_w(s, wt);
    AdditiveShare xy2(b, mul_combine(cfg, b, xh, th, it.mul.r1, it.mul.r2,
                                     it.mul.q));
    tr(s, xy2, cfg.s);
    y.val.scale_const_(2);
    y.val.sub_(xy2.val);  // y <- 2y - x y^2
  }
  return finish(s, k.out, k.rout, std::move(y));
}

// Euler iteration on dy/dt = y (z - y.z); input clipped to [a0, a1], divided
// by m at scale s, then m steps of y <- y + y.z - y * sum(y.z). Output stays
// additive (consumed by gradients, never re-masked).
AdditiveShare eval_softmax(GateSession& s, const SoftmaxKey& k, MaskedWire& x) {
  check_wire(x, k.in, "softmax");
  RingConfig cfg = s.cfg();
  int b = s.party;
  const RingTensor& xh = open_w(s, x);
  size_t K = xh.data.size();

  // clip: z0 = x + relu(a0 - x) - relu(x - a1), relu(w) = w (1 - 1{w<0})
  RingTensor w1h(cfg, xh.shape, cfg.s), w2h(cfg, xh.shape, cfg.s);
  for (size_t i = 0; i < K; i++) {
    w1h.data[i] = cfg.reduce(k.a0_fx - xh.data[i]);
    w2h.data[i] = cfg.reduce(xh.data[i] - k.a1_fx);
  }
  AdditiveShare p1 = eval_less_than(s, k.lt_lo, w1h);
  AdditiveShare p2 = eval_less_than(s, k.lt_hi, w2h);
  // sign wires carry (1 - p) at scale s
  auto sign_wire = [&](u64 id, const AdditiveShare& p, const RingTensor& split) {
    RingTensor sh(cfg, p.val.shape, cfg.s);
    for (size_t i = 0; i < sh.data.size(); i++)
      sh.data[i] = cfg.reduce((b == 0 ? enc1(cfg) : 0) - p.val.data[i] +
                              split.data[i]);
    return wire_from(b, id, std::move(sh));
  };
  MaskedWire s1 = sign_wire(k.clip_lo.in2, p1, k.s1_split);
  MaskedWire s2 = sign_wire(k.clip_hi.in2, p2, k.s2_split);
  const RingTensor& s1h = open_w(s, s1);
  const RingTensor& s2h = open_w(s, s2);
  AdditiveShare r1(b, mul_combine(cfg, b, w1h, s1h, k.clip_lo.r1, k.clip_lo.r2,
                                  k.clip_lo.q));
  tr(s, r1, cfg.s);
  AdditiveShare r2(b, mul_combine(cfg, b, w2h, s2h, k.clip_hi.r1, k.clip_hi.r2,
                                  k.clip_hi.q));
  tr(s, r2, cfg.s);

  AdditiveShare z(b, x.share);
  z.val.sub_(k.rin_split);  // <x>
  z.val.add_(r1.val);
  z.val.sub_(r2.val);
  z.val.scale_const_(cfg.encode(1.0 / k.m));
  tr(s, z, cfg.s);
  RingTensor zsh = z.val;
  zsh.add_(k.rz_split);
  MaskedWire wz = wire_from(b, k.iters.empty() ? kNoOffset : k.iters[0].mul1.in1,
                            std::move(zsh));
  if (!k.iters.empty()) open_w(s, wz);

  AdditiveShare y(b, RingTensor(cfg, xh.shape, cfg.s));
  if (b == 0) y.val.add_const_(cfg.encode(1.0 / (double)K));
  for (const SoftmaxIter& it : k.iters) {
    RingTensor ysh = y.val;
    ysh.add_(it.rho_split);
    MaskedWire wy = wire_from(b, it.mul1.in2, std::move(ysh));
    const RingTensor& yh = open_w(s, wy);
    AdditiveShare t(b, mul_combine(cfg, b, *wz.public_hat, yh, it.mul1.r1,
                                   it.mul1.r2, it.mul1.q));
    tr(s, t, cfg.s);
    u64 sum = 0;
    for (u64 v : t.val.data) sum = cfg.reduce(sum + v);
    RingTensor ssh = RingTensor::scalar(cfg, cfg.reduce(sum + it.rs_split.data[0]),
                                        cfg.s);
    MaskedWire ws = wire_from(b, it.mul2.in2, std::move(ssh));
    const RingTensor& shat = open_w(s, ws);
    AdditiveShare ys(b, mul_combine(cfg, b, yh, shat, it.mul2.r1, it.mul2.r2,
                                    it.mul2.q));
    tr(s, ys, cfg.s);
    // y only ever consumed additively: yh - rho = <y>
    for (size_t i = 0; i < K; i++)
      y.val.data[i] = cfg.reduce(y.val.data[i] + t.val.data[i] - ys.val.data[i]);
  }
  y.val.scale_bits = cfg.s;
  return y;
}

MaskedWire sigmoid_input_wire(const SigmoidKey& k, const AdditiveShare& x) {
  MaskedWire w;
  w.party = x.party;
  w.offset_id = k.mul1.in1;  // effective wire (2r for tanh)
  w.share = x.val;
  if (k.is_tanh) w.share.scale_const_(2);
  w.share.add_(k.mul1.r1);
  return w;
}

// sigma(x) = sigma(|x|) (1-p) + (1 - sigma(|x|)) p with p = 1{x<0};
// sigma(|x|) = 1 / (1 + exp(-|x|)). tanh runs the same pipeline at 2x and
// maps 2y - 1 at the end.
MaskedWire eval_sigmoid(GateSession& s, const SigmoidKey& k, MaskedWire& x) {
  check_wire(x, k.mul1.in1, "sigmoid");
  RingConfig cfg = s.cfg();
  int b = s.party;
  const RingTensor& xh = open_w(s, x);
  AdditiveShare p = eval_less_than(s, k.lt, xh);

  // |x| = x * (1 - 2p)
  RingTensor sh(cfg, xh.shape, cfg.s);
  for (size_t i = 0; i < sh.data.size(); i++)
    sh.data[i] = cfg.reduce((b == 0 ? enc1(cfg) : 0) - 2 * p.val.data[i] +
                            k.rs_split.data[i]);
  MaskedWire wsgn = wire_from(b, k.mul1.in2, std::move(sh));
  const RingTensor& sgnh = open_w(s, wsgn);
  AdditiveShare absx(b, mul_combine(cfg, b, xh, sgnh, k.mul1.r1, k.mul1.r2,
                                    k.mul1.q));
  tr(s, absx, cfg.s);
  RingTensor abs_wire = absx.val;
  abs_wire.add_(k.mul1.rout);  // |x| + r_abs

  // exp(-|x|): the exp key is bound to the offset -r_abs
  RingTensor esh = abs_wire;
  esh.neg_();
  MaskedWire we = wire_from(b, k.exp->in, std::move(esh));
  AdditiveShare e = eval_exp_wire(s, *k.exp, we);

  AdditiveShare d = e;
  if (b == 0) d.val.add_const_(enc1(cfg));
  RingTensor dsh = d.val;
  dsh.add_(k.recip->rin_split);
  MaskedWire wd = wire_from(b, k.recip->in, std::move(dsh));
  MaskedWire sg = eval_recip(s, *k.recip, wd);
  AdditiveShare sa = drop_output_offset(sg);  // sigma(|x|), additive

  // select on sign
  RingTensor w4 = sa.val;
  w4.add_(k.r4_split);
  MaskedWire m4 = wire_from(b, k.mul2.in1, std::move(w4));
  RingTensor w5(cfg, xh.shape, cfg.s);
  for (size_t i = 0; i < w5.data.size(); i++)
    w5.data[i] = cfg.reduce((b == 0 ? enc1(cfg) : 0) - p.val.data[i] +
                            k.r5_split.data[i]);
  MaskedWire m5 = wire_from(b, k.mul2.in2, std::move(w5));
  const RingTensor& h4 = open_w(s, m4);
  const RingTensor& h5 = open_w(s, m5);
  AdditiveShare u2(b, mul_combine(cfg, b, h4, h5, k.mul2.r1, k.mul2.r2, k.mul2.q));
  tr(s, u2, cfg.s);

  RingTensor w6(cfg, xh.shape, cfg.s);
  for (size_t i = 0; i < w6.data.size(); i++)
    w6.data[i] = cfg.reduce((b == 0 ? enc1(cfg) : 0) - sa.val.data[i] +
                            k.r6_split.data[i]);
  MaskedWire m6 = wire_from(b, k.mul3.in1, std::move(w6));
  RingTensor w7 = p.val;
  w7.add_(k.r7_split);
  MaskedWire m7 = wire_from(b, k.mul3.in2, std::move(w7));
  const RingTensor& h6 = open_w(s, m6);
  const RingTensor& h7 = open_w(s, m7);
  AdditiveShare u3(b, mul_combine(cfg, b, h6, h7, k.mul3.r1, k.mul3.r2, k.mul3.q));
  tr(s, u3, cfg.s);

  AdditiveShare out(b, u2.val);
  out.val.add_(u3.val);
  if (k.is_tanh) {
    out.val.scale_const_(2);
    if (b == 0) out.val.add_const_(cfg.reduce(0 - enc1(cfg)));
  }
  return finish(s, k.out, k.rout, std::move(out));
}

// Static: sigma is key material, only sigma_hat = sigma + r_sigma is shipped
// (identical in both keys, so it is public); open x_hat + trunc = 3l.
// Dynamic: the dealer hides a threshold per element, the public online rate p
// is fed to an FSS keep-test (zero bits), and the integer-scale keep bit flows
// through a mul with no truncation; 5l total.
MaskedWire eval_dropout(GateSession& s, const DropoutKey& k, MaskedWire& x,
                        double p_online) {
  check_wire(x, k.in, "dropout");
  RingConfig cfg = s.cfg();
  int b = s.party;
  const RingTensor& xh = open_w(s, x);
  if (!k.dynamic) {
    AdditiveShare u(b, mul_combine(cfg, b, xh, k.sigma_hat, k.mul.r1, k.mul.r2,
                                   k.mul.q));
    tr(s, u, cfg.s);
    return finish(s, k.mul.out, k.mul.rout, std::move(u));
  }
  u64 p_fx = cfg.encode(p_online);
  RingTensor beta(cfg, xh.shape, 0);
  for (size_t i = 0; i < beta.data.size(); i++)
    beta.data[i] = dcf_eval(b, k.cmp.at(i), p_fx);  // 1{p <= r}, integer scale
  beta.add_(k.rbeta_split);
  MaskedWire wf = wire_from(b, k.mul.in2, std::move(beta));
  const RingTensor& fh = open_w(s, wf);
  AdditiveShare u(b, mul_combine(cfg, b, xh, fh, k.mul.r1, k.mul.r2, k.mul.q));
  // x * beta is exact at scale s (beta is 0/1); only the keep-rate scaling
  // needs a truncation.
  u.val.scale_const_(cfg.encode(1.0 / (1.0 - p_online)));
  tr(s, u, cfg.s);
  return finish(s, k.mul.out, k.mul.rout, std::move(u));
}

MaskedWire eval_tp(GateSession& s, const TpKey& k, MaskedWire& x, MaskedWire& y) {
  check_wire(x, k.in1, "tp");
  check_wire(y, k.in2, "tp");
  RingConfig cfg = s.cfg();
  int b = s.party;
  const RingTensor& xh = open_w(s, x);
  const RingTensor& yh = open_w(s, y);
  size_t M = xh.data.size(), N = yh.data.size();
  RingTensor u(cfg, {(u32)M, (u32)N}, 0);
  for (size_t i = 0; i < M; i++)
    for (size_t j = 0; j < N; j++) {
      u64 acc = cfg.reduce(k.q.data[i * N + j] - xh.data[i] * k.r2.data[j] -
                           yh.data[j] * k.r1.data[i]);
      if (b == 0) acc = cfg.reduce(acc + xh.data[i] * yh.data[j]);
      u.data[i * N + j] = acc;
    }
  AdditiveShare z(b, std::move(u));
  tr(s, z, cfg.s);
  return finish(s, k.out, k.rout, std::move(z));
}

// ---- baselines -------------------------------------------------------------

AdditiveShare baseline_exp(GateSession& s, BaselineKeys& k,
                           const AdditiveShare& x, int m) {
  RingConfig cfg = s.cfg();
  // raw words reinterpreted at scale s+m give x / 2^m for free
  AdditiveShare t = x;
  if (s.party == 0) t.val.add_const_(cfg.reduce(1ULL << (cfg.s + m)));
  for (int i = 0; i < m; i++)
    t = beaver_mul(s, k.triples.at(i), t, t, cfg.s + m);
  tr(s, t, m);
  t.val.scale_bits = cfg.s;
  return t;
}

AdditiveShare baseline_recip(GateSession& s, BaselineKeys& k,
                             const AdditiveShare& x, int m, bool with_init,
                             double y0, int m_exp) {
  RingConfig cfg = s.cfg();
  int b = s.party;
  size_t ti = 0;
  AdditiveShare y(b, RingTensor(cfg, x.val.shape, cfg.s));
  if (with_init) {
    if (b == 0) y.val.add_const_(cfg.encode(y0));
  } else {
    AdditiveShare w = x;
    w.val.scale_const_(cfg.reduce(0 - 2));
    if (b == 0) w.val.add_const_(enc1(cfg));
    BaselineKeys sub;
    for (int i = 0; i < m_exp; i++) sub.triples.push_back(std::move(k.triples.at(ti++)));
    AdditiveShare e = baseline_exp(s, sub, w, m_exp);
    e.val.scale_const_(3);  // integer, exact
    if (b == 0) e.val.add_const_(cfg.encode(0.003));
    y = std::move(e);
  }
  for (int i = 0; i <= m; i++) {
    AdditiveShare y2 = beaver_mul(s, k.triples.at(ti++), y, y, cfg.s);
    AdditiveShare xy2 = beaver_mul(s, k.triples.at(ti++), x, y2, cfg.s);
    y.val.scale_const_(2);
    y.val.sub_(xy2.val);
  }
  y.val.scale_bits = cfg.s;
  return y;
}

AdditiveShare baseline_tp(GateSession& s, BaselineKeys& k,
                          const AdditiveShare& x, const AdditiveShare& y) {
  RingConfig cfg = s.cfg();
  size_t M = x.val.data.size(), N = y.val.data.size();
  // broadcast both operands to M x N and run one elementwise triple
  AdditiveShare xb(s.party, RingTensor(cfg, {(u32)M, (u32)N}, x.val.scale_bits));
  AdditiveShare yb(s.party, RingTensor(cfg, {(u32)M, (u32)N}, y.val.scale_bits));
  for (size_t i = 0; i < M; i++)
    for (size_t j = 0; j < N; j++) {
      xb.val.data[i * N + j] = x.val.data[i];
      yb.val.data[i * N + j] = y.val.data[j];
    }
  return beaver_mul(s, k.triples.at(0), xb, yb, cfg.s);
}

AdditiveShare baseline_dropout(GateSession& s, BaselineKeys& k,
                               const AdditiveShare& x, bool dynamic, double p) {
  RingConfig cfg = s.cfg();
  int b = s.party;
  if (!dynamic)
    return beaver_mul(s, k.triples.at(0), x, k.extra.at(0), cfg.s);
  // comparison: open w_hat = (r - p) + rho, sign-test, reshare, multiply
  size_t n = x.val.data.size();
  std::vector<u64> wsh(n);
  u64 p_fx = cfg.encode(p);
  for (size_t i = 0; i < n; i++)
    wsh[i] = cfg.reduce(k.extra.at(0).val.data[i] -
                        (b == 0 ? p_fx : 0) + k.masks.at(0).share.data[i]);
  std::vector<u64> theirs = exchange(*s.chan, s.label, wsh);
  RingTensor what(cfg, x.val.shape, cfg.s);
  for (size_t i = 0; i < n; i++) what.data[i] = cfg.reduce(wsh[i] + theirs[i]);
  RingTensor drop(cfg, x.val.shape, cfg.s);
  for (size_t i = 0; i < n; i++)
    drop.data[i] = sign_test_eval(b, k.signs.at(i), what.data[i]);  // 1{r<p}
  RingTensor keep(cfg, x.val.shape, cfg.s);
  for (size_t i = 0; i < n; i++)
    keep.data[i] = cfg.reduce((b == 0 ? enc1(cfg) : 0) - drop.data[i]);
  // reshare through the dealer mask nu
  std::vector<u64> csh(n);
  for (size_t i = 0; i < n; i++)
    csh[i] = cfg.reduce(keep.data[i] + k.extra.at(1).val.data[i]);
  std::vector<u64> ctheirs = exchange(*s.chan, s.label, csh);
  AdditiveShare sigma(b, RingTensor(cfg, x.val.shape, 2 * cfg.s));
  u64 kf = cfg.encode(1.0 / (1.0 - p));
  for (size_t i = 0; i < n; i++) {
    u64 fresh = cfg.reduce((b == 0 ? csh[i] + ctheirs[i] : 0) -
                           k.extra.at(1).val.data[i]);
    sigma.val.data[i] = cfg.reduce(fresh * kf);  // keep/(1-p) at scale 2s
  }
  return beaver_mul(s, k.triples.at(0), x, sigma, 2 * cfg.s);
}

AdditiveShare baseline_softmax(GateSession& s, BaselineKeys& k,
                               const AdditiveShare& x, int m) {
  RingConfig cfg = s.cfg();
  int b = s.party;
  size_t K = x.val.data.size();
  AdditiveShare z = x;
  z.val.scale_const_(cfg.encode(1.0 / m));
  tr(s, z, cfg.s);
  AdditiveShare y(b, RingTensor(cfg, x.val.shape, cfg.s));
  if (b == 0) y.val.add_const_(cfg.encode(1.0 / (double)K));
  size_t ti = 0;
  for (int i = 0; i < m; i++) {
    AdditiveShare t = beaver_mul(s, k.triples.at(ti++), z, y, cfg.s);
    u64 sum = 0;
    for (u64 v : t.val.data) sum = cfg.reduce(sum + v);
    AdditiveShare Sb(b, RingTensor(cfg, x.val.shape, cfg.s));
    for (size_t j = 0; j < K; j++) Sb.val.data[j] = sum;
    AdditiveShare ys = beaver_mul(s, k.triples.at(ti++), y, Sb, cfg.s);
    for (size_t j = 0; j < K; j++)
      y.val.data[j] = cfg.reduce(y.val.data[j] + t.val.data[j] - ys.val.data[j]);
  }
  return y;
}

// ---- baseline key provisioning ---------------------------------------------

namespace {
void push_triples(Dealer& d, const std::vector<u32>& shape, int n,
                  BaselineKeys& mine, BaselineKeys* peer) {
  for (int i = 0; i < n; i++) {
    auto [a, b] = d.gen_beaver(shape, shape, true);
    mine.triples.push_back(std::move(a));
    peer->triples.push_back(std::move(b));
  }
}
}  // namespace

BaselineKeys gen_baseline_exp(Dealer& d, const std::vector<u32>& shape, int m,
                              BaselineKeys* peer) {
  BaselineKeys k;
  push_triples(d, shape, m, k, peer);
  return k;
}

BaselineKeys gen_baseline_recip(Dealer& d, const std::vector<u32>& shape, int m,
                                bool with_init, int m_exp, BaselineKeys* peer) {
  BaselineKeys k;
  if (!with_init) push_triples(d, shape, m_exp, k, peer);
  push_triples(d, shape, 2 * (m + 1), k, peer);
  return k;
}

BaselineKeys gen_baseline_tp(Dealer& d, u32 M, u32 N, BaselineKeys* peer) {
  BaselineKeys k;
  push_triples(d, {M, N}, 1, k, peer);
  return k;
}

BaselineKeys gen_baseline_dropout(Dealer& d, const std::vector<u32>& shape,
                                  bool dynamic, double p, BaselineKeys* peer) {
  RingConfig cfg = d.ring();
  BaselineKeys k;
  size_t n = 1;
  for (u32 dim : shape) n *= dim;
  if (!dynamic) {
    u64 p_fx = cfg.encode(p);
    u64 keep = cfg.encode(1.0 / (1.0 - p));
    u64 frac_mask = (1ULL << cfg.s) - 1;
    RingTensor sigma(cfg, shape, cfg.s);
    for (size_t i = 0; i < n; i++) {
      u64 rv = d.rng().next_u64() & frac_mask;
      sigma.data[i] = (rv >= p_fx) ? keep : 0;
    }
    auto [s0, s1] = split(sigma, d.rng());
    k.extra.push_back(std::move(s0));
    peer->extra.push_back(std::move(s1));
    push_triples(d, shape, 1, k, peer);
    return k;
  }
  u64 frac_mask = (1ULL << cfg.s) - 1;
  RingTensor r(cfg, shape, cfg.s), nu(cfg, shape, cfg.s), rho(cfg, shape, 0);
  for (size_t i = 0; i < n; i++) r.data[i] = d.rng().next_u64() & frac_mask;
  nu.random_fill(d.rng());
  rho.random_fill(d.rng());
  auto [r0, r1] = split(r, d.rng());
  auto [n0, n1] = split(nu, d.rng());
  auto [h0, h1] = split(rho, d.rng());
  k.extra.push_back(std::move(r0));
  peer->extra.push_back(std::move(r1));
  k.extra.push_back(std::move(n0));
  peer->extra.push_back(std::move(n1));
  u64 id = d.fresh_offset_id();
  k.masks.push_back({id, h0.val});
  peer->masks.push_back({id, h1.val});
  u64 one = cfg.encode(1.0);
  for (size_t i = 0; i < n; i++) {
    auto [t0, t1] = sign_test_gen(cfg, rho.data[i], one, d.rng());
    k.signs.push_back(std::move(t0));
    peer->signs.push_back(std::move(t1));
  }
  push_triples(d, shape, 1, k, peer);
  return k;
}

BaselineKeys gen_baseline_softmax(Dealer& d, int K, int m, BaselineKeys* peer) {
  BaselineKeys k;
  push_triples(d, {(u32)K}, 2 * m, k, peer);
  return k;
}

}  // namespace hss
