#include "hss/dealer.hpp"

#include <cstring>
#include <stdexcept>

namespace hss {

GateKind kind_of(const GateKey& k) {
  struct V {
    GateKind operator()(const BeaverKey&) { return GateKind::Beaver; }
    GateKind operator()(const MulKey&) { return GateKind::Mul; }
    GateKind operator()(const SquareKey&) { return GateKind::Square; }
    GateKind operator()(const PowerKey&) { return GateKind::Power; }
    GateKind operator()(const ExpKey&) { return GateKind::Exp; }
    GateKind operator()(const LessThanKey&) { return GateKind::LessThan; }
    GateKind operator()(const RecipKey&) { return GateKind::Recip; }
    GateKind operator()(const SoftmaxKey&) { return GateKind::Softmax; }
    GateKind operator()(const SigmoidKey&) { return GateKind::Sigmoid; }
    GateKind operator()(const DropoutKey& d) {
      return d.dynamic ? GateKind::DropoutDynamic : GateKind::DropoutStatic;
    }
    GateKind operator()(const TpKey&) { return GateKind::TP; }
  };
  return std::visit(V{}, k);
}

GateKey& Bundle::next(GateKind expect) {
  if (cursor >= gates.size()) throw std::runtime_error("bundle exhausted");
  GateKey& g = gates[cursor++];
  if (kind_of(g) != expect)
    throw std::runtime_error("bundle: gate kind mismatch at index " +
                             std::to_string(cursor - 1));
  return g;
}

// ---- dealer internals ------------------------------------------------------

RingTensor Dealer::rand_tensor(const std::vector<u32>& shape, int scale) {
  RingTensor t(cfg_, shape, scale);
  t.random_fill(rng_);
  return t;
}

std::pair<RingTensor, RingTensor> Dealer::split2(const RingTensor& v) {
  RingTensor a(v.cfg, v.shape, v.scale_bits);
  a.random_fill(rng_);
  RingTensor b = v;
  b.sub_(a);
  return {a, b};
}

Dealer::WireMask Dealer::fresh_mask(const std::vector<u32>& shape) {
  WireMask w;
  w.id = fresh_offset_id();
  w.r = rand_tensor(shape, 0);
  auto [a, b] = split2(w.r);
  w.r0 = std::move(a);
  w.r1 = std::move(b);
  return w;
}

std::pair<BeaverKey, BeaverKey> Dealer::gen_beaver(const std::vector<u32>& sa,
                                                   const std::vector<u32>& sb,
                                                   bool elementwise) {
  RingTensor A = rand_tensor(sa, 0), B = rand_tensor(sb, 0);
  RingTensor C = elementwise ? mul_elem(A, B) : matmul(A, B);
  auto [a0, a1] = split2(A);
  auto [b0, b1] = split2(B);
  auto [c0, c1] = split2(C);
  BeaverKey k0{sa, sb, std::move(a0), std::move(b0), std::move(c0), elementwise};
  BeaverKey k1{sa, sb, std::move(a1), std::move(b1), std::move(c1), elementwise};
  return {std::move(k0), std::move(k1)};
}

std::pair<MulKey, MulKey> Dealer::gen_mul(const WireMask& r1, const WireMask& r2,
                                          bool with_out) {
  RingTensor q = mul_elem(r1.r, r2.r);
  auto [q0, q1] = split2(q);
  MulKey k0{r1.id, r2.id, kNoOffset, r1.r0, r2.r0, std::move(q0), {}};
  MulKey k1{r1.id, r2.id, kNoOffset, r1.r1, r2.r1, std::move(q1), {}};
  if (with_out) {
    WireMask ro = fresh_mask(r1.r.shape);
    k0.out = k1.out = ro.id;
    k0.rout = ro.r0;
    k1.rout = ro.r1;
  }
  return {std::move(k0), std::move(k1)};
}

std::pair<SquareKey, SquareKey> Dealer::gen_square(const WireMask& r,
                                                   bool with_out) {
  RingTensor q = mul_elem(r.r, r.r);
  auto [q0, q1] = split2(q);
  SquareKey k0{r.id, kNoOffset, r.r0, std::move(q0), {}};
  SquareKey k1{r.id, kNoOffset, r.r1, std::move(q1), {}};
  if (with_out) {
    WireMask ro = fresh_mask(r.r.shape);
    k0.out = k1.out = ro.id;
    k0.rout = ro.r0;
    k1.rout = ro.r1;
  }
  return {std::move(k0), std::move(k1)};
}

std::pair<PowerKey, PowerKey> Dealer::gen_power(const WireMask& r, u64 n,
                                                const std::vector<u32>& shape,
                                                bool with_out) {
  if (n < 2) throw std::invalid_argument("gen_power: n >= 2");
  if (shape != r.r.shape) throw std::invalid_argument("gen_power: shape");
  PowerKey k0, k1;
  k0.in = k1.in = r.id;
  k0.n = k1.n = n;
  // Left-to-right square-and-multiply; wires chained through fresh masks.
  int top = 63;
  while (!((n >> top) & 1)) top--;
  WireMask cur = r;  // wire currently holding the running power
  for (int i = top - 1; i >= 0; i--) {
    bool last_step = (i == 0) && !((n >> i) & 1);
    auto [s0, s1] = gen_square(cur, true);
    if (last_step && !with_out) { s0.out = s1.out = kNoOffset; s0.rout = {}; s1.rout = {}; }
    // recover the output mask of the square we just made for chaining
    WireMask nxt;
    nxt.id = s0.out;
    if (s0.out != kNoOffset) {
      nxt.r = s0.rout;  nxt.r.add_(s1.rout);
      nxt.r0 = s0.rout; nxt.r1 = s1.rout;
    }
    k0.segs.push_back(std::move(s0));
    k1.segs.push_back(std::move(s1));
    cur = nxt;
    if ((n >> i) & 1) {
      bool last = (i == 0);
      auto [m0, m1] = gen_mul(cur, r, !(last && !with_out));
      WireMask nxt2;
      nxt2.id = m0.out;
      if (m0.out != kNoOffset) {
        nxt2.r = m0.rout;  nxt2.r.add_(m1.rout);
        nxt2.r0 = m0.rout; nxt2.r1 = m1.rout;
      }
      k0.muls.push_back(std::move(m0));
      k1.muls.push_back(std::move(m1));
      cur = nxt2;
    }
  }
  k0.out = k1.out = cur.id;
  return {std::move(k0), std::move(k1)};
}

std::pair<ExpKey, ExpKey> Dealer::gen_exp(const RingTensor& r_in_value, u64 in_id,
                                          int m, const std::vector<u32>& shape,
                                          bool with_out) {
  ExpKey k0, k1;
  k0.in = k1.in = in_id;
  k0.m = k1.m = m;
  auto [ri0, ri1] = split2(r_in_value);
  k0.rin_split = std::move(ri0);
  k1.rin_split = std::move(ri1);
  for (int i = 0; i < m; i++) {
    WireMask seg = fresh_mask(shape);
    auto [s0, s1] = gen_square(seg, false);
    k0.segs.push_back(std::move(s0));
    k1.segs.push_back(std::move(s1));
  }
  if (with_out) {
    WireMask ro = fresh_mask(shape);
    k0.out = k1.out = ro.id;
    k0.rout = ro.r0;
    k1.rout = ro.r1;
  }
  return {std::move(k0), std::move(k1)};
}

std::pair<LessThanKey, LessThanKey> Dealer::gen_less_than(
    const RingTensor& r_in_value, u64 in_id, u64 beta) {
  LessThanKey k0, k1;
  k0.in = k1.in = in_id;
  k0.beta = k1.beta = beta;
  for (u64 rv : r_in_value.data) {
    auto [s0, s1] = sign_test_gen(cfg_, rv, beta, rng_);
    k0.elems.push_back(std::move(s0));
    k1.elems.push_back(std::move(s1));
  }
  return {std::move(k0), std::move(k1)};
}

std::pair<RecipKey, RecipKey> Dealer::gen_recip(const WireMask& r, int m,
                                                bool with_init, double y0,
                                                int m_exp, bool with_out) {
  const auto& shape = r.r.shape;
  RecipKey k0, k1;
  k0.in = k1.in = r.id;
  k0.m = k1.m = m;
  k0.with_init = k1.with_init = with_init;
  if (with_init) k0.y0_fx = k1.y0_fx = cfg_.encode(y0);
  k0.rin_split = r.r0;
  k1.rin_split = r.r1;
  if (!with_init) {
    // y0 = 3 e^(1-2x) + 0.003; exp keyed on the affine offset -2 r_in.
    RingTensor rexp = r.r;
    rexp.scale_const_(cfg_.reduce(~0ULL - 1));  // * -2
    auto [e0, e1] = gen_exp(rexp, fresh_offset_id(), m_exp, shape, false);
    k0.exp = std::make_unique<ExpKey>(std::move(e0));
    k1.exp = std::make_unique<ExpKey>(std::move(e1));
  }
  // Zeroth Newton step h0 = y0 (2 - x y0) on freshly masked wires.
  WireMask ra1 = fresh_mask(shape), ra2 = fresh_mask(shape);
  auto [ma0, ma1] = gen_mul(ra1, ra2, true);
  WireMask ra3;
  ra3.id = ma0.out;
  ra3.r = ma0.rout; ra3.r.add_(ma1.rout);
  ra3.r0 = ma0.rout; ra3.r1 = ma1.rout;
  WireMask rb1 = fresh_mask(shape), rb2 = fresh_mask(shape);
  auto [mb0, mb1] = gen_mul(rb1, rb2, false);
  k0.init_a = std::move(ma0); k1.init_a = std::move(ma1);
  k0.init_b = std::move(mb0); k1.init_b = std::move(mb1);
  k0.ra1_split = ra1.r0; k1.ra1_split = ra1.r1;
  k0.ra2_split = ra2.r0; k1.ra2_split = ra2.r1;
  k0.rb1_split = rb1.r0; k1.rb1_split = rb1.r1;
  k0.rb2_split = rb2.r0; k1.rb2_split = rb2.r1;
  WireMask rho = fresh_mask(shape);  // mask of the t_0 wire
  k0.rho0_split = rho.r0; k1.rho0_split = rho.r1;
  for (int i = 0; i < m; i++) {
    auto [s0, s1] = gen_square(rho, false);
    WireMask tau = fresh_mask(shape);
    auto [mm0, mm1] = gen_mul(r, tau, false);
    RecipIter it0{std::move(s0), std::move(mm0), rho.r0, tau.r0};
    RecipIter it1{std::move(s1), std::move(mm1), rho.r1, tau.r1};
    k0.iters.push_back(std::move(it0));
    k1.iters.push_back(std::move(it1));
    rho = fresh_mask(shape);  // mask of the next y wire (unused after last)
  }
  if (with_out) {
    WireMask ro = fresh_mask(shape);
    k0.out = k1.out = ro.id;
    k0.rout = ro.r0;
    k1.rout = ro.r1;
  }
  return {std::move(k0), std::move(k1)};
}

std::pair<SoftmaxKey, SoftmaxKey> Dealer::gen_softmax(const WireMask& r, int K,
                                                      int m, double a0,
                                                      double a1) {
  std::vector<u32> shape{(u32)K};
  SoftmaxKey k0, k1;
  k0.in = k1.in = r.id;
  k0.K = k1.K = K;
  k0.m = k1.m = m;
  k0.a0_fx = k1.a0_fx = cfg_.encode(a0);
  k0.a1_fx = k1.a1_fx = cfg_.encode(a1);
  k0.rin_split = r.r0;
  k1.rin_split = r.r1;
  u64 one = cfg_.encode(1.0);
  RingTensor neg_r = r.r;
  neg_r.neg_();
  auto [ll0, ll1] = gen_less_than(neg_r, fresh_offset_id(), one);
  auto [lh0, lh1] = gen_less_than(r.r, fresh_offset_id(), one);
  k0.lt_lo = std::move(ll0); k1.lt_lo = std::move(ll1);
  k0.lt_hi = std::move(lh0); k1.lt_hi = std::move(lh1);
  // ReLU muls: (a0 - x) wire has offset -r_in, (x - a1) wire offset r_in.
  WireMask wlo;  // synthetic mask record for -r_in
  wlo.id = fresh_offset_id();
  wlo.r = neg_r;
  wlo.r0 = r.r0; wlo.r0.neg_();
  wlo.r1 = r.r1; wlo.r1.neg_();
  WireMask s1m = fresh_mask(shape), s2m = fresh_mask(shape);
  auto [cl0, cl1] = gen_mul(wlo, s1m, false);
  auto [ch0, ch1] = gen_mul(r, s2m, false);
  k0.clip_lo = std::move(cl0); k1.clip_lo = std::move(cl1);
  k0.clip_hi = std::move(ch0); k1.clip_hi = std::move(ch1);
  k0.s1_split = s1m.r0; k1.s1_split = s1m.r1;
  k0.s2_split = s2m.r0; k1.s2_split = s2m.r1;
  WireMask rz = fresh_mask(shape);
  k0.rz_split = rz.r0; k1.rz_split = rz.r1;
  for (int i = 0; i < m; i++) {
    WireMask rho = fresh_mask(shape);
    WireMask rs = fresh_mask({});
    auto [m10, m11] = gen_mul(rz, rho, false);
    // q2 = rho * rS (scalar broadcast)
    RingTensor q2 = rho.r;
    q2.scale_const_(rs.r.data[0]);
    auto [q20, q21] = split2(q2);
    MulKey m20{rho.id, rs.id, kNoOffset, rho.r0, rs.r0, std::move(q20), {}};
    MulKey m21{rho.id, rs.id, kNoOffset, rho.r1, rs.r1, std::move(q21), {}};
    SoftmaxIter it0{std::move(m10), std::move(m20), rho.r0, rs.r0};
    SoftmaxIter it1{std::move(m11), std::move(m21), rho.r1, rs.r1};
    k0.iters.push_back(std::move(it0));
    k1.iters.push_back(std::move(it1));
  }
  return {std::move(k0), std::move(k1)};
}

std::pair<SigmoidKey, SigmoidKey> Dealer::gen_sigmoid(
    const WireMask& r, bool is_tanh, int m_exp, int m_recip,
    const std::vector<u32>& shape, bool with_out) {
  SigmoidKey k0, k1;
  k0.in = k1.in = r.id;
  k0.is_tanh = k1.is_tanh = is_tanh;
  k0.m_exp = k1.m_exp = m_exp;
  k0.m_recip = k1.m_recip = m_recip;
  // Effective offset of the wire the machinery sees (2r for tanh).
  WireMask re = r;
  if (is_tanh) {
    re.id = fresh_offset_id();
    re.r.scale_const_(2);
    re.r0.scale_const_(2);
    re.r1.scale_const_(2);
  }
  u64 one = cfg_.encode(1.0);
  auto [lt0, lt1] = gen_less_than(re.r, re.id, one);
  k0.lt = std::move(lt0); k1.lt = std::move(lt1);
  WireMask rs = fresh_mask(shape);
  k0.rs_split = rs.r0; k1.rs_split = rs.r1;
  auto [m10, m11] = gen_mul(re, rs, true);  // |x| wire, mask r_abs
  RingTensor r_abs = m10.rout; r_abs.add_(m11.rout);
  RingTensor neg_r_abs = r_abs; neg_r_abs.neg_();
  auto [e0, e1] = gen_exp(neg_r_abs, fresh_offset_id(), m_exp, shape, false);
  k0.mul1 = std::move(m10); k1.mul1 = std::move(m11);
  k0.exp = std::make_unique<ExpKey>(std::move(e0));
  k1.exp = std::make_unique<ExpKey>(std::move(e1));
  WireMask rd = fresh_mask(shape);  // wire mask for d = 1 + e^-|x|
  auto [rc0, rc1] = gen_recip(rd, m_recip, true, 0.5, m_exp, false);
  k0.recip = std::make_unique<RecipKey>(std::move(rc0));
  k1.recip = std::make_unique<RecipKey>(std::move(rc1));
  // recip rin_split doubles as the mask share used to enter the recip wire
  WireMask r4 = fresh_mask(shape), r5 = fresh_mask(shape);
  WireMask r6 = fresh_mask(shape), r7 = fresh_mask(shape);
  auto [m20, m21] = gen_mul(r4, r5, false);
  auto [m30, m31] = gen_mul(r6, r7, false);
  k0.mul2 = std::move(m20); k1.mul2 = std::move(m21);
  k0.mul3 = std::move(m30); k1.mul3 = std::move(m31);
  k0.r4_split = r4.r0; k1.r4_split = r4.r1;
  k0.r5_split = r5.r0; k1.r5_split = r5.r1;
  k0.r6_split = r6.r0; k1.r6_split = r6.r1;
  k0.r7_split = r7.r0; k1.r7_split = r7.r1;
  if (with_out) {
    WireMask ro = fresh_mask(shape);
    k0.out = k1.out = ro.id;
    k0.rout = ro.r0;
    k1.rout = ro.r1;
  }
  return {std::move(k0), std::move(k1)};
}

std::pair<DropoutKey, DropoutKey> Dealer::gen_dropout(
    const WireMask& r, double p, bool dynamic, const std::vector<u32>& shape,
    bool with_out) {
  DropoutKey k0, k1;
  k0.dynamic = k1.dynamic = dynamic;
  k0.in = k1.in = r.id;
  size_t n = r.r.numel();
  u64 frac_mask = (cfg_.s >= 64) ? ~0ULL : ((1ULL << cfg_.s) - 1);
  WireMask rm = fresh_mask(shape);  // r_sigma or r_beta
  if (!dynamic) {
    k0.p_fx = k1.p_fx = cfg_.encode(p);
    u64 keep = cfg_.encode(1.0 / (1.0 - p));
    RingTensor sigma(cfg_, shape, cfg_.s);
    for (size_t i = 0; i < n; i++) {
      u64 rv = rng_.next_u64() & frac_mask;  // uniform on [0,1) at scale s
      // drop with probability p: sigma = 1/(1-p) * 1{r >= p}
      sigma.data[i] = (rv >= k0.p_fx) ? keep : 0;
    }
    RingTensor sig_hat = sigma;
    sig_hat.add_(rm.r);
    k0.sigma_hat = sig_hat;
    k1.sigma_hat = std::move(sig_hat);
    auto [mk0, mk1] = gen_mul(r, rm, with_out);
    k0.mul = std::move(mk0);
    k1.mul = std::move(mk1);
    k0.out = k0.mul.out; k1.out = k1.mul.out;
  } else {
    // Key holds a hidden threshold per element; the public rate p arrives
    // online and is compared via an FSS point made at gen time.
    for (size_t i = 0; i < n; i++) {
      u64 rv = rng_.next_u64() & frac_mask;
      // keep test: 1{p <= r} = 1{P < r+1} via DCF at point r+1, payload 1
      auto [d0, d1] = dcf_gen(cfg_, cfg_.l, cfg_.reduce(rv + 1), 1, rng_);
      k0.cmp.push_back(std::move(d0));
      k1.cmp.push_back(std::move(d1));
    }
    k0.rbeta_split = rm.r0;
    k1.rbeta_split = rm.r1;
    auto [mk0, mk1] = gen_mul(r, rm, with_out);
    k0.mul = std::move(mk0);
    k1.mul = std::move(mk1);
    k0.out = k0.mul.out; k1.out = k1.mul.out;
  }
  return {std::move(k0), std::move(k1)};
}

std::pair<TpKey, TpKey> Dealer::gen_tp(const WireMask& r1, const WireMask& r2,
                                       bool with_out) {
  RingTensor q = outer(r1.r, r2.r);
  auto [q0, q1] = split2(q);
  TpKey k0{r1.id, r2.id, kNoOffset, r1.r0, r2.r0, std::move(q0), {}};
  TpKey k1{r1.id, r2.id, kNoOffset, r1.r1, r2.r1, std::move(q1), {}};
  if (with_out) {
    WireMask ro = fresh_mask({(u32)r1.r.numel(), (u32)r2.r.numel()});
    k0.out = k1.out = ro.id;
    k0.rout = ro.r0;
    k1.rout = ro.r1;
  }
  return {std::move(k0), std::move(k1)};
}

// ---- serialization ---------------------------------------------------------

namespace {

u32 crc32_update(u32 crc, const u8* p, size_t n) {
  static u32 table[256];
  static bool init = false;
  if (!init) {
    for (u32 i = 0; i < 256; i++) {
      u32 c = i;
      for (int k = 0; k < 8; k++) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  crc ^= 0xFFFFFFFFu;
  for (size_t i = 0; i < n; i++) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

struct Writer {
  std::vector<u8> buf;
  void u8_(u8 v) { buf.push_back(v); }
  void u16_(u16 v) { for (int i = 0; i < 2; i++) buf.push_back((u8)(v >> (8 * i))); }
  void u32_(u32 v) { for (int i = 0; i < 4; i++) buf.push_back((u8)(v >> (8 * i))); }
  void u64_(u64 v) { for (int i = 0; i < 8; i++) buf.push_back((u8)(v >> (8 * i))); }
};

struct Reader {
  const std::vector<u8>& buf;
  size_t pos = 0;
  u8 u8_() { check(1); return buf[pos++]; }
  u16 u16_() { check(2); u16 v = 0; for (int i = 0; i < 2; i++) v |= (u16)buf[pos++] << (8 * i); return v; }
  u32 u32_() { check(4); u32 v = 0; for (int i = 0; i < 4; i++) v |= (u32)buf[pos++] << (8 * i); return v; }
  u64 u64_() { check(8); u64 v = 0; for (int i = 0; i < 8; i++) v |= (u64)buf[pos++] << (8 * i); return v; }
  void check(size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("bundle: truncated");
  }
};

// Per-gate flattening: params words describe structure, tensors ride in the
// gate's tensor list in a fixed documented order.
struct Flat {
  std::vector<u64> params;
  std::vector<const RingTensor*> tensors;
  void p(u64 v) { params.push_back(v); }
  void t(const RingTensor& x) { tensors.push_back(&x); }
  void opt(const RingTensor& x) {  // tensor that may be empty
    p(x.data.empty() ? 0 : 1);
    if (!x.data.empty()) tensors.push_back(&x);
  }
};

struct Unflat {
  const std::vector<u64>& params;
  std::vector<RingTensor>& tensors;
  size_t pp = 0, tp = 0;
  u64 p() { if (pp >= params.size()) throw std::runtime_error("bundle: params"); return params[pp++]; }
  RingTensor t() { if (tp >= tensors.size()) throw std::runtime_error("bundle: tensors"); return std::move(tensors[tp++]); }
  RingTensor opt() { return p() ? t() : RingTensor{}; }
};

void flat_mul(const MulKey& k, Flat& f) {
  f.p(k.in1); f.p(k.in2); f.p(k.out);
  f.t(k.r1); f.t(k.r2); f.t(k.q);
  f.opt(k.rout);
}
MulKey unflat_mul(Unflat& u) {
  MulKey k;
  k.in1 = u.p(); k.in2 = u.p(); k.out = u.p();
  k.r1 = u.t(); k.r2 = u.t(); k.q = u.t();
  k.rout = u.opt();
  return k;
}

void flat_square(const SquareKey& k, Flat& f) {
  f.p(k.in); f.p(k.out);
  f.t(k.rin); f.t(k.q);
  f.opt(k.rout);
}
SquareKey unflat_square(Unflat& u) {
  SquareKey k;
  k.in = u.p(); k.out = u.p();
  k.rin = u.t(); k.q = u.t();
  k.rout = u.opt();
  return k;
}

void flat_exp(const ExpKey& k, Flat& f) {
  f.p(k.in); f.p(k.out); f.p((u64)k.m);
  f.t(k.rin_split);
  for (auto& s : k.segs) flat_square(s, f);
  f.opt(k.rout);
}
ExpKey unflat_exp(Unflat& u) {
  ExpKey k;
  k.in = u.p(); k.out = u.p(); k.m = (int)u.p();
  k.rin_split = u.t();
  for (int i = 0; i < k.m; i++) k.segs.push_back(unflat_square(u));
  k.rout = u.opt();
  return k;
}

void flat_sign(const SignTestKey& s, Flat& f) {
  for (u64 w : dcf_flatten(s.lo)) f.p(w);
  for (u64 w : dcf_flatten(s.hi)) f.p(w);
  f.p(s.const_share);
}
SignTestKey unflat_sign(Unflat& u, RingConfig cfg) {
  size_t words = 3 + 4 * (size_t)cfg.l;
  std::vector<u64> w(words);
  SignTestKey s;
  for (auto* dst : {&s.lo, &s.hi}) {
    for (size_t i = 0; i < words; i++) w[i] = u.p();
    size_t pos = 0;
    *dst = dcf_unflatten(cfg, cfg.l, w, pos);
  }
  s.const_share = u.p();
  return s;
}

void flat_lt(const LessThanKey& k, Flat& f) {
  f.p(k.in); f.p(k.beta); f.p(k.elems.size());
  for (auto& e : k.elems) flat_sign(e, f);
}
LessThanKey unflat_lt(Unflat& u, RingConfig cfg) {
  LessThanKey k;
  k.in = u.p(); k.beta = u.p();
  u64 n = u.p();
  for (u64 i = 0; i < n; i++) k.elems.push_back(unflat_sign(u, cfg));
  return k;
}

void flat_recip(const RecipKey& k, Flat& f) {
  f.p(k.in); f.p(k.out); f.p((u64)k.m); f.p(k.with_init ? 1 : 0); f.p(k.y0_fx);
  if (!k.with_init) flat_exp(*k.exp, f);
  f.t(k.rin_split);
  flat_mul(k.init_a, f);
  flat_mul(k.init_b, f);
  f.t(k.ra1_split); f.t(k.ra2_split); f.t(k.rb1_split); f.t(k.rb2_split);
  f.t(k.rho0_split);
  for (auto& it : k.iters) {
    flat_square(it.sq, f);
    flat_mul(it.mul, f);
    f.t(it.rho_split);
    f.t(it.tau_split);
  }
  f.opt(k.rout);
}
RecipKey unflat_recip(Unflat& u) {
  RecipKey k;
  k.in = u.p(); k.out = u.p(); k.m = (int)u.p();
  k.with_init = u.p() != 0; k.y0_fx = u.p();
  if (!k.with_init) k.exp = std::make_unique<ExpKey>(unflat_exp(u));
  k.rin_split = u.t();
  k.init_a = unflat_mul(u);
  k.init_b = unflat_mul(u);
  k.ra1_split = u.t(); k.ra2_split = u.t();
  k.rb1_split = u.t(); k.rb2_split = u.t();
  k.rho0_split = u.t();
  for (int i = 0; i < k.m; i++) {
    RecipIter it;
    it.sq = unflat_square(u);
    it.mul = unflat_mul(u);
    it.rho_split = u.t();
    it.tau_split = u.t();
    k.iters.push_back(std::move(it));
  }
  k.rout = u.opt();
  return k;
}

void flat_softmax(const SoftmaxKey& k, Flat& f) {
  f.p(k.in); f.p((u64)k.K); f.p((u64)k.m); f.p(k.a0_fx); f.p(k.a1_fx);
  f.t(k.rin_split);
  flat_lt(k.lt_lo, f);
  flat_lt(k.lt_hi, f);
  flat_mul(k.clip_lo, f);
  flat_mul(k.clip_hi, f);
  f.t(k.s1_split); f.t(k.s2_split); f.t(k.rz_split);
  for (auto& it : k.iters) {
    flat_mul(it.mul1, f);
    flat_mul(it.mul2, f);
    f.t(it.rho_split);
    f.t(it.rs_split);
  }
}
SoftmaxKey unflat_softmax(Unflat& u, RingConfig cfg) {
  SoftmaxKey k;
  k.in = u.p(); k.K = (int)u.p(); k.m = (int)u.p();
  k.a0_fx = u.p(); k.a1_fx = u.p();
  k.rin_split = u.t();
  k.lt_lo = unflat_lt(u, cfg);
  k.lt_hi = unflat_lt(u, cfg);
  k.clip_lo = unflat_mul(u);
  k.clip_hi = unflat_mul(u);
  k.s1_split = u.t(); k.s2_split = u.t(); k.rz_split = u.t();
  for (int i = 0; i < k.m; i++) {
    SoftmaxIter it;
    it.mul1 = unflat_mul(u);
    it.mul2 = unflat_mul(u);
    it.rho_split = u.t();
    it.rs_split = u.t();
    k.iters.push_back(std::move(it));
  }
  return k;
}

void flat_sigmoid(const SigmoidKey& k, Flat& f) {
  f.p(k.in); f.p(k.out); f.p(k.is_tanh ? 1 : 0);
  f.p((u64)k.m_exp); f.p((u64)k.m_recip);
  flat_lt(k.lt, f);
  f.t(k.rs_split);
  flat_mul(k.mul1, f);
  flat_exp(*k.exp, f);
  flat_recip(*k.recip, f);
  f.t(k.r4_split); f.t(k.r5_split); f.t(k.r6_split); f.t(k.r7_split);
  flat_mul(k.mul2, f);
  flat_mul(k.mul3, f);
  f.opt(k.rout);
}
SigmoidKey unflat_sigmoid(Unflat& u, RingConfig cfg) {
  SigmoidKey k;
  k.in = u.p(); k.out = u.p(); k.is_tanh = u.p() != 0;
  k.m_exp = (int)u.p(); k.m_recip = (int)u.p();
  k.lt = unflat_lt(u, cfg);
  k.rs_split = u.t();
  k.mul1 = unflat_mul(u);
  k.exp = std::make_unique<ExpKey>(unflat_exp(u));
  k.recip = std::make_unique<RecipKey>(unflat_recip(u));
  k.r4_split = u.t(); k.r5_split = u.t();
  k.r6_split = u.t(); k.r7_split = u.t();
  k.mul2 = unflat_mul(u);
  k.mul3 = unflat_mul(u);
  k.rout = u.opt();
  return k;
}

void flat_dropout(const DropoutKey& k, Flat& f) {
  f.p(k.dynamic ? 1 : 0); f.p(k.in); f.p(k.out); f.p(k.p_fx);
  f.p(k.cmp.size());
  for (auto& d : k.cmp)
    for (u64 w : dcf_flatten(d)) f.p(w);
  f.opt(k.sigma_hat);
  f.opt(k.rbeta_split);
  flat_mul(k.mul, f);
}
DropoutKey unflat_dropout(Unflat& u, RingConfig cfg) {
  DropoutKey k;
  k.dynamic = u.p() != 0;
  k.in = u.p(); k.out = u.p(); k.p_fx = u.p();
  u64 n = u.p();
  size_t words = 3 + 4 * (size_t)cfg.l;
  std::vector<u64> w(words);
  for (u64 i = 0; i < n; i++) {
    for (size_t j = 0; j < words; j++) w[j] = u.p();
    size_t pos = 0;
    k.cmp.push_back(dcf_unflatten(cfg, cfg.l, w, pos));
  }
  k.sigma_hat = u.opt();
  k.rbeta_split = u.opt();
  k.mul = unflat_mul(u);
  return k;
}

void flat_tp(const TpKey& k, Flat& f) {
  f.p(k.in1); f.p(k.in2); f.p(k.out);
  f.t(k.r1); f.t(k.r2); f.t(k.q);
  f.opt(k.rout);
}
TpKey unflat_tp(Unflat& u) {
  TpKey k;
  k.in1 = u.p(); k.in2 = u.p(); k.out = u.p();
  k.r1 = u.t(); k.r2 = u.t(); k.q = u.t();
  k.rout = u.opt();
  return k;
}

void flat_beaver(const BeaverKey& k, Flat& f) {
  f.p(k.elementwise ? 1 : 0);
  f.t(k.A); f.t(k.B); f.t(k.C);
}
BeaverKey unflat_beaver(Unflat& u) {
  BeaverKey k;
  k.elementwise = u.p() != 0;
  k.A = u.t(); k.B = u.t(); k.C = u.t();
  k.shape_a = k.A.shape;
  k.shape_b = k.B.shape;
  return k;
}

void flatten_gate(const GateKey& g, Flat& f) {
  std::visit([&](auto& k) {
    using T = std::decay_t<decltype(k)>;
    if constexpr (std::is_same_v<T, BeaverKey>) flat_beaver(k, f);
    else if constexpr (std::is_same_v<T, MulKey>) flat_mul(k, f);
    else if constexpr (std::is_same_v<T, SquareKey>) flat_square(k, f);
    else if constexpr (std::is_same_v<T, PowerKey>) {
      f.p(k.in); f.p(k.out); f.p(k.n);
      f.p(k.segs.size()); f.p(k.muls.size());
      for (auto& s : k.segs) flat_square(s, f);
      for (auto& m : k.muls) flat_mul(m, f);
    } else if constexpr (std::is_same_v<T, ExpKey>) flat_exp(k, f);
    else if constexpr (std::is_same_v<T, LessThanKey>) flat_lt(k, f);
    else if constexpr (std::is_same_v<T, RecipKey>) flat_recip(k, f);
    else if constexpr (std::is_same_v<T, SoftmaxKey>) flat_softmax(k, f);
    else if constexpr (std::is_same_v<T, SigmoidKey>) flat_sigmoid(k, f);
    else if constexpr (std::is_same_v<T, DropoutKey>) flat_dropout(k, f);
    else if constexpr (std::is_same_v<T, TpKey>) flat_tp(k, f);
  }, g);
}

GateKey unflatten_gate(GateKind kind, Unflat& u, RingConfig cfg) {
  switch (kind) {
    case GateKind::Beaver: return unflat_beaver(u);
    case GateKind::Mul: return unflat_mul(u);
    case GateKind::Square: return unflat_square(u);
    case GateKind::Power: {
      PowerKey k;
      k.in = u.p(); k.out = u.p(); k.n = u.p();
      u64 ns = u.p(), nm = u.p();
      for (u64 i = 0; i < ns; i++) k.segs.push_back(unflat_square(u));
      for (u64 i = 0; i < nm; i++) k.muls.push_back(unflat_mul(u));
      return k;
    }
    case GateKind::Exp: return unflat_exp(u);
    case GateKind::LessThan: return unflat_lt(u, cfg);
    case GateKind::Recip: return unflat_recip(u);
    case GateKind::Softmax: return unflat_softmax(u, cfg);
    case GateKind::Sigmoid: return unflat_sigmoid(u, cfg);
    case GateKind::DropoutStatic:
    case GateKind::DropoutDynamic: return unflat_dropout(u, cfg);
    case GateKind::TP: return unflat_tp(u);
  }
  throw std::runtime_error("bundle: unknown gate kind");
}

}  // namespace

std::vector<u8> serialize_bundle(const Bundle& b) {
  Writer w;
  w.buf.insert(w.buf.end(), {'P', 'F', 'F', 'T'});
  w.u16_(1);
  w.u8_((u8)b.cfg.l);
  w.u8_((u8)b.cfg.s);
  w.u8_((u8)b.party);
  w.u32_((u32)b.gates.size());
  size_t wb = (size_t)(b.cfg.l + 7) / 8;
  for (const auto& g : b.gates) {
    Flat f;
    flatten_gate(g, f);
    w.u8_((u8)kind_of(g));
    w.u32_((u32)(f.params.size() * 8));
    for (u64 v : f.params) w.u64_(v);
    w.u16_((u16)f.tensors.size());
    for (const RingTensor* t : f.tensors) {
      w.u8_((u8)t->shape.size());
      for (u32 d : t->shape) w.u32_(d);
      for (u64 v : t->data) {
        u64 rv = b.cfg.reduce(v);
        for (size_t i = 0; i < wb; i++) w.buf.push_back((u8)(rv >> (8 * i)));
      }
    }
  }
  u32 crc = crc32_update(0, w.buf.data() + 4, w.buf.size() - 4);
  w.u32_(crc);
  return std::move(w.buf);
}

Bundle deserialize_bundle(const std::vector<u8>& bytes) {
  if (bytes.size() < 13 || std::memcmp(bytes.data(), "PFFT", 4) != 0)
    throw std::runtime_error("bundle: bad magic");
  u32 crc_stored = 0;
  for (int i = 0; i < 4; i++) crc_stored |= (u32)bytes[bytes.size() - 4 + i] << (8 * i);
  u32 crc = crc32_update(0, bytes.data() + 4, bytes.size() - 8);
  if (crc != crc_stored) throw std::runtime_error("bundle: crc mismatch");
  Reader r{bytes, 4};
  u16 ver = r.u16_();
  if (ver != 1) throw std::runtime_error("bundle: unsupported version");
  Bundle b;
  b.cfg.l = r.u8_();
  b.cfg.s = r.u8_();
  b.party = r.u8_();
  u32 count = r.u32_();
  size_t wb = (size_t)(b.cfg.l + 7) / 8;
  for (u32 gi = 0; gi < count; gi++) {
    GateKind kind = (GateKind)r.u8_();
    u32 plen = r.u32_();
    if (plen % 8) throw std::runtime_error("bundle: params size");
    std::vector<u64> params(plen / 8);
    for (auto& v : params) v = r.u64_();
    u16 tc = r.u16_();
    std::vector<RingTensor> tensors(tc);
    for (u16 ti = 0; ti < tc; ti++) {
      u8 rank = r.u8_();
      std::vector<u32> shape(rank);
      for (u8 d = 0; d < rank; d++) shape[d] = r.u32_();
      RingTensor t(b.cfg, shape, 0);
      for (auto& v : t.data) {
        r.check(wb);
        u64 x = 0;
        for (size_t i = 0; i < wb; i++) x |= (u64)bytes[r.pos + i] << (8 * i);
        r.pos += wb;
        v = b.cfg.reduce(x);
      }
      tensors[ti] = std::move(t);
    }
    Unflat u{params, tensors};
    b.gates.push_back(unflatten_gate(kind, u, b.cfg));
  }
  return b;
}

}  // namespace hss
