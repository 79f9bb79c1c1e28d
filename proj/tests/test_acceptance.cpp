#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>

#include "common.hpp"
#include "doctest.h"
#include "hss/fedtune.hpp"
#include "hss/nn.hpp"

// One test case per acceptance criterion; each prints a single PASS/FAIL
// line. All tolerances are pinned here in code.
using namespace hss;
using namespace hss::testutil;

namespace {

const RingConfig kCfg{64, 16};
constexpr double kChi2Crit255 = 310.457;  // df=255, alpha=0.01

struct Verdict {
  const char* name;
  bool ok = true;
  ~Verdict() { std::printf("ACCEPTANCE %s: %s\n", name, ok ? "PASS" : "FAIL"); }
  void note(bool c) { ok = ok && c; }
};

std::vector<double> uniform_reals(Prg& g, size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) {
    // multiples of the fixed-point resolution, away from exact 0
    u64 r = g.next_u64() % 65535 + 1;
    x = lo + (hi - lo) * ((double)r / 65536.0);
  }
  return v;
}

struct GateHarness {
  Dealer dealer;
  TestNet net;
  explicit GateHarness(u64 seed) : dealer({kCfg, {seed, 0xACC}}), net(kCfg, seed) {}

  // Evaluate one elementwise FSS gate end to end; returns restored words and
  // the payload bits both parties spent.
  template <class GenFn, class EvalFn>
  std::pair<std::vector<u64>, u64> run(const std::vector<double>& xs, GenFn gen,
                                       EvalFn ev) {
    u32 n = (u32)xs.size();
    auto r = dealer.fresh_mask({n});
    auto ks = gen(r);
    Prg g{{11, 22}};
    auto [x0, x1] = split(RingTensor::from_reals(kCfg, {n}, xs), g);
    AdditiveShare o0, o1;
    run2(
        [&] {
          GateSession s = net.sess(0);
          o0 = ev(s, ks.first, x0);
        },
        [&] {
          GateSession s = net.sess(1);
          o1 = ev(s, ks.second, x1);
        });
    return {restore(o0, o1).data, net.payload_bits()};
  }
};

double mean_rel_err(const std::vector<u64>& got, const std::vector<double>& xs,
                    double (*f)(double)) {
  double acc = 0;
  for (size_t i = 0; i < xs.size(); i++) {
    double want = f(xs[i]);
    double g = kCfg.to_signed(got[i]) / 65536.0;
    acc += std::fabs(g - want) / std::max(std::fabs(want), 1.0 / 65536.0);
  }
  return acc / xs.size();
}

// Secure elementwise runs used by criteria 1-4.
std::pair<std::vector<u64>, u64> secure_square(u64 seed,
                                               const std::vector<double>& xs) {
  GateHarness h(seed);
  return h.run(xs,
               [&](auto& r) { return h.dealer.gen_square(r, false); },
               [](GateSession& s, const SquareKey& k, const AdditiveShare& x) {
                 MaskedWire w = to_masked(x, {k.in, k.rin});
                 return drop_output_offset(eval_square(s, k, w));
               });
}

std::pair<std::vector<u64>, u64> secure_power(u64 seed, u64 n,
                                              const std::vector<double>& xs) {
  GateHarness h(seed);
  return h.run(
      xs,
      [&](auto& r) {
        return h.dealer.gen_power(r, n, {(u32)xs.size()}, false);
      },
      [](GateSession& s, const PowerKey& k, const AdditiveShare& x) {
        MaskedWire w = to_masked(x, {k.in, k.segs[0].rin});
        return drop_output_offset(eval_power(s, k, w));
      });
}

std::pair<std::vector<u64>, u64> secure_exp(u64 seed, int m,
                                            const std::vector<double>& xs) {
  GateHarness h(seed);
  u32 n = (u32)xs.size();
  RingTensor rv(kCfg, {n}, 0);
  rv.random_fill(h.dealer.rng());
  auto ks = h.dealer.gen_exp(rv, h.dealer.fresh_offset_id(), m, {n}, false);
  Prg g{{13, 37}};
  auto [x0, x1] = split(RingTensor::from_reals(kCfg, {n}, xs), g);
  AdditiveShare o0, o1;
  run2(
      [&] {
        GateSession s = h.net.sess(0);
        MaskedWire w = to_masked(x0, {ks.first.in, ks.first.rin_split});
        o0 = eval_exp_wire(s, ks.first, w);
      },
      [&] {
        GateSession s = h.net.sess(1);
        MaskedWire w = to_masked(x1, {ks.second.in, ks.second.rin_split});
        o1 = eval_exp_wire(s, ks.second, w);
      });
  return {restore(o0, o1).data, h.net.payload_bits()};
}

std::pair<std::vector<u64>, u64> secure_recip(u64 seed, int m, bool with_init,
                                              int m_exp,
                                              const std::vector<double>& xs) {
  GateHarness h(seed);
  return h.run(xs,
               [&](auto& r) {
                 return h.dealer.gen_recip(r, m, with_init, 0.75, m_exp, false);
               },
               [](GateSession& s, const RecipKey& k, const AdditiveShare& x) {
                 MaskedWire w = to_masked(x, {k.in, k.rin_split});
                 return drop_output_offset(eval_recip(s, k, w));
               });
}

std::pair<std::vector<u64>, u64> secure_sigmoid(u64 seed, bool is_tanh,
                                                const std::vector<double>& xs) {
  GateHarness h(seed);
  return h.run(
      xs,
      [&](auto& r) {
        return h.dealer.gen_sigmoid(r, is_tanh, 8, 3, {(u32)xs.size()}, false);
      },
      [](GateSession& s, const SigmoidKey& k, const AdditiveShare& x) {
        MaskedWire w = sigmoid_input_wire(k, x);
        return drop_output_offset(eval_sigmoid(s, k, w));
      });
}

std::pair<std::vector<u64>, u64> secure_dropout(u64 seed, bool dynamic, double p,
                                                const std::vector<double>& xs) {
  GateHarness h(seed);
  return h.run(xs,
               [&](auto& r) {
                 return h.dealer.gen_dropout(r, p, dynamic, {(u32)xs.size()},
                                             false);
               },
               [p](GateSession& s, const DropoutKey& k, const AdditiveShare& x) {
                 MaskedWire w = to_masked(x, {k.in, k.mul.r1});
                 return drop_output_offset(eval_dropout(s, k, w, p));
               });
}

std::pair<std::vector<u64>, u64> secure_tp(u64 seed, u32 M, u32 N,
                                           const std::vector<double>& xs,
                                           const std::vector<double>& ys) {
  GateHarness h(seed);
  auto r1 = h.dealer.fresh_mask({M});
  auto r2 = h.dealer.fresh_mask({N});
  auto [k0, k1] = h.dealer.gen_tp(r1, r2, false);
  Prg g{{17, 19}};
  auto [x0, x1] = split(RingTensor::from_reals(kCfg, {M}, xs), g);
  auto [y0, y1] = split(RingTensor::from_reals(kCfg, {N}, ys), g);
  AdditiveShare o0, o1;
  run2(
      [&] {
        GateSession s = h.net.sess(0);
        MaskedWire wx = to_masked(x0, {k0.in1, k0.r1});
        MaskedWire wy = to_masked(y0, {k0.in2, k0.r2});
        o0 = drop_output_offset(eval_tp(s, k0, wx, wy));
      },
      [&] {
        GateSession s = h.net.sess(1);
        MaskedWire wx = to_masked(x1, {k1.in1, k1.r1});
        MaskedWire wy = to_masked(y1, {k1.in2, k1.r2});
        o1 = drop_output_offset(eval_tp(s, k1, wx, wy));
      });
  return {restore(o0, o1).data, h.net.payload_bits()};
}

double chi2_top_byte(const std::vector<u64>& words, int shift) {
  std::vector<u64> cnt(256, 0);
  for (u64 w : words) cnt[(w >> shift) & 0xFF]++;
  double e = (double)words.size() / 256.0, stat = 0;
  for (u64 c : cnt) stat += ((double)c - e) * ((double)c - e) / e;
  return stat;
}

}  // namespace

TEST_CASE("criterion 1: communication formula pins") {
  Verdict v{"1 communication-formulas"};
  Prg g{{1, 1}};
  auto xs = uniform_reals(g, 256, -2.0, 2.0);
  auto pos = uniform_reals(g, 256, 0.75, 1.4);

  auto chk = [&](u64 got, u64 want, const char* what) {
    v.note(got == want);
    CHECK_MESSAGE(got == want, what, " got=", got, " want=", want);
  };
  chk(secure_square(101, xs).second / 256, 192, "square");
  chk(secure_power(102, 4, xs).second / 256, 192 * 2, "power n=4");
  chk(secure_power(103, 8, xs).second / 256, 192 * 3, "power n=8");
  chk(secure_exp(104, 8, uniform_reals(g, 256, -4.0, 0.0)).second / 256, 1600,
      "exp m=8");
  chk(secure_recip(105, 3, true, 8, pos).second / 256, 1920, "recip m=3 init");
  chk(secure_tp(106, 32, 32, uniform_reals(g, 32, -2, 2),
                uniform_reals(g, 32, -2, 2)).second,
      73728, "tp 32x32");
  chk(secure_dropout(107, false, 0.25, xs).second / 256, 192, "dropout static");
  chk(secure_dropout(108, true, 0.25, xs).second / 256, 320, "dropout dynamic");

  // ASS-only baselines.
  {
    GateHarness h(109);
    BaselineKeys kb1;
    BaselineKeys kb0 = gen_baseline_exp(h.dealer, {256}, 8, &kb1);
    Prg gg{{2, 2}};
    auto vals = uniform_reals(gg, 256, -4.0, 0.0);
    auto [x0, x1] = split(RingTensor::from_reals(kCfg, {256}, vals), gg);
    run2([&] { GateSession s = h.net.sess(0); baseline_exp(s, kb0, x0, 8); },
         [&] { GateSession s = h.net.sess(1); baseline_exp(s, kb1, x1, 8); });
    chk(h.net.payload_bits() / 256, 2624, "baseline exp");
  }
  {
    GateHarness h(110);
    BaselineKeys kb1;
    BaselineKeys kb0 = gen_baseline_tp(h.dealer, 32, 32, &kb1);
    Prg gg{{3, 3}};
    auto [x0, x1] = split(RingTensor::from_reals(kCfg, {32}, uniform_reals(gg, 32, -2, 2)), gg);
    auto [y0, y1] = split(RingTensor::from_reals(kCfg, {32}, uniform_reals(gg, 32, -2, 2)), gg);
    run2([&] { GateSession s = h.net.sess(0); baseline_tp(s, kb0, x0, y0); },
         [&] { GateSession s = h.net.sess(1); baseline_tp(s, kb1, x1, y1); });
    chk(h.net.payload_bits(), 327680, "baseline tp 32x32");
  }
  for (bool dyn : {false, true}) {
    GateHarness h(dyn ? 112 : 111);
    BaselineKeys kb1;
    BaselineKeys kb0 = gen_baseline_dropout(h.dealer, {256}, dyn, 0.25, &kb1);
    Prg gg{{4, (u64)dyn}};
    auto [x0, x1] = split(RingTensor::from_reals(kCfg, {256}, uniform_reals(gg, 256, -2, 2)), gg);
    run2([&] { GateSession s = h.net.sess(0); baseline_dropout(s, kb0, x0, dyn, 0.25); },
         [&] { GateSession s = h.net.sess(1); baseline_dropout(s, kb1, x1, dyn, 0.25); });
    chk(h.net.payload_bits() / 256, dyn ? 576 : 320,
        dyn ? "baseline dropout dynamic" : "baseline dropout static");
  }
}

TEST_CASE("criterion 2: overhead-reduction ratios") {
  Verdict v{"2 overhead-reduction"};
  Prg g{{5, 5}};
  auto neg = uniform_reals(g, 64, -4.0, 0.0);
  auto xs = uniform_reals(g, 64, -2.0, 2.0);

  double r_exp = 1600.0 / 2624.0;
  double r_tp = 73728.0 / 327680.0;
  double r_drop_s = 192.0 / 320.0;
  double r_drop_d = 320.0 / 576.0;

  u64 e_f = secure_exp(201, 8, neg).second;
  {
    GateHarness h(202);
    BaselineKeys kb1;
    BaselineKeys kb0 = gen_baseline_exp(h.dealer, {64}, 8, &kb1);
    Prg gg{{6, 6}};
    auto [x0, x1] = split(RingTensor::from_reals(kCfg, {64}, neg), gg);
    run2([&] { GateSession s = h.net.sess(0); baseline_exp(s, kb0, x0, 8); },
         [&] { GateSession s = h.net.sess(1); baseline_exp(s, kb1, x1, 8); });
    double ratio = (double)e_f / (double)h.net.payload_bits();
    v.note(std::fabs(ratio - r_exp) <= 0.01);
    CHECK(std::fabs(ratio - r_exp) <= 0.01);
  }
  u64 tp_f = secure_tp(203, 32, 32, uniform_reals(g, 32, -2, 2),
                       uniform_reals(g, 32, -2, 2)).second;
  {
    GateHarness h(204);
    BaselineKeys kb1;
    BaselineKeys kb0 = gen_baseline_tp(h.dealer, 32, 32, &kb1);
    Prg gg{{7, 7}};
    auto [x0, x1] = split(RingTensor::from_reals(kCfg, {32}, uniform_reals(gg, 32, -2, 2)), gg);
    auto [y0, y1] = split(RingTensor::from_reals(kCfg, {32}, uniform_reals(gg, 32, -2, 2)), gg);
    run2([&] { GateSession s = h.net.sess(0); baseline_tp(s, kb0, x0, y0); },
         [&] { GateSession s = h.net.sess(1); baseline_tp(s, kb1, x1, y1); });
    double ratio = (double)tp_f / (double)h.net.payload_bits();
    v.note(std::fabs(ratio - r_tp) <= 0.01);
    CHECK(std::fabs(ratio - r_tp) <= 0.01);
    CHECK(std::fabs(ratio - 0.225) <= 0.01);
  }
  u64 ds = secure_dropout(205, false, 0.25, xs).second;
  u64 dd = secure_dropout(206, true, 0.25, xs).second;
  v.note(std::fabs((double)ds / (320.0 * 64) - r_drop_s) <= 0.01);
  v.note(std::fabs((double)dd / (576.0 * 64) - r_drop_d) <= 0.01);
  CHECK(std::fabs((double)ds / (320.0 * 64) - 0.60) <= 0.01);

  double max_reduction =
      std::max({1.0 - r_exp, 1.0 - r_tp, 1.0 - r_drop_s, 1.0 - r_drop_d});
  v.note(max_reduction >= 0.70);
  CHECK(max_reduction >= 0.70);  // tensor product at M=N=32: 77.5%
}

TEST_CASE("criterion 3: approximation error rates and monotonicity") {
  Verdict v{"3 approximation-accuracy"};
  Prg g{{8, 8}};
  size_t n = 100000;

  auto xs01 = uniform_reals(g, n, 0.0, 1.0);
  auto exp_err = [&](int m, const std::vector<double>& xs) {
    auto [got, bits] = secure_exp(300 + m, m, xs);
    (void)bits;
    return mean_rel_err(got, xs, +[](double x) { return std::exp(x); });
  };
  double e8 = exp_err(8, xs01);
  v.note(e8 < 0.01);
  CHECK(e8 < 0.01);

  auto [sg, b1] = secure_sigmoid(320, false, xs01);
  (void)b1;
  double es = mean_rel_err(sg, xs01,
                           +[](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  v.note(es < 0.01);
  CHECK(es < 0.01);

  auto [tg, b2] = secure_sigmoid(321, true, xs01);
  (void)b2;
  double et = mean_rel_err(tg, xs01, +[](double x) { return std::tanh(x); });
  v.note(et < 0.02);
  CHECK(et < 0.02);

  // Non-increasing error in iteration depth; 1.05x + resolution floor covers
  // the plateau once the approximation bottoms out at 2^-16.
  auto sweep = uniform_reals(g, 20000, 0.0, 1.0);
  double prev = 1e9;
  for (int m = 1; m <= 8; m++) {
    double e = exp_err(m, sweep);
    v.note(e <= prev * 1.05 + 1.0 / 65536);
    CHECK_MESSAGE(e <= prev * 1.05 + 1.0 / 65536, "exp m=", m);
    prev = e;
  }
  auto rsweep = uniform_reals(g, 20000, 1.0 / 64, 1.0);
  prev = 1e9;
  for (int m = 1; m <= 15; m++) {
    auto [got, bb] = secure_recip(340 + m, m, true, 8, rsweep);
    (void)bb;
    double e = mean_rel_err(got, rsweep, +[](double x) { return 1.0 / x; });
    v.note(e <= prev * 1.05 + 1.0 / 65536);
    CHECK_MESSAGE(e <= prev * 1.05 + 1.0 / 65536, "recip m=", m);
    prev = e;
  }
}

TEST_CASE("criterion 4: oracle equivalence for every gate") {
  Verdict v{"4 oracle-equivalence"};
  Prg g{{9, 9}};
  size_t n = 10000;
  auto ck = [&](const std::vector<u64>& got, const std::vector<u64>& want,
                const char* what) {
    v.note(got == want);
    CHECK_MESSAGE(got == want, what);
  };

  {  // mul
    GateHarness h(401);
    auto xs = uniform_reals(g, n, -8, 8);
    auto ys = uniform_reals(g, n, -8, 8);
    auto rx = h.dealer.fresh_mask({(u32)n});
    auto ry = h.dealer.fresh_mask({(u32)n});
    auto [k0, k1] = h.dealer.gen_mul(rx, ry, false);
    Prg gg{{40, 1}};
    auto [x0, x1] = split(RingTensor::from_reals(kCfg, {(u32)n}, xs), gg);
    auto [y0, y1] = split(RingTensor::from_reals(kCfg, {(u32)n}, ys), gg);
    AdditiveShare o0, o1;
    run2(
        [&] {
          GateSession s = h.net.sess(0);
          MaskedWire wx = to_masked(x0, {k0.in1, k0.r1});
          MaskedWire wy = to_masked(y0, {k0.in2, k0.r2});
          o0 = drop_output_offset(eval_mul(s, k0, wx, wy));
        },
        [&] {
          GateSession s = h.net.sess(1);
          MaskedWire wx = to_masked(x1, {k1.in1, k1.r1});
          MaskedWire wy = to_masked(y1, {k1.in2, k1.r2});
          o1 = drop_output_offset(eval_mul(s, k1, wx, wy));
        });
    Oracle o = h.net.oracle();
    ck(restore(o0, o1).data,
       o.mul(RingTensor::from_reals(kCfg, {(u32)n}, xs).data,
             RingTensor::from_reals(kCfg, {(u32)n}, ys).data),
       "mul");
  }
  {  // square
    auto xs = uniform_reals(g, n, -8, 8);
    GateHarness h(402);
    auto got = h.run(xs,
                     [&](auto& r) { return h.dealer.gen_square(r, false); },
                     [](GateSession& s, const SquareKey& k, const AdditiveShare& x) {
                       MaskedWire w = to_masked(x, {k.in, k.rin});
                       return drop_output_offset(eval_square(s, k, w));
                     }).first;
    Oracle o = h.net.oracle();
    ck(got, o.square(RingTensor::from_reals(kCfg, {(u32)n}, xs).data), "square");
  }
  {  // power
    auto xs = uniform_reals(g, n, -2, 2);
    GateHarness h(403);
    auto got = h.run(xs,
                     [&](auto& r) { return h.dealer.gen_power(r, 5, {(u32)n}, false); },
                     [](GateSession& s, const PowerKey& k, const AdditiveShare& x) {
                       MaskedWire w = to_masked(x, {k.in, k.segs[0].rin});
                       return drop_output_offset(eval_power(s, k, w));
                     }).first;
    Oracle o = h.net.oracle();
    ck(got, o.power(RingTensor::from_reals(kCfg, {(u32)n}, xs).data, 5), "power");
  }
  {  // exp
    auto xs = uniform_reals(g, n, -4, 1);
    GateHarness h(404);
    u32 un = (u32)n;
    RingTensor rv(kCfg, {un}, 0);
    rv.random_fill(h.dealer.rng());
    auto [k0, k1] = h.dealer.gen_exp(rv, h.dealer.fresh_offset_id(), 8, {un}, false);
    Prg gg{{40, 2}};
    auto [x0, x1] = split(RingTensor::from_reals(kCfg, {un}, xs), gg);
    AdditiveShare o0, o1;
    run2(
        [&] {
          GateSession s = h.net.sess(0);
          MaskedWire w = to_masked(x0, {k0.in, k0.rin_split});
          o0 = eval_exp_wire(s, k0, w);
        },
        [&] {
          GateSession s = h.net.sess(1);
          MaskedWire w = to_masked(x1, {k1.in, k1.rin_split});
          o1 = eval_exp_wire(s, k1, w);
        });
    Oracle o = h.net.oracle();
    ck(restore(o0, o1).data,
       o.exp_(RingTensor::from_reals(kCfg, {un}, xs).data, 8), "exp");
  }
  {  // recip, both paths
    auto xs = uniform_reals(g, n, 0.7, 1.4);
    GateHarness h(405);
    auto got = h.run(xs,
                     [&](auto& r) { return h.dealer.gen_recip(r, 3, true, 0.75, 8, false); },
                     [](GateSession& s, const RecipKey& k, const AdditiveShare& x) {
                       MaskedWire w = to_masked(x, {k.in, k.rin_split});
                       return drop_output_offset(eval_recip(s, k, w));
                     }).first;
    Oracle o = h.net.oracle();
    ck(got, o.recip(RingTensor::from_reals(kCfg, {(u32)n}, xs).data, 3, true, 0.75, 8),
       "recip init");
    auto ys = uniform_reals(g, n, 0.1, 10.0);
    GateHarness h2(406);
    auto got2 = h2.run(ys,
                       [&](auto& r) { return h2.dealer.gen_recip(r, 10, false, 0.0, 8, false); },
                       [](GateSession& s, const RecipKey& k, const AdditiveShare& x) {
                         MaskedWire w = to_masked(x, {k.in, k.rin_split});
                         return drop_output_offset(eval_recip(s, k, w));
                       }).first;
    Oracle o2 = h2.net.oracle();
    ck(got2, o2.recip(RingTensor::from_reals(kCfg, {(u32)n}, ys).data, 10, false, 0.0, 8),
       "recip no-init");
  }
  {  // sigmoid + tanh
    auto xs = uniform_reals(g, n, -8, 8);
    GateHarness h(407);
    auto got = h.run(xs,
                     [&](auto& r) { return h.dealer.gen_sigmoid(r, false, 8, 3, {(u32)n}, false); },
                     [](GateSession& s, const SigmoidKey& k, const AdditiveShare& x) {
                       MaskedWire w = sigmoid_input_wire(k, x);
                       return drop_output_offset(eval_sigmoid(s, k, w));
                     }).first;
    Oracle o = h.net.oracle();
    ck(got, o.sigmoid(RingTensor::from_reals(kCfg, {(u32)n}, xs).data, 8, 3),
       "sigmoid");
    GateHarness h2(408);
    auto got2 = h2.run(xs,
                       [&](auto& r) { return h2.dealer.gen_sigmoid(r, true, 8, 3, {(u32)n}, false); },
                       [](GateSession& s, const SigmoidKey& k, const AdditiveShare& x) {
                         MaskedWire w = sigmoid_input_wire(k, x);
                         return drop_output_offset(eval_sigmoid(s, k, w));
                       }).first;
    Oracle o2 = h2.net.oracle();
    ck(got2, o2.tanh_(RingTensor::from_reals(kCfg, {(u32)n}, xs).data, 8, 3),
       "tanh");
  }
  {  // softmax: 100 gates of width 100
    u32 K = 100;
    bool all = true;
    for (u32 rep = 0; rep < 100; rep++) {
      auto xs = uniform_reals(g, K, -6.0, 13.0);
      GateHarness h(420 + rep);
      auto r = h.dealer.fresh_mask({K});
      auto [k0, k1] = h.dealer.gen_softmax(r, (int)K, 16, -4.0, 12.0);
      Prg gg{{41, rep}};
      auto [x0, x1] = split(RingTensor::from_reals(kCfg, {K}, xs), gg);
      AdditiveShare o0, o1;
      run2(
          [&] {
            GateSession s = h.net.sess(0);
            MaskedWire w = to_masked(x0, {k0.in, k0.rin_split});
            o0 = eval_softmax(s, k0, w);
          },
          [&] {
            GateSession s = h.net.sess(1);
            MaskedWire w = to_masked(x1, {k1.in, k1.rin_split});
            o1 = eval_softmax(s, k1, w);
          });
      Oracle o = h.net.oracle();
      all = all && (restore(o0, o1).data ==
                    o.softmax(RingTensor::from_reals(kCfg, {K}, xs).data, 16,
                              -4.0, 12.0));
    }
    v.note(all);
    CHECK(all);
  }
  {  // dropout: oracle replays the dealer's keep pattern via a paired run
    auto xs = uniform_reals(g, n, -8, 8);
    auto [got_s, bs] = secure_dropout(409, false, 0.25, xs);
    (void)bs;
    // exactly zero or scaled input: verified against the truncation oracle by
    // recomputing both branches and accepting the matching one per element.
    GateHarness oh(409);  // same dealer seed: same sigma pattern
    auto r = oh.dealer.fresh_mask({(u32)n});
    auto [k0, k1] = oh.dealer.gen_dropout(r, 0.25, false, {(u32)n}, false);
    RingTensor sigma = k0.sigma_hat;  // sigma + r_sigma
    for (size_t i = 0; i < n; i++)
      sigma.data[i] = kCfg.reduce(sigma.data[i] -
                                  kCfg.reduce(k0.mul.r2.data[i] + k1.mul.r2.data[i]));
    Oracle o = oh.net.oracle();
    ck(got_s, o.dropout_static(RingTensor::from_reals(kCfg, {(u32)n}, xs).data,
                               sigma.data),
       "dropout static");

    double p = 0.25;
    auto [got_d, bd] = secure_dropout(411, true, p, xs);
    (void)bd;
    GateHarness oh2(411);  // regen keys; both halves give the keep pattern
    auto r2 = oh2.dealer.fresh_mask({(u32)n});
    auto [d0, d1] = oh2.dealer.gen_dropout(r2, p, true, {(u32)n}, false);
    u64 p_fx = kCfg.encode(p);
    std::vector<u64> keep(n);
    for (size_t i = 0; i < n; i++)
      keep[i] = kCfg.reduce(dcf_eval(0, d0.cmp[i], p_fx) +
                            dcf_eval(1, d1.cmp[i], p_fx));
    Oracle o2 = oh2.net.oracle();
    ck(got_d,
       o2.dropout_dynamic(RingTensor::from_reals(kCfg, {(u32)n}, xs).data, keep, p),
       "dropout dynamic");
  }
  {  // tp 100 x 100
    auto xs = uniform_reals(g, 100, -4, 4);
    auto ys = uniform_reals(g, 100, -4, 4);
    GateHarness h(410);
    auto r1 = h.dealer.fresh_mask({100});
    auto r2 = h.dealer.fresh_mask({100});
    auto [k0, k1] = h.dealer.gen_tp(r1, r2, false);
    Prg gg{{42, 1}};
    auto [x0, x1] = split(RingTensor::from_reals(kCfg, {100}, xs), gg);
    auto [y0, y1] = split(RingTensor::from_reals(kCfg, {100}, ys), gg);
    AdditiveShare o0, o1;
    run2(
        [&] {
          GateSession s = h.net.sess(0);
          MaskedWire wx = to_masked(x0, {k0.in1, k0.r1});
          MaskedWire wy = to_masked(y0, {k0.in2, k0.r2});
          o0 = drop_output_offset(eval_tp(s, k0, wx, wy));
        },
        [&] {
          GateSession s = h.net.sess(1);
          MaskedWire wx = to_masked(x1, {k1.in1, k1.r1});
          MaskedWire wy = to_masked(y1, {k1.in2, k1.r2});
          o1 = drop_output_offset(eval_tp(s, k1, wx, wy));
        });
    Oracle o = h.net.oracle();
    ck(restore(o0, o1).data,
       o.tp(RingTensor::from_reals(kCfg, {100}, xs).data,
            RingTensor::from_reals(kCfg, {100}, ys).data),
       "tp");
  }
}

TEST_CASE("criterion 5: secure gradients vs finite differences") {
  Verdict v{"5 gradient-correctness"};
  HeadConfig hc;
  hc.m_softmax = 64;  // converged normalization for the derivative check
  hc.m_exp = 12;
  hc.m_recip = 6;
  Dealer dl({kCfg, {501, 0xACC}});
  TestNet net(kCfg, 501);
  Bundle b0{kCfg, 0, {}, 0}, b1{kCfg, 1, {}, 0};
  gen_step_keys(dl, hc, b0, b1);

  Prg g{{502, 0xDA7A}};
  HeadPlain P = head_init(kCfg, hc, g);
  RingTensor X(kCfg, {hc.B, hc.d}, kCfg.s), Y(kCfg, {hc.B, hc.c}, kCfg.s);
  for (u32 i = 0; i < hc.B; i++) {
    u32 cls = (u32)(g.next_u64() % hc.c);
    Y.data[i * hc.c + cls] = kCfg.encode(1.0);
    for (u32 j = 0; j < hc.d; j++)
      X.data[i * hc.d + j] = kCfg.encode(
          (cls ? 0.5 : -0.5) * ((int)(j % 3) - 1) +
          ((double)(g.next_u64() >> 11) * 0x1p-53 - 0.5));
  }
  auto [P0, P1] = split_head(P, g);
  auto [X0, X1] = split(X, g);
  auto [Y0, Y1] = split(Y, g);
  HeadGrads g0, g1;
  run2(
      [&] {
        GateSession s{0, net.c0.get(), TruncMode::Interactive, 1};
        g0 = secure_grads(s, b0, hc, P0, X0, Y0);
      },
      [&] {
        GateSession s{1, net.c1.get(), TruncMode::Interactive, 1};
        g1 = secure_grads(s, b1, hc, P1, X1, Y1);
      });
  HeadPlain sec;
  sec.W1 = restore(g0.dW1, g1.dW1);
  sec.b1 = restore(g0.db1, g1.db1);
  sec.W2 = restore(g0.dW2, g1.dW2);
  sec.b2 = restore(g0.db2, g1.db2);

  int checked = 0;
  auto fd_at = [&](RingTensor HeadPlain::*field, u32 idx) {
    double eps = 1e-3;
    HeadPlain up = P, dn = P;
    (up.*field).data[idx] = kCfg.reduce((up.*field).data[idx] + kCfg.encode(eps));
    (dn.*field).data[idx] = kCfg.reduce((dn.*field).data[idx] - kCfg.encode(eps));
    double fd = (head_loss(up, X, Y) - head_loss(dn, X, Y)) / (2 * eps);
    if (std::fabs(fd) < 0.02) return;  // avoid 0/0 relative comparisons
    RingTensor t = sec.*field;
    t.scale_bits = kCfg.s;
    double got = t.to_reals()[idx];
    bool ok = std::fabs(got - fd) <= 1e-2 * std::fabs(fd);
    v.note(ok);
    CHECK_MESSAGE(ok, "fd=", fd, " got=", got);
    checked++;
  };
  Prg pick{{503, 1}};
  while (checked < 3) fd_at(&HeadPlain::W2, (u32)(pick.next_u64() % (hc.h * hc.c)));
  while (checked < 5) fd_at(&HeadPlain::W1, (u32)(pick.next_u64() % (hc.d * hc.h)));
  while (checked < 6) fd_at(&HeadPlain::b2, (u32)(pick.next_u64() % hc.c));
  v.note(checked >= 5);
  CHECK(checked >= 5);
}

TEST_CASE("criterion 6: aggregation exactness and upload masking") {
  Verdict v{"6 aggregation-masking"};
  for (u32 N : {2u, 3u, 5u}) {
    auto seeds = make_pair_seeds(600 + N, N);
    size_t n = 64;
    std::vector<std::vector<u64>> raw(N), up(N);
    Prg g{{601, N}};
    for (u32 i = 0; i < N; i++) {
      raw[i].resize(n);
      for (auto& w : raw[i]) w = g.next_u64();
      up[i] = raw[i];
      apply_pair_masks(up[i], kCfg, i, N, 0, seeds);
      if (N > 1) {
        bool all_differ = true;
        for (size_t k = 0; k < n; k++) all_differ = all_differ && up[i][k] != raw[i][k];
        v.note(all_differ);
        CHECK(all_differ);
      }
    }
    std::vector<u64> sum(n, 0), want(n, 0);
    for (u32 i = 0; i < N; i++)
      for (size_t k = 0; k < n; k++) {
        sum[k] = kCfg.reduce(sum[k] + up[i][k]);
        want[k] = kCfg.reduce(want[k] + raw[i][k]);
      }
    v.note(sum == want);
    CHECK(sum == want);
    // plaintext fixed-point mean of the restored aggregate
    u64 inv = kCfg.encode(1.0 / N);
    for (size_t k = 0; k < n; k++) {
      u64 a = kCfg.reduce(sum[k] * inv);
      u64 b = kCfg.reduce(want[k] * inv);
      v.note(a == b);
    }
  }
  // uniformity of uploads across fresh seeds
  std::vector<u64> samples;
  samples.reserve(100000);
  for (u64 s = 0; samples.size() < 100000; s++) {
    auto seeds = make_pair_seeds(7000 + s, 2);
    std::vector<u64> zero(64, 0);
    apply_pair_masks(zero, kCfg, 1, 2, (u32)s, seeds);
    samples.insert(samples.end(), zero.begin(), zero.end());
  }
  double stat = chi2_top_byte(samples, 56);
  v.note(stat < kChi2Crit255);
  CHECK(stat < kChi2Crit255);
}

TEST_CASE("criterion 7: end-to-end federated fine-tuning") {
  Verdict v{"7 fedtune-end-to-end"};
  FedConfig fc;
  fc.cfg = kCfg;

  FedResult it = run_fedtune(fc);
  FedResult plain_it = run_fedtune_plain(fc);
  v.note(it.final_acc >= 0.95);
  CHECK(it.final_acc >= 0.95);
  v.note(std::fabs(it.final_acc - plain_it.final_acc) <= 0.02 + 1e-12);
  CHECK(std::fabs(it.final_acc - plain_it.final_acc) <= 0.02 + 1e-12);

  FedConfig lt = fc;
  lt.mode = TruncMode::Local;
  FedResult ltr = run_fedtune(lt);
  FedResult plain_lt = run_fedtune_plain(lt);
  v.note(ltr.final_acc >= 0.95);
  CHECK(ltr.final_acc >= 0.95);
  v.note(std::fabs(ltr.final_acc - plain_lt.final_acc) <= 0.02 + 1e-12);
  CHECK(std::fabs(ltr.final_acc - plain_lt.final_acc) <= 0.02 + 1e-12);

  FedConfig st = fc;
  st.staged_switch = 10;  // local truncation early, interactive late
  FedResult str = run_fedtune(st);
  v.note(std::fabs(str.final_acc - it.final_acc) <= 0.01 + 1e-12);
  CHECK(std::fabs(str.final_acc - it.final_acc) <= 0.01 + 1e-12);
}

TEST_CASE("criterion 8: view uniformity of opened wires and shares") {
  Verdict v{"8 view-uniformity"};
  size_t n = 100000;
  Dealer dl({kCfg, {801, 0xACC}});
  TestNet net(kCfg, 801);
  // open one wide wire carrying a constant: x_hat = x + fresh offsets
  auto r = dl.fresh_mask({(u32)n});
  auto [k0, k1] = dl.gen_square(r, false);
  (void)k1;
  RingTensor x(kCfg, {(u32)n}, kCfg.s);
  for (auto& w : x.data) w = kCfg.encode(1.0);
  Prg g{{802, 1}};
  auto [x0, x1] = split(x, g);
  std::vector<u64> opened;
  run2(
      [&] {
        MaskedWire w = to_masked(x0, {k0.in, k0.rin});
        opened = open_masked(w, *net.c0, 1).data;
      },
      [&] {
        MaskedWire w = to_masked(x1, {r.id, r.r1});
        open_masked(w, *net.c1, 1);
      });
  double s1 = chi2_top_byte(opened, 56);
  v.note(s1 < kChi2Crit255);
  CHECK(s1 < kChi2Crit255);

  auto [s0, s1sh] = split(x, g);
  double s2 = chi2_top_byte(s0.val.data, 56);
  double s3 = chi2_top_byte(s1sh.val.data, 56);
  v.note(s2 < kChi2Crit255);
  v.note(s3 < kChi2Crit255);
  CHECK(s2 < kChi2Crit255);
  CHECK(s3 < kChi2Crit255);
}

TEST_CASE("criterion 9: determinism and transcript stability") {
  Verdict v{"9 determinism-transcripts"};
  auto build = [](u64 seed) {
    Dealer dl({kCfg, {seed, 0xACC}});
    Bundle b0{kCfg, 0, {}, 0}, b1{kCfg, 1, {}, 0};
    HeadConfig hc;
    hc.B = 4;
    gen_step_keys(dl, hc, b0, b1);
    return std::make_pair(serialize_bundle(b0), serialize_bundle(b1));
  };
  auto [a0, a1] = build(901);
  auto [b0, b1] = build(901);
  auto [c0, c1] = build(902);
  v.note(a0 == b0 && a1 == b1);
  CHECK(a0 == b0);
  CHECK(a1 == b1);
  v.note(a0 != c0);
  CHECK(a0 != c0);

  // identical protocol over mem and tcp: byte-identical transcripts
  auto run_mul = [](Channel& ch0, Channel& ch1) {
    Dealer dl({kCfg, {903, 0xACC}});
    auto rx = dl.fresh_mask({8});
    auto ry = dl.fresh_mask({8});
    auto [k0, k1] = dl.gen_mul(rx, ry, false);
    Prg g{{904, 1}};
    std::vector<double> xs(8, 1.25), ys(8, -2.0);
    auto [x0, x1] = split(RingTensor::from_reals(kCfg, {8}, xs), g);
    auto [y0, y1] = split(RingTensor::from_reals(kCfg, {8}, ys), g);
    run2(
        [&] {
          GateSession s{0, &ch0, TruncMode::Interactive, 1};
          MaskedWire wx = to_masked(x0, {k0.in1, k0.r1});
          MaskedWire wy = to_masked(y0, {k0.in2, k0.r2});
          eval_mul(s, k0, wx, wy);
        },
        [&] {
          GateSession s{1, &ch1, TruncMode::Interactive, 1};
          MaskedWire wx = to_masked(x1, {k1.in1, k1.r1});
          MaskedWire wy = to_masked(y1, {k1.in2, k1.r2});
          eval_mul(s, k1, wx, wy);
        });
  };
  Block ts{905, 0x5eed};
  auto mem = make_mem_pair(kCfg, ts);
  run_mul(*mem.first, *mem.second);

  std::unique_ptr<TcpChannel> t0, t1;
  run2(
      [&] {
        t0 = std::make_unique<TcpChannel>(TcpChannel::listen_one("127.0.0.1:19881"), 0);
        t0->cfg = kCfg;
        t0->trunc_stream = std::make_unique<Prg>(ts);
      },
      [&] {
        t1 = std::make_unique<TcpChannel>(TcpChannel::connect_to("127.0.0.1:19881"), 1);
        t1->cfg = kCfg;
        t1->trunc_stream = std::make_unique<Prg>(ts);
      });
  run_mul(*t0, *t1);
  v.note(mem.first->transcript == t0->transcript);
  v.note(mem.second->transcript == t1->transcript);
  CHECK(mem.first->transcript == t0->transcript);
  CHECK(mem.second->transcript == t1->transcript);
}
