#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>

#include "common.hpp"
#include "doctest.h"
#include "hss/dcf.hpp"

using namespace hss;
using namespace hss::testutil;

TEST_CASE("speck128/128 published test vector") {
  Speck s({0x0706050403020100ULL, 0x0f0e0d0c0b0a0908ULL});
  Block c = s.encrypt({0x6c61766975716520ULL, 0x7469206564616d20ULL});
  CHECK(c.x == 0xa65d985179783265ULL);
  CHECK(c.y == 0x7860fedf5c570d18ULL);
}

TEST_CASE("prg determinism and domain separation") {
  Prg a({1, 2}), b({1, 2});
  for (int i = 0; i < 100; i++) CHECK(a.next_u64() == b.next_u64());
  Prg c({1, 2});
  Prg d1(c.derive(1)), d2(c.derive(2));
  bool same = true;
  for (int i = 0; i < 16; i++) same = same && (d1.next_u64() == d2.next_u64());
  CHECK_FALSE(same);
}

TEST_CASE("ring encode/decode round trip and signed semantics") {
  RingConfig cfg{64, 16};
  for (double x : {0.0, 1.0, -1.0, 3.14159, -2.5, 1000.25, -0.0000152587890625}) {
    double y = cfg.decode(cfg.encode(x));
    CHECK(std::fabs(y - x) <= 1.0 / 65536.0);
  }
  CHECK(cfg.to_signed(cfg.encode(-1.0)) == -65536);
  CHECK_THROWS_AS((void)cfg.encode(1e30), std::out_of_range);
  RingConfig c16{16, 4};
  CHECK(c16.reduce(0x12345) == 0x2345);
  CHECK(c16.to_signed(0x8000) == -32768);
  // arithmetic shift is floor division for negatives
  CHECK(cfg.to_signed(cfg.arith_shift(cfg.encode(-1.0) | 0x1, 4)) ==
        ((-65536 + 1) >> 4));
}

TEST_CASE("additive sharing round trip") {
  RingConfig cfg{64, 16};
  Prg g({5, 6});
  RingTensor x = RingTensor::from_reals(cfg, {4}, {1.5, -2.25, 0.0, 100.0});
  auto [s0, s1] = split(x, g);
  RingTensor y = restore(s0, s1);
  CHECK(y.data == x.data);
}

TEST_CASE("masked wire opening is symmetric and idempotent") {
  RingConfig cfg{64, 16};
  TestNet net(cfg);
  Prg g({5, 7});
  RingTensor x = RingTensor::from_reals(cfg, {3}, {1.0, -1.0, 42.0});
  RingTensor r(cfg, {3}, 0);
  r.random_fill(g);
  auto [x0, x1] = split(x, g);
  auto [r0, r1] = split(r, g);
  std::vector<u64> h0, h1;
  run2(
      [&] {
        MaskedWire w = to_masked(x0, {1, r0.val});
        h0 = open_masked(w, *net.c0, 1).data;
        CHECK(open_masked(w, *net.c0, 1).data == h0);  // cached, no re-send
      },
      [&] {
        MaskedWire w = to_masked(x1, {1, r1.val});
        h1 = open_masked(w, *net.c1, 1).data;
      });
  CHECK(h0 == h1);
  for (size_t i = 0; i < 3; i++)
    CHECK(h0[i] == cfg.reduce(x.data[i] + r.data[i]));
  // one opening: 2l bits per element total
  CHECK(net.payload_bits() == 2 * 64 * 3);
}

TEST_CASE("interactive truncation: stochastic floor within one LSB") {
  RingConfig cfg{64, 16};
  std::vector<double> xs = {0.0,   1.0,     -1.0,   123.456, -77.125,
                            0.5,   -0.0625, 1023.0, -1024.0, 3.999};
  for (int rep = 0; rep < 5; rep++) {
    TestNet net(cfg, 100 + rep);
    Prg g({9, (u64)rep});
    RingTensor x = RingTensor::from_reals(cfg, {(u32)xs.size()}, xs);
    auto [s0, s1] = split(x, g);
    std::vector<u64> out0, out1;
    run2(
        [&] {
          AdditiveShare a = s0;
          trunc_interactive(a, 16, *net.c0, 1);
          out0 = a.val.data;
        },
        [&] {
          AdditiveShare a = s1;
          trunc_interactive(a, 16, *net.c1, 1);
          out1 = a.val.data;
        });
    for (size_t i = 0; i < xs.size(); i++) {
      i64 got = cfg.to_signed(cfg.reduce(out0[i] + out1[i]));
      i64 fl = cfg.to_signed(x.data[i]) >> 16;
      CHECK(got >= fl);
      CHECK(got <= fl + 1);
      if ((x.data[i] & 0xFFFF) == 0) CHECK(got == fl);  // multiples exact
    }
    // l bits per element total, party 1 only
    CHECK(net.payload_bits() == 64 * xs.size());
    CHECK(net.c0->meter.total_payload_bits() == 0);
  }
}

TEST_CASE("interactive truncation matches the oracle stream replay bit for bit") {
  RingConfig cfg{64, 16};
  TestNet net(cfg, 4242);
  Prg g({11, 12});
  RingTensor x(cfg, {64}, cfg.s);
  for (auto& v : x.data)
    v = cfg.reduce(g.next_u64() & 0xFFFFFFFFFFFFULL) ;  // < 2^48 < 2^62
  auto [s0, s1] = split(x, g);
  std::vector<u64> out0, out1;
  run2(
      [&] { AdditiveShare a = s0; trunc_interactive(a, 16, *net.c0, 1); out0 = a.val.data; },
      [&] { AdditiveShare a = s1; trunc_interactive(a, 16, *net.c1, 1); out1 = a.val.data; });
  Oracle o = net.oracle();
  std::vector<u64> ref = x.data;
  o.trunc_vec(ref, 16);
  for (size_t i = 0; i < ref.size(); i++)
    CHECK(cfg.reduce(out0[i] + out1[i]) == ref[i]);
}

TEST_CASE("local truncation within one LSB for in-range values") {
  RingConfig cfg{64, 16};
  Prg g({21, 22});
  for (int rep = 0; rep < 200; rep++) {
    double v = ((double)(g.next_u64() >> 11) * 0x1p-53 * 2 - 1) * 1000.0;
    RingTensor x = RingTensor::from_reals(cfg, {1}, {v});
    auto [s0, s1] = split(x, g);
    trunc_local(s0, 16);
    trunc_local(s1, 16);
    i64 got = cfg.to_signed(cfg.reduce(s0.val.data[0] + s1.val.data[0]));
    i64 fl = cfg.to_signed(x.data[0]) >> 16;
    // carry loss: off by at most one; wrap failure probability ~2^-44 here
    CHECK(std::abs(got - fl) <= 1);
  }
}

TEST_CASE("dcf: exhaustive over the full 8-bit domain") {
  RingConfig cfg{8, 4};
  Prg rng({31, 32});
  for (int alpha = 0; alpha < 256; alpha++) {
    auto [k0, k1] = dcf_gen(cfg, 8, (u64)alpha, 5, rng);
    for (int x = 0; x < 256; x++) {
      u64 v = cfg.reduce(dcf_eval(0, k0, (u64)x) + dcf_eval(1, k1, (u64)x));
      u64 want = (x < alpha) ? 5 : 0;
      REQUIRE(v == want);
    }
  }
}

TEST_CASE("dcf: 64-bit spot checks around the breakpoint") {
  RingConfig cfg{64, 16};
  Prg rng({41, 42});
  for (int t = 0; t < 50; t++) {
    u64 alpha = rng.next_u64();
    u64 beta = rng.next_u64() & 0xFFFF;
    auto [k0, k1] = dcf_gen(cfg, 64, alpha, beta, rng);
    for (int j = 0; j < 12; j++) {
      u64 x = rng.next_u64();
      if (j == 0) x = alpha;
      if (j == 1) x = alpha - 1;
      if (j == 2) x = alpha + 1;
      if (j == 3) x = 0;
      if (j == 4) x = ~0ULL;
      u64 v = cfg.reduce(dcf_eval(0, k0, x) + dcf_eval(1, k1, x));
      REQUIRE(v == ((x < alpha) ? beta : 0));
    }
  }
}

TEST_CASE("sign test: strict negativity on masked values") {
  RingConfig cfg{64, 16};
  Prg rng({51, 52});
  u64 one = cfg.encode(1.0);
  for (int t = 0; t < 60; t++) {
    u64 r = rng.next_u64();
    auto [k0, k1] = sign_test_gen(cfg, r, one, rng);
    for (int j = 0; j < 8; j++) {
      u64 x = rng.next_u64();
      if (j == 0) x = 0;
      if (j == 1) x = ~0ULL;            // -1
      if (j == 2) x = 1ULL << 63;       // most negative
      if (j == 3) x = (1ULL << 63) - 1; // most positive
      u64 xh = cfg.reduce(x + r);
      u64 v = cfg.reduce(sign_test_eval(0, k0, xh) + sign_test_eval(1, k1, xh));
      REQUIRE(v == ((cfg.to_signed(x) < 0) ? one : 0));
    }
  }
}

namespace {
Bundle sample_bundle(int party_idx, u64 seed) {
  RingConfig cfg{64, 16};
  Dealer d({cfg, {seed, 77}});
  Bundle b0, b1;
  b0.cfg = b1.cfg = cfg;
  b0.party = 0;
  b1.party = 1;
  auto push = [&](auto&& p) {
    b0.gates.emplace_back(std::move(p.first));
    b1.gates.emplace_back(std::move(p.second));
  };
  push(d.gen_beaver({2, 3}, {3, 2}, false));
  push(d.gen_mul(d.fresh_mask({4}), d.fresh_mask({4}), true));
  push(d.gen_square(d.fresh_mask({4}), false));
  push(d.gen_power(d.fresh_mask({2}), 8, {2}, true));
  {
    RingTensor rv(cfg, {3}, 0);
    rv.random_fill(d.rng());
    push(d.gen_exp(rv, d.fresh_offset_id(), 4, {3}, false));
  }
  {
    RingTensor rv(cfg, {2}, 0);
    rv.random_fill(d.rng());
    push(d.gen_less_than(rv, d.fresh_offset_id(), cfg.encode(1.0)));
  }
  push(d.gen_recip(d.fresh_mask({2}), 3, true, 0.75, 8, true));
  push(d.gen_recip(d.fresh_mask({2}), 2, false, 0.0, 4, false));
  push(d.gen_softmax(d.fresh_mask({4}), 4, 4, -4.0, 12.0));
  push(d.gen_sigmoid(d.fresh_mask({2}), false, 4, 2, {2}, true));
  push(d.gen_sigmoid(d.fresh_mask({2}), true, 4, 2, {2}, false));
  push(d.gen_dropout(d.fresh_mask({5}), 0.5, false, {5}, true));
  push(d.gen_dropout(d.fresh_mask({5}), 0.0, true, {5}, true));
  push(d.gen_tp(d.fresh_mask({3}), d.fresh_mask({4}), true));
  return party_idx == 0 ? std::move(b0) : std::move(b1);
}
}  // namespace

TEST_CASE("bundle serialization: round trip is byte-identical") {
  for (int p = 0; p < 2; p++) {
    Bundle b = sample_bundle(p, 1234);
    std::vector<u8> bytes = serialize_bundle(b);
    Bundle rb = deserialize_bundle(bytes);
    CHECK(rb.party == p);
    CHECK(rb.gates.size() == b.gates.size());
    std::vector<u8> again = serialize_bundle(rb);
    CHECK(again == bytes);
  }
}

TEST_CASE("bundle serialization: corruption is detected") {
  Bundle b = sample_bundle(0, 999);
  std::vector<u8> bytes = serialize_bundle(b);
  auto corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x40;
  CHECK_THROWS(deserialize_bundle(corrupt));
  auto truncated = bytes;
  truncated.resize(truncated.size() - 5);
  CHECK_THROWS(deserialize_bundle(truncated));
  auto badmagic = bytes;
  badmagic[0] = 'X';
  CHECK_THROWS(deserialize_bundle(badmagic));
}

TEST_CASE("bundle: sequential consumption enforces gate kinds") {
  Bundle b = sample_bundle(0, 55);
  CHECK_THROWS(b.next(GateKind::Softmax));  // first gate is a Beaver triple
  Bundle b2 = sample_bundle(0, 55);
  CHECK_NOTHROW(b2.next(GateKind::Beaver));
}

TEST_CASE("bundles are deterministic in the dealer seed") {
  CHECK(serialize_bundle(sample_bundle(0, 42)) ==
        serialize_bundle(sample_bundle(0, 42)));
  CHECK(serialize_bundle(sample_bundle(0, 42)) !=
        serialize_bundle(sample_bundle(0, 43)));
}

TEST_CASE("tcp and memory transports produce identical bytes") {
  RingConfig cfg{64, 16};
  std::vector<u64> words = {1, 2, 3, 0xFFFFFFFFFFFFFFFFULL};

  TestNet mem(cfg);
  run2([&] { mem.c0->send_frame(MsgType::OPEN, 7, words); },
       [&] { Frame f = mem.c1->recv_frame(MsgType::OPEN); CHECK(f.payload == words); });

  std::unique_ptr<TcpChannel> t0, t1;
  run2(
      [&] {
        int fd = TcpChannel::listen_one("127.0.0.1:19751");
        t0 = std::make_unique<TcpChannel>(fd, 0);
        t0->cfg = cfg;
      },
      [&] {
        int fd = TcpChannel::connect_to("127.0.0.1:19751");
        t1 = std::make_unique<TcpChannel>(fd, 1);
        t1->cfg = cfg;
      });
  run2([&] { t0->send_frame(MsgType::OPEN, 7, words); },
       [&] { Frame f = t1->recv_frame(MsgType::OPEN); CHECK(f.payload == words); });
  CHECK(t0->transcript == mem.c0->transcript);

  // header layout: length u32 BE | type u8 | label u32 BE
  const auto& tr = mem.c0->transcript;
  REQUIRE(tr.size() == 9 + 4 * 8);
  CHECK(tr[3] == 32);  // 4 words * 8 bytes
  CHECK(tr[4] == (u8)MsgType::OPEN);
  CHECK(tr[8] == 7);
}

TEST_CASE("narrow rings: word width on the wire follows l") {
  RingConfig cfg{16, 4};
  TestNet net(cfg);
  std::vector<u64> words = {0x1234, 0xFFFF};
  run2([&] { net.c0->send_frame(MsgType::OPEN, 1, words); },
       [&] {
         Frame f = net.c1->recv_frame(MsgType::OPEN);
         CHECK(f.payload == words);
       });
  CHECK(net.c0->transcript.size() == 9 + 2 * 2);  // 2-byte words
}
