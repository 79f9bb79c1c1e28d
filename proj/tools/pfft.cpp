// pfft: dealer key generation, per-op benchmarks, error sweeps, and the
// federated fine-tuning demo. Exit codes: 0 ok, 1 tolerance violation,
// 2 bad arguments, 3 I/O failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <thread>

#include "CLI11.hpp"
#include "hss/fedtune.hpp"
#include "hss/nn.hpp"
#include "json.hpp"

using namespace hss;
using nlohmann::json;

namespace {

struct Common {
  u32 l = 64, s = 16;
  u64 seed = 7;
  bool emit_json = false;
  RingConfig cfg() const { return RingConfig{(int)l, (int)s}; }
};

void run2(const std::function<void()>& f0, const std::function<void()>& f1) {
  std::exception_ptr e0, e1;
  std::thread t0([&] { try { f0(); } catch (...) { e0 = std::current_exception(); } });
  std::thread t1([&] { try { f1(); } catch (...) { e1 = std::current_exception(); } });
  t0.join();
  t1.join();
  if (e0) std::rethrow_exception(e0);
  if (e1) std::rethrow_exception(e1);
}

void emit(const Common& c, const std::vector<std::pair<std::string, std::string>>& kv) {
  if (c.emit_json) {
    json j;
    for (auto& [k, v] : kv) j[k] = v;
    std::printf("%s\n", j.dump().c_str());
  } else {
    for (auto& [k, v] : kv) std::printf("%s=%s ", k.c_str(), v.c_str());
    std::printf("\n");
  }
}

struct OpParams {
  std::string op = "exp";
  u32 size = 1000;
  int m = 8, m_recip = 3, m_exp = 8, k = 4;
  u32 rows = 32, cols = 32;
  double p = 0.25;
  bool baseline = false, with_init = true;
};

// Build a one-gate bundle pair for the requested op.
std::pair<Bundle, Bundle> make_bundles(Dealer& d, const OpParams& o) {
  RingConfig cfg = d.ring();
  Bundle b0{cfg, 0, {}, 0}, b1{cfg, 1, {}, 0};
  auto push = [&](auto&& pair) {
    b0.gates.push_back(std::move(pair.first));
    b1.gates.push_back(std::move(pair.second));
  };
  if (o.op == "mul") {
    push(d.gen_mul(d.fresh_mask({o.size}), d.fresh_mask({o.size}), false));
  } else if (o.op == "square") {
    push(d.gen_square(d.fresh_mask({o.size}), false));
  } else if (o.op == "power") {
    push(d.gen_power(d.fresh_mask({o.size}), (u64)o.m, {o.size}, false));
  } else if (o.op == "exp") {
    RingTensor r(cfg, {o.size}, 0);
    r.random_fill(d.rng());
    push(d.gen_exp(r, d.fresh_offset_id(), o.m, {o.size}, false));
  } else if (o.op == "recip") {
    push(d.gen_recip(d.fresh_mask({o.size}), o.m_recip, o.with_init, 0.75,
                     o.m_exp, false));
  } else if (o.op == "softmax") {
    push(d.gen_softmax(d.fresh_mask({(u32)o.k}), o.k, o.m, -4.0, 12.0));
  } else if (o.op == "sigmoid" || o.op == "tanh") {
    push(d.gen_sigmoid(d.fresh_mask({o.size}), o.op == "tanh", o.m_exp,
                       o.m_recip, {o.size}, false));
  } else if (o.op == "dropout" || o.op == "dropout-dyn") {
    push(d.gen_dropout(d.fresh_mask({o.size}), o.p, o.op == "dropout-dyn",
                       {o.size}, false));
  } else if (o.op == "tp") {
    push(d.gen_tp(d.fresh_mask({o.rows}), d.fresh_mask({o.cols}), false));
  } else {
    throw CLI::ValidationError("--op", "unknown op " + o.op);
  }
  return {std::move(b0), std::move(b1)};
}

// Closed-form cost totals (both parties, payload bits) for size elements at
// width l.
u64 formula_bits(const OpParams& o, u64 l) {
  u64 n = o.size;
  auto per = [&](u64 b) { return b * n; };
  if (o.op == "mul") return per(5 * l);
  if (o.op == "square") return per(3 * l);
  if (o.op == "power") {
    int top = 63;
    while (!((u64(o.m) >> top) & 1)) top--;
    int steps = top;
    for (int i = top - 1; i >= 0; i--)
      if ((u64(o.m) >> i) & 1) steps++;
    return per(3 * l * steps);
  }
  if (o.op == "exp")
    return o.baseline ? per(l + 5 * l * o.m) : per(l + 3 * l * o.m);
  if (o.op == "recip") {
    if (o.baseline)
      return o.with_init ? per(10 * l * (1 + o.m_recip))
                         : per(11 * l + 5 * l * o.m_exp + 10 * l * o.m_recip);
    return o.with_init ? per(12 * l + 6 * l * o.m_recip)
                       : per(13 * l + 3 * l * o.m_exp + 6 * l * o.m_recip);
  }
  if (o.op == "tp")
    return o.baseline ? 5 * l * o.rows * o.cols
                      : 2 * l * (o.rows + o.cols) + l * o.rows * o.cols;
  if (o.op == "dropout") return per(o.baseline ? 5 * l : 3 * l);
  if (o.op == "dropout-dyn") return per(o.baseline ? 9 * l : 5 * l);
  if (o.op == "softmax") {
    // openings x,s1,s2,z + relu/z truncations, then per-iteration y and S
    // openings plus two truncations
    u64 k = o.k, m = o.m;
    if (o.baseline) return (l + 10 * l * m) * k;
    return (11 * l) * k + m * (4 * l * k + 2 * l);
  }
  return 0;
}

std::vector<double> sample_inputs(const OpParams& o, Prg& g, size_t n) {
  double lo = -2, hi = 2;
  if (o.op == "exp") { lo = -4; hi = 0; }
  if (o.op == "recip") { lo = o.with_init ? 0.7 : 0.1; hi = o.with_init ? 1.4 : 8.0; }
  if (o.op == "sigmoid" || o.op == "tanh") { lo = -8; hi = 8; }
  if (o.op == "softmax") { lo = -4; hi = 8; }
  std::vector<double> v(n);
  for (auto& x : v)
    x = lo + (hi - lo) * ((double)(g.next_u64() % 65535 + 1) / 65536.0);
  return v;
}

struct RunOut {
  std::vector<u64> words;
  u64 bits = 0, rounds = 0;
  double ms = 0;
};

// Evaluate one op end to end over an in-memory (or loopback TCP) channel
// pair; restores the output and reads the comm meter. With solo >= 0 this
// process plays only that party over a real TCP peer at hostport; keys,
// input shares and the truncation stream are all re-derived from the seed,
// so the two processes agree without any out-of-band state.
RunOut run_op(const Common& c, const OpParams& o, const std::string& backend,
              TruncMode tm, int solo = -1, const std::string& hostport = "") {
  RingConfig cfg = c.cfg();
  Dealer d({cfg, {c.seed, 0xD0}});
  auto [b0, b1] = make_bundles(d, o);

  Block ts{c.seed, 0x5eed};
  std::unique_ptr<Channel> c0, c1;
  if (solo >= 0) {
    int fd = solo == 0 ? TcpChannel::listen_one(hostport)
                       : TcpChannel::connect_to(hostport);
    auto t = std::make_unique<TcpChannel>(fd, solo);
    t->cfg = cfg;
    t->trunc_stream = std::make_unique<Prg>(ts);
    (solo == 0 ? c0 : c1) = std::move(t);
  } else if (backend == "mem") {
    auto pair = make_mem_pair(cfg, ts);
    c0 = std::move(pair.first);
    c1 = std::move(pair.second);
  } else if (backend == "tcp") {
    std::unique_ptr<TcpChannel> t0, t1;
    std::string hp = "127.0.0.1:" + std::to_string(19900 + (int)(c.seed % 100));
    run2([&] { t0 = std::make_unique<TcpChannel>(TcpChannel::listen_one(hp), 0); },
         [&] { t1 = std::make_unique<TcpChannel>(TcpChannel::connect_to(hp), 1); });
    t0->cfg = cfg; t0->trunc_stream = std::make_unique<Prg>(ts);
    t1->cfg = cfg; t1->trunc_stream = std::make_unique<Prg>(ts);
    c0 = std::move(t0);
    c1 = std::move(t1);
  } else {
    throw CLI::ValidationError("--backend", "mem or tcp");
  }

  Prg g{{c.seed, 0x1297}};
  u32 n = (o.op == "softmax") ? (u32)o.k : o.size;
  auto xs = sample_inputs(o, g, n);
  auto [x0, x1] = split(RingTensor::from_reals(cfg, {n}, xs), g);
  std::vector<double> ys;
  AdditiveShare y0, y1;
  if (o.op == "mul" || o.op == "tp") {
    u32 ny = (o.op == "tp") ? o.cols : o.size;
    ys = sample_inputs(o, g, ny);
    std::tie(y0, y1) = split(RingTensor::from_reals(cfg, {ny}, ys), g);
  }
  if (o.op == "tp") {
    xs = sample_inputs(o, g, o.rows);
    std::tie(x0, x1) = split(RingTensor::from_reals(cfg, {o.rows}, xs), g);
  }

  AdditiveShare o0, o1;
  auto party = [&](int b, Channel* ch, Bundle& keys, const AdditiveShare& X,
                   const AdditiveShare& Y, AdditiveShare& out) {
    GateSession s{b, ch, tm, 1};
    GateKey& gk = keys.gates.at(0);
    if (o.op == "mul") {
      auto& k = std::get<MulKey>(gk);
      MaskedWire wx = to_masked(X, {k.in1, k.r1});
      MaskedWire wy = to_masked(Y, {k.in2, k.r2});
      out = drop_output_offset(eval_mul(s, k, wx, wy));
    } else if (o.op == "square") {
      auto& k = std::get<SquareKey>(gk);
      MaskedWire w = to_masked(X, {k.in, k.rin});
      out = drop_output_offset(eval_square(s, k, w));
    } else if (o.op == "power") {
      auto& k = std::get<PowerKey>(gk);
      MaskedWire w = to_masked(X, {k.in, k.segs[0].rin});
      out = drop_output_offset(eval_power(s, k, w));
    } else if (o.op == "exp") {
      auto& k = std::get<ExpKey>(gk);
      MaskedWire w = to_masked(X, {k.in, k.rin_split});
      out = eval_exp_wire(s, k, w);
    } else if (o.op == "recip") {
      auto& k = std::get<RecipKey>(gk);
      MaskedWire w = to_masked(X, {k.in, k.rin_split});
      out = drop_output_offset(eval_recip(s, k, w));
    } else if (o.op == "softmax") {
      auto& k = std::get<SoftmaxKey>(gk);
      MaskedWire w = to_masked(X, {k.in, k.rin_split});
      out = eval_softmax(s, k, w);
    } else if (o.op == "sigmoid" || o.op == "tanh") {
      auto& k = std::get<SigmoidKey>(gk);
      MaskedWire w = sigmoid_input_wire(k, X);
      out = drop_output_offset(eval_sigmoid(s, k, w));
    } else if (o.op == "dropout" || o.op == "dropout-dyn") {
      auto& k = std::get<DropoutKey>(gk);
      MaskedWire w = to_masked(X, {k.in, k.mul.r1});
      out = drop_output_offset(eval_dropout(s, k, w, o.p));
    } else if (o.op == "tp") {
      auto& k = std::get<TpKey>(gk);
      MaskedWire wx = to_masked(X, {k.in1, k.r1});
      MaskedWire wy = to_masked(Y, {k.in2, k.r2});
      out = drop_output_offset(eval_tp(s, k, wx, wy));
    }
  };

  auto t0 = std::chrono::steady_clock::now();
  if (solo >= 0) {
    Channel* ch = (solo == 0 ? c0 : c1).get();
    party(solo, ch, solo == 0 ? b0 : b1, solo == 0 ? x0 : x1,
          solo == 0 ? y0 : y1, solo == 0 ? o0 : o1);
    auto t1 = std::chrono::steady_clock::now();
    // Swap output shares and meter totals outside the metered protocol run.
    u64 my_bits = ch->meter.total_payload_bits();
    u64 my_rounds = ch->meter.total_rounds();
    AdditiveShare& mine = solo == 0 ? o0 : o1;
    std::vector<u64> tail = mine.val.data;
    tail.push_back(my_bits);
    tail.push_back(my_rounds);
    ch->send_frame(MsgType::CONTROL, 0xBE, tail);
    Frame f = ch->recv_frame(MsgType::CONTROL);
    AdditiveShare& theirs = solo == 0 ? o1 : o0;
    theirs.party = 1 - solo;
    theirs.val = mine.val;
    theirs.val.data.assign(f.payload.begin(), f.payload.end() - 2);
    RunOut out;
    out.words = restore(o0, o1).data;
    out.bits = my_bits + f.payload[f.payload.size() - 2];
    out.rounds = my_rounds + f.payload.back();
    out.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return out;
  }
  run2([&] { party(0, c0.get(), b0, x0, y0, o0); },
       [&] { party(1, c1.get(), b1, x1, y1, o1); });
  auto t1 = std::chrono::steady_clock::now();

  RunOut out;
  out.words = restore(o0, o1).data;
  out.bits = c0->meter.total_payload_bits() + c1->meter.total_payload_bits();
  out.rounds = c0->meter.total_rounds() + c1->meter.total_rounds();
  out.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return out;
}

// Baseline (ASS-only) counterpart of run_op for the ops that have one.
RunOut run_baseline(const Common& c, const OpParams& o) {
  RingConfig cfg = c.cfg();
  Dealer d({cfg, {c.seed, 0xD0}});
  BaselineKeys k1;
  BaselineKeys k0;
  if (o.op == "exp") k0 = gen_baseline_exp(d, {o.size}, o.m, &k1);
  else if (o.op == "recip") k0 = gen_baseline_recip(d, {o.size}, o.m_recip, o.with_init, o.m_exp, &k1);
  else if (o.op == "tp") k0 = gen_baseline_tp(d, o.rows, o.cols, &k1);
  else if (o.op == "dropout" || o.op == "dropout-dyn")
    k0 = gen_baseline_dropout(d, {o.size}, o.op == "dropout-dyn", o.p, &k1);
  else if (o.op == "softmax") k0 = gen_baseline_softmax(d, o.k, o.m, &k1);
  else throw CLI::ValidationError("--baseline", "no baseline for op " + o.op);

  Block ts{c.seed, 0x5eed};
  auto pair = make_mem_pair(cfg, ts);
  Prg g{{c.seed, 0x1297}};
  u32 n = (o.op == "softmax") ? (u32)o.k : (o.op == "tp" ? o.rows : o.size);
  auto xs = sample_inputs(o, g, n);
  auto [x0, x1] = split(RingTensor::from_reals(cfg, {n}, xs), g);
  AdditiveShare y0, y1;
  if (o.op == "tp") {
    auto ys = sample_inputs(o, g, o.cols);
    std::tie(y0, y1) = split(RingTensor::from_reals(cfg, {o.cols}, ys), g);
  }
  AdditiveShare o0, o1;
  bool dyn = o.op == "dropout-dyn";
  auto party = [&](int b, Channel* ch, BaselineKeys& kk, const AdditiveShare& X,
                   const AdditiveShare& Y, AdditiveShare& out) {
    GateSession s{b, ch, TruncMode::Interactive, 1};
    if (o.op == "exp") out = baseline_exp(s, kk, X, o.m);
    else if (o.op == "recip") out = baseline_recip(s, kk, X, o.m_recip, o.with_init, 0.75, o.m_exp);
    else if (o.op == "tp") out = baseline_tp(s, kk, X, Y);
    else if (o.op == "dropout" || o.op == "dropout-dyn") out = baseline_dropout(s, kk, X, dyn, o.p);
    else out = baseline_softmax(s, kk, X, o.m);
  };
  auto w0 = std::chrono::steady_clock::now();
  run2([&] { party(0, pair.first.get(), k0, x0, y0, o0); },
       [&] { party(1, pair.second.get(), k1, x1, y1, o1); });
  auto w1 = std::chrono::steady_clock::now();
  RunOut out;
  out.words = restore(o0, o1).data;
  out.bits = pair.first->meter.total_payload_bits() +
             pair.second->meter.total_payload_bits();
  out.rounds = pair.first->meter.total_rounds() + pair.second->meter.total_rounds();
  out.ms = std::chrono::duration<double, std::milli>(w1 - w0).count();
  return out;
}

int cmd_keygen(const Common& c, const OpParams& o, const std::string& out) {
  Dealer d({c.cfg(), {c.seed, 0xD0}});
  auto [b0, b1] = make_bundles(d, o);
  for (int p = 0; p < 2; p++) {
    std::string path = out + ".party" + std::to_string(p) + ".key";
    std::ofstream f(path, std::ios::binary);
    if (!f) {
      std::fprintf(stderr, "cannot write %s\n", path.c_str());
      return 3;
    }
    auto bytes = serialize_bundle(p == 0 ? b0 : b1);
    f.write((const char*)bytes.data(), (std::streamsize)bytes.size());
    emit(c, {{"wrote", path}, {"bytes", std::to_string(bytes.size())},
             {"gates", std::to_string((p == 0 ? b0 : b1).gates.size())}});
  }
  return 0;
}

int cmd_bench(const Common& c, const OpParams& o, const std::string& backend,
              const std::string& listen = "", const std::string& connect = "") {
  int solo = !listen.empty() ? 0 : (!connect.empty() ? 1 : -1);
  if (solo >= 0 && o.baseline)
    throw CLI::ValidationError("--baseline", "baseline runs in-process only");
  RunOut r = o.baseline ? run_baseline(c, o)
                        : run_op(c, o, backend, TruncMode::Interactive, solo,
                                 solo == 0 ? listen : connect);
  u64 want = formula_bits(o, c.l);
  bool ok = r.bits == want;

  // verify against the truncation-replaying oracle where one exists
  std::string oracle_state = "n/a";
  if (!o.baseline) {
    Oracle ora(c.cfg(), Block{c.seed, 0x5eed});
    Prg g{{c.seed, 0x1297}};
    u32 n = (o.op == "softmax") ? (u32)o.k : o.size;
    auto xs = sample_inputs(o, g, n);
    auto X = RingTensor::from_reals(c.cfg(), {n}, xs);
    std::vector<u64> want_w;
    if (o.op == "square") want_w = ora.square(X.data);
    else if (o.op == "power") want_w = ora.power(X.data, (u64)o.m);
    else if (o.op == "exp") want_w = ora.exp_(X.data, o.m);
    else if (o.op == "recip") want_w = ora.recip(X.data, o.m_recip, o.with_init, 0.75, o.m_exp);
    else if (o.op == "softmax") want_w = ora.softmax(X.data, o.m, -4.0, 12.0);
    else if (o.op == "sigmoid") want_w = ora.sigmoid(X.data, o.m_exp, o.m_recip);
    else if (o.op == "tanh") want_w = ora.tanh_(X.data, o.m_exp, o.m_recip);
    if (!want_w.empty()) {
      bool match = want_w == r.words;
      oracle_state = match ? "match" : "MISMATCH";
      ok = ok && match;
    }
  }
  emit(c, {{"op", o.op},
           {"size", std::to_string(o.op == "tp" ? o.rows * o.cols : o.size)},
           {"trunc", "it"},
           {"backend", o.baseline ? "mem" : (solo >= 0 ? "tcp" : backend)},
           {"baseline", o.baseline ? "1" : "0"},
           {"payload_bits", std::to_string(r.bits)},
           {"formula_bits", std::to_string(want)},
           {"rounds", std::to_string(r.rounds)},
           {"oracle", oracle_state},
           {"wall_ms", std::to_string(r.ms)}});
  return ok ? 0 : 1;
}

int cmd_error_measure(const Common& c, const OpParams& o) {
  RingConfig cfg = c.cfg();
  size_t n = 100000;
  Prg g{{c.seed, 0xE44}};
  std::vector<double> xs(n);
  for (auto& x : xs) x = (double)(g.next_u64() % 65535 + 1) / 65536.0;

  auto measure = [&](const std::string& op, int m, TruncMode tm,
                     bool seeded_full_range = false, double x_max = 1.0) {
    OpParams p = o;
    p.op = op;
    p.size = (u32)n;
    if (op == "exp") p.m = m;
    if (op == "recip") { p.m_recip = m; p.with_init = !seeded_full_range; }
    if (op == "sigmoid" || op == "tanh") p.m_recip = o.m_recip;
    Common cc = c;
    cc.seed = c.seed + m + (op == "recip" ? 1000 : 0);
    // reuse run_op but with our fixed inputs: patch via a local dealer run
    Dealer d({cfg, {cc.seed, 0xD0}});
    auto [b0, b1] = make_bundles(d, p);
    auto pair = make_mem_pair(cfg, {cc.seed, 0x5eed});
    std::vector<double> in = xs;
    if (x_max < 1.0)
      for (auto& x : in) x = 1.0 / 65536 + (x - 1.0 / 65536) * x_max;
    if (op == "recip" && !seeded_full_range)
      for (auto& x : in) x = std::max(x, 1.0 / 64);  // stay in Newton's basin
    Prg sg{{cc.seed, 0x51}};
    auto [x0, x1] = split(RingTensor::from_reals(cfg, {(u32)n}, in), sg);
    AdditiveShare o0, o1;
    auto party = [&](int b, Channel* ch, Bundle& keys, const AdditiveShare& X,
                     AdditiveShare& out) {
      GateSession s{b, ch, tm, 1};
      GateKey& gk = keys.gates.at(0);
      if (op == "exp") {
        auto& k = std::get<ExpKey>(gk);
        MaskedWire w = to_masked(X, {k.in, k.rin_split});
        out = eval_exp_wire(s, k, w);
      } else if (op == "recip") {
        auto& k = std::get<RecipKey>(gk);
        MaskedWire w = to_masked(X, {k.in, k.rin_split});
        out = drop_output_offset(eval_recip(s, k, w));
      } else {
        auto& k = std::get<SigmoidKey>(gk);
        MaskedWire w = sigmoid_input_wire(k, X);
        out = drop_output_offset(eval_sigmoid(s, k, w));
      }
    };
    run2([&] { party(0, pair.first.get(), b0, x0, o0); },
         [&] { party(1, pair.second.get(), b1, x1, o1); });
    auto words = restore(o0, o1).data;
    double acc = 0;
    for (size_t i = 0; i < n; i++) {
      double want = op == "exp" ? std::exp(in[i])
                  : op == "recip" ? 1.0 / in[i]
                  : op == "tanh" ? std::tanh(in[i])
                                  : 1.0 / (1.0 + std::exp(-in[i]));
      double got = cfg.to_signed(words[i]) / std::pow(2.0, cfg.s);
      acc += std::fabs(got - want) / std::max(std::fabs(want), std::pow(2.0, -cfg.s));
    }
    return acc / (double)n;
  };

  if (o.op == "exp" || o.op == "recip") {
    int hi = o.op == "exp" ? 8 : 15;
    double e8 = 0;
    for (int m = 1; m <= hi; m++) {
      for (TruncMode tm : {TruncMode::Interactive, TruncMode::Local}) {
        double e = measure(o.op, m, tm);
        if (o.op == "exp" && m == 8 && tm == TruncMode::Interactive) e8 = e;
        emit(c, {{"op", o.op}, {"m", std::to_string(m)},
                 {"trunc", tm == TruncMode::Interactive ? "it" : "lt"},
                 {"mean_rel_err", std::to_string(e)}});
      }
    }
    if (o.op == "recip") {
      // Ordering check with the exp-seeded start on the shared subrange
      // (0, 1/4], where 1/x grows and Newton's amplified truncation noise
      // dominates; on the far end of (0,1) the exp chain's own Euler error
      // takes over instead and the comparison inverts.
      double r15 = measure("recip", 15, TruncMode::Interactive, true, 0.25);
      double x8 = measure("exp", 8, TruncMode::Interactive, false, 0.25);
      emit(c, {{"range", "(0,0.25]"},
               {"recip_m15_err", std::to_string(r15)},
               {"exp_m8_err", std::to_string(x8)},
               {"recip_not_below_exp", r15 >= x8 ? "true" : "false"}});
    }
    (void)e8;
  } else if (o.op == "sigmoid" || o.op == "tanh") {
    for (TruncMode tm : {TruncMode::Interactive, TruncMode::Local}) {
      double e = measure(o.op, o.m_recip, tm);
      emit(c, {{"op", o.op},
               {"trunc", tm == TruncMode::Interactive ? "it" : "lt"},
               {"mean_rel_err", std::to_string(e)}});
    }
  } else {
    throw CLI::ValidationError("--op", "error-measure supports exp, recip, sigmoid, tanh");
  }
  return 0;
}

int cmd_finetune(const Common& c, FedConfig fc, const std::string& trunc,
                 int switch_round, bool debug_restore) {
  fc.cfg = c.cfg();
  fc.seed = c.seed;
  if (trunc == "lt") fc.mode = TruncMode::Local;
  else if (trunc == "it") fc.mode = TruncMode::Interactive;
  else if (trunc == "staged") fc.staged_switch = switch_round;
  else throw CLI::ValidationError("--trunc", "lt, it, or staged");

  FedResult r = run_fedtune(fc);
  FedResult p = run_fedtune_plain(fc);
  if (debug_restore)
    for (size_t t = 0; t < r.acc.size(); t++)
      emit(c, {{"round", std::to_string(t + 1)},
               {"acc", std::to_string(r.acc[t])},
               {"plain_acc", std::to_string(p.acc[t])}});
  emit(c, {{"clients", std::to_string(fc.clients)},
           {"rounds", std::to_string(fc.rounds)},
           {"trunc", trunc},
           {"final_acc", std::to_string(r.final_acc)},
           {"plain_final_acc", std::to_string(p.final_acc)},
           {"payload_bits", std::to_string(r.total_payload_bits)},
           {"upload_bytes", std::to_string(r.upload_bytes.size())}});
  return std::fabs(r.final_acc - p.final_acc) <= 0.02 + 1e-12 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid secret-sharing protocol suite"};
  app.require_subcommand(1);

  Common c;
  OpParams o;
  std::string backend = "mem", out = "bundle", trunc = "it";
  int switch_round = 10;
  bool debug_restore = false;
  FedConfig fc;

  app.add_option("--l", c.l, "ring width in bits");
  app.add_option("--s", c.s, "fixed-point fractional bits");
  app.add_option("--seed", c.seed, "deterministic seed");
  app.add_flag("--json", c.emit_json, "emit JSON lines");

  auto add_op_flags = [&](CLI::App* sub) {
    sub->add_option("--op", o.op, "operation");
    sub->add_option("--size,--count", o.size, "element count");
    sub->add_option("--m", o.m, "iterations / power exponent");
    sub->add_option("--m-recip", o.m_recip, "Newton iterations");
    sub->add_option("--m-exp", o.m_exp, "exp chain length");
    sub->add_option("--k", o.k, "softmax width");
    sub->add_option("--rows,--n", o.rows, "tensor-product rows");
    sub->add_option("--cols", o.cols, "tensor-product cols");
    sub->add_option("--p", o.p, "dropout rate");
    sub->add_flag("--baseline", o.baseline, "ASS-only baseline");
    sub->add_flag("!--no-init", o.with_init, "reciprocal without public init");
  };

  CLI::App* kg = app.add_subcommand("keygen", "write dealer bundles");
  add_op_flags(kg);
  kg->add_option("--out", out, "output path prefix");

  CLI::App* be = app.add_subcommand("bench", "run one op, check formula + oracle");
  add_op_flags(be);
  be->add_option("--backend", backend, "mem or tcp");
  std::string listen, connect;
  auto* lo = be->add_option("--listen", listen, "play party 0 at host:port");
  be->add_option("--connect", connect, "play party 1 against host:port")
      ->excludes(lo);

  CLI::App* em = app.add_subcommand("error-measure", "iteration-depth error sweep");
  add_op_flags(em);

  CLI::App* ft = app.add_subcommand("finetune", "federated fine-tuning demo");
  ft->add_option("--clients", fc.clients, "client count");
  ft->add_option("--rounds", fc.rounds, "training rounds");
  ft->add_option("--batch", fc.head.B, "batch rows per step");
  ft->add_option("--lr", fc.lr, "learning rate");
  ft->add_option("--trunc", trunc, "lt, it, or staged");
  ft->add_option("--switch-round", switch_round, "staged: rounds under LT");
  ft->add_flag("--debug-restore", debug_restore, "log per-round accuracy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (kg->parsed()) return cmd_keygen(c, o, out);
    if (be->parsed()) return cmd_bench(c, o, backend, listen, connect);
    if (em->parsed()) return cmd_error_measure(c, o);
    if (ft->parsed()) return cmd_finetune(c, fc, trunc, switch_round, debug_restore);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    std::string m = e.what();
    for (const char* p : {"tcp ", "socket", "bind:", "listen", "accept",
                          "connect:", "host:port"})
      if (m.find(p) != std::string::npos) return 3;
    return 1;
  }
  return 2;
}
