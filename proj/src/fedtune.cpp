#include "hss/fedtune.hpp"

#include <cmath>
#include <thread>

namespace hss {

namespace {

double unit_real(Prg& g) { return (double)(g.next_u64() >> 11) * 0x1p-53; }

Block master_block(u64 seed) { return Block{seed, 0x66656474756e65ULL}; }

struct BatchRows {
  RingTensor X, Y;  // B x d features, B x c one-hot
};

BatchRows batch_for(const FedConfig& fc, const FedData& data, u32 client,
                    u32 round) {
  const HeadConfig& hc = fc.head;
  BatchRows b{RingTensor(fc.cfg, {hc.B, hc.d}, fc.cfg.s),
              RingTensor(fc.cfg, {hc.B, hc.c}, fc.cfg.s)};
  for (u32 k = 0; k < hc.B; k++) {
    u32 row = client * fc.per_client + (round * hc.B + k) % fc.per_client;
    for (u32 j = 0; j < hc.d; j++)
      b.X.data[(size_t)k * hc.d + j] = data.X.data[(size_t)row * hc.d + j];
    for (u32 j = 0; j < hc.c; j++)
      b.Y.data[(size_t)k * hc.c + j] = data.Y.data[(size_t)row * hc.c + j];
  }
  return b;
}

// flatten order for gradient transport: W1, b1, W2, b2
std::vector<u64> flatten_grads(const HeadGrads& g) {
  std::vector<u64> out;
  for (const AdditiveShare* t : {&g.dW1, &g.db1, &g.dW2, &g.db2})
    out.insert(out.end(), t->val.data.begin(), t->val.data.end());
  return out;
}

void plain_fx_mean_update(RingConfig cfg, HeadPlain& model,
                          const std::vector<u64>& agg_sum, u32 N, double lr) {
  u64 invN = cfg.encode(1.0 / (double)N);
  u64 lr_fx = cfg.encode(lr);
  size_t pos = 0;
  for (RingTensor* t : {&model.W1, &model.b1, &model.W2, &model.b2})
    for (auto& w : t->data) {
      u64 mean = cfg.arith_shift(cfg.reduce(agg_sum[pos++] * invN), cfg.s);
      u64 step = cfg.arith_shift(cfg.reduce(mean * lr_fx), cfg.s);
      w = cfg.reduce(w - step);
    }
}

}  // namespace

std::vector<Block> make_pair_seeds(u64 seed, u32 N) {
  Prg master(master_block(seed));
  std::vector<Block> ps(N * N);
  for (u32 i = 0; i < N; i++)
    for (u32 j = i + 1; j < N; j++)
      ps[i * N + j] = master.derive(0x700000ULL + (u64)i * 4096 + j);
  return ps;
}

void apply_pair_masks(std::vector<u64>& g, RingConfig cfg, u32 i, u32 N,
                      u32 round, const std::vector<Block>& pair_seeds) {
  for (u32 j = 0; j < N; j++) {
    if (j == i) continue;
    u32 a = std::min(i, j), b = std::max(i, j);
    Prg pair(pair_seeds[a * N + b]);
    Prg mg(pair.derive(round + 1));
    for (auto& v : g) {
      u64 m = cfg.reduce(mg.next_u64());
      v = (i < j) ? cfg.reduce(v + m) : cfg.reduce(v - m);
    }
  }
}

FedData make_fed_data(const FedConfig& fc) {
  const HeadConfig& hc = fc.head;
  Prg master(master_block(fc.seed));
  Prg bg(master.derive(3));
  Prg dg(master.derive(1));
  // frozen backbone: random projection d_raw -> d, then tanh
  std::vector<double> P((size_t)fc.d_raw * hc.d);
  double a = 1.0 / std::sqrt((double)fc.d_raw);
  for (auto& v : P) v = (unit_real(bg) * 2 - 1) * a * 2;
  // class means: +-0.8 patterns
  std::vector<double> mu((size_t)hc.c * fc.d_raw);
  for (auto& v : mu) v = (bg.next_u64() & 1) ? 0.8 : -0.8;

  u32 n = fc.clients * fc.per_client;
  FedData out;
  out.X = RingTensor(fc.cfg, {n, hc.d}, fc.cfg.s);
  out.Y = RingTensor(fc.cfg, {n, hc.c}, fc.cfg.s);
  out.labels.resize(n);
  for (u32 r = 0; r < n; r++) {
    u32 cls = r % hc.c;
    out.labels[r] = cls;
    std::vector<double> x(fc.d_raw);
    for (u32 k = 0; k < fc.d_raw; k++) {
      double noise = (unit_real(dg) + unit_real(dg) + unit_real(dg)) * 2.0 / 3 - 1;
      x[k] = mu[(size_t)cls * fc.d_raw + k] + 0.6 * noise;
    }
    for (u32 j = 0; j < hc.d; j++) {
      double z = 0;
      for (u32 k = 0; k < fc.d_raw; k++) z += x[k] * P[(size_t)k * hc.d + j];
      out.X.data[(size_t)r * hc.d + j] = fc.cfg.encode(std::tanh(z));
    }
    out.Y.data[(size_t)r * hc.c + cls] = fc.cfg.encode(1.0);
  }
  return out;
}

FedResult run_fedtune(const FedConfig& fc) {
  RingConfig cfg = fc.cfg;
  const HeadConfig& hc = fc.head;
  FedData data = make_fed_data(fc);
  Prg master(master_block(fc.seed));
  Prg initg(master.derive(2));
  HeadPlain model = head_init(cfg, hc, initg);
  std::vector<Block> pair_seeds = make_pair_seeds(fc.seed, fc.clients);
  size_t nparam = model.W1.numel() + model.b1.numel() + model.W2.numel() +
                  model.b2.numel();
  u32 label = labels().id("fedtune");
  FedResult res;

  for (u32 t = 0; t < fc.rounds; t++) {
    TruncMode mode = fc.mode;
    if (fc.staged_switch >= 0)
      mode = (t < (u32)fc.staged_switch) ? TruncMode::Local
                                         : TruncMode::Interactive;
    std::vector<u64> agg(nparam, 0);
    for (u32 i = 0; i < fc.clients; i++) {
      Dealer dl({cfg, master.derive(0x200000ULL + (u64)t * 1024 + i)});
      Bundle b0, b1;
      b0.cfg = b1.cfg = cfg;
      b0.party = 0;
      b1.party = 1;
      gen_step_keys(dl, hc, b0, b1);
      auto [ch0, ch1] =
          make_mem_pair(cfg, master.derive(0x300000ULL + (u64)t * 1024 + i));
      BatchRows batch = batch_for(fc, data, i, t);
      Block server_split = master.derive(0x400000ULL + (u64)t * 1024 + i);
      Block client_split = master.derive(0x500000ULL + (u64)t * 1024 + i);

      std::vector<u64> upload;
      std::exception_ptr err0, err1;

      std::thread server([&] {
        try {
          Prg sg(server_split);
          auto [m0, m1] = split_head(model, sg);
          for (const AdditiveShare* s : {&m1.W1, &m1.b1, &m1.W2, &m1.b2})
            ch0->send_frame(MsgType::PARAM_SHARE, label, s->val.data);
          auto rx = [&](std::vector<u32> shape) {
            Frame f = ch0->recv_frame(MsgType::SAMPLE_SHARE);
            RingTensor v(cfg, shape, cfg.s);
            v.data = std::move(f.payload);
            return AdditiveShare(0, std::move(v));
          };
          AdditiveShare X0 = rx({hc.B, hc.d});
          AdditiveShare Y0 = rx({hc.B, hc.c});
          GateSession s0{0, ch0.get(), mode, label};
          HeadGrads g0 = secure_grads(s0, b0, hc, m0, X0, Y0);
          std::vector<u64> mine = flatten_grads(g0);
          Frame up = ch0->recv_frame(MsgType::AGG_UPLOAD);
          for (size_t k = 0; k < nparam; k++)
            agg[k] = cfg.reduce(agg[k] + mine[k] + up.payload[k]);
          upload = std::move(up.payload);
        } catch (...) { err0 = std::current_exception(); }
      });
      std::thread client([&] {
        try {
          HeadShares m1;
          auto rxp = [&](std::vector<u32> shape) {
            Frame f = ch1->recv_frame(MsgType::PARAM_SHARE);
            RingTensor v(cfg, shape, cfg.s);
            v.data = std::move(f.payload);
            return AdditiveShare(1, std::move(v));
          };
          m1.W1 = rxp({hc.d, hc.h});
          m1.b1 = rxp({hc.h});
          m1.W2 = rxp({hc.h, hc.c});
          m1.b2 = rxp({hc.c});
          Prg cg(client_split);
          auto [x0, x1] = split(batch.X, cg);
          auto [y0, y1] = split(batch.Y, cg);
          ch1->send_frame(MsgType::SAMPLE_SHARE, label, x0.val.data);
          ch1->send_frame(MsgType::SAMPLE_SHARE, label, y0.val.data);
          x1.party = y1.party = 1;
          GateSession s1{1, ch1.get(), mode, label};
          HeadGrads g1 = secure_grads(s1, b1, hc, m1, x1, y1);
          std::vector<u64> up = flatten_grads(g1);
          apply_pair_masks(up, cfg, i, fc.clients, t, pair_seeds);
          ch1->send_frame(MsgType::AGG_UPLOAD, label, up);
        } catch (...) { err1 = std::current_exception(); }
      });
      server.join();
      client.join();
      if (err0) std::rethrow_exception(err0);
      if (err1) std::rethrow_exception(err1);

      res.total_payload_bits += ch0->meter.total_payload_bits() +
                                ch1->meter.total_payload_bits();
      size_t wb = (size_t)(cfg.l + 7) / 8;
      for (u64 v : upload)
        for (size_t bpos = 0; bpos < wb; bpos++)
          res.upload_bytes.push_back((u8)(cfg.reduce(v) >> (8 * bpos)));
    }
    plain_fx_mean_update(cfg, model, agg, fc.clients, fc.lr);
    res.acc.push_back(head_accuracy(model, data.X, data.labels));
  }
  res.final_acc = res.acc.empty() ? 0 : res.acc.back();
  return res;
}

FedResult run_fedtune_plain(const FedConfig& fc) {
  RingConfig cfg = fc.cfg;
  const HeadConfig& hc = fc.head;
  FedData data = make_fed_data(fc);
  Prg master(master_block(fc.seed));
  Prg initg(master.derive(2));
  HeadPlain model = head_init(cfg, hc, initg);
  size_t nparam = model.W1.numel() + model.b1.numel() + model.W2.numel() +
                  model.b2.numel();
  Oracle o(cfg);  // exact floor truncation
  FedResult res;
  for (u32 t = 0; t < fc.rounds; t++) {
    std::vector<u64> agg(nparam, 0);
    for (u32 i = 0; i < fc.clients; i++) {
      BatchRows batch = batch_for(fc, data, i, t);
      HeadPlain g;
      plain_grads(o, hc, model, batch.X, batch.Y, g);
      size_t pos = 0;
      for (RingTensor* gt : {&g.W1, &g.b1, &g.W2, &g.b2})
        for (u64 v : gt->data) agg[pos] = cfg.reduce(agg[pos] + v), pos++;
    }
    plain_fx_mean_update(cfg, model, agg, fc.clients, fc.lr);
    res.acc.push_back(head_accuracy(model, data.X, data.labels));
  }
  res.final_acc = res.acc.empty() ? 0 : res.acc.back();
  return res;
}

}  // namespace hss
