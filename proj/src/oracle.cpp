#include "hss/oracle.hpp"

namespace hss {

void Oracle::trunc_vec(std::vector<u64>& v, int bits) {
  if (bits == 0) return;
  if (!stream || cfg.l < 3) {
    for (auto& x : v) x = cfg.arith_shift(x, bits);
    return;
  }
  u64 half_mask = (cfg.l == 64) ? (~0ULL >> 1) : ((1ULL << (cfg.l - 1)) - 1);
  u64 D = 1ULL << (cfg.l - 2);
  for (auto& x : v) {
    u64 r = stream->next_u64() & half_mask;
    stream->next_u64();  // share splits, value-irrelevant
    stream->next_u64();
    u64 c = cfg.reduce(x + D + r);
    x = cfg.reduce((c >> bits) - (r >> bits) - (D >> bits));
  }
}

std::vector<u64> Oracle::mul(std::vector<u64> a, const std::vector<u64>& b) {
  bool bc = b.size() == 1 && a.size() > 1;
  for (size_t i = 0; i < a.size(); i++)
    a[i] = cfg.reduce(a[i] * (bc ? b[0] : b[i]));
  trunc_vec(a, cfg.s);
  return a;
}

std::vector<u64> Oracle::square(std::vector<u64> a) {
  for (auto& v : a) v = cfg.reduce(v * v);
  trunc_vec(a, cfg.s);
  return a;
}

std::vector<u64> Oracle::power(std::vector<u64> a, u64 n) {
  int top = 63;
  while (!((n >> top) & 1)) top--;
  std::vector<u64> cur = a;
  for (int i = top - 1; i >= 0; i--) {
    cur = square(std::move(cur));
    if ((n >> i) & 1) cur = mul(std::move(cur), a);
  }
  return cur;
}

std::vector<u64> Oracle::exp_(std::vector<u64> x, int m) {
  // raw words reinterpreted at scale s+m give x / 2^m for free
  u64 one_ext = cfg.reduce(1ULL << (cfg.s + m));
  for (auto& v : x) v = cfg.reduce(v + one_ext);
  for (int i = 0; i < m; i++) {
    for (auto& v : x) v = cfg.reduce(v * v);
    trunc_vec(x, cfg.s + m);
  }
  trunc_vec(x, m);
  return x;
}

std::vector<u64> Oracle::recip(const std::vector<u64>& x, int m, bool with_init,
                               double y0, int m_exp) {
  size_t n = x.size();
  std::vector<u64> y(n);
  if (with_init) {
    y.assign(n, cfg.encode(y0));
  } else {
    std::vector<u64> w(n);
    u64 one = cfg.encode(1.0);
    for (size_t i = 0; i < n; i++) w[i] = cfg.reduce(one - 2 * x[i]);
    std::vector<u64> e = exp_(std::move(w), m_exp);
    u64 c = cfg.encode(0.003);
    for (size_t i = 0; i < n; i++) y[i] = cfg.reduce(e[i] * 3 + c);
  }
  // zeroth step y <- y0 (2 - x y0), then m Newton iterations
  std::vector<u64> t1 = mul(std::vector<u64>(x), y);
  u64 two = cfg.encode(2.0);
  std::vector<u64> w2(n);
  for (size_t i = 0; i < n; i++) w2[i] = cfg.reduce(two - t1[i]);
  y = mul(std::move(w2), y);
  for (int i = 0; i < m; i++) {
    std::vector<u64> y2 = square(std::vector<u64>(y));
    std::vector<u64> xy2 = mul(std::vector<u64>(x), y2);
    for (size_t j = 0; j < n; j++) y[j] = cfg.reduce(2 * y[j] - xy2[j]);
  }
  return y;
}

std::vector<u64> Oracle::softmax(const std::vector<u64>& x, int m, double a0,
                                 double a1) {
  size_t K = x.size();
  u64 a0f = cfg.encode(a0), a1f = cfg.encode(a1), one = cfg.encode(1.0);
  std::vector<u64> w1(K), w2(K), p1(K), p2(K);
  for (size_t i = 0; i < K; i++) {
    w1[i] = cfg.reduce(a0f - x[i]);
    w2[i] = cfg.reduce(x[i] - a1f);
    p1[i] = cfg.to_signed(w1[i]) < 0 ? one : 0;
    p2[i] = cfg.to_signed(w2[i]) < 0 ? one : 0;
  }
  std::vector<u64> r1(K), r2(K);
  for (size_t i = 0; i < K; i++) r1[i] = cfg.reduce(w1[i] * (one - p1[i]));
  trunc_vec(r1, cfg.s);
  for (size_t i = 0; i < K; i++) r2[i] = cfg.reduce(w2[i] * (one - p2[i]));
  trunc_vec(r2, cfg.s);
  std::vector<u64> z(K);
  u64 inv_m = cfg.encode(1.0 / m);
  for (size_t i = 0; i < K; i++)
    z[i] = cfg.reduce(cfg.reduce(x[i] + r1[i] - r2[i]) * inv_m);
  trunc_vec(z, cfg.s);
  std::vector<u64> y(K, cfg.encode(1.0 / (double)K));
  for (int it = 0; it < m; it++) {
    std::vector<u64> t(K);
    for (size_t i = 0; i < K; i++) t[i] = cfg.reduce(z[i] * y[i]);
    trunc_vec(t, cfg.s);
    u64 S = 0;
    for (u64 v : t) S = cfg.reduce(S + v);
    std::vector<u64> ys(K);
    for (size_t i = 0; i < K; i++) ys[i] = cfg.reduce(y[i] * S);
    trunc_vec(ys, cfg.s);
    for (size_t i = 0; i < K; i++) y[i] = cfg.reduce(y[i] + t[i] - ys[i]);
  }
  return y;
}

std::vector<u64> Oracle::sigmoid(const std::vector<u64>& x, int m_exp,
                                 int m_recip) {
  size_t n = x.size();
  u64 one = cfg.encode(1.0);
  std::vector<u64> p(n), absx(n);
  for (size_t i = 0; i < n; i++) {
    p[i] = cfg.to_signed(x[i]) < 0 ? one : 0;
    absx[i] = cfg.reduce(x[i] * cfg.reduce(one - 2 * p[i]));
  }
  trunc_vec(absx, cfg.s);
  std::vector<u64> e(n);
  for (size_t i = 0; i < n; i++) e[i] = cfg.reduce(0 - absx[i]);
  e = exp_(std::move(e), m_exp);
  std::vector<u64> d(n);
  for (size_t i = 0; i < n; i++) d[i] = cfg.reduce(e[i] + one);
  std::vector<u64> sa = recip(d, m_recip, true, 0.5, m_exp);
  std::vector<u64> u2(n), u3(n);
  for (size_t i = 0; i < n; i++) u2[i] = cfg.reduce(sa[i] * cfg.reduce(one - p[i]));
  trunc_vec(u2, cfg.s);
  for (size_t i = 0; i < n; i++) u3[i] = cfg.reduce(cfg.reduce(one - sa[i]) * p[i]);
  trunc_vec(u3, cfg.s);
  std::vector<u64> out(n);
  for (size_t i = 0; i < n; i++) out[i] = cfg.reduce(u2[i] + u3[i]);
  return out;
}

std::vector<u64> Oracle::tanh_(std::vector<u64> x, int m_exp, int m_recip) {
  for (auto& v : x) v = cfg.reduce(2 * v);
  std::vector<u64> s = sigmoid(x, m_exp, m_recip);
  u64 one = cfg.encode(1.0);
  for (auto& v : s) v = cfg.reduce(2 * v - one);
  return s;
}

std::vector<u64> Oracle::dropout_static(const std::vector<u64>& x,
                                        const std::vector<u64>& sigma) {
  std::vector<u64> y(x.size());
  for (size_t i = 0; i < x.size(); i++) y[i] = cfg.reduce(x[i] * sigma[i]);
  trunc_vec(y, cfg.s);
  return y;
}

std::vector<u64> Oracle::dropout_dynamic(const std::vector<u64>& x,
                                         const std::vector<u64>& keep_bit,
                                         double p) {
  u64 kf = cfg.encode(1.0 / (1.0 - p));
  std::vector<u64> y(x.size());
  for (size_t i = 0; i < x.size(); i++)
    y[i] = cfg.reduce(x[i] * keep_bit[i] * kf);
  trunc_vec(y, cfg.s);
  return y;
}

std::vector<u64> Oracle::tp(const std::vector<u64>& x, const std::vector<u64>& y) {
  std::vector<u64> z(x.size() * y.size());
  for (size_t i = 0; i < x.size(); i++)
    for (size_t j = 0; j < y.size(); j++)
      z[i * y.size() + j] = cfg.reduce(x[i] * y[j]);
  trunc_vec(z, cfg.s);
  return z;
}

RingTensor Oracle::matmul_fx(const RingTensor& A, const RingTensor& B) {
  RingTensor C = matmul(A, B);
  trunc_vec(C.data, cfg.s);
  C.scale_bits = cfg.s;
  return C;
}

}  // namespace hss
