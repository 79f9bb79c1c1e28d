#pragma once
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "hss/rng.hpp"

// Fixed-point arithmetic over Z_{2^l}. Values are l-bit words held in u64,
// reduced by the ring mask after every operation; reals map in and out through
// scale 2^s two's-complement encoding.
namespace hss {

struct RingConfig {
  int l = 64;  // ring bit width, 2..64
  int s = 16;  // fraction bits

  u64 mask() const { return (l == 64) ? ~0ULL : ((1ULL << l) - 1); }
  u64 reduce(u64 v) const { return v & mask(); }

  // Two's-complement interpretation of an l-bit word.
  i64 to_signed(u64 v) const {
    v = reduce(v);
    if (l == 64) return (i64)v;
    u64 half = 1ULL << (l - 1);
    return (v >= half) ? (i64)(v - (1ULL << l)) : (i64)v;
  }

  u64 encode(double x) const {
    double lim = std::ldexp(1.0, l - s - 1);
    if (!(std::fabs(x) < lim))
      throw std::out_of_range("encode: |" + std::to_string(x) +
                              "| >= 2^(l-s-1)");
    return reduce((u64)(i64)std::floor(std::ldexp(x, s)));
  }

  double decode(u64 v) const { return std::ldexp((double)to_signed(v), -s); }

  // Arithmetic right shift in the l-bit two's-complement domain.
  u64 arith_shift(u64 v, int bits) const {
    return reduce((u64)(to_signed(v) >> bits));
  }

  // Exact floor division by 2^bits of the signed value (same as arith_shift;
  // named separately where exact semantics are the point).
  u64 floor_div_pow2(u64 v, int bits) const { return arith_shift(v, bits); }

  bool operator==(const RingConfig&) const = default;
};

// Dense tensor of ring words. scale_bits tracks the current fixed-point scale
// so gate code can assert it never multiplies mismatched scales silently.
struct RingTensor {
  RingConfig cfg;
  std::vector<u32> shape;
  std::vector<u64> data;
  int scale_bits = 0;

  RingTensor() = default;
  RingTensor(RingConfig c, std::vector<u32> sh, int scale)
      : cfg(c), shape(std::move(sh)), scale_bits(scale) {
    data.assign(numel(), 0);
  }

  size_t numel() const {
    size_t n = 1;
    for (u32 d : shape) n *= d;
    return n;
  }

  static RingTensor scalar(RingConfig c, u64 v, int scale) {
    RingTensor t(c, {}, scale);
    t.data = {c.reduce(v)};
    return t;
  }

  static RingTensor from_reals(RingConfig c, const std::vector<u32>& sh,
                               const std::vector<double>& xs) {
    RingTensor t(c, sh, c.s);
    if (xs.size() != t.numel()) throw std::invalid_argument("from_reals: size");
    for (size_t i = 0; i < xs.size(); i++) t.data[i] = c.encode(xs[i]);
    return t;
  }

  std::vector<double> to_reals() const {
    std::vector<double> out(numel());
    for (size_t i = 0; i < out.size(); i++)
      out[i] = std::ldexp((double)cfg.to_signed(data[i]), -scale_bits);
    return out;
  }

  void check_same_shape(const RingTensor& o, const char* what) const {
    if (shape != o.shape)
      throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }

  RingTensor& add_(const RingTensor& o) {
    check_same_shape(o, "add");
    for (size_t i = 0; i < data.size(); i++)
      data[i] = cfg.reduce(data[i] + o.data[i]);
    return *this;
  }
  RingTensor& sub_(const RingTensor& o) {
    check_same_shape(o, "sub");
    for (size_t i = 0; i < data.size(); i++)
      data[i] = cfg.reduce(data[i] - o.data[i]);
    return *this;
  }
  RingTensor& mul_elem_(const RingTensor& o) {
    check_same_shape(o, "mul");
    for (size_t i = 0; i < data.size(); i++)
      data[i] = cfg.reduce(data[i] * o.data[i]);
    return *this;
  }
  RingTensor& scale_const_(u64 c) {
    for (auto& v : data) v = cfg.reduce(v * c);
    return *this;
  }
  RingTensor& add_const_(u64 c) {
    for (auto& v : data) v = cfg.reduce(v + c);
    return *this;
  }
  RingTensor& neg_() {
    for (auto& v : data) v = cfg.reduce(~v + 1);
    return *this;
  }

  friend RingTensor operator+(RingTensor a, const RingTensor& b) { return a.add_(b); }
  friend RingTensor operator-(RingTensor a, const RingTensor& b) { return a.sub_(b); }

  void random_fill(Prg& g) {
    for (auto& v : data) v = cfg.reduce(g.next_u64());
  }
};

// Plaintext helpers used by the dealer for correlations.
inline RingTensor mul_elem(RingTensor a, const RingTensor& b) { return a.mul_elem_(b); }

inline RingTensor matmul(const RingTensor& A, const RingTensor& B) {
  if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
    throw std::invalid_argument("matmul: shape");
  u32 u = A.shape[0], v = A.shape[1], w = B.shape[1];
  RingTensor C(A.cfg, {u, w}, A.scale_bits + B.scale_bits);
  for (u32 i = 0; i < u; i++)
    for (u32 k = 0; k < v; k++) {
      u64 a = A.data[(size_t)i * v + k];
      for (u32 j = 0; j < w; j++)
        C.data[(size_t)i * w + j] =
            A.cfg.reduce(C.data[(size_t)i * w + j] + a * B.data[(size_t)k * w + j]);
    }
  return C;
}

inline RingTensor transpose(const RingTensor& A) {
  if (A.shape.size() != 2) throw std::invalid_argument("transpose: rank");
  u32 r = A.shape[0], c = A.shape[1];
  RingTensor T(A.cfg, {c, r}, A.scale_bits);
  for (u32 i = 0; i < r; i++)
    for (u32 j = 0; j < c; j++) T.data[(size_t)j * r + i] = A.data[(size_t)i * c + j];
  return T;
}

inline RingTensor outer(const RingTensor& a, const RingTensor& b) {
  RingTensor C(a.cfg, {(u32)a.numel(), (u32)b.numel()},
               a.scale_bits + b.scale_bits);
  for (size_t i = 0; i < a.numel(); i++)
    for (size_t j = 0; j < b.numel(); j++)
      C.data[i * b.numel() + j] = a.cfg.reduce(a.data[i] * b.data[j]);
  return C;
}

}  // namespace hss
