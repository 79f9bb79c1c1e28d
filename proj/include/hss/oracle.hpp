#pragma once
#include <memory>
#include <vector>

#include "hss/ring.hpp"

// Plaintext fixed-point mirror of every gate, running the exact schedule of
// the secure evaluation (same intermediate scales, same truncation order).
// With a stream seed it replays the channel's truncation correlations, so the
// interactive-truncation rounding bit is reproduced and restored secure
// outputs match these values bit for bit.
namespace hss {

struct Oracle {
  RingConfig cfg;
  std::unique_ptr<Prg> stream;  // set: replay interactive truncation draws

  explicit Oracle(RingConfig c) : cfg(c) {}
  Oracle(RingConfig c, Block trunc_seed)
      : cfg(c), stream(std::make_unique<Prg>(trunc_seed)) {}

  // One truncation of a whole tensor; elements draw from the stream in order,
  // exactly as the secure truncation of the same tensor does.
  void trunc_vec(std::vector<u64>& v, int bits);

  std::vector<u64> mul(std::vector<u64> a, const std::vector<u64>& b);
  std::vector<u64> square(std::vector<u64> a);
  std::vector<u64> power(std::vector<u64> a, u64 n);
  std::vector<u64> exp_(std::vector<u64> x, int m);
  std::vector<u64> recip(const std::vector<u64>& x, int m, bool with_init,
                         double y0, int m_exp);
  std::vector<u64> softmax(const std::vector<u64>& x, int m, double a0, double a1);
  std::vector<u64> sigmoid(const std::vector<u64>& x, int m_exp, int m_recip);
  std::vector<u64> tanh_(std::vector<u64> x, int m_exp, int m_recip);
  std::vector<u64> dropout_static(const std::vector<u64>& x,
                                  const std::vector<u64>& sigma);
  std::vector<u64> dropout_dynamic(const std::vector<u64>& x,
                                   const std::vector<u64>& keep_bit, double p);
  std::vector<u64> tp(const std::vector<u64>& x, const std::vector<u64>& y);
  RingTensor matmul_fx(const RingTensor& A, const RingTensor& B);
};

}  // namespace hss
