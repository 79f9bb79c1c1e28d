#pragma once
#include <functional>
#include <thread>

#include "hss/dealer.hpp"
#include "hss/oracle.hpp"
#include "hss/proto.hpp"

namespace hss::testutil {

// Run both parties' halves of a protocol on two threads; rethrow failures.
inline void run2(const std::function<void()>& f0,
                 const std::function<void()>& f1) {
  std::exception_ptr e0, e1;
  std::thread t0([&] { try { f0(); } catch (...) { e0 = std::current_exception(); } });
  std::thread t1([&] { try { f1(); } catch (...) { e1 = std::current_exception(); } });
  t0.join();
  t1.join();
  if (e0) std::rethrow_exception(e0);
  if (e1) std::rethrow_exception(e1);
}

struct TestNet {
  RingConfig cfg;
  Block trunc_seed;
  std::unique_ptr<Channel> c0, c1;

  explicit TestNet(RingConfig c, u64 seed = 0x7472756e63ULL)
      : cfg(c), trunc_seed{seed, 0x5eedULL} {
    auto pair = make_mem_pair(cfg, trunc_seed);
    c0 = std::move(pair.first);
    c1 = std::move(pair.second);
  }

  u64 payload_bits() const {
    return c0->meter.total_payload_bits() + c1->meter.total_payload_bits();
  }
  Oracle oracle() const { return Oracle(cfg, trunc_seed); }
  GateSession sess(int party) {
    return GateSession{party, party == 0 ? c0.get() : c1.get(),
                       TruncMode::Interactive, 1};
  }
};

}  // namespace hss::testutil
