#pragma once
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hss/ring.hpp"
#include "hss/rng.hpp"

// Two-party message layer. A Frame is the only thing that crosses the wire:
//   length u32 | msg_type u8 | label_id u32 | payload words
// Header fields big-endian, payload words little-endian using ceil(l/8) bytes
// per l-bit word. Memory and TCP backends emit identical bytes, so transcripts
// are comparable across backends.
namespace hss {

enum class MsgType : u8 {
  OPEN = 1,        // share of a masked-wire value being opened
  TRUNC = 2,       // interactive-truncation correction share
  BEAVER_EF = 3,   // Beaver E/F difference shares
  AGG_UPLOAD = 4,  // masked gradient upload
  PARAM_SHARE = 5, // model parameter share
  SAMPLE_SHARE = 6,// training sample share
  CONTROL = 7,     // plaintext control values (e.g. dropout rate)
};

struct Frame {
  MsgType type;
  u32 label = 0;
  std::vector<u64> payload;
};

// Label registry: stable string -> id mapping so meters on both parties agree.
class LabelTable {
 public:
  u32 id(const std::string& name) {
    std::lock_guard<std::mutex> g(mu_);
    auto it = by_name_.find(name);
    if (it != by_name_.end()) return it->second;
    u32 v = (u32)names_.size() + 1;
    by_name_[name] = v;
    names_.push_back(name);
    return v;
  }
  std::string name(u32 id) {
    std::lock_guard<std::mutex> g(mu_);
    if (id == 0 || id > names_.size()) return "label#" + std::to_string(id);
    return names_[id - 1];
  }

 private:
  std::mutex mu_;
  std::map<std::string, u32> by_name_;
  std::vector<std::string> names_;
};

inline LabelTable& labels() {
  static LabelTable t;
  return t;
}

// Per-endpoint accounting of bytes this party sent. Payload and header bytes
// are tracked separately: the cost formulas are payload-only.
struct CommMeter {
  struct Stats {
    u64 payload_bits = 0;
    u64 header_bits = 0;
    u64 messages = 0;
    u64 rounds = 0;
    std::map<u8, u64> payload_bits_by_type;
  };
  std::map<u32, Stats> per_label;

  void on_send(u32 label, MsgType t, u64 payload_bits, u64 header_bits) {
    auto& s = per_label[label];
    s.payload_bits += payload_bits;
    s.header_bits += header_bits;
    s.messages++;
    s.payload_bits_by_type[(u8)t] += payload_bits;
  }
  void mark_round(u32 label) { per_label[label].rounds++; }

  u64 payload_bits(u32 label) const {
    auto it = per_label.find(label);
    return it == per_label.end() ? 0 : it->second.payload_bits;
  }
  u64 total_payload_bits() const {
    u64 t = 0;
    for (auto& [k, v] : per_label) t += v.payload_bits;
    return t;
  }
  u64 total_rounds() const {
    u64 t = 0;
    for (auto& [k, v] : per_label) t += v.rounds;
    return t;
  }
};

class Channel {
 public:
  virtual ~Channel() = default;

  int party = 0;
  RingConfig cfg;
  CommMeter meter;
  std::vector<u8> transcript;   // every byte this endpoint sent, in order
  std::unique_ptr<Prg> trunc_stream;  // shared correlation stream, see shares.hpp

  static constexpr size_t kHeaderBytes = 9;

  size_t word_bytes() const { return (size_t)(cfg.l + 7) / 8; }

  void send_frame(MsgType t, u32 label, const u64* words, size_t n) {
    size_t wb = word_bytes();
    std::vector<u8> buf(kHeaderBytes + n * wb);
    u32 len = (u32)(n * wb);
    buf[0] = (u8)(len >> 24); buf[1] = (u8)(len >> 16);
    buf[2] = (u8)(len >> 8);  buf[3] = (u8)len;
    buf[4] = (u8)t;
    buf[5] = (u8)(label >> 24); buf[6] = (u8)(label >> 16);
    buf[7] = (u8)(label >> 8);  buf[8] = (u8)label;
    for (size_t i = 0; i < n; i++) {
      u64 v = cfg.reduce(words[i]);
      for (size_t b = 0; b < wb; b++)
        buf[kHeaderBytes + i * wb + b] = (u8)(v >> (8 * b));
    }
    meter.on_send(label, t, (u64)n * cfg.l, kHeaderBytes * 8);
    transcript.insert(transcript.end(), buf.begin(), buf.end());
    send_raw(buf.data(), buf.size());
  }

  void send_frame(MsgType t, u32 label, const std::vector<u64>& w) {
    send_frame(t, label, w.data(), w.size());
  }

  Frame recv_frame(MsgType expect) {
    u8 hdr[kHeaderBytes];
    recv_raw(hdr, kHeaderBytes);
    u32 len = ((u32)hdr[0] << 24) | ((u32)hdr[1] << 16) | ((u32)hdr[2] << 8) | hdr[3];
    Frame f;
    f.type = (MsgType)hdr[4];
    f.label = ((u32)hdr[5] << 24) | ((u32)hdr[6] << 16) | ((u32)hdr[7] << 8) | hdr[8];
    if (f.type != expect)
      throw std::runtime_error("recv_frame: expected type " +
                               std::to_string((int)expect) + " got " +
                               std::to_string((int)f.type));
    size_t wb = word_bytes();
    if (len % wb != 0) throw std::runtime_error("recv_frame: bad length");
    std::vector<u8> body(len);
    if (len) recv_raw(body.data(), len);
    f.payload.resize(len / wb);
    for (size_t i = 0; i < f.payload.size(); i++) {
      u64 v = 0;
      for (size_t b = 0; b < wb; b++) v |= (u64)body[i * wb + b] << (8 * b);
      f.payload[i] = cfg.reduce(v);
    }
    return f;
  }

 protected:
  virtual void send_raw(const u8* p, size_t n) = 0;
  virtual void recv_raw(u8* p, size_t n) = 0;
};

// In-memory duplex pair: two endpoints share bounded-unbounded byte queues.
struct MemPipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<u8> q01, q10;  // party0->party1, party1->party0
};

class MemChannel : public Channel {
 public:
  MemChannel(std::shared_ptr<MemPipe> pipe, int who) : pipe_(std::move(pipe)) {
    party = who;
  }

 protected:
  void send_raw(const u8* p, size_t n) override {
    std::lock_guard<std::mutex> g(pipe_->mu);
    auto& q = (party == 0) ? pipe_->q01 : pipe_->q10;
    q.insert(q.end(), p, p + n);
    pipe_->cv.notify_all();
  }
  void recv_raw(u8* p, size_t n) override {
    std::unique_lock<std::mutex> g(pipe_->mu);
    auto& q = (party == 0) ? pipe_->q10 : pipe_->q01;
    pipe_->cv.wait(g, [&] { return q.size() >= n; });
    for (size_t i = 0; i < n; i++) { p[i] = q.front(); q.pop_front(); }
  }

 private:
  std::shared_ptr<MemPipe> pipe_;
};

// TCP backend over a connected socket fd; see transport.cpp.
class TcpChannel : public Channel {
 public:
  TcpChannel(int fd, int who) : fd_(fd) { party = who; }
  ~TcpChannel() override;

  // Blocking helpers: listen_one accepts a single peer, connect_to dials.
  static int listen_one(const std::string& host_port);
  static int connect_to(const std::string& host_port);

 protected:
  void send_raw(const u8* p, size_t n) override;
  void recv_raw(u8* p, size_t n) override;

 private:
  int fd_;
};

// Build a connected channel pair with a shared truncation-correlation seed.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_mem_pair(
    RingConfig cfg, Block trunc_seed);

}  // namespace hss
