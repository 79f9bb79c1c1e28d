#include "hss/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace hss {

TcpChannel::~TcpChannel() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpChannel::send_raw(const u8* p, size_t n) {
  size_t off = 0;
  while (off < n) {
    ssize_t r = ::send(fd_, p + off, n - off, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("tcp send: ") + std::strerror(errno));
    }
    off += (size_t)r;
  }
}

void TcpChannel::recv_raw(u8* p, size_t n) {
  size_t off = 0;
  while (off < n) {
    ssize_t r = ::recv(fd_, p + off, n - off, 0);
    if (r == 0) throw std::runtime_error("tcp recv: peer closed");
    if (r < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("tcp recv: ") + std::strerror(errno));
    }
    off += (size_t)r;
  }
}

static void split_host_port(const std::string& hp, std::string& host, int& port) {
  auto pos = hp.rfind(':');
  if (pos == std::string::npos) throw std::runtime_error("expected host:port");
  host = hp.substr(0, pos);
  port = std::stoi(hp.substr(pos + 1));
}

int TcpChannel::listen_one(const std::string& host_port) {
  std::string host;
  int port;
  split_host_port(host_port, host, port);
  int s = ::socket(AF_INET, SOCK_STREAM, 0);
  if (s < 0) throw std::runtime_error("socket failed");
  int one = 1;
  ::setsockopt(s, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons((uint16_t)port);
  addr.sin_addr.s_addr = host.empty() || host == "0.0.0.0"
                             ? INADDR_ANY
                             : ::inet_addr(host.c_str());
  if (::bind(s, (sockaddr*)&addr, sizeof addr) < 0)
    throw std::runtime_error(std::string("bind: ") + std::strerror(errno));
  if (::listen(s, 1) < 0) throw std::runtime_error("listen failed");
  int c = ::accept(s, nullptr, nullptr);
  ::close(s);
  if (c < 0) throw std::runtime_error("accept failed");
  one = 1;
  ::setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return c;
}

int TcpChannel::connect_to(const std::string& host_port) {
  std::string host;
  int port;
  split_host_port(host_port, host, port);
  int s = ::socket(AF_INET, SOCK_STREAM, 0);
  if (s < 0) throw std::runtime_error("socket failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons((uint16_t)port);
  addr.sin_addr.s_addr = ::inet_addr(host == "localhost" ? "127.0.0.1" : host.c_str());
  // Retry briefly so test harnesses can start both sides in any order.
  for (int attempt = 0;; attempt++) {
    if (::connect(s, (sockaddr*)&addr, sizeof addr) == 0) break;
    if (attempt > 200)
      throw std::runtime_error(std::string("connect: ") + std::strerror(errno));
    ::usleep(20000);
  }
  int one = 1;
  ::setsockopt(s, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_mem_pair(
    RingConfig cfg, Block trunc_seed) {
  auto pipe = std::make_shared<MemPipe>();
  auto a = std::make_unique<MemChannel>(pipe, 0);
  auto b = std::make_unique<MemChannel>(pipe, 1);
  a->cfg = cfg;
  b->cfg = cfg;
  a->trunc_stream = std::make_unique<Prg>(trunc_seed);
  b->trunc_stream = std::make_unique<Prg>(trunc_seed);
  return {std::move(a), std::move(b)};
}

}  // namespace hss
