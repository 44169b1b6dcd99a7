#pragma once

#include <atomic>
#include <list>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "lightlda/pserver/server.hpp"
#include "lightlda/tables/model_dump.hpp"

namespace lightlda::pserver::wire {

// Frame: length u32 (bytes after the length field) | tag u8 | payload.
enum class Tag : std::uint8_t { kFetch = 1, kSlice = 2, kPush = 3, kAck = 4, kClock = 5 };

struct Frame {
  Tag tag = Tag::kAck;
  std::vector<std::uint8_t> payload;
};

inline std::vector<std::uint8_t> encode_frame(const Frame& f) {
  std::vector<std::uint8_t> out;
  out.reserve(5 + f.payload.size());
  le::put(out, static_cast<std::uint32_t>(1 + f.payload.size()));
  le::put(out, static_cast<std::uint8_t>(f.tag));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

inline Frame encode_fetch(const SliceRequest& r) {
  Frame f{Tag::kFetch, {}};
  le::put(f.payload, r.worker);
  le::put(f.payload, r.clock);
  le::put(f.payload, r.slice);
  return f;
}

inline SliceRequest decode_fetch(std::span<const std::uint8_t> p) {
  le::Reader r(p);
  SliceRequest req;
  req.worker = r.get<std::uint32_t>();
  req.clock = r.get<std::uint64_t>();
  req.slice = r.get<std::uint32_t>();
  if (!r.done()) throw DataError("FETCH frame has trailing bytes");
  return req;
}

inline Frame encode_slice(const ModelSlice& s, std::uint32_t vocab_size) {
  Frame f{Tag::kSlice, {}};
  le::put(f.payload, s.clock);
  tables::ModelDump dump{static_cast<std::uint32_t>(s.summary.size()), vocab_size, s.rows,
                         s.summary};
  const auto body = tables::serialize_model(dump);
  f.payload.insert(f.payload.end(), body.begin(), body.end());
  return f;
}

inline ModelSlice decode_slice(std::span<const std::uint8_t> p, std::uint32_t slice) {
  le::Reader r(p);
  ModelSlice s;
  s.slice = slice;
  s.clock = r.get<std::uint64_t>();
  auto dump = tables::deserialize_model(p.subspan(8));
  s.rows = std::move(dump.rows);
  s.summary = std::move(dump.summary);
  return s;
}

inline Frame encode_push(const DeltaBatch& b, std::uint32_t num_topics) {
  Frame f{Tag::kPush, {}};
  le::put(f.payload, b.worker);
  le::put(f.payload, b.clock);
  le::put(f.payload, static_cast<std::uint64_t>(b.entries.size()));
  for (const auto& e : b.entries) {
    le::put(f.payload, e.word);
    le::put(f.payload, e.topic);
    le::put(f.payload, e.delta);
  }
  for (TopicId k = 0; k < num_topics; ++k) {
    le::put(f.payload, b.summary.empty() ? std::int64_t{0} : b.summary[k]);
  }
  return f;
}

inline DeltaBatch decode_push(std::span<const std::uint8_t> p, std::uint32_t num_topics) {
  le::Reader r(p);
  DeltaBatch b;
  b.worker = r.get<std::uint32_t>();
  b.clock = r.get<std::uint64_t>();
  const auto n = r.get<std::uint64_t>();
  if (n > r.remaining() / 12) throw DataError("PUSH frame truncated");
  b.entries.resize(n);
  for (auto& e : b.entries) {
    e.word = r.get<WordId>();
    e.topic = r.get<TopicId>();
    e.delta = r.get<std::int32_t>();
  }
  b.summary.resize(num_topics);
  for (auto& v : b.summary) v = r.get<std::int64_t>();
  if (!r.done()) throw DataError("PUSH frame has trailing bytes");
  return b;
}

inline Frame encode_clock(std::uint32_t worker, std::uint64_t clock) {
  Frame f{Tag::kClock, {}};
  le::put(f.payload, worker);
  le::put(f.payload, clock);
  return f;
}

// ---------------------------------------------------------------------------
// Blocking socket helpers.

inline void send_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) throw DataError("socket send failed");
    sent += static_cast<std::size_t>(n);
  }
}

inline bool recv_all(int fd, std::uint8_t* out, std::size_t len) {
  std::size_t got = 0;
  while (got < len) {
    const ssize_t n = ::recv(fd, out + got, len - got, 0);
    if (n == 0 && got == 0) return false;
    if (n <= 0) throw DataError("socket closed mid-frame");
    got += static_cast<std::size_t>(n);
  }
  return true;
}

inline void send_frame(int fd, const Frame& f) { send_all(fd, encode_frame(f)); }

/// Reads one frame; returns false on clean end of stream.
inline bool recv_frame(int fd, Frame& f) {
  std::uint8_t head[4];
  if (!recv_all(fd, head, 4)) return false;
  std::uint32_t len;
  std::memcpy(&len, head, 4);
  if (len == 0 || len > (1u << 31)) throw DataError("bad frame length");
  std::vector<std::uint8_t> body(len);
  if (!recv_all(fd, body.data(), len)) throw DataError("socket closed mid-frame");
  const auto tag = body[0];
  if (tag < 1 || tag > 5) throw DataError("unknown frame tag " + std::to_string(tag));
  f.tag = static_cast<Tag>(tag);
  f.payload.assign(body.begin() + 1, body.end());
  return true;
}

/// Serves a ParameterServer on 127.0.0.1, one thread per connection.
class LoopbackHost {
 public:
  LoopbackHost(ParameterServer& server, std::uint16_t port = 0) : server_(server) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw DataError("socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listen_fd_, 64) != 0) {
      ::close(listen_fd_);
      throw DataError("cannot listen on 127.0.0.1:" + std::to_string(port));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  ~LoopbackHost() { stop(); }

  std::uint16_t port() const { return port_; }

  void stop() {
    if (stopped_.exchange(true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    std::lock_guard lock(mu_);
    for (int fd : conns_) ::shutdown(fd, SHUT_RDWR);
    for (auto& t : handlers_) {
      if (t.joinable()) t.join();
    }
  }

  /// Blocks until stop() is called from another thread.
  void wait() {
    if (acceptor_.joinable()) acceptor_.join();
  }

 private:
  void accept_loop() {
    while (!stopped_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (stopped_) return;
        continue;
      }
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      std::lock_guard lock(mu_);
      conns_.push_back(fd);
      handlers_.emplace_back([this, fd] { serve(fd); });
    }
  }

  void serve(int fd) {
    const std::uint32_t K = server_.table().num_topics();
    const std::uint32_t V = server_.table().vocab_size();
    try {
      Frame in;
      while (recv_frame(fd, in)) {
        switch (in.tag) {
          case Tag::kFetch: {
            const auto req = decode_fetch(in.payload);
            send_frame(fd, encode_slice(server_.fetch_slice(req), V));
            break;
          }
          case Tag::kPush:
            server_.push_deltas(decode_push(in.payload, K));
            send_frame(fd, Frame{Tag::kAck, {}});
            break;
          case Tag::kClock: {
            le::Reader r(in.payload);
            const auto worker = r.get<std::uint32_t>();
            const auto clock = r.get<std::uint64_t>();
            server_.advance_clock(worker, clock);
            send_frame(fd, Frame{Tag::kAck, {}});
            break;
          }
          default:
            throw DataError("unexpected frame from client");
        }
      }
    } catch (const std::exception&) {
      // Drop the connection; the client sees a closed socket.
    }
    ::close(fd);
  }

  ParameterServer& server_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopped_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<int> conns_;
  std::list<std::thread> handlers_;
};

/// ModelClient speaking the wire protocol to a LoopbackHost.
class RemoteModel : public ModelClient {
 public:
  RemoteModel(const std::string& host, std::uint16_t port, std::uint32_t num_topics)
      : num_topics_(num_topics) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      throw ConfigError("bad server address " + host);
    }
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd_);
      throw DataError("cannot connect to " + host + ":" + std::to_string(port));
    }
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  ~RemoteModel() override {
    if (fd_ >= 0) ::close(fd_);
  }

  ModelSlice fetch_slice(const SliceRequest& req) override {
    std::lock_guard lock(mu_);
    send_frame(fd_, encode_fetch(req));
    Frame f = expect(Tag::kSlice);
    return decode_slice(f.payload, req.slice);
  }

  void push_deltas(const DeltaBatch& batch) override {
    std::lock_guard lock(mu_);
    send_frame(fd_, encode_push(batch, num_topics_));
    expect(Tag::kAck);
  }

  void advance_clock(std::uint32_t worker, std::uint64_t clock) override {
    std::lock_guard lock(mu_);
    send_frame(fd_, encode_clock(worker, clock));
    expect(Tag::kAck);
  }

 private:
  Frame expect(Tag tag) {
    Frame f;
    if (!recv_frame(fd_, f)) throw DataError("server closed the connection");
    if (f.tag != tag) throw DataError("unexpected reply tag");
    return f;
  }

  int fd_ = -1;
  std::uint32_t num_topics_;
  std::mutex mu_;
};

}  // namespace lightlda::pserver::wire
