#include "dkpca/protocol.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <ctime>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace dkpca {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) {
    v = (v << 8) | b[at + static_cast<std::size_t>(i)];
  }
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) {
    v = (v << 8) | b[at + static_cast<std::size_t>(i)];
  }
  return v;
}

double get_f64(std::span<const std::uint8_t> b, std::size_t at) {
  return std::bit_cast<double>(get_u64(b, at));
}

constexpr std::uint64_t kMaxFrameBytes = std::uint64_t(1) << 32;

std::size_t scalar_count(const AgentMessage& m) {
  return static_cast<std::size_t>(m.rank()) * static_cast<std::size_t>(m.order() + 1);
}

CostReport make_cost_report(const std::vector<AgentState>& agents,
                            const std::vector<AgentMessage>& ordered_messages,
                            const std::vector<std::size_t>& wire_bytes) {
  CostReport cost;
  const double t = static_cast<double>(ordered_messages.front().order());
  const double j = static_cast<double>(ordered_messages.size());
  for (std::size_t i = 0; i < ordered_messages.size(); ++i) {
    const std::size_t scalars = scalar_count(ordered_messages[i]);
    cost.per_agent_scalars.push_back(scalars);
    cost.total_scalars += scalars;
    cost.total_bytes += wire_bytes[i];
    cost.fusion_ops += 2.0 * static_cast<double>(ordered_messages[i].rank()) * t * t;
  }
  for (const auto& agent : agents) {
    cost.local_gram_ops += static_cast<double>(agent.block.feature_count()) * t * t;
  }
  cost.local_eig_ops = j * 9.0 * t * t * t;
  cost.fusion_ops += (j - 1.0) * t * t;
  cost.center_eig_ops = 9.0 * t * t * t;
  return cost;
}

void validate_agents(const std::vector<AgentState>& agents) {
  if (agents.empty()) {
    throw InputError("one-shot run needs at least one agent");
  }
  const Eigen::Index t = agents.front().block.sample_count();
  const KernelSpec& spec = agents.front().spec;
  std::set<int> ids;
  for (const auto& agent : agents) {
    if (agent.block.sample_count() != t) {
      throw InputError("agent " + std::to_string(agent.agent_id()) + " has " +
                       std::to_string(agent.block.sample_count()) + " samples, expected " +
                       std::to_string(t));
    }
    if (!(agent.spec == spec)) {
      throw InputError("agents must share one kernel spec");
    }
    if (!ids.insert(agent.agent_id()).second) {
      throw ProtocolError("duplicate agent id " + std::to_string(agent.agent_id()));
    }
  }
}

// ---- socket helpers ----

struct FdGuard {
  int fd = -1;
  FdGuard() = default;
  explicit FdGuard(int f) : fd(f) {}
  FdGuard(const FdGuard&) = delete;
  FdGuard& operator=(const FdGuard&) = delete;
  FdGuard(FdGuard&& other) noexcept : fd(other.fd) { other.fd = -1; }
  FdGuard& operator=(FdGuard&& other) noexcept {
    if (this != &other) {
      reset();
      fd = other.fd;
      other.fd = -1;
    }
    return *this;
  }
  ~FdGuard() { reset(); }
  void reset() {
    if (fd >= 0) {
      ::close(fd);
      fd = -1;
    }
  }
};

sockaddr_in make_addr(const std::string& address, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1) {
    throw RunError("invalid socket address: " + address);
  }
  return addr;
}

FdGuard open_listener(const std::string& address, std::uint16_t& port, int backlog) {
  FdGuard fd(::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK, 0));
  if (fd.fd < 0) {
    throw RunError("socket() failed: " + std::string(std::strerror(errno)));
  }
  int one = 1;
  ::setsockopt(fd.fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = make_addr(address, port);
  if (::bind(fd.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw RunError("bind(" + address + ":" + std::to_string(port) +
                   ") failed: " + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd.fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port = ntohs(addr.sin_port);
  if (::listen(fd.fd, backlog) != 0) {
    throw RunError(std::string("listen() failed: ") + std::strerror(errno));
  }
  return fd;
}

void send_all(int fd, const std::uint8_t* data, std::size_t size) {
  std::size_t sent = 0;
  while (sent < size) {
    const ssize_t n = ::send(fd, data + sent, size - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) {
        continue;
      }
      throw RunError(std::string("send() failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

void send_framed(const std::string& address, std::uint16_t port,
                 const std::vector<std::uint8_t>& payload) {
  FdGuard fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (fd.fd < 0) {
    throw RunError(std::string("socket() failed: ") + std::strerror(errno));
  }
  sockaddr_in addr = make_addr(address, port);
  if (::connect(fd.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw RunError("connect(" + address + ":" + std::to_string(port) +
                   ") failed: " + std::strerror(errno));
  }
  std::vector<std::uint8_t> frame;
  frame.reserve(8 + payload.size());
  put_u64(frame, payload.size());
  frame.insert(frame.end(), payload.begin(), payload.end());
  send_all(fd.fd, frame.data(), frame.size());
}

struct AgentFailures {
  std::mutex mutex;
  std::vector<std::pair<int, std::exception_ptr>> errors;

  void record(int agent_id, std::exception_ptr e) {
    std::lock_guard lock(mutex);
    errors.emplace_back(agent_id, std::move(e));
  }
  std::size_t count() {
    std::lock_guard lock(mutex);
    return errors.size();
  }
  void rethrow_first() {
    std::lock_guard lock(mutex);
    if (!errors.empty()) {
      std::rethrow_exception(errors.front().second);
    }
  }
};

struct PendingFrame {
  std::vector<std::uint8_t> buffer;
  bool done = false;
};

// Drains whatever is readable; returns completed frames, true on EOF.
bool drain_connection(int fd, PendingFrame& pending, std::vector<std::vector<std::uint8_t>>& out) {
  std::uint8_t chunk[4096];
  while (true) {
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        return false;
      }
      if (errno == EINTR) {
        continue;
      }
      throw RunError(std::string("recv() failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      return true;
    }
    pending.buffer.insert(pending.buffer.end(), chunk, chunk + n);
    while (pending.buffer.size() >= 8) {
      const std::uint64_t len = get_u64(pending.buffer, 0);
      if (len == 0 || len > kMaxFrameBytes) {
        throw LengthError("frame length " + std::to_string(len) + " out of range");
      }
      if (pending.buffer.size() < 8 + len) {
        break;
      }
      out.emplace_back(pending.buffer.begin() + 8,
                       pending.buffer.begin() + 8 + static_cast<std::ptrdiff_t>(len));
      pending.buffer.erase(pending.buffer.begin(),
                           pending.buffer.begin() + 8 + static_cast<std::ptrdiff_t>(len));
    }
  }
}

std::string format_timestamp(std::chrono::system_clock::time_point at) {
  const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(at);
  const auto micros =
      std::chrono::duration_cast<std::chrono::microseconds>(at - secs).count();
  const std::time_t tt = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof(out), "%s.%06ldZ", buf, static_cast<long>(micros));
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode(const AgentMessage& msg, const KernelSpec& spec) {
  const Eigen::Index t = msg.order();
  const Eigen::Index d = msg.rank();
  if (msg.agent_id < 0) {
    throw InputError("agent id must be non-negative for the wire format");
  }
  if (d < 1 || t < 1 || d > t) {
    throw InputError("message needs 1 <= d_j <= T, got d_j=" + std::to_string(d) +
                     " T=" + std::to_string(t));
  }
  constexpr auto u32_max = std::numeric_limits<std::uint32_t>::max();
  if (static_cast<std::uint64_t>(t) > u32_max || static_cast<std::uint64_t>(d) > u32_max) {
    throw InputError("T and d_j must fit 32 bits");
  }
  if (!msg.eigenvalues.allFinite() || !msg.eigenvectors.allFinite()) {
    throw InputError("message payload has non-finite values");
  }

  std::vector<std::uint8_t> out;
  out.reserve(kWireHeaderBytes + 8 * static_cast<std::size_t>(d) * static_cast<std::size_t>(t + 1));
  out.insert(out.end(), kWireMagic, kWireMagic + 4);
  put_u16(out, kWireVersion);
  put_u32(out, static_cast<std::uint32_t>(msg.agent_id));
  put_u32(out, static_cast<std::uint32_t>(t));
  put_u32(out, static_cast<std::uint32_t>(d));
  out.push_back(spec.kind() == KernelKind::Linear ? 0 : 1);
  put_f64(out, spec.kind() == KernelKind::Linear ? 0.0 : spec.sigma());
  for (Eigen::Index i = 0; i < d; ++i) {
    put_f64(out, msg.eigenvalues[i]);
  }
  for (Eigen::Index c = 0; c < d; ++c) {
    for (Eigen::Index r = 0; r < t; ++r) {
      put_f64(out, msg.eigenvectors(r, c));
    }
  }
  return out;
}

DecodedMessage decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kWireHeaderBytes) {
    throw LengthError("message shorter than header: " + std::to_string(bytes.size()) + " bytes");
  }
  if (std::memcmp(bytes.data(), kWireMagic, 4) != 0) {
    throw FormatError("bad magic");
  }
  const std::uint16_t version = get_u16(bytes, 4);
  if (version != kWireVersion) {
    throw FormatError("unsupported version " + std::to_string(version));
  }
  const std::uint32_t agent_id = get_u32(bytes, 6);
  const std::uint32_t t = get_u32(bytes, 10);
  const std::uint32_t d = get_u32(bytes, 14);
  const std::uint8_t tag = bytes[18];
  const double sigma = get_f64(bytes, 19);

  if (tag > 1) {
    throw FormatError("unknown kernel tag " + std::to_string(tag));
  }
  if (t < 1 || d < 1 || d > t) {
    throw FormatError("invalid shape T=" + std::to_string(t) + " d_j=" + std::to_string(d));
  }
  KernelSpec spec = KernelSpec::linear();
  if (tag == 1) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw FormatError("rbf message carries non-positive width");
    }
    spec = KernelSpec::rbf(sigma);
  } else if (sigma != 0.0) {
    throw FormatError("linear message must carry zero width");
  }

  // 128-bit so a crafted header cannot wrap the expected size onto the
  // actual buffer length.
  const unsigned __int128 expected =
      kWireHeaderBytes +
      8 * static_cast<unsigned __int128>(d) * (static_cast<unsigned __int128>(t) + 1);
  if (static_cast<unsigned __int128>(bytes.size()) != expected) {
    throw LengthError("expected " + std::to_string(static_cast<std::uint64_t>(expected)) +
                      " bytes, got " + std::to_string(bytes.size()));
  }

  DecodedMessage out;
  out.spec = spec;
  out.message.agent_id = static_cast<int>(agent_id);
  out.message.eigenvalues.resize(d);
  out.message.eigenvectors.resize(t, d);
  std::size_t at = kWireHeaderBytes;
  for (std::uint32_t i = 0; i < d; ++i, at += 8) {
    out.message.eigenvalues[i] = get_f64(bytes, at);
  }
  for (std::uint32_t c = 0; c < d; ++c) {
    for (std::uint32_t r = 0; r < t; ++r, at += 8) {
      out.message.eigenvectors(r, c) = get_f64(bytes, at);
    }
  }
  if (!out.message.eigenvalues.allFinite() || !out.message.eigenvectors.allFinite()) {
    throw DataError("payload carries non-finite values");
  }
  return out;
}

std::string trace_to_string(const std::vector<TraceEvent>& trace) {
  std::ostringstream out;
  for (const auto& event : trace) {
    out << format_timestamp(event.at) << ' '
        << (event.direction == Direction::Upstream ? "up" : "down") << " agent="
        << event.agent_id << " bytes=" << event.bytes << '\n';
  }
  return out.str();
}

namespace {

RunOutcome finish_run(const std::vector<AgentState>& agents,
                      std::vector<std::vector<std::uint8_t>> wire_messages,
                      std::vector<TraceEvent> trace, Eigen::Index d_global) {
  std::vector<AgentMessage> messages;
  std::vector<std::size_t> bytes_by_index;
  messages.reserve(wire_messages.size());
  KernelSpec spec = KernelSpec::linear();
  for (std::size_t i = 0; i < wire_messages.size(); ++i) {
    DecodedMessage decoded = decode(wire_messages[i]);
    if (i == 0) {
      spec = decoded.spec;
    } else if (!(decoded.spec == spec)) {
      throw ProtocolError("agents disagree on the kernel spec");
    }
    messages.push_back(std::move(decoded.message));
    bytes_by_index.push_back(wire_messages[i].size());
  }

  // Canonical agent-id order for cost accounting, matching fuse().
  std::vector<std::size_t> order(messages.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return messages[a].agent_id < messages[b].agent_id;
  });
  std::vector<AgentMessage> ordered;
  std::vector<std::size_t> ordered_bytes;
  for (std::size_t idx : order) {
    ordered.push_back(std::move(messages[idx]));
    ordered_bytes.push_back(bytes_by_index[idx]);
  }

  FusionResult result = fuse(ordered, spec, d_global);
  CostReport cost = make_cost_report(agents, ordered, ordered_bytes);
  return RunOutcome{std::move(result), std::move(cost), std::move(trace)};
}

RunOutcome run_in_process(const std::vector<AgentState>& agents, Eigen::Index d_global) {
  std::vector<std::vector<std::uint8_t>> wire;
  std::vector<TraceEvent> trace;
  for (const auto& agent : agents) {
    const AgentMessage msg = local_truncation(agent);
    wire.push_back(encode(msg, agent.spec));
    trace.push_back(TraceEvent{std::chrono::system_clock::now(), Direction::Upstream,
                               agent.agent_id(), wire.back().size()});
  }
  return finish_run(agents, std::move(wire), std::move(trace), d_global);
}

RunOutcome run_over_sockets(const std::vector<AgentState>& agents, const Transport& transport,
                            Eigen::Index d_global) {
  const int expected = static_cast<int>(agents.size());
  std::uint16_t port = transport.port;
  FdGuard listener = open_listener(transport.address, port, expected);

  AgentFailures failures;
  std::vector<std::thread> senders;
  senders.reserve(agents.size());
  for (const auto& agent : agents) {
    senders.emplace_back([&agent, &failures, address = transport.address, port] {
      try {
        const AgentMessage msg = local_truncation(agent);
        send_framed(address, port, encode(msg, agent.spec));
      } catch (...) {
        failures.record(agent.agent_id(), std::current_exception());
      }
    });
  }

  std::vector<std::vector<std::uint8_t>> wire;
  std::vector<TraceEvent> trace;
  std::map<int, PendingFrame> pending;  // fd -> partial frame
  std::vector<FdGuard> conns;
  const auto deadline = std::chrono::steady_clock::now() + transport.timeout;
  std::exception_ptr center_error;

  try {
    while (static_cast<int>(wire.size()) < expected) {
      if (static_cast<int>(wire.size() + failures.count()) >= expected) {
        break;  // every outstanding agent already failed locally
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) {
        break;
      }
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
      const int poll_ms = static_cast<int>(std::clamp<long long>(remaining.count(), 1, 50));

      std::vector<pollfd> fds;
      fds.push_back(pollfd{listener.fd, POLLIN, 0});
      for (const auto& conn : conns) {
        fds.push_back(pollfd{conn.fd, POLLIN, 0});
      }
      const int ready = ::poll(fds.data(), fds.size(), poll_ms);
      if (ready < 0) {
        if (errno == EINTR) {
          continue;
        }
        throw RunError(std::string("poll() failed: ") + std::strerror(errno));
      }
      if (ready == 0) {
        continue;
      }
      if (fds[0].revents & POLLIN) {
        while (true) {
          const int conn = ::accept4(listener.fd, nullptr, nullptr, SOCK_NONBLOCK);
          if (conn < 0) {
            break;
          }
          conns.emplace_back(conn);
          pending[conn];
        }
      }
      for (std::size_t i = 1; i < fds.size(); ++i) {
        if (!(fds[i].revents & (POLLIN | POLLHUP))) {
          continue;
        }
        const int fd = fds[i].fd;
        std::vector<std::vector<std::uint8_t>> frames;
        const bool eof = drain_connection(fd, pending[fd], frames);
        for (auto& frame : frames) {
          // Peek the agent id for the trace before full decoding later.
          if (frame.size() >= kWireHeaderBytes) {
            trace.push_back(TraceEvent{std::chrono::system_clock::now(), Direction::Upstream,
                                       static_cast<int>(get_u32(frame, 6)), frame.size()});
          }
          wire.push_back(std::move(frame));
        }
        if (eof) {
          pending.erase(fd);
          auto it = std::find_if(conns.begin(), conns.end(),
                                 [fd](const FdGuard& g) { return g.fd == fd; });
          if (it != conns.end()) {
            conns.erase(it);
          }
        }
      }
    }
  } catch (...) {
    center_error = std::current_exception();
  }

  for (auto& sender : senders) {
    sender.join();
  }
  failures.rethrow_first();
  if (center_error) {
    std::rethrow_exception(center_error);
  }
  if (static_cast<int>(wire.size()) < expected) {
    std::set<int> seen;
    for (const auto& frame : wire) {
      if (frame.size() >= kWireHeaderBytes) {
        seen.insert(static_cast<int>(get_u32(frame, 6)));
      }
    }
    std::string missing;
    for (const auto& agent : agents) {
      if (!seen.count(agent.agent_id())) {
        missing += (missing.empty() ? "" : ", ") + std::to_string(agent.agent_id());
      }
    }
    throw RunError("timed out after " + std::to_string(transport.timeout.count()) +
                   " ms waiting for agent(s) " + missing);
  }
  return finish_run(agents, std::move(wire), std::move(trace), d_global);
}

}  // namespace

RunOutcome run_one_shot(const std::vector<AgentState>& agents, const Transport& transport,
                        Eigen::Index d_global) {
  validate_agents(agents);
  if (transport.kind == TransportKind::InProcess) {
    return run_in_process(agents, d_global);
  }
  return run_over_sockets(agents, transport, d_global);
}

}  // namespace dkpca
