#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dkpca/agent.hpp"
#include "dkpca/fusion.hpp"

namespace dkpca {

/// Fixed little-endian binary layout for one upstream message:
///   magic "DKP1" | version u16 | agent_id u32 | T u32 | d_j u32 |
///   kernel_tag u8 (0 linear, 1 rbf) | sigma f64 |
///   d_j eigenvalues f64 (descending) | T*d_j eigenvector entries f64
///   (column-major)
inline constexpr char kWireMagic[4] = {'D', 'K', 'P', '1'};
inline constexpr std::uint16_t kWireVersion = 1;
inline constexpr std::size_t kWireHeaderBytes = 27;

std::vector<std::uint8_t> encode(const AgentMessage& msg, const KernelSpec& spec);

struct DecodedMessage {
  AgentMessage message;
  KernelSpec spec = KernelSpec::linear();
};

DecodedMessage decode(std::span<const std::uint8_t> bytes);

/// Scalar and byte counts of a completed run, plus rough arithmetic-cost
/// estimates (gram: sum_j M_j T^2; each eigendecomposition: 9 T^3;
/// fusion: sum_j 2 d_j T^2 reconstruction plus (J-1) T^2 combining).
struct CostReport {
  std::vector<std::size_t> per_agent_scalars;  // d_j * (T + 1), canonical order
  std::size_t total_scalars = 0;
  std::size_t total_bytes = 0;  // framed payload bytes actually transmitted
  double local_gram_ops = 0.0;
  double local_eig_ops = 0.0;
  double fusion_ops = 0.0;
  double center_eig_ops = 0.0;
};

enum class TransportKind { InProcess, Socket };

struct Transport {
  TransportKind kind = TransportKind::InProcess;
  std::string address = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  std::chrono::milliseconds timeout{30000};

  static Transport in_process() { return Transport{}; }
  static Transport socket(std::string address = "127.0.0.1", std::uint16_t port = 0,
                          std::chrono::milliseconds timeout = std::chrono::milliseconds(30000)) {
    return Transport{TransportKind::Socket, std::move(address), port, timeout};
  }
};

enum class Direction { Upstream, Downstream };

struct TraceEvent {
  std::chrono::system_clock::time_point at;
  Direction direction = Direction::Upstream;
  int agent_id = 0;
  std::size_t bytes = 0;
};

std::string trace_to_string(const std::vector<TraceEvent>& trace);

struct RunOutcome {
  FusionResult result;
  CostReport cost;
  std::vector<TraceEvent> trace;
};

/// Execute the one-shot protocol end to end: every agent computes its
/// truncation and sends exactly one message; the center aggregates and
/// extracts the leading d_global eigenvectors. The in-process and socket
/// transports move identical bytes and give bit-identical results.
RunOutcome run_one_shot(const std::vector<AgentState>& agents, const Transport& transport,
                        Eigen::Index d_global);

}  // namespace dkpca
