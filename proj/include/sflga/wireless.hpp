#pragma once

// Channel sampling, achievable rates, payload sizing, per-phase latencies and
// the privacy-feasibility test. All quantities are SI: Hz, W, W/Hz, bits,
// seconds, FLOPs and FLOPs/s. CPU "frequency" is read as effective FLOPs/s.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sflga/nn.hpp"

namespace sflga {

enum class Protocol { SflGa, Sfl, Psl, Fl };

std::string_view to_string(Protocol p);
Protocol protocol_from_string(std::string_view name);

}  // namespace sflga

namespace sflga::wireless {

double dbm_to_watts(double dbm);
double db_to_linear(double db);

struct ClientProfile {
  double samples = 0.0;      // D^n
  double cpu_flops = 0.0;    // f^n_max
  double power_max_w = 0.0;  // p^n_max
  double distance_km = 0.0;
};

struct SystemProfile {
  double bandwidth_hz = 0.0;      // B
  double noise_w_per_hz = 0.0;    // N0
  double server_power_w = 0.0;    // P
  double server_flops = 0.0;      // f^s_max
};

struct ChannelState {
  std::vector<double> gains;  // g^n_t, linear scale
};

// Per-client share of the round's resources.
struct RoundAllocation {
  std::vector<double> bandwidth_hz;  // B^n
  std::vector<double> power_w;       // p^n
  std::vector<double> client_flops;  // f^n
  std::vector<double> server_flops;  // f^{s,n}
  double chi = 0.0;
  double psi = 0.0;
};

// Per-sample FLOPs of each phase for a given cut.
struct Workload {
  double client_fwd = 0.0;  // gamma^n_F(v)
  double client_bwd = 0.0;  // gamma^n_B(v)
  double server_fwd = 0.0;  // gamma^s_F(v)
  double server_bwd = 0.0;  // gamma^s_B(v)
};

Workload workload_for_cut(const nn::NetworkSpec& spec, int v);

struct WireFormat {
  int activation_bits = 64;
  int label_bits = 32;
};

double path_loss_db(double distance_km);
double path_gain(double distance_km);

// Block-fading draw for one round: path gain times a unit-mean exponential
// (Rayleigh power) fade per client.
ChannelState sample_channel(std::span<const ClientProfile> profiles,
                            std::uint64_t round_seed);

double uplink_rate(double bandwidth_hz, double power_w, double gain,
                   double noise_w_per_hz);
// Broadcast over the full band at server power.
double downlink_rate(const SystemProfile& system, double gain);
// Dedicated downlink on a B^n slice, server power split in proportion to
// bandwidth.
double unicast_downlink_rate(const SystemProfile& system, double bandwidth_hz,
                             double gain);

// Smashed-data payload for `batch` samples at cut v, labels included.
double payload_bits(const nn::NetworkSpec& spec, int v, double batch,
                    const WireFormat& wire = {});
// Gradient of the smashed data: the activation term without labels.
double gradient_payload_bits(const nn::NetworkSpec& spec, int v, double batch,
                             const WireFormat& wire = {});

struct ClientLatency {
  double uplink = 0.0;      // l^{n,U}
  double client_fwd = 0.0;  // l^{n,F}
  double server = 0.0;      // l^{n,s}
  double downlink = 0.0;    // l^{n,D}
  double client_bwd = 0.0;  // l^{n,B}
};

struct LatencyBreakdown {
  std::vector<ClientLatency> clients;
  double uplink_path = 0.0;    // max_n (U + F + s)
  double downlink_path = 0.0;  // max_n (D + B)
  double total = 0.0;          // l_t
};

// Everything besides the allocation that enters the latency terms.
struct LatencyInputs {
  std::vector<ClientProfile> profiles;
  SystemProfile system;
  ChannelState channel;
  Workload workload;
  std::vector<double> work_samples;   // samples processed per client
  std::vector<double> uplink_bits;    // X per client
  std::vector<double> downlink_bits;  // gradient payload per client
};

// Which sample count multiplies per-sample work and payload.
enum class SampleBasis { LocalDataset, MiniBatch };

LatencyInputs make_latency_inputs(std::vector<ClientProfile> profiles,
                                  const SystemProfile& system,
                                  ChannelState channel,
                                  const nn::NetworkSpec& spec, int v,
                                  const WireFormat& wire = {},
                                  std::optional<Workload> workload_override = {},
                                  SampleBasis basis = SampleBasis::LocalDataset,
                                  double batch_size = 0.0);

LatencyBreakdown latency_breakdown(const LatencyInputs& inputs,
                                   const RoundAllocation& allocation);

// Round latency of each protocol under one allocation. Only SFL-GA
// broadcasts the smashed-data gradient; the others unicast it on the
// client's bandwidth slice. SFL adds the client-model exchange, FL trains
// the whole model on the client and exchanges it.
struct ModelSizes {
  double client_params = 0.0;  // phi(v)
  double total_params = 0.0;   // q
  Workload full_model;         // client-run FLOPs for FL
};

ModelSizes model_sizes(const nn::NetworkSpec& spec, int v,
                       std::optional<Workload> workload_override = {});

double protocol_latency(Protocol protocol, const LatencyInputs& inputs,
                        const RoundAllocation& allocation,
                        const ModelSizes& sizes, int param_bits = 64);

// B/N, f^s/N and caps for power and client CPU.
RoundAllocation equal_allocation(std::span<const ClientProfile> profiles,
                                 const SystemProfile& system);

bool privacy_ok(const nn::NetworkSpec& spec, int v, double epsilon);
double privacy_level(const nn::NetworkSpec& spec, int v);

}  // namespace sflga::wireless
