#include "sflga/wireless.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sflga/error.hpp"
#include "sflga/random.hpp"

namespace sflga {

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::SflGa: return "sflga";
    case Protocol::Sfl: return "sfl";
    case Protocol::Psl: return "psl";
    case Protocol::Fl: return "fl";
  }
  return "unknown";
}

Protocol protocol_from_string(std::string_view name) {
  if (name == "sflga") return Protocol::SflGa;
  if (name == "sfl") return Protocol::Sfl;
  if (name == "psl") return Protocol::Psl;
  if (name == "fl") return Protocol::Fl;
  fail(ErrorCode::InvalidArgument, "unknown protocol '" + std::string(name) + "'");
}

}  // namespace sflga

namespace sflga::wireless {

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

Workload workload_for_cut(const nn::NetworkSpec& spec, int v) {
  const int layers = spec.layers();
  require(v >= 1 && v <= layers - 1,
          "cut " + std::to_string(v) + " outside 1.." + std::to_string(layers - 1));
  using nn::Direction;
  return {nn::flops_per_sample(spec, 1, v, Direction::Forward),
          nn::flops_per_sample(spec, 1, v, Direction::Backward),
          nn::flops_per_sample(spec, v + 1, layers, Direction::Forward),
          nn::flops_per_sample(spec, v + 1, layers, Direction::Backward)};
}

double path_loss_db(double distance_km) {
  require(distance_km > 0.0, "distance must be positive");
  return 128.1 + 37.6 * std::log10(distance_km);
}

double path_gain(double distance_km) {
  return std::pow(10.0, -path_loss_db(distance_km) / 10.0);
}

ChannelState sample_channel(std::span<const ClientProfile> profiles,
                            std::uint64_t round_seed) {
  Rng rng(round_seed);
  ChannelState state;
  state.gains.reserve(profiles.size());
  for (const auto& p : profiles) {
    const double fade = -std::log1p(-uniform01(rng));
    state.gains.push_back(path_gain(p.distance_km) * fade);
  }
  return state;
}

double uplink_rate(double bandwidth_hz, double power_w, double gain,
                   double noise_w_per_hz) {
  require(bandwidth_hz > 0.0, "bandwidth must be positive");
  require(power_w >= 0.0, "power must be non-negative");
  return bandwidth_hz *
         std::log2(1.0 + power_w * gain / (bandwidth_hz * noise_w_per_hz));
}

double downlink_rate(const SystemProfile& system, double gain) {
  return uplink_rate(system.bandwidth_hz, system.server_power_w, gain,
                     system.noise_w_per_hz);
}

double unicast_downlink_rate(const SystemProfile& system, double bandwidth_hz,
                             double gain) {
  require(bandwidth_hz > 0.0, "bandwidth must be positive");
  const double power = system.server_power_w * bandwidth_hz / system.bandwidth_hz;
  return uplink_rate(bandwidth_hz, power, gain, system.noise_w_per_hz);
}

double payload_bits(const nn::NetworkSpec& spec, int v, double batch,
                    const WireFormat& wire) {
  return gradient_payload_bits(spec, v, batch, wire) + batch * wire.label_bits;
}

double gradient_payload_bits(const nn::NetworkSpec& spec, int v, double batch,
                             const WireFormat& wire) {
  require(v >= 1 && v <= spec.layers() - 1,
          "cut " + std::to_string(v) + " outside 1.." +
              std::to_string(spec.layers() - 1));
  require(batch >= 0.0, "batch must be non-negative");
  return batch * static_cast<double>(spec.cut_dim(v)) * wire.activation_bits;
}

LatencyInputs make_latency_inputs(std::vector<ClientProfile> profiles,
                                  const SystemProfile& system,
                                  ChannelState channel,
                                  const nn::NetworkSpec& spec, int v,
                                  const WireFormat& wire,
                                  std::optional<Workload> workload_override,
                                  SampleBasis basis, double batch_size) {
  require(channel.gains.size() == profiles.size(),
          "channel state does not cover every client");
  LatencyInputs in;
  in.system = system;
  in.channel = std::move(channel);
  in.workload = workload_override ? *workload_override : workload_for_cut(spec, v);
  for (const auto& p : profiles) {
    double samples = p.samples;
    if (basis == SampleBasis::MiniBatch) samples = std::min(batch_size, p.samples);
    in.work_samples.push_back(samples);
    in.uplink_bits.push_back(payload_bits(spec, v, samples, wire));
    in.downlink_bits.push_back(gradient_payload_bits(spec, v, samples, wire));
  }
  in.profiles = std::move(profiles);
  return in;
}

namespace {

// work / resource, with zero work costing nothing and positive work on zero
// resource being infeasible.
double timed(double work, double resource, const char* what, std::size_t client) {
  if (work <= 0.0) return 0.0;
  if (!(resource > 0.0)) {
    fail(ErrorCode::InfeasibleLatency,
         std::string(what) + " of client " + std::to_string(client) +
             " has work but no allocated resource");
  }
  return work / resource;
}

void check_allocation(const LatencyInputs& in, const RoundAllocation& a) {
  const std::size_t n = in.profiles.size();
  if (a.bandwidth_hz.size() != n || a.power_w.size() != n ||
      a.client_flops.size() != n || a.server_flops.size() != n) {
    fail(ErrorCode::InvalidArgument, "allocation does not cover every client");
  }
  if (in.work_samples.size() != n || in.uplink_bits.size() != n ||
      in.downlink_bits.size() != n || in.channel.gains.size() != n) {
    fail(ErrorCode::InvalidArgument, "latency inputs do not cover every client");
  }
}

double safe_uplink_rate(const LatencyInputs& in, const RoundAllocation& a,
                        std::size_t n) {
  if (!(a.bandwidth_hz[n] > 0.0)) return 0.0;
  return uplink_rate(a.bandwidth_hz[n], a.power_w[n], in.channel.gains[n],
                     in.system.noise_w_per_hz);
}

double safe_unicast_rate(const LatencyInputs& in, const RoundAllocation& a,
                         std::size_t n) {
  if (!(a.bandwidth_hz[n] > 0.0)) return 0.0;
  return unicast_downlink_rate(in.system, a.bandwidth_hz[n], in.channel.gains[n]);
}

}  // namespace

LatencyBreakdown latency_breakdown(const LatencyInputs& in,
                                   const RoundAllocation& a) {
  check_allocation(in, a);
  LatencyBreakdown out;
  const auto& w = in.workload;
  for (std::size_t n = 0; n < in.profiles.size(); ++n) {
    const double d = in.work_samples[n];
    ClientLatency c;
    c.uplink = timed(in.uplink_bits[n], safe_uplink_rate(in, a, n), "uplink", n);
    c.downlink = timed(in.downlink_bits[n], downlink_rate(in.system, in.channel.gains[n]),
                       "downlink", n);
    c.client_fwd = timed(d * w.client_fwd, a.client_flops[n], "client forward", n);
    c.server = timed(d * (w.server_fwd + w.server_bwd), a.server_flops[n],
                     "server compute", n);
    c.client_bwd = timed(d * w.client_bwd, a.client_flops[n], "client backward", n);
    out.uplink_path = std::max(out.uplink_path, c.uplink + c.client_fwd + c.server);
    out.downlink_path = std::max(out.downlink_path, c.downlink + c.client_bwd);
    out.clients.push_back(c);
  }
  out.total = out.uplink_path + out.downlink_path;
  return out;
}

ModelSizes model_sizes(const nn::NetworkSpec& spec, int v,
                       std::optional<Workload> workload_override) {
  ModelSizes sizes;
  sizes.client_params = static_cast<double>(nn::param_count(spec, 1, v));
  sizes.total_params = static_cast<double>(nn::param_count(spec, 1, spec.layers()));
  const Workload w = workload_override ? *workload_override : workload_for_cut(spec, v);
  sizes.full_model.client_fwd = w.client_fwd + w.server_fwd;
  sizes.full_model.client_bwd = w.client_bwd + w.server_bwd;
  return sizes;
}

double protocol_latency(Protocol protocol, const LatencyInputs& in,
                        const RoundAllocation& a, const ModelSizes& sizes,
                        int param_bits) {
  if (protocol == Protocol::SflGa) return latency_breakdown(in, a).total;

  check_allocation(in, a);
  const std::size_t clients = in.profiles.size();
  if (protocol == Protocol::Fl) {
    const double model_bits = sizes.total_params * param_bits;
    double train_up = 0.0;
    double down = 0.0;
    for (std::size_t n = 0; n < clients; ++n) {
      const double d = in.work_samples[n];
      if (d <= 0.0) continue;
      const double compute =
          timed(d * (sizes.full_model.client_fwd + sizes.full_model.client_bwd),
                a.client_flops[n], "client training", n);
      const double up = timed(model_bits, safe_uplink_rate(in, a, n), "model upload", n);
      train_up = std::max(train_up, compute + up);
      down = std::max(down, timed(model_bits, safe_unicast_rate(in, a, n),
                                  "model download", n));
    }
    return train_up + down;
  }

  const LatencyBreakdown base = latency_breakdown(in, a);
  double grad_path = 0.0;
  for (std::size_t n = 0; n < clients; ++n) {
    const double down =
        timed(in.downlink_bits[n], safe_unicast_rate(in, a, n), "gradient unicast", n);
    grad_path = std::max(grad_path, down + base.clients[n].client_bwd);
  }
  double total = base.uplink_path + grad_path;
  if (protocol == Protocol::Sfl) {
    const double model_bits = sizes.client_params * param_bits;
    double exchange = 0.0;
    for (std::size_t n = 0; n < clients; ++n) {
      if (in.work_samples[n] <= 0.0) continue;
      const double up = timed(model_bits, safe_uplink_rate(in, a, n), "model upload", n);
      const double down =
          timed(model_bits, safe_unicast_rate(in, a, n), "model download", n);
      exchange = std::max(exchange, up + down);
    }
    total += exchange;
  }
  return total;
}

RoundAllocation equal_allocation(std::span<const ClientProfile> profiles,
                                 const SystemProfile& system) {
  RoundAllocation a;
  const double n = static_cast<double>(profiles.size());
  for (const auto& p : profiles) {
    a.bandwidth_hz.push_back(system.bandwidth_hz / n);
    a.power_w.push_back(p.power_max_w);
    a.client_flops.push_back(p.cpu_flops);
    a.server_flops.push_back(system.server_flops / n);
  }
  return a;
}

double privacy_level(const nn::NetworkSpec& spec, int v) {
  const double phi = static_cast<double>(nn::param_count(spec, 1, v));
  const double q = static_cast<double>(nn::param_count(spec, 1, spec.layers()));
  return std::log(1.0 + phi / q);
}

bool privacy_ok(const nn::NetworkSpec& spec, int v, double epsilon) {
  require(v >= 1 && v <= spec.layers() - 1, "cut outside 1..V-1");
  return privacy_level(spec, v) >= epsilon;
}

}  // namespace sflga::wireless
