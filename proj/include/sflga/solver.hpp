#pragma once

// Per-round resource allocation: minimize chi + psi over bandwidth, transmit
// power, client CPU and server CPU shares.
//
// Transmit power and client CPU only appear in denominators of latency terms
// and in box constraints, so every latency is non-increasing in them and the
// optimum sits at the caps (fix_monotone_vars). With those fixed the
// downlink path no longer depends on the allocation, leaving psi as a
// constant (psi_value). What remains is a min-max over bandwidth and
// server-CPU splits, solved by bisection on chi with a water-filling
// feasibility test (chi_feasible).

#include <cstddef>
#include <optional>
#include <vector>

#include "sflga/wireless.hpp"

namespace sflga::solver {

using wireless::RoundAllocation;

struct Tolerances {
  double chi_abs = 1e-6;          // outer bisection, seconds
  double rate_rel = 1e-9;         // rate inversion
  double multiplier_rel = 1e-8;   // water-filling multiplier
};

// Everything that enters the latency terms of one round at one cut.
struct AllocationProblem {
  wireless::LatencyInputs inputs;

  std::size_t clients() const { return inputs.profiles.size(); }
};

AllocationProblem make_problem(std::vector<wireless::ClientProfile> profiles,
                               const wireless::SystemProfile& system,
                               wireless::ChannelState channel,
                               const nn::NetworkSpec& spec, int v,
                               const wireless::WireFormat& wire = {},
                               std::optional<wireless::Workload> workload = {},
                               wireless::SampleBasis basis =
                                   wireless::SampleBasis::LocalDataset,
                               double batch_size = 0.0);

// Smallest bandwidth whose rate reaches target_rate, or nullopt when the
// target is at or beyond the infinite-bandwidth limit p*g/(N0*ln 2).
std::optional<double> required_bandwidth(double target_rate, double power_w,
                                         double gain, double noise_w_per_hz,
                                         double rel_tol = 1e-9);

struct MonotoneCaps {
  std::vector<double> power_w;
  std::vector<double> client_flops;
};
MonotoneCaps fix_monotone_vars(const AllocationProblem& problem);

double psi_value(const AllocationProblem& problem);

struct ChiCheck {
  bool feasible = false;
  std::vector<double> bandwidth_hz;
  std::vector<double> server_flops;
  double bandwidth_used = 0.0;
};
ChiCheck chi_feasible(const AllocationProblem& problem, double chi,
                      const Tolerances& tol = {});

RoundAllocation solve_allocation(const AllocationProblem& problem,
                                 const Tolerances& tol = {});

// Test oracle: bandwidth splits on a simplex grid with `resolution` steps,
// each completed by the exact best server-CPU split for that bandwidth split.
RoundAllocation brute_force_allocation(const AllocationProblem& problem,
                                       int resolution);

// chi + psi recomputed from the latency model.
double objective(const AllocationProblem& problem, const RoundAllocation& a);

// Largest violation of the allocation constraints (<= 0 when satisfied),
// each measured relative to its own budget.
double worst_constraint_violation(const AllocationProblem& problem,
                                  const RoundAllocation& a);

}  // namespace sflga::solver
