#include "sflga/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "sflga/error.hpp"

namespace sflga::solver {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Rate on bandwidth b for a client with p*g/N0 = a.
double rate(double b, double a) { return b * std::log2(1.0 + a / b); }

double rate_slope(double b, double a) {
  return std::log2(1.0 + a / b) - a / ((a + b) * std::numbers::ln2);
}

struct ClientTerms {
  bool active = false;
  double a = 0.0;       // p*g/N0 at the power cap
  double bits = 0.0;    // uplink payload X
  double work = 0.0;    // server FLOPs K = D (gamma_sF + gamma_sB)
  double fwd = 0.0;     // client forward latency at the CPU cap
};

std::vector<ClientTerms> client_terms(const AllocationProblem& problem) {
  const auto& in = problem.inputs;
  std::vector<ClientTerms> terms(problem.clients());
  for (std::size_t n = 0; n < terms.size(); ++n) {
    const auto& p = in.profiles[n];
    const double d = in.work_samples[n];
    ClientTerms& t = terms[n];
    t.active = d > 0.0;
    if (!t.active) continue;
    t.a = p.power_max_w * in.channel.gains[n] / in.system.noise_w_per_hz;
    t.bits = in.uplink_bits[n];
    t.work = d * (in.workload.server_fwd + in.workload.server_bwd);
    t.fwd = d * in.workload.client_fwd / p.cpu_flops;
  }
  return terms;
}

// Server CPU a client needs at bandwidth b to meet time budget c:
// f(b) = K / (c - X / R(b)).
double cpu_needed(const ClientTerms& t, double b, double c) {
  const double slack = c - t.bits / rate(b, t.a);
  return slack > 0.0 ? t.work / slack : kInf;
}

// -df/db, positive and decreasing in b on the feasible domain.
double cpu_marginal(const ClientTerms& t, double b, double c) {
  const double r = rate(b, t.a);
  const double denom = c * r - t.bits;
  if (!(denom > 0.0)) return kInf;
  return t.work * t.bits * rate_slope(b, t.a) / (denom * denom);
}

// Smallest b with rate(b, a) >= target, by bisection.
std::optional<double> min_bandwidth(double target, double a, double rel_tol) {
  if (target <= 0.0) return 0.0;
  if (!(target < a / std::numbers::ln2)) return std::nullopt;
  double lo = 0.0;
  double hi = std::max(target, 1.0);
  while (rate(hi, a) < target) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) return std::nullopt;
  }
  while (hi - lo > rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (rate(mid, a) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

// Bandwidth in (b_min, b_cap] where the marginal equals theta.
double bandwidth_at(const ClientTerms& t, double theta, double c, double b_min,
                    double b_cap, double rel_tol) {
  if (cpu_marginal(t, b_cap, c) >= theta) return b_cap;
  double lo = b_min;
  double hi = b_cap;
  while (hi - lo > rel_tol * hi) {
    const double mid = std::sqrt(lo * hi);
    if (cpu_marginal(t, mid, c) > theta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

}  // namespace

AllocationProblem make_problem(std::vector<wireless::ClientProfile> profiles,
                               const wireless::SystemProfile& system,
                               wireless::ChannelState channel,
                               const nn::NetworkSpec& spec, int v,
                               const wireless::WireFormat& wire,
                               std::optional<wireless::Workload> workload,
                               wireless::SampleBasis basis, double batch_size) {
  AllocationProblem problem{wireless::make_latency_inputs(
      std::move(profiles), system, std::move(channel), spec, v, wire, workload,
      basis, batch_size)};
  for (const auto& p : problem.inputs.profiles) {
    require(p.cpu_flops > 0.0 && p.power_max_w > 0.0 && p.samples >= 0.0,
            "client caps must be positive");
  }
  for (double g : problem.inputs.channel.gains) {
    require(g > 0.0 && std::isfinite(g), "channel gains must be positive and finite");
  }
  const auto& s = problem.inputs.system;
  require(s.bandwidth_hz > 0.0 && s.noise_w_per_hz > 0.0 && s.server_power_w > 0.0 &&
              s.server_flops > 0.0,
          "system profile entries must be positive");
  return problem;
}

std::optional<double> required_bandwidth(double target_rate, double power_w,
                                         double gain, double noise_w_per_hz,
                                         double rel_tol) {
  require(target_rate >= 0.0, "target rate must be non-negative");
  return min_bandwidth(target_rate, power_w * gain / noise_w_per_hz, rel_tol);
}

MonotoneCaps fix_monotone_vars(const AllocationProblem& problem) {
  MonotoneCaps caps;
  for (const auto& p : problem.inputs.profiles) {
    caps.power_w.push_back(p.power_max_w);
    caps.client_flops.push_back(p.cpu_flops);
  }
  return caps;
}

double psi_value(const AllocationProblem& problem) {
  const auto& in = problem.inputs;
  double psi = 0.0;
  for (std::size_t n = 0; n < problem.clients(); ++n) {
    const double d = in.work_samples[n];
    if (d <= 0.0) continue;
    const double down = in.downlink_bits[n] / wireless::downlink_rate(in.system, in.channel.gains[n]);
    const double bwd = d * in.workload.client_bwd / in.profiles[n].cpu_flops;
    psi = std::max(psi, down + bwd);
  }
  return psi;
}

ChiCheck chi_feasible(const AllocationProblem& problem, double chi,
                      const Tolerances& tol) {
  const auto terms = client_terms(problem);
  const std::size_t clients = terms.size();
  const double total_bw = problem.inputs.system.bandwidth_hz;
  const double total_cpu = problem.inputs.system.server_flops;

  ChiCheck out;
  out.bandwidth_hz.assign(clients, 0.0);
  out.server_flops.assign(clients, 0.0);

  // Clients whose bandwidth and CPU trade off against each other take part
  // in the water-filling; the rest have a fixed requirement.
  std::vector<std::size_t> shared;
  std::vector<double> budget(clients, 0.0);
  std::vector<double> b_min(clients, 0.0);
  double fixed_bw = 0.0;
  double fixed_cpu = 0.0;
  for (std::size_t n = 0; n < clients; ++n) {
    const auto& t = terms[n];
    if (!t.active) continue;
    budget[n] = chi - t.fwd;
    if (!(budget[n] > 0.0)) return out;
    if (t.bits > 0.0 && !(t.bits / budget[n] < t.a / std::numbers::ln2)) return out;
    if (t.bits <= 0.0) {
      out.server_flops[n] = t.work / budget[n];
      fixed_cpu += out.server_flops[n];
    } else if (t.work <= 0.0) {
      const auto b = min_bandwidth(t.bits / budget[n], t.a, tol.rate_rel);
      if (!b) return out;
      out.bandwidth_hz[n] = *b;
      fixed_bw += *b;
    } else {
      const auto b = min_bandwidth(t.bits / budget[n], t.a, tol.rate_rel);
      if (!b) return out;
      b_min[n] = *b;
      shared.push_back(n);
    }
  }
  if (fixed_bw > total_bw || fixed_cpu > total_cpu) return out;

  if (!shared.empty()) {
    const double cpu_left = total_cpu - fixed_cpu;
    const double bw_cap = total_bw;
    for (std::size_t n : shared) {
      if (b_min[n] >= bw_cap) return out;
    }

    auto cpu_at = [&](double theta, std::vector<double>& bw) {
      double sum = 0.0;
      for (std::size_t n : shared) {
        bw[n] = bandwidth_at(terms[n], theta, budget[n], b_min[n], bw_cap, tol.rate_rel);
        sum += cpu_needed(terms[n], bw[n], budget[n]);
      }
      return sum;
    };

    std::vector<double> bw_lo(clients, 0.0);
    std::vector<double> bw_hi(clients, 0.0);
    double theta_lo = kInf;
    for (std::size_t n : shared) {
      theta_lo = std::min(theta_lo, cpu_marginal(terms[n], bw_cap, budget[n]));
    }
    // Every shared client sits at the bandwidth cap here, so this is the
    // least server CPU any split can get away with.
    if (cpu_at(theta_lo, bw_lo) > cpu_left) return out;
    double theta_hi = theta_lo;
    do {
      theta_hi *= 2.0;
    } while (cpu_at(theta_hi, bw_hi) <= cpu_left && std::isfinite(theta_hi));
    while (theta_hi - theta_lo > tol.multiplier_rel * theta_hi) {
      const double mid = std::sqrt(theta_lo * theta_hi);
      if (cpu_at(mid, bw_hi) <= cpu_left) {
        theta_lo = mid;
      } else {
        theta_hi = mid;
      }
    }
    cpu_at(theta_lo, bw_lo);
    for (std::size_t n : shared) {
      out.bandwidth_hz[n] = bw_lo[n];
      out.server_flops[n] = cpu_needed(terms[n], bw_lo[n], budget[n]);
    }
  }

  double used = 0.0;
  for (double b : out.bandwidth_hz) used += b;
  out.bandwidth_used = used;
  out.feasible = used <= total_bw;
  return out;
}

namespace {

void spread_leftover(std::vector<double>& shares, double budget) {
  double used = 0.0;
  for (double x : shares) used += x;
  if (!(used > 0.0) || used >= budget) return;
  const double scale = budget / used;
  for (double& x : shares) x *= scale;
}

RoundAllocation finish(const AllocationProblem& problem, std::vector<double> bw,
                       std::vector<double> cpu) {
  const auto caps = fix_monotone_vars(problem);
  RoundAllocation a;
  a.bandwidth_hz = std::move(bw);
  a.server_flops = std::move(cpu);
  a.power_w = caps.power_w;
  a.client_flops = caps.client_flops;
  const auto lat = wireless::latency_breakdown(problem.inputs, a);
  a.chi = lat.uplink_path;
  a.psi = psi_value(problem);
  return a;
}

}  // namespace

RoundAllocation solve_allocation(const AllocationProblem& problem,
                                 const Tolerances& tol) {
  const auto terms = client_terms(problem);
  const std::size_t clients = terms.size();
  require(clients > 0, "allocation problem has no clients");
  const auto& system = problem.inputs.system;

  std::size_t active = 0;
  for (const auto& t : terms) active += t.active ? 1 : 0;
  if (active <= 1) {
    // No contention: the single working client takes everything.
    std::vector<double> bw(clients, 0.0);
    std::vector<double> cpu(clients, 0.0);
    for (std::size_t n = 0; n < clients; ++n) {
      if (terms[n].active) {
        bw[n] = system.bandwidth_hz;
        cpu[n] = system.server_flops;
      }
    }
    return finish(problem, std::move(bw), std::move(cpu));
  }

  double chi_lo = 0.0;
  for (const auto& t : terms) {
    if (!t.active) continue;
    chi_lo = std::max(chi_lo, t.fwd + t.work / system.server_flops +
                                  t.bits * std::numbers::ln2 / t.a);
  }

  // Equal split of the working clients is always a feasible point.
  RoundAllocation even;
  even.power_w = fix_monotone_vars(problem).power_w;
  even.client_flops = fix_monotone_vars(problem).client_flops;
  for (const auto& t : terms) {
    even.bandwidth_hz.push_back(t.active ? system.bandwidth_hz / static_cast<double>(active) : 0.0);
    even.server_flops.push_back(t.active ? system.server_flops / static_cast<double>(active) : 0.0);
  }
  double chi_hi = wireless::latency_breakdown(problem.inputs, even).uplink_path;
  int widen = 0;
  while (!chi_feasible(problem, chi_hi, tol).feasible) {
    chi_hi = chi_lo + 2.0 * (chi_hi - chi_lo);
    if (++widen > 60) {
      fail(ErrorCode::InfeasibleProblem, "no feasible chi for the allocation problem");
    }
  }
  while (chi_hi - chi_lo > tol.chi_abs) {
    const double mid = 0.5 * (chi_lo + chi_hi);
    if (chi_feasible(problem, mid, tol).feasible) {
      chi_hi = mid;
    } else {
      chi_lo = mid;
    }
  }
  auto best = chi_feasible(problem, chi_hi, tol);
  // Hand out whatever the bisection tolerance left unused; shares only grow,
  // so no latency gets worse.
  spread_leftover(best.bandwidth_hz, system.bandwidth_hz);
  spread_leftover(best.server_flops, system.server_flops);
  return finish(problem, std::move(best.bandwidth_hz), std::move(best.server_flops));
}

namespace {

// Exact min over server-CPU splits of max_n (e_n + K_n / f_n) subject to
// sum f_n <= F: the chi solving sum_n K_n / (chi - e_n) = F.
double best_chi_for_offsets(const std::vector<double>& offsets,
                            const std::vector<double>& work, double total_cpu) {
  double floor = 0.0;
  double total_work = 0.0;
  for (std::size_t n = 0; n < offsets.size(); ++n) {
    floor = std::max(floor, offsets[n]);
    total_work += work[n];
  }
  if (total_work <= 0.0) return floor;
  double lo = floor;
  double hi = floor + total_work / total_cpu;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    double need = 0.0;
    for (std::size_t n = 0; n < offsets.size(); ++n) {
      if (work[n] > 0.0) need += work[n] / (mid - offsets[n]);
    }
    if (need <= total_cpu) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

template <typename Visit>
void for_each_composition(int total, std::size_t parts, std::vector<int>& current,
                          std::size_t index, Visit&& visit) {
  if (index + 1 == parts) {
    current[index] = total;
    visit(current);
    return;
  }
  for (int k = 0; k <= total; ++k) {
    current[index] = k;
    for_each_composition(total - k, parts, current, index + 1, visit);
  }
}

}  // namespace

RoundAllocation brute_force_allocation(const AllocationProblem& problem,
                                       int resolution) {
  require(resolution >= 1, "grid resolution must be positive");
  const auto terms = client_terms(problem);
  const std::size_t clients = terms.size();
  require(clients >= 1 && clients <= 4, "brute force supports 1..4 clients");
  const auto& system = problem.inputs.system;
  const auto& gains = problem.inputs.channel.gains;

  // Uplink latency of each client at each grid level.
  std::vector<std::vector<double>> uplink(clients, std::vector<double>(resolution + 1, kInf));
  for (std::size_t n = 0; n < clients; ++n) {
    for (int k = 0; k <= resolution; ++k) {
      if (!terms[n].active || terms[n].bits <= 0.0) {
        uplink[n][k] = 0.0;
      } else if (k > 0) {
        const double bw = system.bandwidth_hz * k / resolution;
        uplink[n][k] = terms[n].bits / wireless::uplink_rate(
                                           bw, problem.inputs.profiles[n].power_max_w,
                                           gains[n], system.noise_w_per_hz);
      }
    }
  }

  double best = kInf;
  std::vector<int> best_split(clients, 0);
  std::vector<int> split(clients, 0);
  std::vector<double> offsets(clients, 0.0);
  std::vector<double> work(clients, 0.0);
  for_each_composition(resolution, clients, split, 0, [&](const std::vector<int>& s) {
    for (std::size_t n = 0; n < clients; ++n) {
      const double u = uplink[n][static_cast<std::size_t>(s[n])];
      if (!std::isfinite(u)) return;
      offsets[n] = terms[n].active ? terms[n].fwd + u : 0.0;
      work[n] = terms[n].active ? terms[n].work : 0.0;
    }
    const double chi = best_chi_for_offsets(offsets, work, system.server_flops);
    if (chi < best) {
      best = chi;
      best_split = s;
    }
  });
  if (!std::isfinite(best)) {
    fail(ErrorCode::InfeasibleProblem, "no grid point is feasible");
  }

  std::vector<double> bw(clients, 0.0);
  std::vector<double> cpu(clients, 0.0);
  for (std::size_t n = 0; n < clients; ++n) {
    bw[n] = system.bandwidth_hz * best_split[n] / resolution;
    const double u = uplink[n][static_cast<std::size_t>(best_split[n])];
    offsets[n] = terms[n].active ? terms[n].fwd + u : 0.0;
    if (terms[n].active && terms[n].work > 0.0) cpu[n] = terms[n].work / (best - offsets[n]);
  }
  return finish(problem, std::move(bw), std::move(cpu));
}

double objective(const AllocationProblem& problem, const RoundAllocation& a) {
  return wireless::latency_breakdown(problem.inputs, a).total;
}

double worst_constraint_violation(const AllocationProblem& problem,
                                  const RoundAllocation& a) {
  const auto& in = problem.inputs;
  const auto& system = in.system;
  double worst = -kInf;
  auto note = [&](double v) { worst = std::max(worst, v); };
  double bw = 0.0;
  double cpu = 0.0;
  for (std::size_t n = 0; n < problem.clients(); ++n) {
    const auto& p = in.profiles[n];
    bw += a.bandwidth_hz[n];
    cpu += a.server_flops[n];
    note(-a.bandwidth_hz[n] / system.bandwidth_hz);
    note(-a.server_flops[n] / system.server_flops);
    note((a.power_w[n] - p.power_max_w) / p.power_max_w);
    note(-a.power_w[n] / p.power_max_w);
    note((a.client_flops[n] - p.cpu_flops) / p.cpu_flops);
    note(-a.client_flops[n] / p.cpu_flops);
  }
  note((bw - system.bandwidth_hz) / system.bandwidth_hz);
  note((cpu - system.server_flops) / system.server_flops);
  const auto lat = wireless::latency_breakdown(in, a);
  for (const auto& c : lat.clients) {
    if (a.chi > 0.0) note((c.uplink + c.client_fwd + c.server - a.chi) / a.chi);
    if (a.psi > 0.0) note((c.downlink + c.client_bwd - a.psi) / a.psi);
  }
  return worst;
}

}  // namespace sflga::solver
