#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sflga/random.hpp"
#include "sflga/solver.hpp"

using namespace sflga;
using namespace sflga::wireless;

namespace {

const auto kSpec = nn::NetworkSpec::classifier({784, 128, 10});

SystemProfile system_profile() {
  return {20e6, dbm_to_watts(-174.0), dbm_to_watts(33.0), 100e9};
}

solver::AllocationProblem random_problem(std::size_t clients, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ClientProfile> profiles;
  std::vector<double> gains;
  for (std::size_t n = 0; n < clients; ++n) {
    const double d = 0.05 + 0.45 * uniform01(rng);
    profiles.push_back({50.0 + 150.0 * uniform01(rng), 0.1e9, dbm_to_watts(25.0), d});
    gains.push_back(path_gain(d) * (0.2 + 1.8 * uniform01(rng)));
  }
  return solver::make_problem(profiles, system_profile(), {gains}, kSpec, 1);
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("bandwidth inversion reaches the requested rate") {
  const double n0 = dbm_to_watts(-174.0);
  const double target = 5e6;
  const auto b = solver::required_bandwidth(target, 0.3, 1e-11, n0);
  REQUIRE(b.has_value());
  CHECK(uplink_rate(*b, 0.3, 1e-11, n0) == doctest::Approx(target).epsilon(1e-8));
  // Beyond p g / (N0 ln 2) no bandwidth is enough.
  const double limit = 0.3 * 1e-11 / (n0 * std::log(2.0));
  CHECK_FALSE(solver::required_bandwidth(limit * 1.01, 0.3, 1e-11, n0).has_value());
}

TEST_CASE("one client gets everything") {
  const auto p = random_problem(1, 3);
  const auto a = solver::solve_allocation(p);
  CHECK(a.bandwidth_hz[0] == doctest::Approx(20e6).epsilon(1e-6));
  CHECK(a.server_flops[0] == doctest::Approx(100e9).epsilon(1e-6));
  const auto lb = latency_breakdown(p.inputs, a);
  CHECK(a.chi == doctest::Approx(lb.uplink_path).epsilon(1e-5));
}

TEST_CASE("identical clients split evenly") {
  const std::vector<ClientProfile> profiles(2, {100, 0.1e9, dbm_to_watts(25.0), 0.2});
  const auto p = solver::make_problem(profiles, system_profile(), {{1e-11, 1e-11}}, kSpec, 1);
  const auto a = solver::solve_allocation(p);
  CHECK(a.bandwidth_hz[0] == doctest::Approx(10e6).epsilon(1e-5));
  CHECK(a.bandwidth_hz[1] == doctest::Approx(10e6).epsilon(1e-5));
  CHECK(a.server_flops[0] == doctest::Approx(50e9).epsilon(1e-5));
  // psi is the max over equal terms: the same as for a single client.
  const auto one = solver::make_problem({profiles[0]}, system_profile(), {{1e-11}}, kSpec, 1);
  CHECK(solver::psi_value(p) == solver::psi_value(one));
}

TEST_CASE("monotone variables sit at their caps") {
  const auto p = random_problem(3, 4);
  const auto caps = solver::fix_monotone_vars(p);
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(caps.power_w[n] == p.inputs.profiles[n].power_max_w);
    CHECK(caps.client_flops[n] == p.inputs.profiles[n].cpu_flops);
  }
  // Lowering either variable below its cap never shortens the round.
  const auto a = solver::solve_allocation(p);
  for (std::size_t n = 0; n < 3; ++n) {
    auto b = a;
    b.power_w[n] *= 0.7;
    b.client_flops[n] *= 0.7;
    CHECK(latency_breakdown(p.inputs, b).total >= latency_breakdown(p.inputs, a).total);
  }
}

TEST_CASE("solutions satisfy every constraint") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_problem(2 + seed % 5, seed);
    const auto a = solver::solve_allocation(p);
    CHECK(solver::worst_constraint_violation(p, a) <= 1e-9);
    const double used = std::accumulate(a.bandwidth_hz.begin(), a.bandwidth_hz.end(), 0.0);
    CHECK(used <= 20e6 * (1 + 1e-12));
  }
}

TEST_CASE("solver is no worse than the grid oracle") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto p = random_problem(2 + seed % 2, 100 + seed);
    const double fast = solver::objective(p, solver::solve_allocation(p));
    const double grid = solver::objective(p, solver::brute_force_allocation(p, 200));
    CHECK(fast <= grid * (1 + 1e-3));
  }
}

TEST_CASE("permuting clients permutes the allocation") {
  const auto p = random_problem(3, 9);
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<ClientProfile> profiles;
  std::vector<double> gains;
  for (auto i : perm) {
    profiles.push_back(p.inputs.profiles[i]);
    gains.push_back(p.inputs.channel.gains[i]);
  }
  const auto q = solver::make_problem(profiles, system_profile(), {gains}, kSpec, 1);
  const auto a = solver::solve_allocation(p);
  const auto b = solver::solve_allocation(q);
  CHECK(a.chi == doctest::Approx(b.chi).epsilon(1e-9));
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(b.bandwidth_hz[k] == doctest::Approx(a.bandwidth_hz[perm[k]]).epsilon(1e-5));
  }
}

TEST_CASE("clients without data get no resources") {
  std::vector<ClientProfile> profiles{{100, 0.1e9, 0.3, 0.2}, {0, 0.1e9, 0.3, 0.2}};
  const auto p = solver::make_problem(profiles, system_profile(), {{1e-11, 1e-11}}, kSpec, 1);
  const auto a = solver::solve_allocation(p);
  CHECK(a.bandwidth_hz[1] == 0.0);
  CHECK(a.server_flops[1] == 0.0);
}

TEST_CASE("psi does not depend on the allocation") {
  const auto p = random_problem(4, 12);
  const auto a = solver::solve_allocation(p);
  const auto e = equal_allocation(p.inputs.profiles, p.inputs.system);
  CHECK(latency_breakdown(p.inputs, e).downlink_path == doctest::Approx(solver::psi_value(p)));
  CHECK(a.psi == doctest::Approx(solver::psi_value(p)));
}

}
