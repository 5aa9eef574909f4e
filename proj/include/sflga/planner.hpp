#pragma once

// Cut-point selection as a Markov decision process solved with double deep
// Q-learning. Each round the agent picks a cut v in 1..V-1, the resource
// solver prices that cut under the round's channel, and the reward is the
// negated weighted round cost (or -C when the cut breaks the privacy floor).

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sflga/nn.hpp"
#include "sflga/random.hpp"
#include "sflga/solver.hpp"
#include "sflga/wireless.hpp"

namespace sflga::planner {

// Convergence-gap proxy Gamma(phi(v)). With an empty table it is
// kappa * phi(v) / q; otherwise table[v-1] (for example measured values).
struct GammaModel {
  double kappa = 1.0;
  std::vector<double> table;
};

double gamma_of_cut(const GammaModel& model, const nn::NetworkSpec& spec, int v);

double reward(double gamma, double chi, double psi, bool privacy_feasible,
              double weight, double penalty);

struct Transition {
  std::vector<double> state;
  int action = 1;  // cut index, 1-based
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
};

// Fixed-capacity ring; once full, each push overwrites the oldest entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  // i-th oldest entry still held.
  const Transition& at(std::size_t i) const;
  // Uniform draws with replacement.
  std::vector<Transition> sample(Rng& rng, std::size_t count) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> items_;
};

struct DdqnConfig {
  std::vector<std::size_t> hidden = {64, 64};
  double discount = 0.95;
  double explore_start = 1.0;
  double explore_end = 0.05;
  double explore_fraction = 0.6;  // share of episodes used for the anneal
  std::size_t replay_capacity = 10000;
  std::size_t minibatch = 64;
  int target_period = 200;
  double learning_rate = 1e-3;
  double penalty = 1000.0;
  // Global-norm clip on each Q update; 0 disables.
  double grad_clip = 10.0;
};

struct QFunction {
  nn::NetworkSpec spec;
  nn::ParamBlock online;
  nn::ParamBlock target;
  double discount = 0.95;
  int target_period = 200;
  std::uint64_t steps = 0;

  int actions() const { return static_cast<int>(spec.output_dim()); }
  std::vector<double> values(std::span<const double> state, bool use_target = false) const;
};

QFunction make_qfunction(std::size_t state_dim, int actions, const DdqnConfig& config,
                         std::uint64_t seed);

// Epsilon-greedy; returns a 1-based cut. Greedy ties go to the lowest cut.
int act(const QFunction& q, std::span<const double> state, double explore_rate, Rng& rng);
int greedy_action(std::span<const double> values);

// y = r for terminal transitions, otherwise
// y = r + discount * Q_target(s', argmax_a Q_online(s', a)).
std::vector<double> ddqn_targets(const QFunction& q, std::span<const Transition> batch);

struct TrainStep {
  bool performed = false;
  double loss = 0.0;       // mean squared TD error before the update
  double grad_norm = 0.0;  // before clipping
};

// One SGD step on the squared TD loss for the given transitions; syncs the
// target every target_period steps.
TrainStep train_on(QFunction& q, std::span<const Transition> batch, double learning_rate,
                   double grad_clip = 0.0);
// Samples a minibatch; no-op (performed = false) when the buffer is short.
TrainStep train_step(QFunction& q, const ReplayBuffer& replay, std::size_t minibatch,
                     double learning_rate, Rng& rng, double grad_clip = 0.0);

double explore_rate(const DdqnConfig& config, int episode, int episodes);

// Everything needed to price a cut in one round.
struct Scenario {
  nn::NetworkSpec spec;
  std::vector<wireless::ClientProfile> profiles;
  wireless::SystemProfile system;
  wireless::WireFormat wire;
  std::optional<wireless::Workload> workload;
  wireless::SampleBasis basis = wireless::SampleBasis::LocalDataset;
  double batch_size = 0.0;
  GammaModel gamma;
  double weight = 1.0;    // w on Gamma
  double epsilon = 0.0;   // privacy floor
  solver::Tolerances tolerances;
  std::uint64_t seed = 1;

  int actions() const { return spec.layers() - 1; }
  std::size_t state_dim() const { return profiles.size() + 2; }
};

struct RoundCost {
  bool feasible = false;  // privacy met and allocation found
  double gamma = 0.0;
  double chi = 0.0;
  double psi = 0.0;
  double cost = 0.0;      // w*Gamma + chi + psi, or the penalty
  double reward = 0.0;
  wireless::RoundAllocation allocation;
};

RoundCost price_cut(const Scenario& scenario, const wireless::ChannelState& channel, int v,
                    double penalty);

// Channel draw for round `round` of episode `episode`; evaluation episodes
// use a disjoint stream.
wireless::ChannelState episode_channel(const Scenario& scenario, int episode, int round,
                                       bool evaluation);

// Statistics used to normalize observations.
struct Normalizer {
  std::vector<double> log_gain_mean;
  std::vector<double> log_gain_std;
  double cost_scale = 1.0;
  double max_cost = 0.0;  // largest feasible round cost seen
};

Normalizer calibrate(const Scenario& scenario, double penalty, int draws = 64);

std::vector<double> observe(const Normalizer& norm, const wireless::ChannelState& channel,
                            double cumulative_cost, int round, int horizon);

struct PlanRow {
  int episode = 0;
  int round = 0;
  int cut = 1;
  double chi = 0.0;
  double psi = 0.0;
  double gamma = 0.0;
  double reward = 0.0;
  double explore = 0.0;
  bool feasible = false;
};

struct PlanResult {
  QFunction policy;
  Normalizer normalizer;
  std::vector<double> episode_rewards;
  std::vector<PlanRow> rows;
};

PlanResult run_algorithm1(const Scenario& scenario, const DdqnConfig& config, int episodes,
                          int rounds_per_episode);

struct EvaluationResult {
  std::vector<int> cuts;      // greedy choice per evaluation round
  std::vector<double> rewards;
};

EvaluationResult evaluate_policy(const Scenario& scenario, const PlanResult& plan,
                                 int rounds, int rounds_per_episode, double penalty);

// Checkpoint as a blob: header with network dims and step count, payload
// online parameters followed by target parameters.
void save_checkpoint(const QFunction& q, const std::string& path);
QFunction load_checkpoint(const std::string& path);

}  // namespace sflga::planner
