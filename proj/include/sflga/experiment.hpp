#pragma once

// Experiment orchestration: datasets, training runs, sweeps, cut planning,
// single allocation solves, the theory suite, and metrics export.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sflga/config.hpp"
#include "sflga/dataset.hpp"
#include "sflga/planner.hpp"
#include "sflga/protocol.hpp"
#include "sflga/theory.hpp"

namespace sflga::experiment {

struct MetricsRow {
  std::string run_id;
  int round = 0;
  std::string protocol;
  int v = 1;
  double loss = 0.0;
  double accuracy = 0.0;
  double chi = 0.0;
  double psi = 0.0;
  double latency_s = 0.0;
  std::uint64_t uplink_bytes = 0;
  std::uint64_t downlink_bytes = 0;
  double reward = 0.0;  // NaN when no planner is involved
  std::uint64_t seed = 0;

  bool operator==(const MetricsRow& other) const;
};

enum class Format { Csv, Jsonl };
Format format_from_string(const std::string& name);

extern const char* const kCsvHeader;

std::string format_rows(const std::vector<MetricsRow>& rows, Format format);
void export_metrics(const std::vector<MetricsRow>& rows, const std::string& path, Format format);
std::vector<MetricsRow> parse_jsonl(const std::string& text);
std::vector<MetricsRow> read_jsonl(const std::string& path);

struct FederatedData {
  std::vector<data::Dataset> clients;
  data::Dataset eval;
};

FederatedData make_dataset(const config::ScenarioConfig& cfg, std::uint64_t seed);

// Round-by-round driver behind `train`.
class TrainingRun {
 public:
  explicit TrainingRun(config::ScenarioConfig cfg);
  ~TrainingRun();
  TrainingRun(TrainingRun&&) noexcept;
  TrainingRun& operator=(TrainingRun&&) noexcept;

  bool done() const;
  MetricsRow step();
  const protocol::FederationState& state() const;
  const config::ScenarioConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<MetricsRow> run_experiment(const config::ScenarioConfig& cfg);

// Grid over dotted config paths: axes = {"path": [values...], ...}. Points
// run in parallel on `threads` workers; rows come back in grid order, each
// point tagged with run_id "<base>-<index>".
std::vector<MetricsRow> run_sweep(const nlohmann::json& base, const nlohmann::json& axes,
                                  int threads);
std::vector<nlohmann::json> expand_grid(const nlohmann::json& base, const nlohmann::json& axes);

planner::Scenario planner_scenario(const config::ScenarioConfig& cfg);

struct PlanOutput {
  planner::PlanResult result;
  std::vector<MetricsRow> rows;
};

PlanOutput run_plan(const config::ScenarioConfig& cfg);
void export_episode_rewards(const std::vector<double>& rewards, const std::string& path);

// Solves the configured allocation instance and returns it as JSON.
nlohmann::ordered_json solve_problem(const config::ScenarioConfig& cfg);

struct VerifyOptions {
  int seeds = 20;
  int rounds = 50;
  std::uint64_t seed = 1;
};

struct VerifyReport {
  theory::TheoryConstants quadratic;
  theory::TheoryConstants linear;
  theory::Lemma1Report quadratic_lemma;
  theory::Lemma1Report linear_lemma;
  theory::Theorem1Report quadratic_theorem;
  theory::Theorem1Report linear_theorem;
  double linear_f_star = 0.0;
  std::vector<double> gamma_curve;  // deep linear task, per cut
  theory::ComplexityTerms complexity;
  bool stepsize_quadratic = false;
  bool stepsize_linear = false;

  bool passed() const;
  std::string text() const;
  // task,round,empirical,bound rows for both lemma checks.
  std::string csv() const;
};

// Diagnostic tasks shared by `verify` and the tests.
theory::NetworkTask linear_diagnostic(std::uint64_t seed);
theory::NetworkTask deep_linear_diagnostic(std::uint64_t seed);

VerifyReport run_verification(const VerifyOptions& options);

}  // namespace sflga::experiment
