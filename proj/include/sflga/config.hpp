#pragma once

// Scenario configuration: a JSON document, defaulted, validated, and with
// every dBm/dB quantity converted to SI units once at load time.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sflga/nn.hpp"
#include "sflga/planner.hpp"
#include "sflga/solver.hpp"
#include "sflga/wireless.hpp"

namespace sflga::config {

enum class CutPolicy { Fixed, Random, Ddqn };
enum class AllocationMode { Optimal, Equal };
enum class PartitionKind { Iid, LabelSkew };
enum class DataSource { Synthetic, Idx };

struct DatasetConfig {
  DataSource source = DataSource::Synthetic;
  std::string train_images;
  std::string train_labels;
  std::string eval_images;
  std::string eval_labels;
  std::size_t eval_samples = 500;
  int classes = 10;
  double separation = 3.0;
  double noise = 1.0;
};

struct PartitionConfig {
  PartitionKind kind = PartitionKind::Iid;
  double concentration = 0.5;
  std::vector<std::size_t> samples_per_client;  // D^n
};

struct TrainingConfig {
  Protocol protocol = Protocol::SflGa;
  CutPolicy cut_policy = CutPolicy::Fixed;
  int cut = 1;
  int epochs = 1;
  double eta = 0.05;
  int rounds = 50;
  std::size_t batch_size = 64;  // capped at the smallest D^n
  bool resample_batches = true;
  wireless::SampleBasis latency_basis = wireless::SampleBasis::LocalDataset;
  AllocationMode allocation = AllocationMode::Optimal;
};

struct PlanConfig {
  planner::DdqnConfig ddqn;
  int episodes = 500;
  int rounds_per_episode = 10;
  std::string checkpoint;  // policy to load for cut_policy = ddqn
};

// One resource-allocation instance for the `solve` command.
struct ProblemConfig {
  int cut = 1;
  std::vector<double> gains;  // linear; drawn from the channel model if empty
  int round = 0;
};

struct ScenarioConfig {
  std::string run_id = "run";
  std::uint64_t seed = 1;
  int clients = 10;
  nn::NetworkSpec network;
  DatasetConfig dataset;
  PartitionConfig partition;
  wireless::SystemProfile system;
  std::vector<wireless::ClientProfile> profiles;
  std::optional<wireless::Workload> workload;
  wireless::WireFormat wire;
  int param_bits = 64;
  TrainingConfig training;
  double weight = 1.0;
  double epsilon = 0.0;
  planner::GammaModel gamma;
  solver::Tolerances tolerances;
  PlanConfig plan;
  ProblemConfig problem;

  std::size_t batch_size() const;
  std::size_t total_samples() const;
};

// Throws Error(Parse) for malformed JSON and Error(Validation) with the
// offending field path for unknown keys, wrong types and bad values.
ScenarioConfig parse_config(const nlohmann::json& doc);
ScenarioConfig parse_config_text(const std::string& text);
ScenarioConfig load_config(const std::string& path);
nlohmann::json read_json_file(const std::string& path);

// Sets a dotted path ("system.bandwidth_hz") inside a JSON document,
// creating intermediate objects.
void set_path(nlohmann::json& doc, const std::string& dotted, const nlohmann::json& value);

std::string to_string(CutPolicy p);

}  // namespace sflga::config
