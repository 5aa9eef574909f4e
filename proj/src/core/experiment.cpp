#include "sflga/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "sflga/error.hpp"
#include "sflga/random.hpp"
#include "sflga/solver.hpp"

namespace sflga::experiment {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string number(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

bool MetricsRow::operator==(const MetricsRow& o) const {
  return run_id == o.run_id && round == o.round && protocol == o.protocol && v == o.v &&
         same(loss, o.loss) && same(accuracy, o.accuracy) && same(chi, o.chi) &&
         same(psi, o.psi) && same(latency_s, o.latency_s) && uplink_bytes == o.uplink_bytes &&
         downlink_bytes == o.downlink_bytes && same(reward, o.reward) && seed == o.seed;
}

// ---------------------------------------------------------------------------
// Export

const char* const kCsvHeader =
    "run_id,round,protocol,v,loss,accuracy,chi,psi,latency_s,uplink_bytes,downlink_bytes,"
    "reward,seed";

Format format_from_string(const std::string& name) {
  if (name == "csv") return Format::Csv;
  if (name == "jsonl") return Format::Jsonl;
  fail(ErrorCode::InvalidArgument, "unknown metrics format '" + name + "' (csv or jsonl)");
}

namespace {

ordered_json row_json(const MetricsRow& r) {
  ordered_json j;
  const auto num = [](double v) { return std::isnan(v) ? ordered_json(nullptr) : ordered_json(v); };
  j["run_id"] = r.run_id;
  j["round"] = r.round;
  j["protocol"] = r.protocol;
  j["v"] = r.v;
  j["loss"] = num(r.loss);
  j["accuracy"] = num(r.accuracy);
  j["chi"] = num(r.chi);
  j["psi"] = num(r.psi);
  j["latency_s"] = num(r.latency_s);
  j["uplink_bytes"] = r.uplink_bytes;
  j["downlink_bytes"] = r.downlink_bytes;
  j["reward"] = num(r.reward);
  j["seed"] = r.seed;
  return j;
}

}  // namespace

std::string format_rows(const std::vector<MetricsRow>& rows, Format format) {
  std::string out;
  if (format == Format::Csv) {
    out = std::string(kCsvHeader) + "\n";
    for (const auto& r : rows) {
      out += r.run_id + "," + std::to_string(r.round) + "," + r.protocol + "," +
             std::to_string(r.v) + "," + number(r.loss) + "," + number(r.accuracy) + "," +
             number(r.chi) + "," + number(r.psi) + "," + number(r.latency_s) + "," +
             std::to_string(r.uplink_bytes) + "," + std::to_string(r.downlink_bytes) + "," +
             number(r.reward) + "," + std::to_string(r.seed) + "\n";
    }
    return out;
  }
  for (const auto& r : rows) out += row_json(r).dump() + "\n";
  return out;
}

void export_metrics(const std::vector<MetricsRow>& rows, const std::string& path, Format format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  const std::string text = format_rows(rows, format);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

std::vector<MetricsRow> parse_jsonl(const std::string& text) {
  std::vector<MetricsRow> rows;
  std::istringstream in(text);
  std::string line;
  const auto num = [](const json& j) { return j.is_null() ? kNaN : j.get<double>(); };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      MetricsRow r;
      r.run_id = j.at("run_id").get<std::string>();
      r.round = j.at("round").get<int>();
      r.protocol = j.at("protocol").get<std::string>();
      r.v = j.at("v").get<int>();
      r.loss = num(j.at("loss"));
      r.accuracy = num(j.at("accuracy"));
      r.chi = num(j.at("chi"));
      r.psi = num(j.at("psi"));
      r.latency_s = num(j.at("latency_s"));
      r.uplink_bytes = j.at("uplink_bytes").get<std::uint64_t>();
      r.downlink_bytes = j.at("downlink_bytes").get<std::uint64_t>();
      r.reward = num(j.at("reward"));
      r.seed = j.at("seed").get<std::uint64_t>();
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorCode::Parse, std::string("metrics line: ") + e.what());
    }
  }
  return rows;
}

std::vector<MetricsRow> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str());
}

// ---------------------------------------------------------------------------
// Data

FederatedData make_dataset(const config::ScenarioConfig& cfg, std::uint64_t seed) {
  const auto& dc = cfg.dataset;
  data::Dataset train;
  data::Dataset eval;
  if (dc.source == config::DataSource::Synthetic) {
    data::BlobSpec blobs{cfg.network.input_dim(), dc.classes, dc.separation, dc.noise};
    const auto mean_seed = derive_seed(seed, Stream::Data, 0);
    train = data::gaussian_blobs(blobs, cfg.total_samples(), mean_seed,
                                 derive_seed(seed, Stream::Data, 1));
    eval = data::gaussian_blobs(blobs, dc.eval_samples, mean_seed,
                                derive_seed(seed, Stream::Data, 2));
  } else {
    train = data::read_idx(dc.train_images, dc.train_labels, dc.classes);
    eval = data::read_idx(dc.eval_images, dc.eval_labels, dc.classes);
    if (eval.size() > dc.eval_samples) {
      Rng rng = make_rng(seed, Stream::Data, 3);
      eval = data::subsample(eval, dc.eval_samples, rng);
    }
  }
  if (train.inputs.cols != cfg.network.input_dim()) {
    fail(ErrorCode::Validation, "dataset: input width " + std::to_string(train.inputs.cols) +
                                    " does not match network input " +
                                    std::to_string(cfg.network.input_dim()));
  }
  if (cfg.total_samples() > train.size()) {
    fail(ErrorCode::Validation, "partition.samples_per_client: total " +
                                    std::to_string(cfg.total_samples()) + " exceeds dataset size " +
                                    std::to_string(train.size()));
  }
  Rng rng = make_rng(seed, Stream::Partition);
  data::Partition parts;
  if (cfg.partition.kind == config::PartitionKind::Iid) {
    parts = data::partition_iid(train.size(), cfg.partition.samples_per_client, rng);
  } else {
    parts = data::partition_label_skew(train.labels, dc.classes, cfg.partition.samples_per_client,
                                       cfg.partition.concentration, rng)
                .parts;
  }
  FederatedData out;
  for (const auto& idx : parts) {
    auto b = train.take(idx);
    out.clients.push_back({std::move(b.inputs), std::move(b.labels), dc.classes});
  }
  out.eval = std::move(eval);
  return out;
}

// ---------------------------------------------------------------------------
// Training

planner::Scenario planner_scenario(const config::ScenarioConfig& cfg) {
  planner::Scenario s;
  s.spec = cfg.network;
  s.profiles = cfg.profiles;
  s.system = cfg.system;
  s.wire = cfg.wire;
  s.workload = cfg.workload;
  s.basis = cfg.training.latency_basis;
  s.batch_size = static_cast<double>(cfg.batch_size());
  s.gamma = cfg.gamma;
  s.weight = cfg.weight;
  s.epsilon = cfg.epsilon;
  s.tolerances = cfg.tolerances;
  s.seed = cfg.seed;
  return s;
}

namespace {

struct Allocated {
  wireless::RoundAllocation allocation;
  wireless::LatencyInputs inputs;
};

Allocated allocate(const config::ScenarioConfig& cfg, const wireless::ChannelState& channel,
                   int v) {
  const double batch = static_cast<double>(cfg.batch_size());
  Allocated out;
  if (cfg.training.allocation == config::AllocationMode::Optimal) {
    auto problem = solver::make_problem(cfg.profiles, cfg.system, channel, cfg.network, v,
                                        cfg.wire, cfg.workload, cfg.training.latency_basis, batch);
    out.allocation = solver::solve_allocation(problem, cfg.tolerances);
    out.inputs = std::move(problem.inputs);
    return out;
  }
  out.inputs = wireless::make_latency_inputs(cfg.profiles, cfg.system, channel, cfg.network, v,
                                             cfg.wire, cfg.workload, cfg.training.latency_basis,
                                             batch);
  out.allocation = wireless::equal_allocation(cfg.profiles, cfg.system);
  const auto lb = wireless::latency_breakdown(out.inputs, out.allocation);
  out.allocation.chi = lb.uplink_path;
  out.allocation.psi = lb.downlink_path;
  return out;
}

}  // namespace

struct TrainingRun::Impl {
  config::ScenarioConfig cfg;
  FederatedData data;
  nn::Batch eval;
  protocol::FederationState state;
  int round = 0;
  double cumulative_cost = 0.0;
  planner::Scenario scenario;
  std::optional<planner::QFunction> policy;
  planner::Normalizer normalizer;

  explicit Impl(config::ScenarioConfig c) : cfg(std::move(c)) {
    data = make_dataset(cfg, cfg.seed);
    eval = data.eval.all();
    std::vector<double> sizes;
    for (const auto& d : data.clients) sizes.push_back(static_cast<double>(d.size()));
    const auto init = nn::init_params(cfg.network, derive_seed(cfg.seed, Stream::Init));
    state = protocol::make_state(cfg.network, init, cfg.training.cut, cfg.training.epochs,
                                 cfg.training.eta, protocol::weights_from_sizes(sizes));
    scenario = planner_scenario(cfg);
    if (cfg.training.cut_policy == config::CutPolicy::Ddqn) {
      normalizer = planner::calibrate(scenario, cfg.plan.ddqn.penalty);
      if (!cfg.plan.checkpoint.empty()) {
        policy = planner::load_checkpoint(cfg.plan.checkpoint);
        if (policy->actions() != scenario.actions() ||
            policy->spec.input_dim() != scenario.state_dim()) {
          fail(ErrorCode::Validation, "ddqn.checkpoint: policy does not fit this scenario");
        }
      } else {
        auto plan = planner::run_algorithm1(scenario, cfg.plan.ddqn, cfg.plan.episodes,
                                            cfg.plan.rounds_per_episode);
        policy = std::move(plan.policy);
      }
    }
  }

  int choose_cut(const wireless::ChannelState& channel) {
    const int cuts = cfg.network.layers() - 1;
    switch (cfg.training.cut_policy) {
      case config::CutPolicy::Fixed: return cfg.training.cut;
      case config::CutPolicy::Random: {
        std::vector<int> feasible;
        for (int v = 1; v <= cuts; ++v) {
          if (wireless::privacy_ok(cfg.network, v, cfg.epsilon)) feasible.push_back(v);
        }
        if (feasible.empty()) fail(ErrorCode::ConstraintViolation, "no cut meets the privacy threshold");
        Rng rng = make_rng(cfg.seed, Stream::Policy, static_cast<std::uint64_t>(round));
        return feasible[uniform_index(rng, feasible.size())];
      }
      case config::CutPolicy::Ddqn: {
        const auto obs = planner::observe(normalizer, channel, cumulative_cost, round,
                                          cfg.training.rounds);
        return planner::greedy_action(policy->values(obs));
      }
    }
    return cfg.training.cut;
  }

  protocol::EpochBatches batches() const {
    const std::size_t b = cfg.batch_size();
    const int draws = cfg.training.resample_batches ? cfg.training.epochs : 1;
    protocol::EpochBatches out(data.clients.size());
    for (std::size_t n = 0; n < data.clients.size(); ++n) {
      Rng rng = make_rng(cfg.seed, Stream::Batches,
                         static_cast<std::uint64_t>(round) * data.clients.size() + n);
      const auto& d = data.clients[n];
      for (int e = 0; e < draws; ++e) {
        out[n].push_back(d.take(theory::sample_indices(rng, d.size(), std::min(b, d.size()))));
      }
    }
    return out;
  }

  MetricsRow step() {
    const auto channel = wireless::sample_channel(
        cfg.profiles, derive_seed(cfg.seed, Stream::Channel, static_cast<std::uint64_t>(round)));
    const int v = choose_cut(channel);
    if (v != state.cut) state = protocol::recut(state, v);

    const auto alloc = allocate(cfg, channel, v);
    const auto sizes = wireless::model_sizes(cfg.network, v, cfg.workload);
    const double latency = wireless::protocol_latency(cfg.training.protocol, alloc.inputs,
                                                      alloc.allocation, sizes, cfg.param_bits);

    protocol::RoundOptions options;
    options.wire = cfg.wire;
    options.param_bits = cfg.param_bits;
    options.epsilon = cfg.epsilon;
    auto result = protocol::run_round(cfg.training.protocol, state, batches(), options);
    state = std::move(result.state);
    const auto ev = protocol::evaluate(state, eval);

    MetricsRow row;
    row.run_id = cfg.run_id;
    row.round = round;
    row.protocol = std::string(to_string(cfg.training.protocol));
    row.v = v;
    row.loss = ev.loss;
    row.accuracy = ev.accuracy;
    row.chi = alloc.allocation.chi;
    row.psi = alloc.allocation.psi;
    row.latency_s = latency;
    row.uplink_bytes = result.metrics.uplink_bits() / 8;
    row.downlink_bytes = result.metrics.downlink_bits() / 8;
    row.seed = cfg.seed;
    row.reward = kNaN;
    if (cfg.training.cut_policy == config::CutPolicy::Ddqn) {
      const double gamma = planner::gamma_of_cut(cfg.gamma, cfg.network, v);
      row.reward = planner::reward(gamma, row.chi, row.psi, true, cfg.weight,
                                   cfg.plan.ddqn.penalty);
      cumulative_cost += -row.reward;
    }
    ++round;
    return row;
  }
};

TrainingRun::TrainingRun(config::ScenarioConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
TrainingRun::~TrainingRun() = default;
TrainingRun::TrainingRun(TrainingRun&&) noexcept = default;
TrainingRun& TrainingRun::operator=(TrainingRun&&) noexcept = default;

bool TrainingRun::done() const { return impl_->round >= impl_->cfg.training.rounds; }

MetricsRow TrainingRun::step() {
  require(!done(), "run already finished");
  try {
    return impl_->step();
  } catch (const Error& e) {
    fail(e.code(), impl_->cfg.run_id + " round " + std::to_string(impl_->round) + ": " + e.what());
  }
}

const protocol::FederationState& TrainingRun::state() const { return impl_->state; }
const config::ScenarioConfig& TrainingRun::config() const { return impl_->cfg; }

std::vector<MetricsRow> run_experiment(const config::ScenarioConfig& cfg) {
  TrainingRun run(cfg);
  std::vector<MetricsRow> rows;
  while (!run.done()) rows.push_back(run.step());
  return rows;
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<json> expand_grid(const json& base, const json& axes) {
  if (!axes.is_object()) fail(ErrorCode::Validation, "sweep axes must be an object");
  std::vector<std::pair<std::string, json>> list;
  for (const auto& [key, values] : axes.items()) {
    if (!values.is_array() || values.empty()) {
      fail(ErrorCode::Validation, "sweep axis '" + key + "' must be a non-empty array");
    }
    list.emplace_back(key, values);
  }
  std::vector<json> points{base};
  for (const auto& [key, values] : list) {
    std::vector<json> next;
    for (const auto& p : points) {
      for (const auto& v : values) {
        json q = p;
        config::set_path(q, key, v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  const std::string stem = base.value("run_id", std::string("run"));
  for (std::size_t i = 0; i < points.size(); ++i) points[i]["run_id"] = stem + "-" + std::to_string(i);
  return points;
}

std::vector<MetricsRow> run_sweep(const json& base, const json& axes, int threads) {
  const auto points = expand_grid(base, axes);
  std::vector<config::ScenarioConfig> configs;
  for (const auto& p : points) configs.push_back(config::parse_config(p));

  std::vector<std::vector<MetricsRow>> results(configs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      try {
        results[i] = run_experiment(configs[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(configs.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::vector<MetricsRow> rows;
  for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
  return rows;
}

// ---------------------------------------------------------------------------
// Planning and solving

PlanOutput run_plan(const config::ScenarioConfig& cfg) {
  const auto scenario = planner_scenario(cfg);
  PlanOutput out;
  out.result = planner::run_algorithm1(scenario, cfg.plan.ddqn, cfg.plan.episodes,
                                       cfg.plan.rounds_per_episode);
  const double batch = static_cast<double>(cfg.batch_size());
  const auto epochs = static_cast<std::uint64_t>(cfg.training.epochs);
  for (const auto& pr : out.result.rows) {
    MetricsRow row;
    row.run_id = cfg.run_id;
    row.round = pr.episode * cfg.plan.rounds_per_episode + pr.round;
    row.protocol = "sflga";
    row.v = pr.cut;
    row.loss = kNaN;
    row.accuracy = kNaN;
    row.chi = pr.chi;
    row.psi = pr.psi;
    row.latency_s = pr.feasible ? pr.chi + pr.psi : kNaN;
    if (pr.feasible) {
      const auto up = static_cast<std::uint64_t>(
          wireless::payload_bits(cfg.network, pr.cut, batch, cfg.wire));
      const auto down = static_cast<std::uint64_t>(
          wireless::gradient_payload_bits(cfg.network, pr.cut, batch, cfg.wire));
      row.uplink_bytes = up * cfg.profiles.size() * epochs / 8;
      row.downlink_bytes = down * epochs / 8;
    }
    row.reward = pr.reward;
    row.seed = cfg.seed;
    out.rows.push_back(std::move(row));
  }
  return out;
}

void export_episode_rewards(const std::vector<double>& rewards, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "episode,reward\n";
  for (std::size_t e = 0; e < rewards.size(); ++e) out << e << "," << number(rewards[e]) << "\n";
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

ordered_json solve_problem(const config::ScenarioConfig& cfg) {
  wireless::ChannelState channel;
  if (!cfg.problem.gains.empty()) {
    channel.gains = cfg.problem.gains;
  } else {
    channel = wireless::sample_channel(
        cfg.profiles,
        derive_seed(cfg.seed, Stream::Channel, static_cast<std::uint64_t>(cfg.problem.round)));
  }
  const int v = cfg.problem.cut;
  const auto problem =
      solver::make_problem(cfg.profiles, cfg.system, channel, cfg.network, v, cfg.wire,
                           cfg.workload, cfg.training.latency_basis,
                           static_cast<double>(cfg.batch_size()));
  const auto a = solver::solve_allocation(problem, cfg.tolerances);
  ordered_json out;
  out["cut"] = v;
  out["privacy_ok"] = wireless::privacy_ok(cfg.network, v, cfg.epsilon);
  out["chi"] = a.chi;
  out["psi"] = a.psi;
  out["objective"] = solver::objective(problem, a);
  out["worst_violation"] = solver::worst_constraint_violation(problem, a);
  ordered_json clients = ordered_json::array();
  for (std::size_t n = 0; n < problem.clients(); ++n) {
    ordered_json c;
    c["gain"] = channel.gains[n];
    c["bandwidth_hz"] = a.bandwidth_hz[n];
    c["power_w"] = a.power_w[n];
    c["client_flops"] = a.client_flops[n];
    c["server_flops"] = a.server_flops[n];
    clients.push_back(std::move(c));
  }
  out["clients"] = std::move(clients);
  return out;
}

// ---------------------------------------------------------------------------
// Theory suite

namespace {

// Two clients drawn from the same three-class blob task with skewed labels:
// the first sees classes 0 and 1, the second classes 1 and 2.
std::vector<data::Dataset> skewed_clients(std::uint64_t seed) {
  const data::BlobSpec blobs{4, 3, 1.5, 0.7};
  const auto pool = data::gaussian_blobs(blobs, 400, derive_seed(seed, Stream::Data, 10),
                                         derive_seed(seed, Stream::Data, 11));
  std::vector<std::size_t> a;
  std::vector<std::size_t> b;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const int y = pool.labels[i];
    if (a.size() < 40 && y <= 1 && (y == 0 || i % 2 == 0)) {
      a.push_back(i);
    } else if (b.size() < 60 && y >= 1) {
      b.push_back(i);
    }
  }
  std::vector<data::Dataset> clients;
  for (const auto* idx : {&a, &b}) {
    auto batch = pool.take(*idx);
    clients.push_back({std::move(batch.inputs), std::move(batch.labels), 3});
  }
  return clients;
}

}  // namespace

theory::NetworkTask linear_diagnostic(std::uint64_t seed) {
  return theory::NetworkTask(nn::NetworkSpec::linear({4, 4, 3}), skewed_clients(seed));
}

theory::NetworkTask deep_linear_diagnostic(std::uint64_t seed) {
  return theory::NetworkTask(nn::NetworkSpec::linear({4, 4, 4, 4, 3}), skewed_clients(seed));
}

bool VerifyReport::passed() const {
  return stepsize_quadratic && stepsize_linear && quadratic_lemma.violations == 0 &&
         linear_lemma.violations == 0 && quadratic_theorem.holds && linear_theorem.holds;
}

std::string VerifyReport::text() const {
  std::ostringstream o;
  const auto constants = [&](const char* name, const theory::TheoryConstants& c, bool ok) {
    o << name << ": L=" << c.L << " sigma2=" << c.sigma2 << " eta=" << c.eta << " tau=" << c.tau
      << " stepsize_ok=" << (ok ? "yes" : "no") << "\n";
  };
  const auto lemma = [&](const char* name, const theory::Lemma1Report& r) {
    o << name << " one-round bound: " << r.violations << " violations over " << r.rounds
      << " rounds (max excess " << r.max_excess << ")\n";
  };
  const auto theorem = [&](const char* name, const theory::Theorem1Report& r) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r.rhs.size(); ++i) {
      worst = std::max(worst, r.mean_grad_norm2[i] - r.rhs[i].total);
    }
    o << name << " averaged bound: " << (r.holds ? "holds" : "VIOLATED") << " on "
      << r.rhs.size() << " seeds (max lhs - rhs " << worst << ")\n";
    if (!r.rhs.empty()) {
      const auto& t = r.rhs.front();
      o << "  first seed terms: initialization=" << t.initialization
        << " cutting_point=" << t.cutting_point << " variance=" << t.variance
        << " total=" << t.total << "\n";
    }
  };
  constants("quadratic", quadratic, stepsize_quadratic);
  lemma("quadratic", quadratic_lemma);
  theorem("quadratic", quadratic_theorem);
  constants("linear", linear, stepsize_linear);
  lemma("linear", linear_lemma);
  theorem("linear", linear_theorem);
  o << "linear F* surrogate: " << linear_f_star << "\n";
  o << "gradient gap per cut:";
  for (double g : gamma_curve) o << " " << g;
  o << "\n";
  o << "complexity terms: eta=" << complexity.eta << " init=" << complexity.initialization
    << " variance=" << complexity.variance << " drift=" << complexity.drift
    << " cutting_point=" << complexity.cutting_point << "\n";
  o << (passed() ? "PASS" : "FAIL") << "\n";
  return o.str();
}

std::string VerifyReport::csv() const {
  std::string out = "task,round,empirical,bound\n";
  const auto dump = [&](const char* name, const theory::Lemma1Report& r) {
    for (std::size_t i = 0; i < r.empirical.size(); ++i) {
      out += std::string(name) + "," + std::to_string(i) + "," + number(r.empirical[i]) + "," +
             number(r.bound[i]) + "\n";
    }
  };
  dump("quadratic", quadratic_lemma);
  dump("linear", linear_lemma);
  return out;
}

VerifyReport run_verification(const VerifyOptions& options) {
  require(options.seeds >= 2 && options.rounds >= 1, "need at least two seeds and one round");
  VerifyReport rep;

  // Deterministic quadratic: each seed starts from a different point.
  {
    const theory::Quadratic task(1.0, 3);
    auto& c = rep.quadratic;
    c.eta = 0.1;
    c.tau = 2;
    c.rho = {1.0};
    const std::vector<double> origin(3, 0.0);
    c.L = theory::estimate_L(task, 8, origin, 2.0, derive_seed(options.seed, Stream::Theory, 1));
    c.sigma2 = theory::estimate_sigma2(task, 2, origin, 1, options.seed);
    rep.stepsize_quadratic = theory::stepsize_ok(c.L, c.eta, c.tau);
    std::vector<theory::Trace> traces;
    int violations = 0;
    for (int s = 0; s < options.seeds; ++s) {
      Rng rng = make_rng(options.seed, Stream::Theory, 100 + static_cast<std::uint64_t>(s));
      std::vector<double> w0(3);
      for (double& x : w0) x = 4.0 * uniform01(rng) - 2.0;
      traces.push_back(theory::trace_quadratic(task, w0, c.eta, c.tau, options.rounds));
      const theory::Trace one[] = {traces.back()};
      violations += theory::lemma1_check(c, one, true).violations;
    }
    rep.quadratic_lemma = theory::lemma1_check(c, traces, true);
    rep.quadratic_lemma.violations += violations;
    rep.quadratic_theorem = theory::theorem1_check(c, traces, 0.0);
  }

  // Stochastic two-client linear-softmax task trained with gradient aggregation.
  {
    const auto task = linear_diagnostic(options.seed);
    const auto init = nn::init_params(task.spec(), derive_seed(options.seed, Stream::Init, 7));
    const auto w0 = init.values();
    auto& c = rep.linear;
    c.tau = 2;
    c.rho = {task.rho().begin(), task.rho().end()};
    c.L = theory::estimate_L(task, 24, w0, 0.5, derive_seed(options.seed, Stream::Theory, 2));
    // Largest step that keeps the step-size condition with a 10% margin.
    const double limit =
        std::sqrt(0.2 / (2.0 * c.L * c.L * c.tau * (c.tau - 1.0)));
    c.eta = std::min(0.05, 0.9 * limit);
    const theory::SplitRun run{1, c.tau, c.eta, 8, options.rounds};
    c.sigma2 = theory::estimate_sigma2(task, 200, w0, run.batch, options.seed);
    rep.stepsize_linear = theory::stepsize_ok(c.L, c.eta, c.tau);

    std::vector<theory::Trace> traces;
    for (int s = 0; s < options.seeds; ++s) {
      traces.push_back(theory::trace_sflga(
          task, run, init, derive_seed(options.seed, Stream::Theory, 200 + static_cast<std::uint64_t>(s))));
    }
    rep.linear_lemma = theory::lemma1_check(c, traces, false);
    rep.linear_f_star = theory::best_loss_surrogate(task, {w0.begin(), w0.end()}, 0.5, 4000);
    rep.linear_theorem = theory::theorem1_check(c, traces, rep.linear_f_star);

    std::vector<double> gammas;
    for (const auto& r : traces.front()) gammas.push_back(r.gamma);
    rep.complexity = theory::complexity_terms(c.sigma2, static_cast<int>(task.clients()), c.tau,
                                              options.rounds, gammas);
  }

  // Gradient gap per cut on the deeper linear network, 5-seed means.
  {
    const auto task = deep_linear_diagnostic(options.seed);
    const auto init = nn::init_params(task.spec(), derive_seed(options.seed, Stream::Init, 8));
    for (int v = 1; v <= task.spec().layers() - 1; ++v) {
      double total = 0.0;
      for (int s = 0; s < 5; ++s) {
        const theory::SplitRun run{v, 1, 0.05, 8, 20};
        total += theory::measure_gamma(task, run, init,
                                       derive_seed(options.seed, Stream::Theory, 300 + static_cast<std::uint64_t>(s)));
      }
      rep.gamma_curve.push_back(total / 5.0);
    }
    rep.linear.gamma_curve = rep.gamma_curve;
  }
  return rep;
}

}  // namespace sflga::experiment
