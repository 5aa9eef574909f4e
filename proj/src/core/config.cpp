#include "sflga/config.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>

#include "sflga/error.hpp"
#include "sflga/random.hpp"

namespace sflga::config {

namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  fail(ErrorCode::Validation, path + ": " + what);
}

// Reads the keys of one JSON object, remembering which were consumed so
// leftovers can be reported as unknown.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) invalid(where(), "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception&) {
      invalid(at(key), "wrong type");
    }
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_number()) invalid(at(key), "expected a number");
    return v.get<double>();
  }

  // A number applied to every client, or one value per client.
  std::vector<double> per_client(const std::string& key, double fallback, int clients) {
    if (!has(key)) return std::vector<double>(static_cast<std::size_t>(clients), fallback);
    const auto& v = obj_.at(key);
    if (v.is_number()) return std::vector<double>(static_cast<std::size_t>(clients), v.get<double>());
    if (!v.is_array()) invalid(at(key), "expected a number or an array");
    if (v.size() != static_cast<std::size_t>(clients)) {
      invalid(at(key), "expected " + std::to_string(clients) + " entries");
    }
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) invalid(at(key), "entries must be numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::string choice(const std::string& key, const std::string& fallback,
                     std::initializer_list<const char*> options) {
    const std::string v = get<std::string>(key, fallback);
    for (const char* o : options) {
      if (v == o) return v;
    }
    std::string list;
    for (const char* o : options) list += std::string(list.empty() ? "" : ", ") + o;
    invalid(at(key), "'" + v + "' is not one of: " + list);
  }

  Fields sub(const std::string& key) {
    static const json empty = json::object();
    if (!has(key)) return Fields(empty, at(key));
    return Fields(obj_.at(key), at(key));
  }

  std::string at(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) invalid(at(key), "unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void positive(double v, const std::string& path) {
  if (!(v > 0.0)) invalid(path, "must be positive");
}

}  // namespace

std::string to_string(CutPolicy p) {
  switch (p) {
    case CutPolicy::Fixed: return "fixed";
    case CutPolicy::Random: return "random";
    case CutPolicy::Ddqn: return "ddqn";
  }
  return "fixed";
}

std::size_t ScenarioConfig::batch_size() const {
  std::size_t smallest = training.batch_size;
  for (std::size_t d : partition.samples_per_client) {
    if (d > 0) smallest = std::min(smallest, d);
  }
  return smallest;
}

std::size_t ScenarioConfig::total_samples() const {
  std::size_t total = 0;
  for (std::size_t d : partition.samples_per_client) total += d;
  return total;
}

ScenarioConfig parse_config(const json& doc) {
  ScenarioConfig c;
  Fields root(doc, "");
  c.run_id = root.get<std::string>("run_id", c.run_id);
  c.seed = root.get<std::uint64_t>("seed", c.seed);
  c.clients = root.get<int>("clients", c.clients);
  if (c.clients < 1) invalid("clients", "must be at least 1");
  const auto n = static_cast<std::size_t>(c.clients);

  {
    auto f = root.sub("network");
    const auto dims = f.get<std::vector<std::size_t>>("dims", {784, 128, 10});
    const std::string act = f.choice("activation", "relu", {"relu", "identity"});
    if (dims.size() < 3) invalid(f.at("dims"), "need at least two layers so a cut exists");
    if (std::find(dims.begin(), dims.end(), std::size_t{0}) != dims.end()) {
      invalid(f.at("dims"), "dims must be positive");
    }
    c.network = act == "relu" ? nn::NetworkSpec::classifier(dims) : nn::NetworkSpec::linear(dims);
    f.finish();
  }
  {
    auto f = root.sub("dataset");
    auto& d = c.dataset;
    d.source = f.choice("source", "synthetic", {"synthetic", "idx"}) == "idx" ? DataSource::Idx
                                                                               : DataSource::Synthetic;
    d.train_images = f.get<std::string>("train_images", "");
    d.train_labels = f.get<std::string>("train_labels", "");
    d.eval_images = f.get<std::string>("eval_images", "");
    d.eval_labels = f.get<std::string>("eval_labels", "");
    d.eval_samples = f.get<std::size_t>("eval_samples", d.eval_samples);
    d.classes = f.get<int>("classes", static_cast<int>(c.network.output_dim()));
    d.separation = f.number("separation", d.separation);
    d.noise = f.number("noise", d.noise);
    if (d.classes < 1 || static_cast<std::size_t>(d.classes) > c.network.output_dim()) {
      invalid(f.at("classes"), "must be within 1..network output width");
    }
    if (d.eval_samples == 0) invalid(f.at("eval_samples"), "must be positive");
    if (d.source == DataSource::Idx) {
      for (const auto* key : {"train_images", "train_labels", "eval_images", "eval_labels"}) {
        const std::string path = f.get<std::string>(key, "");
        if (path.empty()) invalid(f.at(key), "required for idx datasets");
        if (!std::ifstream(path)) invalid(f.at(key), "file '" + path + "' does not exist");
      }
    }
    positive(d.noise, f.at("noise"));
    f.finish();
  }
  {
    auto f = root.sub("partition");
    auto& p = c.partition;
    p.kind = f.choice("kind", "iid", {"iid", "label_skew"}) == "label_skew" ? PartitionKind::LabelSkew
                                                                           : PartitionKind::Iid;
    p.concentration = f.number("concentration", p.concentration);
    positive(p.concentration, f.at("concentration"));
    const auto sizes = f.per_client("samples_per_client", 100.0, c.clients);
    for (double s : sizes) {
      if (s < 1.0 || s != static_cast<double>(static_cast<std::size_t>(s))) {
        invalid(f.at("samples_per_client"), "entries must be positive integers");
      }
      p.samples_per_client.push_back(static_cast<std::size_t>(s));
    }
    f.finish();
  }
  {
    auto f = root.sub("system");
    auto& s = c.system;
    s.bandwidth_hz = f.number("bandwidth_hz", 20e6);
    s.noise_w_per_hz = wireless::dbm_to_watts(f.number("noise_dbm_per_hz", -174.0));
    s.server_power_w = wireless::dbm_to_watts(f.number("server_power_dbm", 33.0));
    s.server_flops = f.number("server_flops", 100e9);
    positive(s.bandwidth_hz, f.at("bandwidth_hz"));
    positive(s.server_flops, f.at("server_flops"));
    f.finish();
  }
  {
    auto f = root.sub("client");
    const auto power = f.per_client("power_dbm", 25.0, c.clients);
    const auto flops = f.per_client("flops", 0.1e9, c.clients);
    std::vector<double> distance;
    const double lo = 0.05;
    const double hi = 0.5;
    auto range = f.get<std::vector<double>>("distance_range_km", {lo, hi});
    if (range.size() != 2 || !(range[0] > 0.0) || !(range[1] >= range[0])) {
      invalid(f.at("distance_range_km"), "expected [min, max] with 0 < min <= max");
    }
    if (f.has("distance_km")) {
      distance = f.per_client("distance_km", 0.0, c.clients);
    } else {
      Rng rng = make_rng(c.seed, Stream::Distance);
      for (std::size_t i = 0; i < n; ++i) {
        distance.push_back(range[0] + (range[1] - range[0]) * uniform01(rng));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      wireless::ClientProfile p;
      p.samples = static_cast<double>(c.partition.samples_per_client[i]);
      p.power_max_w = wireless::dbm_to_watts(power[i]);
      p.cpu_flops = flops[i];
      p.distance_km = distance[i];
      positive(p.cpu_flops, f.at("flops"));
      positive(p.distance_km, f.at("distance_km"));
      c.profiles.push_back(p);
    }
    f.finish();
  }
  if (root.has("workload")) {
    auto f = root.sub("workload");
    wireless::Workload w;
    w.client_fwd = f.number("client_fwd", 0.0);
    w.server_fwd = f.number("server_fwd", 0.0);
    w.client_bwd = f.number("client_bwd", 2.0 * w.client_fwd);
    w.server_bwd = f.number("server_bwd", 2.0 * w.server_fwd);
    for (double x : {w.client_fwd, w.client_bwd, w.server_fwd, w.server_bwd}) {
      if (!(x >= 0.0)) invalid("workload", "FLOP counts must be non-negative");
    }
    c.workload = w;
    f.finish();
  }
  {
    auto f = root.sub("wire");
    c.wire.activation_bits = f.get<int>("activation_bits", c.wire.activation_bits);
    c.wire.label_bits = f.get<int>("label_bits", c.wire.label_bits);
    c.param_bits = f.get<int>("param_bits", c.param_bits);
    for (const auto* key : {"activation_bits", "label_bits", "param_bits"}) {
      const int bits = f.get<int>(key, 64);
      if (bits < 0 || bits % 8 != 0) invalid(f.at(key), "must be a non-negative multiple of 8");
    }
    f.finish();
  }
  {
    auto f = root.sub("training");
    auto& t = c.training;
    t.protocol = protocol_from_string(f.choice("protocol", "sflga", {"sflga", "sfl", "psl", "fl"}));
    const std::string policy = f.choice("cut_policy", "fixed", {"fixed", "random", "ddqn"});
    t.cut_policy = policy == "random" ? CutPolicy::Random
                   : policy == "ddqn" ? CutPolicy::Ddqn
                                      : CutPolicy::Fixed;
    t.cut = f.get<int>("cut", t.cut);
    t.epochs = f.get<int>("epochs", t.epochs);
    t.eta = f.number("eta", t.eta);
    t.rounds = f.get<int>("rounds", t.rounds);
    t.batch_size = f.get<std::size_t>("batch_size", t.batch_size);
    t.resample_batches = f.get<bool>("resample_batches", t.resample_batches);
    t.latency_basis = f.choice("latency_basis", "dataset", {"dataset", "minibatch"}) == "minibatch"
                          ? wireless::SampleBasis::MiniBatch
                          : wireless::SampleBasis::LocalDataset;
    t.allocation = f.choice("allocation", "optimal", {"optimal", "equal"}) == "equal"
                       ? AllocationMode::Equal
                       : AllocationMode::Optimal;
    if (t.cut < 1 || t.cut > c.network.layers() - 1) {
      invalid(f.at("cut"), "must be within 1.." + std::to_string(c.network.layers() - 1));
    }
    if (t.epochs < 1) invalid(f.at("epochs"), "must be at least 1");
    if (t.rounds < 0) invalid(f.at("rounds"), "must be non-negative");
    if (t.batch_size < 1) invalid(f.at("batch_size"), "must be positive");
    positive(t.eta, f.at("eta"));
    if (t.protocol == Protocol::Psl && t.cut_policy != CutPolicy::Fixed) {
      invalid(f.at("cut_policy"), "psl keeps diverging client models and needs a fixed cut");
    }
    f.finish();
  }
  {
    auto f = root.sub("objective");
    c.weight = f.number("weight", c.weight);
    c.epsilon = f.number("epsilon", c.epsilon);
    c.gamma.kappa = f.number("gamma_kappa", c.gamma.kappa);
    c.gamma.table = f.get<std::vector<double>>("gamma_table", {});
    c.plan.ddqn.penalty = f.number("penalty", c.plan.ddqn.penalty);
    if (c.weight < 0.0) invalid(f.at("weight"), "must be non-negative");
    if (c.epsilon < 0.0) invalid(f.at("epsilon"), "must be non-negative");
    if (c.gamma.kappa < 0.0) invalid(f.at("gamma_kappa"), "must be non-negative");
    if (!c.gamma.table.empty() &&
        c.gamma.table.size() != static_cast<std::size_t>(c.network.layers() - 1)) {
      invalid(f.at("gamma_table"), "needs one entry per cut");
    }
    positive(c.plan.ddqn.penalty, f.at("penalty"));
    f.finish();
  }
  {
    auto f = root.sub("solver");
    c.tolerances.chi_abs = f.number("chi_abs", c.tolerances.chi_abs);
    c.tolerances.rate_rel = f.number("rate_rel", c.tolerances.rate_rel);
    c.tolerances.multiplier_rel = f.number("multiplier_rel", c.tolerances.multiplier_rel);
    positive(c.tolerances.chi_abs, f.at("chi_abs"));
    positive(c.tolerances.rate_rel, f.at("rate_rel"));
    positive(c.tolerances.multiplier_rel, f.at("multiplier_rel"));
    f.finish();
  }
  {
    auto f = root.sub("ddqn");
    auto& q = c.plan.ddqn;
    q.hidden = f.get<std::vector<std::size_t>>("hidden", q.hidden);
    q.discount = f.number("discount", q.discount);
    q.explore_start = f.number("explore_start", q.explore_start);
    q.explore_end = f.number("explore_end", q.explore_end);
    q.explore_fraction = f.number("explore_fraction", q.explore_fraction);
    q.replay_capacity = f.get<std::size_t>("replay_capacity", q.replay_capacity);
    q.minibatch = f.get<std::size_t>("minibatch", q.minibatch);
    q.target_period = f.get<int>("target_period", q.target_period);
    q.learning_rate = f.number("learning_rate", q.learning_rate);
    q.grad_clip = f.number("grad_clip", q.grad_clip);
    c.plan.episodes = f.get<int>("episodes", c.plan.episodes);
    c.plan.rounds_per_episode = f.get<int>("rounds_per_episode", c.plan.rounds_per_episode);
    c.plan.checkpoint = f.get<std::string>("checkpoint", "");
    if (q.discount < 0.0 || q.discount > 1.0) invalid(f.at("discount"), "must be within [0, 1]");
    for (const auto* key : {"explore_start", "explore_end", "explore_fraction"}) {
      const double v = f.number(key, 0.5);
      if (v < 0.0 || v > 1.0) invalid(f.at(key), "must be within [0, 1]");
    }
    if (q.replay_capacity < 1) invalid(f.at("replay_capacity"), "must be positive");
    if (q.minibatch < 1) invalid(f.at("minibatch"), "must be positive");
    if (q.target_period < 1) invalid(f.at("target_period"), "must be positive");
    positive(q.learning_rate, f.at("learning_rate"));
    if (q.grad_clip < 0.0) invalid(f.at("grad_clip"), "must be non-negative");
    if (c.plan.episodes < 1) invalid(f.at("episodes"), "must be at least 1");
    if (c.plan.rounds_per_episode < 1) invalid(f.at("rounds_per_episode"), "must be at least 1");
    for (std::size_t h : q.hidden) {
      if (h == 0) invalid(f.at("hidden"), "widths must be positive");
    }
    f.finish();
  }
  {
    auto f = root.sub("problem");
    auto& p = c.problem;
    p.cut = f.get<int>("cut", c.training.cut);
    p.gains = f.get<std::vector<double>>("gains", {});
    p.round = f.get<int>("round", 0);
    if (p.cut < 1 || p.cut > c.network.layers() - 1) invalid(f.at("cut"), "cut outside 1..V-1");
    if (!p.gains.empty() && p.gains.size() != n) {
      invalid(f.at("gains"), "expected one gain per client");
    }
    for (double g : p.gains) positive(g, f.at("gains"));
    if (p.round < 0) invalid(f.at("round"), "must be non-negative");
    f.finish();
  }
  root.finish();

  if (c.dataset.source == DataSource::Synthetic && c.total_samples() == 0) {
    invalid("partition.samples_per_client", "no samples");
  }
  return c;
}

ScenarioConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = text.empty() ? json::object() : json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Parse, std::string("config: ") + e.what());
  }
  return parse_config(doc);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return text.empty() ? json::object() : json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Parse, path + ": " + e.what());
  }
}

ScenarioConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

void set_path(json& doc, const std::string& dotted, const json& value) {
  require(!dotted.empty(), "empty config path");
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!key.empty(), "malformed config path '" + dotted + "'");
    if (!node->is_object()) {
      fail(ErrorCode::Validation, dotted + ": parent is not an object");
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace sflga::config
