#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sflga/error.hpp"
#include "sflga/experiment.hpp"

using namespace sflga;
using namespace sflga::experiment;
using nlohmann::json;

namespace {

// A small, fast scenario.
json small() {
  return {{"clients", 3},
          {"network", {{"dims", {8, 6, 4, 3}}}},
          {"dataset", {{"classes", 3}, {"eval_samples", 60}}},
          {"partition", {{"samples_per_client", {20, 20, 20}}}},
          {"training", {{"rounds", 4}, {"batch_size", 10}}}};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("CSV header and empty export") {
  CHECK(format_rows({}, Format::Csv) ==
        "run_id,round,protocol,v,loss,accuracy,chi,psi,latency_s,uplink_bytes,downlink_bytes,reward,seed\n");
  CHECK(format_rows({}, Format::Jsonl).empty());
}

TEST_CASE("JSONL round-trips rows exactly, NaN included") {
  MetricsRow a{"r", 3, "sflga", 2, 0.1 + 0.2, 0.75, 1.0 / 3.0, 2e-7, 0.5, 123, 456, std::nan(""), 9};
  MetricsRow b = a;
  b.reward = -12.5;
  b.round = 4;
  const std::vector<MetricsRow> rows{a, b};
  CHECK(parse_jsonl(format_rows(rows, Format::Jsonl)) == rows);
  const auto line = format_rows({a}, Format::Jsonl);
  const auto keys = json::parse(line);
  // Keys appear in CSV column order.
  std::size_t last = 0;
  for (const char* k : {"run_id", "round", "protocol", "v", "loss", "accuracy", "chi", "psi",
                        "latency_s", "uplink_bytes", "downlink_bytes", "reward", "seed"}) {
    const auto at = line.find("\"" + std::string(k) + "\":");
    REQUIRE(at != std::string::npos);
    CHECK(at >= last);
    last = at;
  }
  CHECK(keys["reward"].is_null());
}

TEST_CASE("grid expansion follows axis order and tags run ids") {
  json base = small();
  base["run_id"] = "bw";
  const json axes = {{"system.bandwidth_hz", {5e6, 10e6}}, {"training.protocol", {"sflga", "fl", "sfl"}}};
  const auto points = expand_grid(base, axes);
  REQUIRE(points.size() == 6);
  std::set<std::pair<double, std::string>> combos;
  for (std::size_t i = 0; i < points.size(); ++i) {
    CHECK(points[i]["run_id"] == "bw-" + std::to_string(i));
    combos.insert({points[i]["system"]["bandwidth_hz"].get<double>(),
                   points[i]["training"]["protocol"].get<std::string>()});
  }
  CHECK(combos.size() == 6);
  CHECK_THROWS_AS(expand_grid(base, json{{"seed", json::array()}}), Error);
}

TEST_CASE("partition conserves samples") {
  const auto cfg = config::parse_config(small());
  const auto d = make_dataset(cfg, cfg.seed);
  REQUIRE(d.clients.size() == 3);
  for (const auto& c : d.clients) CHECK(c.size() == 20);
  CHECK(d.eval.size() == 60);
}

TEST_CASE("runs are deterministic per seed and emit one row per round") {
  const auto cfg = config::parse_config(small());
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  REQUIRE(a.size() == 4);
  CHECK(a == b);
  for (int t = 0; t < 4; ++t) CHECK(a[static_cast<std::size_t>(t)].round == t);
  CHECK(std::isnan(a[0].reward));
  auto other = small();
  other["seed"] = 2;
  CHECK_FALSE(run_experiment(config::parse_config(other)) == a);
}

TEST_CASE("one client: SFL-GA and SFL report the same losses") {
  auto doc = small();
  doc["clients"] = 1;
  doc["partition"]["samples_per_client"] = {30};
  const auto ga = run_experiment(config::parse_config(doc));
  doc["training"]["protocol"] = "sfl";
  const auto sfl = run_experiment(config::parse_config(doc));
  for (std::size_t t = 0; t < ga.size(); ++t) {
    CHECK(ga[t].loss == sfl[t].loss);
    CHECK(ga[t].accuracy == sfl[t].accuracy);
  }
}

TEST_CASE("sweep rows come back in grid order regardless of threads") {
  const json axes = {{"training.cut", {1, 2}}, {"seed", {1, 2}}};
  const auto one = run_sweep(small(), axes, 1);
  const auto four = run_sweep(small(), axes, 4);
  CHECK(one == four);
  CHECK(one.size() == 16);
  CHECK(one[4].run_id == "run-1");
}

TEST_CASE("random cut policy only picks privacy-feasible cuts") {
  auto doc = small();
  doc["training"]["cut_policy"] = "random";
  doc["objective"] = {{"epsilon", 0.0}};
  std::set<int> cuts;
  for (const auto& r : run_experiment(config::parse_config(doc))) cuts.insert(r.v);
  for (int v : cuts) CHECK((v >= 1 && v <= 2));
}

TEST_CASE("metrics files are byte-identical across runs") {
  const auto cfg = config::parse_config(small());
  const auto dir = std::filesystem::temp_directory_path();
  const auto p1 = (dir / "sflga_m1.csv").string();
  const auto p2 = (dir / "sflga_m2.csv").string();
  export_metrics(run_experiment(cfg), p1, Format::Csv);
  export_metrics(run_experiment(cfg), p2, Format::Csv);
  CHECK(slurp(p1) == slurp(p2));
  CHECK_THROWS_AS(export_metrics({}, "/nonexistent/dir/m.csv", Format::Csv), Error);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("solve reports a consistent allocation") {
  auto doc = small();
  doc["problem"] = {{"cut", 2}, {"gains", {1e-10, 2e-10, 3e-11}}};
  const auto out = solve_problem(config::parse_config(doc));
  CHECK(out["cut"] == 2);
  CHECK(out["clients"].size() == 3);
  CHECK(out["objective"].get<double>() == doctest::Approx(out["chi"].get<double>() + out["psi"].get<double>()));
  double bw = 0.0;
  for (const auto& c : out["clients"]) bw += c["bandwidth_hz"].get<double>();
  CHECK(bw <= 20e6 * (1 + 1e-12));
}

}
