// Command-line front end. Everything goes through the C API in sflga.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sflga/sflga.h"

namespace {

int report(sflga_status status) {
  if (status == SFLGA_OK) return 0;
  std::fprintf(stderr, "sflga: %s: %s\n", sflga_status_string(status), sflga_last_error());
  return static_cast<int>(status) + 1;
}

std::string infer_format(const std::string& format, const std::string& path) {
  if (!format.empty()) return format;
  const auto ends = [&](const char* suffix) {
    const std::string s(suffix);
    return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  return ends(".jsonl") || ends(".json") ? "jsonl" : "csv";
}

// "a.b=value": value is taken as JSON when it parses, otherwise as a string.
sflga_status apply_override(sflga_config* cfg, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) {
    std::fprintf(stderr, "sflga: --set expects path=value, got '%s'\n", item.c_str());
    return SFLGA_INVALID_ARGUMENT;
  }
  const std::string path = item.substr(0, eq);
  const std::string value = item.substr(eq + 1);
  sflga_status st = sflga_config_set(cfg, path.c_str(), value.c_str());
  if (st == SFLGA_PARSE_ERROR) {
    std::string quoted = "\"";
    for (char c : value) {
      if (c == '"' || c == '\\') quoted += '\\';
      quoted += c;
    }
    quoted += '"';
    st = sflga_config_set(cfg, path.c_str(), quoted.c_str());
  }
  return st;
}

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", path, "scenario JSON file (omit for defaults)");
    cmd->add_option("-s,--set", overrides, "override a config field, e.g. system.bandwidth_hz=5e6");
  }

  sflga_status load(sflga_config** cfg) const {
    sflga_status st = path.empty() ? sflga_config_parse("{}", cfg) : sflga_config_load(path.c_str(), cfg);
    if (st != SFLGA_OK) return st;
    for (const auto& item : overrides) {
      st = apply_override(*cfg, item);
      if (st != SFLGA_OK) return st;
    }
    return SFLGA_OK;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split federated learning with gradient aggregation: simulator and optimizer"};
  app.require_subcommand(1);

  ConfigArgs train_cfg;
  std::string train_out;
  std::string train_format;
  auto* train = app.add_subcommand("train", "run one training scenario");
  train_cfg.attach(train);
  train->add_option("-o,--out", train_out, "metrics file")->required();
  train->add_option("-f,--format", train_format, "csv or jsonl (default from extension)");

  ConfigArgs sweep_cfg;
  std::string sweep_out;
  std::string sweep_format;
  std::string axes_file;
  std::vector<std::string> axis_items;
  int threads = 1;
  auto* sweep = app.add_subcommand("sweep", "run a grid of scenarios over config axes");
  sweep_cfg.attach(sweep);
  sweep->add_option("-o,--out", sweep_out, "metrics file")->required();
  sweep->add_option("-f,--format", sweep_format, "csv or jsonl (default from extension)");
  sweep->add_option("--axes", axes_file, "JSON object mapping dotted paths to value arrays");
  sweep->add_option("-a,--axis", axis_items, "one axis as path=[v1,v2,...]");
  sweep->add_option("-j,--threads", threads, "parallel workers")->check(CLI::PositiveNumber);

  ConfigArgs plan_cfg;
  std::string plan_out;
  std::string plan_format;
  std::string checkpoint;
  std::string rewards;
  auto* plan = app.add_subcommand("plan", "train the cut-point policy");
  plan_cfg.attach(plan);
  plan->add_option("-o,--out", plan_out, "per-round metrics file")->required();
  plan->add_option("-f,--format", plan_format, "csv or jsonl (default from extension)");
  plan->add_option("--checkpoint", checkpoint, "write the trained policy here");
  plan->add_option("--rewards", rewards, "write per-episode rewards (CSV) here");

  ConfigArgs solve_cfg;
  std::string solve_out;
  auto* solve = app.add_subcommand("solve", "solve one resource-allocation instance");
  solve_cfg.attach(solve);
  solve->add_option("-o,--out", solve_out, "write the allocation JSON here instead of stdout");

  int seeds = 20;
  int rounds = 50;
  std::uint64_t verify_seed = 1;
  std::string verify_csv;
  auto* verify = app.add_subcommand("verify", "check the convergence bounds on diagnostic tasks");
  verify->add_option("--seeds", seeds, "seeds per task")->check(CLI::Range(2, 100000));
  verify->add_option("--rounds", rounds, "rounds per seed")->check(CLI::PositiveNumber);
  verify->add_option("--seed", verify_seed, "master seed");
  verify->add_option("--csv", verify_csv, "write per-round empirical vs bound rows here");

  CLI11_PARSE(app, argc, argv);

  sflga_config* cfg = nullptr;
  sflga_status st = SFLGA_OK;
  int code = 0;

  if (*train) {
    st = train_cfg.load(&cfg);
    if (st == SFLGA_OK) {
      st = sflga_train(cfg, train_out.c_str(), infer_format(train_format, train_out).c_str());
    }
    code = report(st);
  } else if (*sweep) {
    st = sweep_cfg.load(&cfg);
    std::string axes = "{}";
    if (st == SFLGA_OK && !axes_file.empty()) {
      std::ifstream in(axes_file);
      if (!in) {
        std::fprintf(stderr, "sflga: cannot open '%s'\n", axes_file.c_str());
        sflga_config_free(cfg);
        return SFLGA_IO_ERROR + 1;
      }
      axes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    if (st == SFLGA_OK && !axis_items.empty()) {
      // Splice path=[...] items into the axes object text.
      std::string extra;
      for (const auto& item : axis_items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
          std::fprintf(stderr, "sflga: --axis expects path=[values], got '%s'\n", item.c_str());
          sflga_config_free(cfg);
          return SFLGA_INVALID_ARGUMENT + 1;
        }
        if (!extra.empty()) extra += ",";
        extra += "\"" + item.substr(0, eq) + "\":" + item.substr(eq + 1);
      }
      const auto close = axes.rfind('}');
      const bool empty = axes.find_first_not_of(" \t\r\n{}") == std::string::npos;
      axes = axes.substr(0, close) + (empty ? "" : ",") + extra + "}";
    }
    if (st == SFLGA_OK) {
      st = sflga_sweep(cfg, axes.c_str(), threads, sweep_out.c_str(),
                       infer_format(sweep_format, sweep_out).c_str());
    }
    code = report(st);
  } else if (*plan) {
    st = plan_cfg.load(&cfg);
    if (st == SFLGA_OK) {
      st = sflga_plan(cfg, plan_out.c_str(), infer_format(plan_format, plan_out).c_str(),
                      checkpoint.empty() ? nullptr : checkpoint.c_str(),
                      rewards.empty() ? nullptr : rewards.c_str());
    }
    code = report(st);
  } else if (*solve) {
    st = solve_cfg.load(&cfg);
    char* text = nullptr;
    if (st == SFLGA_OK) st = sflga_solve(cfg, &text);
    if (st == SFLGA_OK) {
      if (solve_out.empty()) {
        std::cout << text << "\n";
      } else {
        std::ofstream out(solve_out);
        out << text << "\n";
        if (!out) {
          std::fprintf(stderr, "sflga: cannot write '%s'\n", solve_out.c_str());
          code = SFLGA_IO_ERROR + 1;
        }
      }
    }
    sflga_string_free(text);
    if (code == 0) code = report(st);
  } else if (*verify) {
    char* text = nullptr;
    char* csv = nullptr;
    int passed = 0;
    st = sflga_verify(seeds, rounds, verify_seed, &text, verify_csv.empty() ? nullptr : &csv, &passed);
    if (st == SFLGA_OK) {
      std::cout << text;
      if (csv) {
        std::ofstream out(verify_csv);
        out << csv;
        if (!out) {
          std::fprintf(stderr, "sflga: cannot write '%s'\n", verify_csv.c_str());
          code = SFLGA_IO_ERROR + 1;
        }
      }
      if (code == 0 && !passed) code = 1;
    } else {
      code = report(st);
    }
    sflga_string_free(text);
    sflga_string_free(csv);
  }
  sflga_config_free(cfg);
  return code;
}
