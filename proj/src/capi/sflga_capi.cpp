#include "sflga/sflga.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include <json.hpp>

#include "sflga/config.hpp"
#include "sflga/error.hpp"
#include "sflga/experiment.hpp"

using nlohmann::json;

struct sflga_config {
  json doc;
  sflga::config::ScenarioConfig parsed;
};

struct sflga_run {
  sflga::experiment::TrainingRun run;
};

namespace {

thread_local std::string last_error;

template <class F>
sflga_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return SFLGA_OK;
  } catch (const sflga::Error& e) {
    last_error = e.what();
    return static_cast<sflga_status>(e.code());
  } catch (const json::exception& e) {
    last_error = e.what();
    return SFLGA_PARSE_ERROR;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return SFLGA_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SFLGA_INTERNAL_ERROR;
  } catch (...) {
    last_error = "unknown failure";
    return SFLGA_INTERNAL_ERROR;
  }
}

void need(const void* p, const char* name) {
  if (p == nullptr) sflga::fail(sflga::ErrorCode::InvalidArgument, std::string(name) + " is null");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_json(const char* text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    sflga::fail(sflga::ErrorCode::Parse, e.what());
  }
}

sflga::experiment::Format format_of(const char* format) {
  return sflga::experiment::format_from_string(format ? format : "csv");
}

}  // namespace

extern "C" {

const char* sflga_status_string(sflga_status status) {
  if (status == SFLGA_OK) return "ok";
  if (status < SFLGA_INVALID_ARGUMENT || status > SFLGA_INTERNAL_ERROR) return "unknown";
  return sflga::to_string(static_cast<sflga::ErrorCode>(status));
}

const char* sflga_last_error(void) { return last_error.c_str(); }

void sflga_string_free(char* text) { std::free(text); }

sflga_status sflga_config_load(const char* path, sflga_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto doc = sflga::config::read_json_file(path);
    auto parsed = sflga::config::parse_config(doc);
    *out = new sflga_config{std::move(doc), std::move(parsed)};
  });
}

sflga_status sflga_config_parse(const char* json_text, sflga_config** out) {
  return guarded([&] {
    need(json_text, "json_text");
    need(out, "out");
    auto doc = parse_json(json_text);
    auto parsed = sflga::config::parse_config(doc);
    *out = new sflga_config{std::move(doc), std::move(parsed)};
  });
}

sflga_status sflga_config_set(sflga_config* config, const char* path, const char* json_value) {
  return guarded([&] {
    need(config, "config");
    need(path, "path");
    need(json_value, "json_value");
    json doc = config->doc;
    sflga::config::set_path(doc, path, parse_json(json_value));
    config->parsed = sflga::config::parse_config(doc);
    config->doc = std::move(doc);
  });
}

sflga_status sflga_config_dump(const sflga_config* config, char** json_out) {
  return guarded([&] {
    need(config, "config");
    need(json_out, "json_out");
    *json_out = copy_string(config->doc.dump(2));
  });
}

void sflga_config_free(sflga_config* config) { delete config; }

sflga_status sflga_train(const sflga_config* config, const char* out_path, const char* format) {
  return guarded([&] {
    need(config, "config");
    need(out_path, "out_path");
    const auto fmt = format_of(format);
    const auto rows = sflga::experiment::run_experiment(config->parsed);
    sflga::experiment::export_metrics(rows, out_path, fmt);
  });
}

sflga_status sflga_sweep(const sflga_config* config, const char* axes_json, int threads,
                         const char* out_path, const char* format) {
  return guarded([&] {
    need(config, "config");
    need(axes_json, "axes_json");
    need(out_path, "out_path");
    const auto fmt = format_of(format);
    const auto rows = sflga::experiment::run_sweep(config->doc, parse_json(axes_json),
                                                   threads > 0 ? threads : 1);
    sflga::experiment::export_metrics(rows, out_path, fmt);
  });
}

sflga_status sflga_plan(const sflga_config* config, const char* out_path, const char* format,
                        const char* checkpoint_path, const char* rewards_path) {
  return guarded([&] {
    need(config, "config");
    need(out_path, "out_path");
    const auto fmt = format_of(format);
    const auto plan = sflga::experiment::run_plan(config->parsed);
    sflga::experiment::export_metrics(plan.rows, out_path, fmt);
    if (checkpoint_path) sflga::planner::save_checkpoint(plan.result.policy, checkpoint_path);
    if (rewards_path) {
      sflga::experiment::export_episode_rewards(plan.result.episode_rewards, rewards_path);
    }
  });
}

sflga_status sflga_solve(const sflga_config* config, char** json_out) {
  return guarded([&] {
    need(config, "config");
    need(json_out, "json_out");
    *json_out = copy_string(sflga::experiment::solve_problem(config->parsed).dump(2));
  });
}

sflga_status sflga_verify(int seeds, int rounds, uint64_t seed, char** text_out, char** csv_out,
                          int* passed) {
  return guarded([&] {
    need(text_out, "text_out");
    need(passed, "passed");
    sflga::experiment::VerifyOptions options;
    options.seeds = seeds;
    options.rounds = rounds;
    options.seed = seed;
    const auto report = sflga::experiment::run_verification(options);
    char* text = copy_string(report.text());
    if (csv_out) {
      try {
        *csv_out = copy_string(report.csv());
      } catch (...) {
        std::free(text);
        throw;
      }
    }
    *text_out = text;
    *passed = report.passed() ? 1 : 0;
  });
}

sflga_status sflga_run_create(const sflga_config* config, sflga_run** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = new sflga_run{sflga::experiment::TrainingRun(config->parsed)};
  });
}

sflga_status sflga_run_step(sflga_run* run, sflga_round* row, int* done) {
  return guarded([&] {
    need(run, "run");
    need(done, "done");
    if (run->run.done()) {
      *done = 1;
      return;
    }
    const auto r = run->run.step();
    if (row) {
      *row = {r.round, r.v, r.loss, r.accuracy, r.chi, r.psi, r.latency_s,
              r.uplink_bytes, r.downlink_bytes, r.reward};
    }
    *done = run->run.done() ? 1 : 0;
  });
}

void sflga_run_free(sflga_run* run) { delete run; }

}  // extern "C"
