#include <doctest.h>

#include "sflga/config.hpp"
#include "sflga/error.hpp"

using namespace sflga;
using namespace sflga::config;
using nlohmann::json;

namespace {

std::string validation_message(const json& doc) {
  try {
    parse_config(doc);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Validation) return e.what();
    return std::string("wrong code: ") + e.what();
  }
  return "accepted";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("empty config yields the default scenario") {
  const auto c = parse_config(json::object());
  CHECK(c.clients == 10);
  CHECK(c.system.bandwidth_hz == 20e6);
  CHECK(c.system.noise_w_per_hz == doctest::Approx(wireless::dbm_to_watts(-174.0)));
  CHECK(c.system.server_power_w == doctest::Approx(1.99526).epsilon(1e-5));
  CHECK(c.system.server_flops == 100e9);
  REQUIRE(c.profiles.size() == 10);
  for (const auto& p : c.profiles) {
    CHECK(p.power_max_w == doctest::Approx(wireless::dbm_to_watts(25.0)));
    CHECK(p.cpu_flops == 0.1e9);
    CHECK(p.distance_km >= 0.05);
    CHECK(p.distance_km <= 0.5);
  }
  CHECK(c.network.layer_dims == std::vector<std::size_t>{784, 128, 10});
  CHECK(c.batch_size() == 64);
  CHECK(c.training.protocol == Protocol::SflGa);
}

TEST_CASE("zero clients is a validation error") {
  CHECK(validation_message({{"clients", 0}}).find("clients") != std::string::npos);
}

TEST_CASE("unknown keys are reported with their path") {
  CHECK(validation_message({{"system", {{"bandwith_hz", 1e6}}}}).rfind("system.bandwith_hz", 0) == 0);
  CHECK(validation_message({{"colour", 1}}).rfind("colour", 0) == 0);
}

TEST_CASE("wrong types and values are rejected") {
  CHECK(validation_message({{"system", {{"bandwidth_hz", "wide"}}}}).find("system.bandwidth_hz") != std::string::npos);
  CHECK(validation_message({{"training", {{"protocol", "sl"}}}}).find("training.protocol") != std::string::npos);
  CHECK(validation_message({{"training", {{"cut", 2}}}}).find("training.cut") != std::string::npos);
  CHECK(validation_message({{"client", {{"distance_km", {0.1, 0.2}}}}}).find("client.distance_km") != std::string::npos);
}

TEST_CASE("batch size is capped by the smallest client") {
  const auto c = parse_config({{"clients", 2}, {"partition", {{"samples_per_client", {30, 80}}}}});
  CHECK(c.batch_size() == 30);
  CHECK(c.total_samples() == 110);
}

TEST_CASE("per-client values accept a scalar or an array") {
  const auto c = parse_config({{"clients", 3}, {"client", {{"distance_km", {0.1, 0.2, 0.3}}, {"power_dbm", 30}}}});
  CHECK(c.profiles[2].distance_km == 0.3);
  CHECK(c.profiles[0].power_max_w == doctest::Approx(1.0));
}

TEST_CASE("distances are seeded") {
  CHECK(parse_config({{"seed", 4}}).profiles[3].distance_km == parse_config({{"seed", 4}}).profiles[3].distance_km);
  CHECK(parse_config({{"seed", 4}}).profiles[3].distance_km != parse_config({{"seed", 5}}).profiles[3].distance_km);
}

TEST_CASE("dotted paths create nested objects") {
  json doc = json::object();
  set_path(doc, "system.bandwidth_hz", 5e6);
  set_path(doc, "training.protocol", "fl");
  CHECK(doc["system"]["bandwidth_hz"] == 5e6);
  const auto c = parse_config(doc);
  CHECK(c.system.bandwidth_hz == 5e6);
  CHECK(c.training.protocol == Protocol::Fl);
}

TEST_CASE("malformed text is a parse error") {
  try {
    parse_config_text("{\"clients\": ");
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Parse);
  }
}

TEST_CASE("missing idx files are rejected") {
  const json doc = {{"dataset", {{"source", "idx"}, {"train_images", "/nonexistent/a"},
                                 {"train_labels", "/nonexistent/b"},
                                 {"eval_images", "/nonexistent/c"},
                                 {"eval_labels", "/nonexistent/d"}}}};
  CHECK_THROWS_AS(parse_config(doc), Error);
}

}
