#pragma once

// Binary container for checkpoints:
//   8-byte magic "SFLGABLB", u32 version, u32 kind length, kind bytes,
//   u64 header length, JSON header text, u64 value count, IEEE-754 doubles.
// All integers and doubles are little-endian.

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace sflga::blob {

struct Blob {
  std::string kind;
  nlohmann::json header = nlohmann::json::object();
  std::vector<double> payload;
};

std::string encode(const Blob& blob);
Blob decode(std::string_view bytes);

void write(const std::string& path, const Blob& blob);
Blob read(const std::string& path);

}  // namespace sflga::blob
