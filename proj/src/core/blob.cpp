#include "sflga/blob.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "sflga/error.hpp"

namespace sflga::blob {

namespace {

constexpr std::string_view kMagic = "SFLGABLB";
constexpr std::uint32_t kVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::Parse, "blob is truncated");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint64_t u64() { return little(take(8)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(little(take(4))); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  static std::uint64_t little(std::string_view b) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    }
    return v;
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode(const Blob& blob) {
  std::string out(kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(blob.kind.size()));
  out += blob.kind;
  const std::string header = blob.header.dump();
  put_u64(out, header.size());
  out += header;
  put_u64(out, blob.payload.size());
  for (double d : blob.payload) put_u64(out, std::bit_cast<std::uint64_t>(d));
  return out;
}

Blob decode(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kMagic.size()) != kMagic) fail(ErrorCode::Parse, "not a blob (bad magic)");
  const std::uint32_t version = in.u32();
  if (version != kVersion) {
    fail(ErrorCode::Parse, "unsupported blob version " + std::to_string(version));
  }
  Blob blob;
  blob.kind = std::string(in.take(in.u32()));
  const auto header = in.take(in.u64());
  try {
    blob.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("blob header: ") + e.what());
  }
  const std::uint64_t count = in.u64();
  if (count > bytes.size() / 8) fail(ErrorCode::Parse, "blob is truncated");
  blob.payload.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) blob.payload.push_back(std::bit_cast<double>(in.u64()));
  if (!in.done()) fail(ErrorCode::Parse, "trailing bytes after blob payload");
  return blob;
}

void write(const std::string& path, const Blob& blob) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  const std::string bytes = encode(blob);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

Blob read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace sflga::blob
