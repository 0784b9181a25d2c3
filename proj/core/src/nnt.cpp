#include "tsearch/nnt.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tsearch/error.hpp"

namespace tsearch {
namespace {

constexpr char kMagic[4] = {'N', 'N', 'T', '1'};

static_assert(std::endian::native == std::endian::little,
              "NNT1 payload handling assumes a little-endian host");

std::string build_header(const NntContainer& c) {
  nlohmann::json arrays = nlohmann::json::array();
  std::int64_t offset = 0;
  for (const NamedArray& a : c.arrays) {
    arrays.push_back({{"name", a.name}, {"shape", a.shape}, {"dtype", "f64"}, {"offset", offset}});
    offset += a.element_count() * 8;
  }
  nlohmann::json meta = nlohmann::json::object();
  for (const auto& [k, v] : c.meta) meta[k] = v;
  return nlohmann::json{{"arrays", arrays}, {"meta", meta}}.dump();
}

void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  os.write(b, 4);
}

void write_to(std::ostream& os, const NntContainer& c) {
  for (const NamedArray& a : c.arrays)
    if (a.element_count() != static_cast<std::int64_t>(a.data.size()))
      throw Error(ErrorCode::kShapeMismatch, "array '" + a.name + "' shape does not match data");
  const std::string header = build_header(c);
  os.write(kMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const NamedArray& a : c.arrays)
    os.write(reinterpret_cast<const char*>(a.data.data()),
             static_cast<std::streamsize>(a.data.size() * sizeof(double)));
}

[[noreturn]] void corrupt(const std::string& why) {
  throw Error(ErrorCode::kCorruptFile, "corrupt NNT1 container: " + why);
}

}  // namespace

std::int64_t NamedArray::element_count() const {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

const NamedArray* NntContainer::find(const std::string& name) const {
  for (const NamedArray& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

const NamedArray& NntContainer::at(const std::string& name) const {
  if (const NamedArray* a = find(name)) return *a;
  throw Error(ErrorCode::kCorruptFile, "NNT1 container has no array '" + name + "'");
}

void NntContainer::add(std::string name, std::vector<std::int64_t> shape, std::vector<double> data) {
  arrays.push_back({std::move(name), std::move(shape), std::move(data)});
}

void write_nnt(const NntContainer& c, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  write_to(os, c);
  if (!os) throw Error(ErrorCode::kIo, "failed writing '" + path + "'");
}

std::string serialize_nnt(const NntContainer& c) {
  std::ostringstream os(std::ios::binary);
  write_to(os, c);
  return os.str();
}

NntContainer parse_nnt(const std::string& bytes) {
  if (bytes.size() < 4) corrupt("file shorter than the magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::kVersionMismatch, "not an NNT1 container (bad magic)");
  if (bytes.size() < 8) corrupt("missing header length");
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 4, 4);
  if (bytes.size() - 8 < header_len) corrupt("header extends past end of file");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("header is not valid JSON: ") + e.what());
  }

  const std::size_t payload_start = 8 + static_cast<std::size_t>(header_len);
  const std::size_t payload_size = bytes.size() - payload_start;
  NntContainer c;
  std::size_t expected_end = 0;
  try {
    for (const auto& [k, v] : header.at("meta").items()) c.meta[k] = v.get<std::string>();
    for (const auto& entry : header.at("arrays")) {
      NamedArray a;
      a.name = entry.at("name").get<std::string>();
      a.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      if (entry.at("dtype").get<std::string>() != "f64") corrupt("unsupported dtype in '" + a.name + "'");
      const auto offset = entry.at("offset").get<std::int64_t>();
      for (std::int64_t d : a.shape)
        if (d < 0) corrupt("negative dimension in '" + a.name + "'");
      const std::int64_t n = a.element_count();
      if (offset < 0 || static_cast<std::size_t>(offset) + static_cast<std::size_t>(n) * 8 > payload_size)
        corrupt("array '" + a.name + "' extends past end of file");
      a.data.resize(static_cast<std::size_t>(n));
      std::memcpy(a.data.data(), bytes.data() + payload_start + offset, static_cast<std::size_t>(n) * 8);
      expected_end = std::max(expected_end, static_cast<std::size_t>(offset) + static_cast<std::size_t>(n) * 8);
      c.arrays.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("malformed header: ") + e.what());
  }
  if (expected_end != payload_size) corrupt("payload size does not match header");
  return c;
}

NntContainer read_nnt(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_nnt(ss.str());
}

}  // namespace tsearch
