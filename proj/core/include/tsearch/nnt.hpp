#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tsearch {

/// Named float64 array inside an NNT1 container.
struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  std::int64_t element_count() const;
};

/// "NNT1" binary container shared by model files and datasets:
///   bytes 0-3  magic "NNT1"
///   bytes 4-7  little-endian uint32 header length L
///   next L     JSON header {"arrays":[{name, shape, dtype:"f64", offset}], "meta":{...}}
///   rest       little-endian f64 payloads; offsets are relative to the payload start
struct NntContainer {
  std::map<std::string, std::string> meta;
  std::vector<NamedArray> arrays;

  const NamedArray& at(const std::string& name) const;
  const NamedArray* find(const std::string& name) const;
  void add(std::string name, std::vector<std::int64_t> shape, std::vector<double> data);
};

void write_nnt(const NntContainer& c, const std::string& path);
std::string serialize_nnt(const NntContainer& c);

/// Throws kVersionMismatch on a wrong magic and kCorruptFile on truncated or
/// malformed contents.
NntContainer read_nnt(const std::string& path);
NntContainer parse_nnt(const std::string& bytes);

}  // namespace tsearch
