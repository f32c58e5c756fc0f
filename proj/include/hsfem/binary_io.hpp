#pragma once

#include "hsfem/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace hsfem {

/// Container layout shared by sample-set, ensemble and offline-artifact files:
///
///   8-byte magic | u32 format version | u64 header length | JSON header |
///   payload (raw little-endian arrays, order defined by the file kind)
class BinaryWriter {
 public:
  BinaryWriter(const std::string& path, const char (&magic)[9], std::uint32_t version, const nlohmann::json& header);
  void write_doubles(const double* data, std::size_t count);
  void write_doubles(const Vector& v) { write_doubles(v.data(), static_cast<std::size_t>(v.size())); }
  void write_doubles(const Matrix& m) { write_doubles(m.data(), static_cast<std::size_t>(m.size())); }
  void write_int64s(const std::vector<std::int64_t>& v);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

class BinaryReader {
 public:
  BinaryReader(const std::string& path, const char (&magic)[9], std::uint32_t max_version);
  const nlohmann::json& header() const { return header_; }
  std::uint32_t version() const { return version_; }
  void read_doubles(double* data, std::size_t count);
  Vector read_vector(Index n);
  Matrix read_matrix(Index rows, Index cols);
  std::vector<std::int64_t> read_int64s(std::size_t count);

 private:
  std::ifstream in_;
  std::string path_;
  nlohmann::json header_;
  std::uint32_t version_ = 0;
};

}  // namespace hsfem
