#include "hsfem/binary_io.hpp"

#include <bit>
#include <cstring>

namespace hsfem {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

BinaryWriter::BinaryWriter(const std::string& path, const char (&magic)[9], std::uint32_t version,
                           const nlohmann::json& header)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw IoError("cannot open " + path + " for writing");
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  out_.write(magic, 8);
  out_.write(reinterpret_cast<const char*>(&version), sizeof version);
  out_.write(reinterpret_cast<const char*>(&len), sizeof len);
  out_.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void BinaryWriter::write_doubles(const double* data, std::size_t count) {
  out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

void BinaryWriter::write_int64s(const std::vector<std::int64_t>& v) {
  out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(std::int64_t)));
}

void BinaryWriter::close() {
  out_.flush();
  if (!out_) throw IoError("write failed for " + path_);
  out_.close();
}

BinaryReader::BinaryReader(const std::string& path, const char (&magic)[9], std::uint32_t max_version)
    : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw IoError("cannot open " + path);
  char got[8];
  in_.read(got, 8);
  if (!in_ || std::memcmp(got, magic, 8) != 0) throw IoError(path + ": not a " + std::string(magic, 8) + " file");
  std::uint64_t len = 0;
  in_.read(reinterpret_cast<char*>(&version_), sizeof version_);
  in_.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in_) throw IoError(path + ": truncated header");
  if (version_ == 0 || version_ > max_version) {
    throw IoError(path + ": unsupported format version " + std::to_string(version_));
  }
  std::string text(len, '\0');
  in_.read(text.data(), static_cast<std::streamsize>(len));
  if (!in_) throw IoError(path + ": truncated header");
  try {
    header_ = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": corrupt header: " + e.what());
  }
}

void BinaryReader::read_doubles(double* data, std::size_t count) {
  in_.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in_) throw IoError(path_ + ": truncated payload");
}

Vector BinaryReader::read_vector(Index n) {
  Vector v(n);
  read_doubles(v.data(), static_cast<std::size_t>(n));
  return v;
}

Matrix BinaryReader::read_matrix(Index rows, Index cols) {
  Matrix m(rows, cols);
  read_doubles(m.data(), static_cast<std::size_t>(m.size()));
  return m;
}

std::vector<std::int64_t> BinaryReader::read_int64s(std::size_t count) {
  std::vector<std::int64_t> v(count);
  in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(std::int64_t)));
  if (!in_) throw IoError(path_ + ": truncated payload");
  return v;
}

}  // namespace hsfem
