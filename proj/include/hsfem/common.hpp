#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace hsfem {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Failure categories. The C API and the CLI map these onto status and exit codes.
enum class ErrorKind {
  Config,     ///< bad parameters, schema violations, unreadable inputs
  Model,      ///< the coefficient model produced an invalid value
  Numerical,  ///< a solver or decomposition failed
  Mismatch,   ///< artifacts built against different sample sets / meshes
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct ModelError : Error {
  explicit ModelError(const std::string& w) : Error(ErrorKind::Model, w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error(ErrorKind::Numerical, w) {}
};
struct MismatchError : Error {
  explicit MismatchError(const std::string& w) : Error(ErrorKind::Mismatch, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};

/// Worker count used by parallel_for. 0 selects hardware concurrency.
void set_thread_count(int n);
int thread_count();

/// Runs body(i) for i in [0, n). Every index is visited exactly once; callers
/// write results into per-index slots so output never depends on scheduling.
/// The first exception thrown by any worker is rethrown on the calling thread.
void parallel_for(Index n, const std::function<void(Index)>& body);

/// Same as parallel_for but hands each worker a stable id in [0, thread_count())
/// so it can own scratch state (e.g. a sparse factorization).
void parallel_for_workers(Index n, const std::function<void(int worker, Index i)>& body);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const void* data, std::size_t size);
inline std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

}  // namespace hsfem
