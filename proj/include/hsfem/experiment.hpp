#pragma once

#include "hsfem/correct.hpp"
#include "hsfem/field.hpp"
#include "hsfem/offline.hpp"
#include "hsfem/stochastic.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace hsfem {

/// One experiment, parsed from a JSON file. The schema is documented in
/// docs/config.md; unknown keys are rejected so typos surface early.
struct ExperimentConfig {
  std::string name = "experiment";
  int dim = 1;
  int cells = 16;
  CoefficientModel coefficient;

  SampleKind sample_kind = SampleKind::MonteCarlo;
  Index samples = 1000;  ///< M for Monte Carlo
  int order = 3;         ///< Smolyak order
  std::uint64_t sample_seed = 1;
  Measure measure = Measure::Uniform;

  OfflineOptions offline;

  std::vector<nlohmann::json> forcings;
  bool reference = true;    ///< compute E_HSFEM against a cached reference ensemble
  bool kl_baseline = true;  ///< also report E_KL at the matched k

  Functional functional;
  CorrectionOptions correction;
  Index variance_probe = 1000;

  Point tmatrix_point{0.5, 0.5};
  double tmatrix_epsilon = 2e-3;

  std::string output_dir = "hsfem_out";
  int threads = 0;

  nlohmann::json to_json() const;
  /// SHA-256 of the canonical JSON form, embedded in every output file.
  std::string hash() const;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::string& path);
};

/// "1/128", 0.0078125 or 128 (cells) to a cell count.
int parse_cells(const nlohmann::json& h);

std::vector<std::string> preset_names();
/// Preset configuration; `desk` selects the reduced size used by the acceptance run.
ExperimentConfig preset(const std::string& name, bool desk);
nlohmann::json preset_list();

MeshPtr make_mesh(const ExperimentConfig& cfg);
SampleSetPtr make_samples(const ExperimentConfig& cfg);

/// Least-squares fit of log(values) against the index, over entries above
/// floor_ratio * values[0].
struct LogLinearFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
  Index count = 0;
};
LogLinearFit fit_log_linear(const Vector& values, double floor_ratio = 1e-10);

/// Each stage writes its files into cfg.output_dir and returns the JSON it wrote.
nlohmann::json run_offline(const ExperimentConfig& cfg);
nlohmann::json run_online(const ExperimentConfig& cfg, const std::string& artifact_path);
/// k_match < 0 takes the average k of the artifact (which must then be given).
nlohmann::json run_baseline_kl(const ExperimentConfig& cfg, const std::string& artifact_path, double k_match);
nlohmann::json run_tmatrix(const ExperimentConfig& cfg);
nlohmann::json run_correct(const ExperimentConfig& cfg, const std::string& artifact_path);

/// Default artifact location for a config.
std::string artifact_path(const ExperimentConfig& cfg);

/// Refuses an artifact whose mesh, coefficient or sample set differs from the config.
void check_artifact_matches(const OfflineArtifact& art, const ExperimentConfig& cfg);

}  // namespace hsfem
