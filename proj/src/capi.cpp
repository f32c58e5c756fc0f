#include "hsfem/hsfem.h"

#include "hsfem/experiment.hpp"
#include "hsfem/online.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

struct hsfem_config {
  hsfem::ExperimentConfig cfg;
};
struct hsfem_artifact {
  hsfem::OfflineArtifact art;
};
struct hsfem_solution {
  hsfem::HsfemSolution sol;
};

namespace {

thread_local std::string last_error;

hsfem_status fail(hsfem_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

hsfem_status status_of(hsfem::ErrorKind k) {
  switch (k) {
    case hsfem::ErrorKind::Config: return HSFEM_ERR_CONFIG;
    case hsfem::ErrorKind::Model: return HSFEM_ERR_MODEL;
    case hsfem::ErrorKind::Numerical: return HSFEM_ERR_NUMERICAL;
    case hsfem::ErrorKind::Mismatch: return HSFEM_ERR_MISMATCH;
    case hsfem::ErrorKind::Io: return HSFEM_ERR_IO;
  }
  return HSFEM_ERR_INTERNAL;
}

template <typename F>
hsfem_status guard(F&& body) {
  try {
    last_error.clear();
    body();
    return HSFEM_OK;
  } catch (const hsfem::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(HSFEM_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(HSFEM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(HSFEM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(HSFEM_ERR_INTERNAL, "unknown error");
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const nlohmann::json& j) {
  if (out) *out = dup(j.dump(2));
}

std::string artifact_or_default(const hsfem_config* c, const char* path) {
  return path && *path ? std::string(path) : hsfem::artifact_path(c->cfg);
}

#define REQUIRE(cond, what) \
  if (!(cond)) return fail(HSFEM_ERR_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* hsfem_version(void) { return "0.1.0"; }

const char* hsfem_last_error(void) { return last_error.c_str(); }

const char* hsfem_status_name(hsfem_status s) {
  switch (s) {
    case HSFEM_OK: return "ok";
    case HSFEM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case HSFEM_ERR_CONFIG: return "configuration error";
    case HSFEM_ERR_NUMERICAL: return "numerical error";
    case HSFEM_ERR_MODEL: return "model error";
    case HSFEM_ERR_MISMATCH: return "mismatch";
    case HSFEM_ERR_IO: return "i/o error";
    case HSFEM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void hsfem_string_free(char* s) { std::free(s); }

hsfem_status hsfem_set_log_level(int level) {
  REQUIRE(level >= 0 && level <= 4, "log level must be in 0..4");
  return guard([&] {
    static const bool installed = [] {
      spdlog::set_default_logger(spdlog::stderr_color_mt("hsfem"));
      return true;
    }();
    (void)installed;
    constexpr spdlog::level::level_enum levels[] = {spdlog::level::off, spdlog::level::err, spdlog::level::warn,
                                                    spdlog::level::info, spdlog::level::debug};
    spdlog::set_level(levels[level]);
  });
}

hsfem_status hsfem_set_threads(int threads) {
  REQUIRE(threads >= 0, "thread count must be >= 0");
  return guard([&] { hsfem::set_thread_count(threads); });
}

hsfem_status hsfem_config_from_file(const char* path, hsfem_config** out) {
  REQUIRE(path && out, "null argument");
  return guard([&] { *out = new hsfem_config{hsfem::ExperimentConfig::from_file(path)}; });
}

hsfem_status hsfem_config_from_json(const char* json, hsfem_config** out) {
  REQUIRE(json && out, "null argument");
  return guard([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
      throw hsfem::ConfigError(e.what());
    }
    *out = new hsfem_config{hsfem::ExperimentConfig::from_json(j)};
  });
}

hsfem_status hsfem_config_from_preset(const char* name, int desk, hsfem_config** out) {
  REQUIRE(name && out, "null argument");
  return guard([&] { *out = new hsfem_config{hsfem::preset(name, desk != 0)}; });
}

hsfem_status hsfem_config_set_output(hsfem_config* c, const char* directory) {
  REQUIRE(c && directory && *directory, "null or empty argument");
  c->cfg.output_dir = directory;
  return HSFEM_OK;
}

hsfem_status hsfem_config_set_threads(hsfem_config* c, int threads) {
  REQUIRE(c, "null config");
  REQUIRE(threads >= 0, "thread count must be >= 0");
  c->cfg.threads = threads;
  return HSFEM_OK;
}

hsfem_status hsfem_config_to_json(const hsfem_config* c, char** json) {
  REQUIRE(c && json, "null argument");
  return guard([&] { emit(json, c->cfg.to_json()); });
}

hsfem_status hsfem_config_artifact_path(const hsfem_config* c, char** path) {
  REQUIRE(c && path, "null argument");
  return guard([&] { *path = dup(hsfem::artifact_path(c->cfg)); });
}

void hsfem_config_free(hsfem_config* c) { delete c; }

hsfem_status hsfem_preset_list(char** json) {
  REQUIRE(json, "null argument");
  return guard([&] { emit(json, hsfem::preset_list()); });
}

hsfem_status hsfem_run_offline(const hsfem_config* c, char** summary) {
  REQUIRE(c, "null config");
  return guard([&] { emit(summary, hsfem::run_offline(c->cfg)); });
}

hsfem_status hsfem_run_online(const hsfem_config* c, const char* artifact_path, char** summary) {
  REQUIRE(c, "null config");
  return guard([&] { emit(summary, hsfem::run_online(c->cfg, artifact_or_default(c, artifact_path))); });
}

hsfem_status hsfem_run_baseline_kl(const hsfem_config* c, const char* artifact_path, double k_match, char** summary) {
  REQUIRE(c, "null config");
  return guard([&] {
    // Without an explicit path the default artifact is used only when k must come from it.
    std::string path = artifact_path ? std::string(artifact_path) : std::string();
    if (path.empty() && k_match < 0.0) path = hsfem::artifact_path(c->cfg);
    emit(summary, hsfem::run_baseline_kl(c->cfg, path, k_match));
  });
}

hsfem_status hsfem_run_tmatrix(const hsfem_config* c, char** summary) {
  REQUIRE(c, "null config");
  return guard([&] { emit(summary, hsfem::run_tmatrix(c->cfg)); });
}

hsfem_status hsfem_run_correct(const hsfem_config* c, const char* artifact_path, char** summary) {
  REQUIRE(c, "null config");
  return guard([&] { emit(summary, hsfem::run_correct(c->cfg, artifact_or_default(c, artifact_path))); });
}

hsfem_status hsfem_artifact_build(const hsfem_config* c, hsfem_artifact** out) {
  REQUIRE(c && out, "null argument");
  return guard([&] {
    if (c->cfg.threads > 0) hsfem::set_thread_count(c->cfg.threads);
    const auto mesh = hsfem::make_mesh(c->cfg);
    const auto samples = hsfem::make_samples(c->cfg);
    auto basis = std::make_shared<hsfem::LocalBasis>(
        hsfem::build_local_basis(*mesh, c->cfg.coefficient, samples, c->cfg.offline));
    nlohmann::json config = c->cfg.to_json();
    config.erase("output");
    config.erase("threads");
    *out = new hsfem_artifact{{hsfem::assemble_coupled(mesh, c->cfg.coefficient, basis), config}};
  });
}

hsfem_status hsfem_artifact_save(const hsfem_artifact* a, const char* path) {
  REQUIRE(a && path, "null argument");
  return guard([&] { hsfem::save_artifact(a->art, path); });
}

hsfem_status hsfem_artifact_load(const char* path, hsfem_artifact** out) {
  REQUIRE(path && out, "null argument");
  return guard([&] { *out = new hsfem_artifact{hsfem::load_artifact(path)}; });
}

hsfem_status hsfem_artifact_summary(const hsfem_artifact* a, char** json) {
  REQUIRE(a && json, "null argument");
  return guard([&] { emit(json, hsfem::artifact_summary(a->art)); });
}

void hsfem_artifact_free(hsfem_artifact* a) { delete a; }

hsfem_status hsfem_online_solve(const hsfem_artifact* a, const char* forcing_json, hsfem_solution** out) {
  REQUIRE(a && forcing_json && out, "null argument");
  return guard([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(forcing_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw hsfem::ConfigError(e.what());
    }
    *out = new hsfem_solution{hsfem::solve_online(a->art.system, hsfem::forcing_from_json(j))};
  });
}

size_t hsfem_solution_size(const hsfem_solution* s) {
  return s ? static_cast<size_t>(s->sol.system->mesh().interior_count()) : 0;
}

hsfem_status hsfem_solution_statistics(const hsfem_solution* s, double* mean, double* sd) {
  REQUIRE(s, "null solution");
  return guard([&] {
    const auto [m, d] = hsfem::statistics(s->sol);
    if (mean) std::memcpy(mean, m.data(), sizeof(double) * static_cast<size_t>(m.size()));
    if (sd) std::memcpy(sd, d.data(), sizeof(double) * static_cast<size_t>(d.size()));
  });
}

void hsfem_solution_free(hsfem_solution* s) { delete s; }

}  // extern "C"
