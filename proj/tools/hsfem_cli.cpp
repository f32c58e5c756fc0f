// hsfem: command-line driver for the HSFEM library, built on its C interface.

#include "hsfem/hsfem.h"

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <optional>
#include <string>

namespace {

enum Exit { kOk = 0, kUsage = 1, kInput = 2, kNumerical = 3 };

int exit_code(hsfem_status s) {
  switch (s) {
    case HSFEM_OK: return kOk;
    case HSFEM_ERR_INVALID_ARGUMENT:
    case HSFEM_ERR_CONFIG:
    case HSFEM_ERR_MISMATCH:
    case HSFEM_ERR_IO: return kInput;
    default: return kNumerical;
  }
}

struct Failure {
  hsfem_status status;
};

void check(hsfem_status s) {
  if (s != HSFEM_OK) throw Failure{s};
}

struct StringDeleter {
  void operator()(char* s) const { hsfem_string_free(s); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

struct ConfigDeleter {
  void operator()(hsfem_config* c) const { hsfem_config_free(c); }
};
using ConfigHandle = std::unique_ptr<hsfem_config, ConfigDeleter>;

struct Common {
  std::string config;
  std::string preset;
  bool desk = false;
  std::string out;
  int threads = -1;
  bool quiet = false;
  bool verbose = false;
};

void add_common(CLI::App* sub, Common& c) {
  auto* cfg = sub->add_option("-c,--config", c.config, "experiment JSON file")->check(CLI::ExistingFile);
  auto* pre = sub->add_option("-p,--preset", c.preset, "named preset (see 'preset list')");
  cfg->excludes(pre);
  sub->add_flag("--desk", c.desk, "use the reduced desk-scale variant of the preset")->needs(pre);
  sub->add_option("-o,--out", c.out, "output directory (overrides the config)");
  sub->add_option("-t,--threads", c.threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  sub->add_flag("-q,--quiet", c.quiet, "only print errors");
  sub->add_flag("-v,--verbose", c.verbose, "debug logging");
}

ConfigHandle load(const Common& c) {
  if (c.config.empty() == c.preset.empty()) {
    throw CLI::ValidationError("exactly one of --config and --preset is required");
  }
  hsfem_config* raw = nullptr;
  check(c.config.empty() ? hsfem_config_from_preset(c.preset.c_str(), c.desk ? 1 : 0, &raw)
                         : hsfem_config_from_file(c.config.c_str(), &raw));
  ConfigHandle cfg(raw);
  if (!c.out.empty()) check(hsfem_config_set_output(cfg.get(), c.out.c_str()));
  if (c.threads >= 0) check(hsfem_config_set_threads(cfg.get(), c.threads));
  check(hsfem_set_log_level(c.quiet ? 1 : c.verbose ? 4 : 3));
  return cfg;
}

void print(char* json) {
  OwnedString s(json);
  std::puts(s.get());
}

const char* optional_path(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous stochastic finite elements: offline bases, online solves, KL baseline, corrections"};
  app.set_version_flag("--version", std::string(hsfem_version()));
  app.require_subcommand(1);

  Common common;
  std::string artifact;
  double k_match = -1.0;

  auto* offline = app.add_subcommand("offline", "build local bases and the coupled matrix, write offline.art");
  add_common(offline, common);

  auto* online = app.add_subcommand("online", "solve for every configured forcing, compare with the reference");
  add_common(online, common);
  online->add_option("-a,--artifact", artifact, "offline artifact (default: <out>/offline.art)");

  auto* kl = app.add_subcommand("baseline-kl", "Karhunen-Loeve truncation of the reference ensemble");
  add_common(kl, common);
  kl->add_option("-a,--artifact", artifact, "offline artifact providing k and the sample set");
  kl->add_option("-k,--k", k_match, "truncation rank to compare at (default: average k of the artifact)")
      ->check(CLI::PositiveNumber);

  auto* tm = app.add_subcommand("tmatrix", "singular values of the transfer matrix at one node");
  add_common(tm, common);

  auto* corr = app.add_subcommand("correct", "Monte Carlo check and correction of a quantity of interest");
  add_common(corr, common);
  corr->add_option("-a,--artifact", artifact, "offline artifact (default: <out>/offline.art)");

  auto* presets = app.add_subcommand("preset", "inspect the built-in presets");
  presets->require_subcommand(1);
  auto* plist = presets->add_subcommand("list", "list presets with their full and desk sizes");
  std::string show_name;
  bool show_desk = false;
  auto* pshow = presets->add_subcommand("show", "print a preset as a config file");
  pshow->add_option("name", show_name, "preset name")->required();
  pshow->add_flag("--desk", show_desk, "desk-scale variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    char* out = nullptr;
    if (plist->parsed()) {
      check(hsfem_preset_list(&out));
    } else if (pshow->parsed()) {
      hsfem_config* raw = nullptr;
      check(hsfem_config_from_preset(show_name.c_str(), show_desk ? 1 : 0, &raw));
      ConfigHandle cfg(raw);
      check(hsfem_config_to_json(cfg.get(), &out));
    } else {
      ConfigHandle cfg = load(common);
      if (offline->parsed()) check(hsfem_run_offline(cfg.get(), &out));
      else if (online->parsed()) check(hsfem_run_online(cfg.get(), optional_path(artifact), &out));
      else if (kl->parsed()) check(hsfem_run_baseline_kl(cfg.get(), optional_path(artifact), k_match, &out));
      else if (tm->parsed()) check(hsfem_run_tmatrix(cfg.get(), &out));
      else if (corr->parsed()) check(hsfem_run_correct(cfg.get(), optional_path(artifact), &out));
    }
    if (out) print(out);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "hsfem: %s\n", e.what());
    return kUsage;
  } catch (const Failure& f) {
    std::fprintf(stderr, "hsfem: %s: %s\n", hsfem_status_name(f.status), hsfem_last_error());
    return exit_code(f.status);
  }
  return kOk;
}
