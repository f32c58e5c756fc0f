#include "hsfem/experiment.hpp"

#include "hsfem/detsolver.hpp"
#include "hsfem/klbaseline.hpp"
#include "hsfem/online.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

namespace hsfem {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

// Inverse of the default probe scaling: epsilon = 10 sqrt(2/pi) * probe tolerance.
double epsilon_from_probe(double tol) { return tol * 10.0 * std::sqrt(2.0 / std::numbers::pi); }

json point_json(const Point& p, int dim) { return dim == 1 ? json{p[0]} : json{p[0], p[1]}; }

Point parse_point(const json& j, const std::string& where) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  const auto v = j.get<std::vector<double>>();
  if (v.empty() || v.size() > 2) throw ConfigError(where + " must have 1 or 2 coordinates");
  return {v[0], v.size() > 1 ? v[1] : 0.0};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json provenance(const ExperimentConfig& cfg) {
  return {{"config_hash", cfg.hash()},
          {"config_name", cfg.name},
          {"version", kVersion},
          {"seeds",
           {{"samples", cfg.sample_seed}, {"offline", cfg.offline.seed}, {"correction", cfg.correction.seed}}}};
}

void ensure_output_dir(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.output_dir + "': " + ec.message());
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const ExperimentConfig& cfg, const std::string& header) : out_(path), path_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
    out_.precision(17);
    out_ << "# config_hash=" << cfg.hash() << " samples_seed=" << cfg.sample_seed << " offline_seed=" << cfg.offline.seed
         << '\n'
         << header << '\n';
  }
  template <typename... T>
  void row(const T&... v) {
    bool first = true;
    ((out_ << (first ? "" : ",") << v, first = false), ...);
    out_ << '\n';
  }
  std::ofstream& stream() { return out_; }

 private:
  std::ofstream out_;
  fs::path path_;
};

std::string coord_header(int dim) { return dim == 1 ? "x" : "x,y"; }

void write_coords(std::ostream& out, const Point& p, int dim) {
  out << p[0];
  if (dim == 2) out << ',' << p[1];
}

json metric_json(const Metric& m) { return m.defined ? json(m.value) : json(nullptr); }

Forcing forcing_at(const ExperimentConfig& cfg, std::size_t j) {
  if (cfg.forcings.empty()) throw ConfigError("config has no online forcing");
  return forcing_from_json(cfg.forcings.at(j));
}

// Reference ensembles are cached in the output directory, keyed by everything
// that determines them.
Ensemble reference_ensemble(const ExperimentConfig& cfg, const MeshPtr& mesh, const CoefficientModel& model,
                            const SampleSetPtr& samples, const Forcing& f) {
  const std::string key = sha256_hex(samples->hash() + "|" + std::to_string(mesh->dim()) + "|" +
                                     std::to_string(mesh->cells()) + "|" + model.to_json().dump() + "|" +
                                     f.descriptor().dump());
  const fs::path path = fs::path(cfg.output_dir) / ("reference_" + key.substr(0, 16) + ".ens");
  if (fs::exists(path)) {
    try {
      Ensemble ens = load_ensemble(path.string());
      if (ens.samples->hash() == samples->hash() && ens.mesh->cells() == mesh->cells() &&
          ens.mesh->dim() == mesh->dim()) {
        spdlog::info("reference ensemble loaded from cache {}", path.string());
        return ens;
      }
    } catch (const Error& e) {
      spdlog::warn("ignoring unreadable reference cache {}: {}", path.string(), e.what());
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  Ensemble ens = solve_ensemble(mesh, model, samples, f);
  spdlog::info("reference ensemble: {} solves in {:.2f}s", samples->size(), seconds_since(t0));
  save_ensemble(ens, path.string());
  return ens;
}

Index nearest_interior_node(const Mesh& mesh, const Point& p) {
  Index best = -1;
  double dist = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < mesh.interior_count(); ++i) {
    const Point& x = mesh.node(mesh.interior_node(i));
    const double d = std::hypot(x[0] - p[0], mesh.dim() == 2 ? x[1] - p[1] : 0.0);
    if (d < dist) {
      dist = d;
      best = i;
    }
  }
  if (best < 0) throw ConfigError("mesh has no interior nodes");
  return best;
}

ExperimentConfig base(const std::string& name, int dim, int cells, const json& coefficient) {
  ExperimentConfig c;
  c.name = name;
  c.dim = dim;
  c.cells = cells;
  c.coefficient = CoefficientModel::from_json(coefficient);
  c.measure = c.coefficient.natural_measure();
  c.output_dir = "hsfem_out/" + name;
  c.offline.r = 5;
  c.forcings = {dim == 1 ? json{{"kind", "preset"}, {"name", "cubic_1d"}}
                         : json{{"kind", "preset"}, {"name", "affine_2d"}}};
  return c;
}

void use_mc(ExperimentConfig& c, Index M) {
  c.sample_kind = SampleKind::MonteCarlo;
  c.samples = M;
}

void use_smolyak(ExperimentConfig& c, int order) {
  c.sample_kind = SampleKind::Smolyak;
  c.order = order;
}

}  // namespace

int parse_cells(const json& h) {
  double value = 0.0;
  if (h.is_string()) {
    const std::string s = h.get<std::string>();
    const auto slash = s.find('/');
    try {
      value = slash == std::string::npos ? std::stod(s) : std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
    } catch (const std::exception&) {
      throw ConfigError("cannot parse mesh size '" + s + "'");
    }
  } else if (h.is_number()) {
    value = h.get<double>();
  } else {
    throw ConfigError("mesh size must be a number or a string like \"1/128\"");
  }
  if (!(value > 0.0)) throw ConfigError("mesh size must be positive");
  if (value >= 1.0 && std::abs(value - std::round(value)) < 1e-12) return static_cast<int>(std::round(value));
  const double cells = 1.0 / value;
  if (std::abs(cells - std::round(cells)) > 1e-9 * cells) {
    throw ConfigError("mesh size h=" + std::to_string(value) + " does not divide the unit interval");
  }
  return static_cast<int>(std::round(cells));
}

json ExperimentConfig::to_json() const {
  json stoch{{"kind", sample_kind == SampleKind::MonteCarlo ? "mc" : "smolyak"},
             {"seed", sample_seed},
             {"measure", hsfem::to_string(measure)}};
  if (sample_kind == SampleKind::MonteCarlo) stoch["M"] = samples;
  else stoch["order"] = order;
  json off = offline.to_json();
  off.erase("coarse_cells");
  if (offline.coarse_cells > 0) off["coarse_h"] = "1/" + std::to_string(offline.coarse_cells);
  return {{"name", name},
          {"threads", threads},
          {"problem", {{"dim", dim}, {"h", "1/" + std::to_string(cells)}, {"coefficient", coefficient.to_json()}}},
          {"stochastic", stoch},
          {"offline", off},
          {"online", {{"forcings", forcings}, {"reference", reference}, {"kl_baseline", kl_baseline}}},
          {"correction",
           {{"functional", functional.to_json()},
            {"threshold", correction.threshold},
            {"n_mc", correction.n_mc},
            {"max_rounds", correction.max_rounds},
            {"seed", correction.seed},
            {"variance_probe", variance_probe}}},
          {"tmatrix", {{"point", point_json(tmatrix_point, dim)}, {"epsilon", tmatrix_epsilon}}},
          {"output", {{"directory", output_dir}}}};
}

std::string ExperimentConfig::hash() const {
  // Output location and thread count do not change results.
  json j = to_json();
  j.erase("output");
  j.erase("threads");
  return sha256_hex(j.dump());
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  try {
    check_keys(j, {"name", "threads", "problem", "stochastic", "offline", "online", "correction", "tmatrix", "output"},
               "config");
    c.name = j.value("name", c.name);
    c.threads = j.value("threads", 0);
    if (c.threads < 0) throw ConfigError("threads must be >= 0");

    const json& p = j.at("problem");
    check_keys(p, {"dim", "h", "cells", "coefficient"}, "problem");
    c.dim = p.at("dim").get<int>();
    if (c.dim != 1 && c.dim != 2) throw ConfigError("problem.dim must be 1 or 2");
    if (p.contains("h") == p.contains("cells")) throw ConfigError("problem needs exactly one of 'h' and 'cells'");
    c.cells = p.contains("h") ? parse_cells(p.at("h")) : p.at("cells").get<int>();
    if (c.cells < 2) throw ConfigError("problem needs at least 2 cells per axis");
    c.coefficient = CoefficientModel::from_json(p.at("coefficient"));
    if (c.coefficient.dim() != 0 && c.coefficient.dim() != c.dim) {
      throw ConfigError("coefficient '" + p.at("coefficient").value("kind", "") + "' is " +
                        std::to_string(c.coefficient.dim()) + "D but problem.dim is " + std::to_string(c.dim));
    }
    c.measure = c.coefficient.natural_measure();

    if (j.contains("stochastic")) {
      const json& s = j.at("stochastic");
      check_keys(s, {"kind", "M", "order", "seed", "measure"}, "stochastic");
      const std::string kind = s.value("kind", "mc");
      if (kind == "mc") {
        c.sample_kind = SampleKind::MonteCarlo;
        c.samples = s.value("M", c.samples);
        if (c.samples < 2) throw ConfigError("stochastic.M must be >= 2");
      } else if (kind == "smolyak") {
        c.sample_kind = SampleKind::Smolyak;
        c.order = s.value("order", c.order);
        if (c.order < 1) throw ConfigError("stochastic.order must be >= 1");
      } else {
        throw ConfigError("stochastic.kind must be 'mc' or 'smolyak'");
      }
      c.sample_seed = s.value("seed", c.sample_seed);
      if (s.contains("measure")) c.measure = measure_from_string(s.at("measure").get<std::string>());
    }

    if (j.contains("offline")) {
      json o = j.at("offline");
      check_keys(o, {"K", "r", "epsilon", "probe_tolerance", "seed", "coarse_h", "coarse_cells", "allow_growth",
                     "max_growth_rounds"},
                 "offline");
      if (o.contains("epsilon") && o.contains("probe_tolerance")) {
        throw ConfigError("offline: give either 'epsilon' or 'probe_tolerance', not both");
      }
      if (o.contains("probe_tolerance")) {
        o["epsilon"] = epsilon_from_probe(o.at("probe_tolerance").get<double>());
        o.erase("probe_tolerance");
      }
      if (o.contains("coarse_h")) {
        o["coarse_cells"] = parse_cells(o.at("coarse_h"));
        o.erase("coarse_h");
      }
      c.offline = OfflineOptions::from_json(o);
      if (c.offline.K < 1 || c.offline.r < 1) throw ConfigError("offline.K and offline.r must be >= 1");
      if (!(c.offline.epsilon > 0.0)) throw ConfigError("offline tolerance must be positive");
      if (c.offline.max_growth_rounds < 0) throw ConfigError("offline.max_growth_rounds must be >= 0");
    }

    if (j.contains("online")) {
      const json& o = j.at("online");
      check_keys(o, {"forcing", "forcings", "reference", "kl_baseline"}, "online");
      if (o.contains("forcing") && o.contains("forcings")) throw ConfigError("online: give 'forcing' or 'forcings'");
      if (o.contains("forcing")) c.forcings = {o.at("forcing")};
      if (o.contains("forcings")) c.forcings = o.at("forcings").get<std::vector<json>>();
      for (const auto& f : c.forcings) forcing_from_json(f);  // validate early
      c.reference = o.value("reference", c.reference);
      c.kl_baseline = o.value("kl_baseline", c.kl_baseline);
    }

    if (j.contains("correction")) {
      const json& o = j.at("correction");
      check_keys(o, {"functional", "threshold", "n_mc", "max_rounds", "seed", "variance_probe"}, "correction");
      if (o.contains("functional")) c.functional = Functional::from_json(o.at("functional"));
      c.correction.threshold = o.value("threshold", c.correction.threshold);
      c.correction.n_mc = o.value("n_mc", c.correction.n_mc);
      c.correction.max_rounds = o.value("max_rounds", c.correction.max_rounds);
      c.correction.seed = o.value("seed", c.correction.seed);
      c.variance_probe = o.value("variance_probe", c.variance_probe);
      if (c.correction.n_mc < 2) throw ConfigError("correction.n_mc must be >= 2");
      if (c.correction.max_rounds < 1) throw ConfigError("correction.max_rounds must be >= 1");
      if (!(c.correction.threshold > 0.0)) throw ConfigError("correction.threshold must be positive");
      if (c.variance_probe < 0) throw ConfigError("correction.variance_probe must be >= 0");
    }

    if (j.contains("tmatrix")) {
      const json& o = j.at("tmatrix");
      check_keys(o, {"point", "epsilon"}, "tmatrix");
      if (o.contains("point")) c.tmatrix_point = parse_point(o.at("point"), "tmatrix.point");
      c.tmatrix_epsilon = o.value("epsilon", c.tmatrix_epsilon);
    }

    if (j.contains("output")) {
      check_keys(j.at("output"), {"directory"}, "output");
      c.output_dir = j.at("output").value("directory", c.output_dir);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.offline.coarse_cells > c.cells) throw ConfigError("offline.coarse_h must not be finer than problem.h");
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

std::vector<std::string> preset_names() {
  return {"paper-1d-m20",       "paper-1d-m30-correction", "paper-2d-gaussian", "paper-2d-piecewise",
          "paper-2d-m36",       "tmatrix-1d-m20",          "const-1d",          "const-2d"};
}

ExperimentConfig preset(const std::string& name, bool desk) {
  ExperimentConfig c;
  if (name == "paper-1d-m20") {
    c = base(name, 1, desk ? 128 : 256, {{"kind", "trig_lognormal_1d"}, {"m", 20}});
    use_mc(c, desk ? 5000 : 10000);
    c.offline.K = 50;
    c.offline.epsilon = epsilon_from_probe(1e-3);
  } else if (name == "paper-1d-m30-correction") {
    c = base(name, 1, desk ? 64 : 256, {{"kind", "trig_lognormal_1d"}, {"m", 30}});
    use_mc(c, desk ? 10000 : 40000);
    c.offline.K = 35;
    c.offline.epsilon = epsilon_from_probe(3e-3);
    if (!desk) c.offline.coarse_cells = 128;
    c.functional = Functional{{0.5, 0.0}, 2};
    c.correction.n_mc = 100;
    c.correction.threshold = 1e-2;
    c.variance_probe = desk ? 10000 : 40000;
  } else if (name == "paper-2d-gaussian") {
    c = base(name, 2, desk ? 16 : 64, {{"kind", "trig_lognormal_2d"}, {"m", 12}});
    if (desk) use_mc(c, 2000);
    else use_smolyak(c, 4);
    c.offline.K = 50;
    c.offline.epsilon = epsilon_from_probe(3e-4);
  } else if (name == "paper-2d-piecewise") {
    c = base(name, 2, desk ? 16 : 64, {{"kind", "piecewise_2d"}, {"m", 12}});
    if (desk) use_mc(c, 2000);
    else use_smolyak(c, 4);
    c.offline.K = 50;
    c.offline.epsilon = epsilon_from_probe(1e-4);
  } else if (name == "paper-2d-m36") {
    c = desk ? base(name, 2, 16, {{"kind", "tensor_lognormal_2d"}, {"m", 6}, {"freq_x", 3}, {"freq_y", 2}})
             : base(name, 2, 32, {{"kind", "tensor_lognormal_2d"}, {"m", 36}, {"freq_x", 6}, {"freq_y", 6}});
    use_mc(c, desk ? 2000 : 10000);
    c.offline.K = 70;
    c.offline.epsilon = epsilon_from_probe(2e-3);
  } else if (name == "tmatrix-1d-m20") {
    c = desk ? base(name, 1, 64, {{"kind", "trig_lognormal_1d"}, {"m", 10}})
             : base(name, 1, 256, {{"kind", "trig_lognormal_1d"}, {"m", 20}});
    if (desk) use_mc(c, 2000);
    else use_smolyak(c, 4);
    c.tmatrix_point = {0.5, 0.0};
    c.tmatrix_epsilon = 2e-3;
  } else if (name == "const-1d" || name == "const-2d") {
    const int dim = name == "const-1d" ? 1 : 2;
    c = base(name, dim, 16, {{"kind", "constant"}, {"value", 1.0}});
    use_mc(c, 20);
    c.offline.K = 5;
    c.offline.epsilon = epsilon_from_probe(1e-3);
    c.forcings = {{{"kind", "constant"}, {"value", 1.0}}};
  } else {
    throw ConfigError("unknown preset '" + name + "' (see 'preset list')");
  }
  if (desk) c.output_dir += "-desk";
  return c;
}

json preset_list() {
  json out = json::array();
  for (const auto& n : preset_names()) {
    const ExperimentConfig full = preset(n, false), desk = preset(n, true);
    auto brief = [](const ExperimentConfig& c) {
      return json{{"dim", c.dim},
                  {"h", "1/" + std::to_string(c.cells)},
                  {"coefficient", c.coefficient.to_json()},
                  {"samples", c.sample_kind == SampleKind::MonteCarlo ? "mc M=" + std::to_string(c.samples)
                                                                      : "smolyak order " + std::to_string(c.order)},
                  {"K", c.offline.K},
                  {"epsilon", c.offline.epsilon}};
    };
    out.push_back({{"name", n}, {"full", brief(full)}, {"desk", brief(desk)}});
  }
  return out;
}

MeshPtr make_mesh(const ExperimentConfig& cfg) { return std::make_shared<Mesh>(Mesh::uniform(cfg.dim, cfg.cells)); }

SampleSetPtr make_samples(const ExperimentConfig& cfg) {
  const int m = std::max(cfg.coefficient.m, 1);
  return cfg.sample_kind == SampleKind::MonteCarlo ? mc_sample(m, cfg.samples, cfg.measure, cfg.sample_seed)
                                                   : smolyak(m, cfg.order, cfg.measure);
}

LogLinearFit fit_log_linear(const Vector& values, double floor_ratio) {
  LogLinearFit fit;
  if (values.size() == 0 || !(values[0] > 0.0)) return fit;
  const double floor = floor_ratio * values[0];
  Index n = 0;
  while (n < values.size() && values[n] > floor) ++n;
  fit.count = n;
  if (n < 2) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (Index k = 0; k < n; ++k) {
    const double x = static_cast<double>(k), y = std::log(values[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double nn = static_cast<double>(n);
  const double vx = sxx - sx * sx / nn, vy = syy - sy * sy / nn, cxy = sxy - sx * sy / nn;
  fit.slope = cxy / vx;
  fit.intercept = (sy - fit.slope * sx) / nn;
  fit.r2 = vy > 0.0 ? cxy * cxy / (vx * vy) : 1.0;
  return fit;
}

std::string artifact_path(const ExperimentConfig& cfg) { return (fs::path(cfg.output_dir) / "offline.art").string(); }

void check_artifact_matches(const OfflineArtifact& art, const ExperimentConfig& cfg) {
  const CoupledSystem& sys = *art.system;
  if (sys.mesh().dim() != cfg.dim || sys.mesh().cells() != cfg.cells) {
    throw MismatchError("artifact mesh (" + std::to_string(sys.mesh().dim()) + "D, 1/" +
                        std::to_string(sys.mesh().cells()) + ") differs from the config (" + std::to_string(cfg.dim) +
                        "D, 1/" + std::to_string(cfg.cells) + ")");
  }
  if (sys.model().to_json() != cfg.coefficient.to_json()) {
    throw MismatchError("artifact coefficient " + sys.model().to_json().dump() + " differs from the config " +
                        cfg.coefficient.to_json().dump());
  }
  if (sys.samples()->hash() != make_samples(cfg)->hash()) {
    throw MismatchError("artifact was built on a different sample set than the config describes");
  }
}

json run_offline(const ExperimentConfig& cfg) {
  if (cfg.threads > 0) set_thread_count(cfg.threads);
  ensure_output_dir(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const MeshPtr mesh = make_mesh(cfg);
  const SampleSetPtr samples = make_samples(cfg);
  const double t_samples = seconds_since(t0);
  spdlog::info("offline '{}': {}D mesh 1/{}, M = {}, K = {}, r = {}", cfg.name, cfg.dim, cfg.cells, samples->size(),
               cfg.offline.K, cfg.offline.r);

  const auto t1 = std::chrono::steady_clock::now();
  auto basis = std::make_shared<LocalBasis>(build_local_basis(*mesh, cfg.coefficient, samples, cfg.offline));
  const double t_basis = seconds_since(t1);
  const auto t2 = std::chrono::steady_clock::now();
  OfflineArtifact art{assemble_coupled(mesh, cfg.coefficient, basis), cfg.to_json()};
  art.config.erase("output");
  art.config.erase("threads");
  const double t_assembly = seconds_since(t2);

  const std::string path = artifact_path(cfg);
  save_artifact(art, path);

  json summary = artifact_summary(art);
  summary["artifact"] = path;
  summary["provenance"] = provenance(cfg);
  summary["timing_seconds"] = {{"samples", t_samples}, {"basis", t_basis}, {"assembly", t_assembly},
                               {"total", seconds_since(t0)}};
  std::map<int, int> histogram;
  for (int k : basis->k) ++histogram[k];
  json hist = json::array();
  for (const auto& [k, count] : histogram) hist.push_back({k, count});
  summary["k_histogram"] = hist;
  write_json(fs::path(cfg.output_dir) / "offline_summary.json", summary);

  CsvWriter csv(fs::path(cfg.output_dir) / "k_profile.csv", cfg, coord_header(cfg.dim) + ",k,saturated");
  for (Index i = 0; i < mesh->interior_count(); ++i) {
    write_coords(csv.stream(), mesh->node(mesh->interior_node(i)), cfg.dim);
    csv.stream() << ',' << basis->k[i] << ',' << int(basis->saturated[i]) << '\n';
  }
  spdlog::info("offline '{}': k = {:.2f}, max k = {}, S = {}, saturated = {}, {:.1f}s", cfg.name,
               basis->average_k(), basis->max_k(), art.system->size(), basis->saturated_count(),
               seconds_since(t0));
  return summary;
}

json run_online(const ExperimentConfig& cfg, const std::string& path) {
  if (cfg.threads > 0) set_thread_count(cfg.threads);
  ensure_output_dir(cfg);
  if (cfg.forcings.empty()) throw ConfigError("online stage needs at least one forcing");
  const OfflineArtifact art = load_artifact(path);
  check_artifact_matches(art, cfg);
  const CoupledSystemPtr system = art.system;
  const MeshPtr mesh = system->mesh_ptr();
  const LocalBasis& basis = system->basis();

  json records = json::array();
  CsvWriter timing(fs::path(cfg.output_dir) / "online_timing.csv", cfg, "forcing,online_seconds,reference_seconds");
  for (std::size_t j = 0; j < cfg.forcings.size(); ++j) {
    const Forcing f = forcing_at(cfg, j);
    const auto t0 = std::chrono::steady_clock::now();
    const HsfemSolution sol = solve_online(system, f);
    const auto [mean, sd] = statistics(sol);
    const double t_online = seconds_since(t0);

    json rec{{"forcing", f.descriptor()},
             {"k_average", basis.average_k()},
             {"k_max", basis.max_k()},
             {"S", system->size()},
             {"timing_seconds", {{"online", t_online}}}};
    Vector ref_mean, ref_sd;
    double t_reference = 0.0;
    if (cfg.reference) {
      const auto t1 = std::chrono::steady_clock::now();
      const Ensemble ref = reference_ensemble(cfg, mesh, system->model(), system->samples(), f);
      t_reference = seconds_since(t1);
      std::tie(ref_mean, ref_sd) = trace_statistics(ref.values, ref.samples->weights);
      const Metric e = e_hsfem(sol, ref);
      rec["E_HSFEM"] = metric_json(e);
      if (!e.defined) rec["E_HSFEM_reason"] = e.reason;
      if (cfg.kl_baseline) {
        const KlMatch kl = e_kl_match(ref, basis.average_k());
        rec["E_KL"] = metric_json(kl.floor);
        rec["E_KL_ceil"] = metric_json(kl.ceil);
        rec["k_match"] = {kl.k_floor, kl.k_ceil};
      }
      rec["timing_seconds"]["reference"] = t_reference;
      spdlog::info("online '{}' forcing {}: E_HSFEM = {}", cfg.name, j,
                   e.defined ? fmt::format("{:.3e}", e.value) : "undefined");
    }
    timing.row(j, t_online, t_reference);

    const std::string stem = "online_" + std::to_string(j);
    std::string header = coord_header(cfg.dim) + ",mean,sd";
    if (cfg.reference) header += ",reference_mean,reference_sd";
    CsvWriter csv(fs::path(cfg.output_dir) / (stem + ".csv"), cfg, header);
    for (Index i = 0; i < mesh->interior_count(); ++i) {
      write_coords(csv.stream(), mesh->node(mesh->interior_node(i)), cfg.dim);
      csv.stream() << ',' << mean[i] << ',' << sd[i];
      if (cfg.reference) csv.stream() << ',' << ref_mean[i] << ',' << ref_sd[i];
      csv.stream() << '\n';
    }
    rec["csv"] = (fs::path(cfg.output_dir) / (stem + ".csv")).string();
    records.push_back(rec);
  }
  json out{{"provenance", provenance(cfg)}, {"artifact", path}, {"results", records}};
  write_json(fs::path(cfg.output_dir) / "online.json", out);
  return out;
}

json run_baseline_kl(const ExperimentConfig& cfg, const std::string& path, double k_match) {
  if (cfg.threads > 0) set_thread_count(cfg.threads);
  ensure_output_dir(cfg);
  MeshPtr mesh = make_mesh(cfg);
  SampleSetPtr samples;
  if (!path.empty()) {
    const OfflineArtifact art = load_artifact(path);
    check_artifact_matches(art, cfg);
    samples = art.system->samples();
    if (k_match < 0.0) k_match = art.system->basis().average_k();
  } else {
    if (k_match < 0.0) throw ConfigError("baseline-kl needs --k or an offline artifact to take k from");
    samples = make_samples(cfg);
  }
  json records = json::array();
  for (std::size_t j = 0; j < cfg.forcings.size(); ++j) {
    const Forcing f = forcing_at(cfg, j);
    const Ensemble ref = reference_ensemble(cfg, mesh, cfg.coefficient, samples, f);
    const KlDecomposition kl = kl_expand(ref);
    const KlMatch match = e_kl_match(ref, k_match);
    const std::string stem = "kl_spectrum_" + std::to_string(j);
    CsvWriter csv(fs::path(cfg.output_dir) / (stem + ".csv"), cfg, "j,lambda,singular_value,tail_error");
    for (Index r = 0; r < kl.rank(); ++r) {
      csv.row(r + 1, kl.eigenvalues[r], std::sqrt(kl.eigenvalues[r]), kl.tail_error(r + 1));
    }
    records.push_back({{"forcing", f.descriptor()},
                       {"rank", kl.rank()},
                       {"k_match", k_match},
                       {"k_floor", match.k_floor},
                       {"k_ceil", match.k_ceil},
                       {"E_KL", metric_json(match.floor)},
                       {"E_KL_ceil", metric_json(match.ceil)},
                       {"csv", (fs::path(cfg.output_dir) / (stem + ".csv")).string()}});
  }
  json out{{"provenance", provenance(cfg)}, {"results", records}};
  write_json(fs::path(cfg.output_dir) / "baseline_kl.json", out);
  return out;
}

json run_tmatrix(const ExperimentConfig& cfg) {
  if (cfg.threads > 0) set_thread_count(cfg.threads);
  ensure_output_dir(cfg);
  const MeshPtr mesh = make_mesh(cfg);
  const SampleSetPtr samples = make_samples(cfg);
  const FourierDict dict = FourierDict::for_mesh(*mesh);
  const Index node = nearest_interior_node(*mesh, cfg.tmatrix_point);
  const auto t0 = std::chrono::steady_clock::now();
  const TMatrix t = tmatrix_explicit(*mesh, cfg.coefficient, samples, dict, node);
  const LogLinearFit fit = fit_log_linear(t.singular_values);

  CsvWriter csv(fs::path(cfg.output_dir) / "tmatrix_singular_values.csv", cfg, "k,singular_value");
  for (Index k = 0; k < t.singular_values.size(); ++k) csv.row(k + 1, t.singular_values[k]);
  const Point& x = mesh->node(mesh->interior_node(node));
  json out{{"provenance", provenance(cfg)},
           {"node", node},
           {"point", point_json(x, cfg.dim)},
           {"shape", {t.T.rows(), t.T.cols()}},
           {"epsilon", cfg.tmatrix_epsilon},
           {"k_at_epsilon", t.rank_at(cfg.tmatrix_epsilon)},
           {"fit", {{"slope", fit.slope}, {"intercept", fit.intercept}, {"r2", fit.r2}, {"count", fit.count}}},
           {"singular_values", std::vector<double>(t.singular_values.data(),
                                                   t.singular_values.data() + t.singular_values.size())},
           {"timing_seconds", seconds_since(t0)}};
  write_json(fs::path(cfg.output_dir) / "tmatrix.json", out);
  return out;
}

json run_correct(const ExperimentConfig& cfg, const std::string& path) {
  if (cfg.threads > 0) set_thread_count(cfg.threads);
  ensure_output_dir(cfg);
  const OfflineArtifact art = load_artifact(path);
  check_artifact_matches(art, cfg);
  const Forcing f = forcing_at(cfg, 0);
  const HsfemSolution sol = solve_online(art.system, f);
  const auto t0 = std::chrono::steady_clock::now();
  const CorrectionReport rep = estimate_and_correct(sol, cfg.functional, cfg.correction);
  json out{{"provenance", provenance(cfg)}, {"forcing", f.descriptor()}, {"report", rep.to_json()}};
  out["timing_seconds"] = seconds_since(t0);
  if (cfg.variance_probe > 0) {
    const VarianceEstimate v = variance_ratio(sol, cfg.functional, cfg.variance_probe, cfg.correction.seed);
    out["variance"] = {{"sigma_g", v.sigma_g},
                       {"sigma_tau", v.sigma_tau},
                       {"ratio", std::isinf(v.ratio) ? json("inf") : json(v.ratio)},
                       {"samples", v.samples}};
  }
  if (cfg.reference) {
    const Ensemble ref = reference_ensemble(cfg, art.system->mesh_ptr(), art.system->model(), art.system->samples(), f);
    double exact = 0.0;
    for (Index p = 0; p < ref.values.cols(); ++p) {
      exact += ref.samples->weights[p] * cfg.functional.evaluate(*ref.mesh, ref.values.col(p));
    }
    out["exact_expectation"] = exact;
  }
  write_json(fs::path(cfg.output_dir) / "correction.json", out);
  spdlog::info("correct '{}': E[g(u_h)] = {:.4e}, corrected = {:.4e} +- {:.2e}, decision {}", cfg.name,
               rep.expected_uh, rep.corrected, 2.0 * rep.tau_tilde, to_string(rep.decision));
  return out;
}

}  // namespace hsfem
