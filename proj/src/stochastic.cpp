#include "hsfem/stochastic.hpp"

#include "hsfem/binary_io.hpp"
#include "hsfem/quadrature.hpp"
#include "hsfem/random.hpp"

#include <cmath>
#include <map>
#include <utility>
#include <vector>

namespace hsfem {

std::string to_string(Measure m) { return m == Measure::Uniform ? "uniform" : "gaussian"; }

Measure measure_from_string(const std::string& s) {
  if (s == "uniform") return Measure::Uniform;
  if (s == "gaussian") return Measure::Gaussian;
  throw ConfigError("unknown measure '" + s + "' (expected uniform or gaussian)");
}

std::string SampleSet::hash() const {
  std::string buf = std::to_string(dimension) + ":" + std::to_string(size()) + ":" +
                    (kind == SampleKind::MonteCarlo ? "mc" : "smolyak") + ":" + to_string(measure) + ":";
  buf.append(reinterpret_cast<const char*>(points.data()), static_cast<std::size_t>(points.size()) * sizeof(double));
  buf.append(reinterpret_cast<const char*>(weights.data()), static_cast<std::size_t>(weights.size()) * sizeof(double));
  return sha256_hex(buf);
}

SampleSetPtr mc_sample(int m, Index samples, Measure measure, std::uint64_t seed) {
  if (m < 0) throw ConfigError("stochastic dimension must be non-negative");
  if (samples < 1) throw ConfigError("Monte Carlo sample count must be at least 1");
  auto set = std::make_shared<SampleSet>();
  set->dimension = m;
  set->measure = measure;
  set->kind = SampleKind::MonteCarlo;
  set->seed = seed;
  set->points.resize(samples, m);
  RandomSource rng(seed, Stream::MonteCarloPoints);
  for (Index p = 0; p < samples; ++p) {
    for (int k = 0; k < m; ++k) {
      set->points(p, k) = measure == Measure::Uniform ? rng.uniform(-0.5, 0.5) : rng.normal();
    }
  }
  set->weights = Vector::Constant(samples, 1.0 / static_cast<double>(samples));
  return set;
}

namespace {

using SparsePoint = std::vector<std::pair<int, double>>;  // nonzero coordinates only

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

// Calls visit(alpha) for every sparse multi-index (dim, alpha_d > 0) with |alpha| = s.
template <class Visit>
void for_each_multi_index(int m, int s, Visit&& visit) {
  std::vector<std::pair<int, int>> current;
  auto rec = [&](auto&& self, int start, int remaining) -> void {
    if (remaining == 0) {
      visit(current);
      return;
    }
    for (int d = start; d < m; ++d) {
      for (int v = 1; v <= remaining; ++v) {
        current.emplace_back(d, v);
        self(self, d + 1, remaining - v);
        current.pop_back();
      }
    }
  };
  rec(rec, 0, s);
}

struct SmolyakGrid {
  std::map<SparsePoint, double> points;
};

SmolyakGrid build_smolyak(int m, int order, Measure measure, Index max_points) {
  if (m < 1) throw ConfigError("Smolyak grid needs stochastic dimension >= 1");
  if (order < 1) throw ConfigError("Smolyak order must be >= 1");
  const int total = order - 1;

  std::vector<Rule1d> rules(total + 2);
  for (int l = 1; l <= total + 1; ++l) {
    rules[l] = measure == Measure::Uniform ? gauss_legendre(2 * l - 1, -0.5, 0.5) : gauss_hermite_probabilists(2 * l - 1);
  }

  // Upper bound on tensor points before merging, to refuse absurd requests early.
  double bound = 0.0;
  for (int s = std::max(0, total - m + 1); s <= total; ++s) {
    for_each_multi_index(m, s, [&](const std::vector<std::pair<int, int>>& alpha) {
      double prod = 1.0;
      for (auto [d, a] : alpha) prod *= 2 * (a + 1) - 1;
      bound += prod;
    });
    if (bound > 8.0 * static_cast<double>(max_points)) {
      throw ConfigError("Smolyak grid (m=" + std::to_string(m) + ", order=" + std::to_string(order) +
                        ") exceeds the point cap of " + std::to_string(max_points));
    }
  }

  SmolyakGrid grid;
  for (int s = std::max(0, total - m + 1); s <= total; ++s) {
    const double coef = ((total - s) % 2 == 0 ? 1.0 : -1.0) * binomial(m - 1, total - s);
    for_each_multi_index(m, s, [&](const std::vector<std::pair<int, int>>& alpha) {
      // Iterate the tensor product over the active coordinates; inactive ones
      // use the one-point rule at 0 with weight 1.
      const std::size_t k = alpha.size();
      std::vector<std::size_t> idx(k, 0);
      for (;;) {
        SparsePoint pt;
        double w = coef;
        for (std::size_t j = 0; j < k; ++j) {
          const Rule1d& rule = rules[alpha[j].second + 1];
          const double x = rule.nodes[idx[j]];
          w *= rule.weights[idx[j]];
          if (x != 0.0) pt.emplace_back(alpha[j].first, x);
        }
        grid.points[pt] += w;
        std::size_t j = 0;
        for (; j < k; ++j) {
          if (++idx[j] < rules[alpha[j].second + 1].nodes.size()) break;
          idx[j] = 0;
        }
        if (j == k) break;
      }
    });
  }

  double wmax = 0.0;
  for (const auto& [pt, w] : grid.points) wmax = std::max(wmax, std::abs(w));
  for (auto it = grid.points.begin(); it != grid.points.end();) {
    if (std::abs(it->second) <= 1e-13 * wmax)
      it = grid.points.erase(it);
    else
      ++it;
  }
  if (static_cast<Index>(grid.points.size()) > max_points) {
    throw ConfigError("Smolyak grid has " + std::to_string(grid.points.size()) + " points, above the cap of " +
                      std::to_string(max_points));
  }
  return grid;
}

}  // namespace

SampleSetPtr smolyak(int m, int order, Measure measure, Index max_points) {
  const SmolyakGrid grid = build_smolyak(m, order, measure, max_points);
  auto set = std::make_shared<SampleSet>();
  set->dimension = m;
  set->measure = measure;
  set->kind = SampleKind::Smolyak;
  set->order = order;
  const Index n = static_cast<Index>(grid.points.size());
  set->points = Matrix::Zero(n, m);
  set->weights.resize(n);
  Index p = 0;
  for (const auto& [pt, w] : grid.points) {
    for (auto [d, x] : pt) set->points(p, d) = x;
    set->weights[p] = w;
    ++p;
  }
  return set;
}

Index smolyak_point_count(int m, int order) {
  return static_cast<Index>(build_smolyak(m, order, Measure::Gaussian, 50'000'000).points.size());
}

RandomFunction::RandomFunction(SampleSetPtr samples, Vector values)
    : samples_(std::move(samples)), values_(std::move(values)) {
  if (!samples_) throw ConfigError("random function needs a sample set");
  if (values_.size() != samples_->size()) {
    throw ConfigError("random function has " + std::to_string(values_.size()) + " values but the sample set has " +
                      std::to_string(samples_->size()) + " points");
  }
}

namespace {
void require_same_set(const RandomFunction& f, const RandomFunction& g) {
  if (f.samples() != g.samples() && f.samples()->hash() != g.samples()->hash()) {
    throw MismatchError("random functions live on different sample sets");
  }
}
}  // namespace

double weighted_dot(const Vector& weights, const Eigen::Ref<const Vector>& f, const Eigen::Ref<const Vector>& g) {
  double acc = 0.0;
  for (Index p = 0; p < weights.size(); ++p) acc += weights[p] * f[p] * g[p];
  return acc;
}

double weighted_norm(const Vector& weights, const Eigen::Ref<const Vector>& f) {
  return std::sqrt(std::max(0.0, weighted_dot(weights, f, f)));
}

double expect(const RandomFunction& f) { return f.samples()->weights.dot(f.values()); }

double inner(const RandomFunction& f, const RandomFunction& g) {
  require_same_set(f, g);
  return weighted_dot(f.samples()->weights, f.values(), g.values());
}

double l2norm(const RandomFunction& f) { return weighted_norm(f.samples()->weights, f.values()); }

namespace {
constexpr char kSampleMagic[9] = "HSFEMSS\x01";
}

void save_sample_set(const SampleSet& set, const std::string& path) {
  nlohmann::json header{{"m", set.dimension},
                        {"M", set.size()},
                        {"kind", set.kind == SampleKind::MonteCarlo ? "mc" : "smolyak"},
                        {"measure", to_string(set.measure)},
                        {"seed", set.seed},
                        {"order", set.order},
                        {"hash", set.hash()}};
  BinaryWriter w(path, kSampleMagic, 1, header);
  w.write_doubles(set.points);
  w.write_doubles(set.weights);
  w.close();
}

SampleSetPtr load_sample_set(const std::string& path) {
  BinaryReader r(path, kSampleMagic, 1);
  const auto& h = r.header();
  auto set = std::make_shared<SampleSet>();
  try {
    set->dimension = h.at("m").get<int>();
    set->kind = h.at("kind").get<std::string>() == "mc" ? SampleKind::MonteCarlo : SampleKind::Smolyak;
    set->measure = measure_from_string(h.at("measure").get<std::string>());
    set->seed = h.at("seed").get<std::uint64_t>();
    set->order = h.at("order").get<int>();
    const Index n = h.at("M").get<Index>();
    set->points = r.read_matrix(n, set->dimension);
    set->weights = r.read_vector(n);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed sample-set header: " + e.what());
  }
  if (set->hash() != r.header().value("hash", std::string{})) throw IoError(path + ": sample-set hash mismatch");
  return set;
}

}  // namespace hsfem
