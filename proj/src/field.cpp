#include "hsfem/field.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

namespace hsfem {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLogClamp = 690.0;

std::atomic<bool> g_clamp_warned{false};

double clamped_exp(double s) {
  if (std::abs(s) > kLogClamp) {
    if (!g_clamp_warned.exchange(true)) {
      spdlog::warn("coefficient exponent {:.3g} clamped to +-{}", s, kLogClamp);
    }
    s = std::clamp(s, -kLogClamp, kLogClamp);
  }
  return std::exp(s);
}

const char* kind_name(CoefficientKind k) {
  switch (k) {
    case CoefficientKind::TrigLognormal1d: return "trig_lognormal_1d";
    case CoefficientKind::Normalized1d: return "normalized_1d";
    case CoefficientKind::TrigLognormal2d: return "trig_lognormal_2d";
    case CoefficientKind::Piecewise2d: return "piecewise_2d";
    case CoefficientKind::TensorLognormal2d: return "tensor_lognormal_2d";
    case CoefficientKind::Constant: return "constant";
  }
  return "?";
}

// Quadrant index 0..3 for D1..D4; points on x = 1/2 or y = 1/2 go to the lower index.
int quadrant(const Point& x) {
  const bool right = x[0] > 0.5;
  const bool top = x[1] > 0.5;
  return (top ? 2 : 0) + (right ? 1 : 0);
}

}  // namespace

int CoefficientModel::dim() const {
  switch (kind) {
    case CoefficientKind::TrigLognormal1d:
    case CoefficientKind::Normalized1d: return 1;
    case CoefficientKind::Constant: return 0;
    default: return 2;
  }
}

Measure CoefficientModel::natural_measure() const {
  return dim() == 2 ? Measure::Gaussian : Measure::Uniform;
}

double CoefficientModel::log_terms(const Point& x, Eigen::Ref<Vector> basis) const {
  switch (kind) {
    case CoefficientKind::TrigLognormal1d:
      for (int k = 0; k < m; ++k) basis[k] = std::cos(2.0 * kPi * (k + 1) * x[0]);
      return 0.0;
    case CoefficientKind::Normalized1d:
      for (int k = 0; k < m; ++k) basis[k] = scale / m * std::cos(2.0 * kPi * (k + 1) * x[0]);
      return 0.0;
    case CoefficientKind::TrigLognormal2d:
      for (int k = 1; k <= m; ++k) {
        basis[k - 1] = 0.25 * (std::sin(k * kPi * x[0]) + std::cos((m + 1 - k) * kPi * x[1]));
      }
      return 1.0;
    case CoefficientKind::Piecewise2d: {
      basis.setZero();
      const int q = quadrant(x);
      for (int j = 1; j <= 3; ++j) {
        basis[3 * q + j - 1] = std::sin(2.0 * j * kPi * x[0]) + std::cos(2.0 * (4 - j) * kPi * x[1]);
      }
      return static_cast<double>(q);
    }
    case CoefficientKind::TensorLognormal2d:
      for (int a = 1; a <= freq_x; ++a) {
        for (int b = 1; b <= freq_y; ++b) {
          basis[(a - 1) * freq_y + (b - 1)] =
              amplitude * 2.0 * std::sin(2.0 * kPi * a * x[0]) * std::cos(2.0 * kPi * b * x[1]);
        }
      }
      return 0.0;
    case CoefficientKind::Constant:
      return std::log(value);
  }
  return 0.0;
}

double CoefficientModel::eval(const Point& x, const Eigen::Ref<const Vector>& theta) const {
  if (theta.size() != m) {
    throw ConfigError("coefficient expects " + std::to_string(m) + " random inputs, got " +
                      std::to_string(theta.size()));
  }
  Vector basis(m);
  const double off = log_terms(x, basis);
  return clamped_exp(off + basis.dot(theta));
}

double eval_coefficient(const CoefficientModel& model, const Point& x, const Vector& theta) {
  return model.eval(x, theta);
}

nlohmann::json CoefficientModel::to_json() const {
  nlohmann::json j{{"kind", kind_name(kind)}, {"m", m}};
  if (kind == CoefficientKind::Normalized1d) j["scale"] = scale;
  if (kind == CoefficientKind::TensorLognormal2d) {
    j["amplitude"] = amplitude;
    j["freq_x"] = freq_x;
    j["freq_y"] = freq_y;
  }
  if (kind == CoefficientKind::Constant) j["value"] = value;
  return j;
}

CoefficientModel CoefficientModel::from_json(const nlohmann::json& j) {
  CoefficientModel c;
  if (!j.is_object()) throw ConfigError("coefficient must be an object");
  const std::string kind = j.value("kind", "");
  if (kind == "trig_lognormal_1d") c.kind = CoefficientKind::TrigLognormal1d;
  else if (kind == "normalized_1d") c.kind = CoefficientKind::Normalized1d;
  else if (kind == "trig_lognormal_2d") c.kind = CoefficientKind::TrigLognormal2d;
  else if (kind == "piecewise_2d") c.kind = CoefficientKind::Piecewise2d;
  else if (kind == "tensor_lognormal_2d") c.kind = CoefficientKind::TensorLognormal2d;
  else if (kind == "constant") c.kind = CoefficientKind::Constant;
  else throw ConfigError("unknown coefficient kind '" + kind + "'");

  try {
    c.scale = j.value("scale", 20.0);
    c.amplitude = j.value("amplitude", 0.5);
    c.value = j.value("value", 1.0);
    c.freq_x = j.value("freq_x", 6);
    c.freq_y = j.value("freq_y", 6);
    switch (c.kind) {
      case CoefficientKind::Piecewise2d:
        c.m = j.value("m", 12);
        if (c.m != 12) throw ConfigError("piecewise_2d has exactly m = 12 random inputs");
        break;
      case CoefficientKind::TensorLognormal2d:
        if (c.freq_x < 1 || c.freq_y < 1) throw ConfigError("tensor_lognormal_2d needs freq_x, freq_y >= 1");
        c.m = j.value("m", c.freq_x * c.freq_y);
        if (c.m != c.freq_x * c.freq_y) throw ConfigError("tensor_lognormal_2d needs m = freq_x * freq_y");
        break;
      case CoefficientKind::Constant:
        c.m = j.value("m", 0);
        if (!(c.value > 0.0) || !std::isfinite(c.value)) throw ConfigError("constant coefficient must be positive");
        break;
      default:
        c.m = j.at("m").get<int>();
        if (c.m < 1) throw ConfigError("coefficient needs m >= 1");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("coefficient: ") + e.what());
  }
  return c;
}

CentroidCoefficients::CentroidCoefficients(const Mesh& mesh, const CoefficientModel& model) {
  if (model.dim() != 0 && model.dim() != mesh.dim()) {
    throw ConfigError("coefficient model is " + std::to_string(model.dim()) + "D but the mesh is " +
                      std::to_string(mesh.dim()) + "D");
  }
  const Index E = mesh.element_count();
  offset_.resize(E);
  basis_.resize(E, model.m);
  Vector row(model.m);
  for (Index e = 0; e < E; ++e) {
    offset_[e] = model.log_terms(mesh.centroid(e), row);
    basis_.row(e) = row.transpose();
  }
}

namespace {
void check_positive(const Eigen::Ref<const Vector>& a) {
  for (Index e = 0; e < a.size(); ++e) {
    if (!(a[e] > 0.0) || !std::isfinite(a[e])) {
      throw ModelError("coefficient value " + std::to_string(a[e]) + " on element " + std::to_string(e) +
                       " is not strictly positive");
    }
  }
}
}  // namespace

void CentroidCoefficients::evaluate(const Eigen::Ref<const Vector>& theta, Eigen::Ref<Vector> out) const {
  if (basis_.cols() == 0) {
    out = offset_.unaryExpr([](double s) { return clamped_exp(s); });
    return;
  }
  if (theta.size() != basis_.cols()) throw ConfigError("sample dimension does not match the coefficient model");
  out = offset_ + basis_ * theta;
  for (Index e = 0; e < out.size(); ++e) out[e] = clamped_exp(out[e]);
  check_positive(out);
}

Matrix CentroidCoefficients::evaluate_all(const SampleSet& samples) const {
  if (basis_.cols() == 0) return offset_.unaryExpr([](double s) { return clamped_exp(s); }).replicate(1, samples.size());
  if (samples.dimension != basis_.cols()) {
    throw ConfigError("sample set has dimension " + std::to_string(samples.dimension) +
                      " but the coefficient needs " + std::to_string(basis_.cols()));
  }
  Matrix a = basis_ * samples.points.transpose();
  a.colwise() += offset_;
  a = a.unaryExpr([](double s) { return clamped_exp(s); });
  for (Index p = 0; p < a.cols(); ++p) check_positive(a.col(p));
  return a;
}

FourierDict::FourierDict(int dim, int l) : dim_(dim), l_(l) {
  if (dim != 1 && dim != 2) throw ConfigError("Fourier dictionary dimension must be 1 or 2");
  if (l < 0) throw ConfigError("Fourier dictionary needs l >= 0");
}

FourierDict FourierDict::for_mesh(const Mesh& mesh) { return FourierDict(mesh.dim(), mesh.cells() / 2); }

void FourierDict::eval_1d(double t, double* out) const {
  out[0] = 1.0;
  for (int k = 1; k <= l_; ++k) {
    out[2 * k - 1] = std::numbers::sqrt2 * std::sin(2.0 * kPi * k * t);
    out[2 * k] = std::numbers::sqrt2 * std::cos(2.0 * kPi * k * t);
  }
}

double FourierDict::eval(Index q, const Point& x) const {
  if (q < 0 || q >= size()) throw ConfigError("Fourier mode index out of range");
  auto mode = [](Index r, double t) {
    if (r == 0) return 1.0;
    const Index k = (r + 1) / 2;
    const double arg = 2.0 * kPi * static_cast<double>(k) * t;
    return std::numbers::sqrt2 * (r % 2 == 1 ? std::sin(arg) : std::cos(arg));
  };
  if (dim_ == 1) return mode(q, x[0]);
  return mode(q / modes1d(), x[0]) * mode(q % modes1d(), x[1]);
}

Forcing forcing_from_vector(const FourierDict& dict, const Vector& v) {
  if (v.size() != dict.size()) {
    throw ConfigError("forcing vector has length " + std::to_string(v.size()) + " but the dictionary has " +
                      std::to_string(dict.size()) + " modes");
  }
  std::vector<double> coeffs(v.data(), v.data() + v.size());
  nlohmann::json desc{{"kind", "fourier"}, {"dim", dict.dim()}, {"l", dict.l()}, {"coefficients", coeffs}};
  return Forcing(
      [dict, v](const Point& x) {
        const Index n1 = 2 * dict.l() + 1;
        std::vector<double> gx(n1), gy(n1);
        dict.eval_1d(x[0], gx.data());
        if (dict.dim() == 1) {
          double s = 0.0;
          for (Index q = 0; q < n1; ++q) s += v[q] * gx[q];
          return s;
        }
        dict.eval_1d(x[1], gy.data());
        double s = 0.0;
        for (Index a = 0; a < n1; ++a) {
          for (Index b = 0; b < n1; ++b) s += v[a * n1 + b] * gx[a] * gy[b];
        }
        return s;
      },
      desc);
}

Forcing forcing_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("forcing must be an object");
  const std::string kind = j.value("kind", "");
  try {
    if (kind == "preset") {
      const std::string name = j.at("name").get<std::string>();
      if (name == "cubic_1d") {
        return Forcing([](const Point& x) { const double t = x[0]; return 1.0 - t + t * t - t * t * t; }, j);
      }
      if (name == "affine_2d") return Forcing([](const Point& x) { return 1.0 + x[0] - 2.0 * x[1]; }, j);
      throw ConfigError("unknown forcing preset '" + name + "'");
    }
    if (kind == "constant") {
      const double c = j.at("value").get<double>();
      return Forcing([c](const Point&) { return c; }, j);
    }
    if (kind == "zero") return Forcing([](const Point&) { return 0.0; }, j);
    if (kind == "polynomial") {
      std::vector<std::array<double, 3>> terms;
      for (const auto& t : j.at("terms")) {
        if (!t.is_array() || t.size() < 2 || t.size() > 3) {
          throw ConfigError("polynomial term must be [c, px] or [c, px, py]");
        }
        terms.push_back({t[0].get<double>(), t[1].get<double>(), t.size() == 3 ? t[2].get<double>() : 0.0});
      }
      return Forcing(
          [terms](const Point& x) {
            double s = 0.0;
            for (const auto& t : terms) s += t[0] * std::pow(x[0], t[1]) * std::pow(x[1], t[2]);
            return s;
          },
          j);
    }
    if (kind == "fourier") {
      const FourierDict dict(j.at("dim").get<int>(), j.at("l").get<int>());
      const auto c = j.at("coefficients").get<std::vector<double>>();
      return forcing_from_vector(dict, Eigen::Map<const Vector>(c.data(), static_cast<Index>(c.size())));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("forcing '" + kind + "': " + e.what());
  }
  throw ConfigError("unknown forcing kind '" + kind + "'");
}

Vector load_vector(const Mesh& mesh, const Forcing& f, int order) {
  Vector b = Vector::Zero(mesh.interior_count());
  if (f.is_zero()) return b;
  for (Index e = 0; e < mesh.element_count(); ++e) {
    const auto quad = element_quadrature(mesh, e, order);
    const auto& el = mesh.element(e);
    for (std::size_t q = 0; q < quad.points.size(); ++q) {
      const double fw = f(quad.points[q]) * quad.weights[q];
      for (std::size_t a = 0; a < el.size(); ++a) {
        const Index k = mesh.interior_index(el[a]);
        if (k >= 0) b[k] += fw * quad.bary[q][a];
      }
    }
  }
  return b;
}

Matrix dictionary_load_matrix(const Mesh& mesh, const FourierDict& dict, int order) {
  if (dict.dim() != mesh.dim()) throw ConfigError("dictionary and mesh dimensions differ");
  const Index n1 = 2 * dict.l() + 1;
  Matrix B = Matrix::Zero(mesh.interior_count(), dict.size());
  Vector gx(n1), gy(n1);
  for (Index e = 0; e < mesh.element_count(); ++e) {
    const auto quad = element_quadrature(mesh, e, order);
    const auto& el = mesh.element(e);
    for (std::size_t q = 0; q < quad.points.size(); ++q) {
      dict.eval_1d(quad.points[q][0], gx.data());
      if (mesh.dim() == 2) dict.eval_1d(quad.points[q][1], gy.data());
      for (std::size_t a = 0; a < el.size(); ++a) {
        const Index k = mesh.interior_index(el[a]);
        if (k < 0) continue;
        const double w = quad.weights[q] * quad.bary[q][a];
        if (mesh.dim() == 1) {
          B.row(k) += w * gx.transpose();
        } else {
          // Row-major mode layout q = a * n1 + b matches a kron(gx, gy) product.
          for (Index ia = 0; ia < n1; ++ia) {
            B.row(k).segment(ia * n1, n1) += (w * gx[ia]) * gy.transpose();
          }
        }
      }
    }
  }
  return B;
}

}  // namespace hsfem
