#include "hsfem/binary_io.hpp"
#include "hsfem/field.hpp"
#include "hsfem/mesh.hpp"
#include "hsfem/quadrature.hpp"
#include "hsfem/random.hpp"
#include "hsfem/stochastic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace hsfem;

namespace {

double double_factorial(int n) {
  double r = 1.0;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("hsfem_" + name)).string();
}

}  // namespace

TEST(Philox, KnownAnswerZeroKeyZeroCounter) {
  Philox4x32 g(0, 0, 0);
  EXPECT_EQ(g(), 0x6627e8d5u);
  EXPECT_EQ(g(), 0xe169c58du);
  EXPECT_EQ(g(), 0xbc57ac4cu);
  EXPECT_EQ(g(), 0x9b00dbd8u);
}

TEST(Philox, StreamsAreReproducibleAndDistinct) {
  RandomSource a(42, Stream::Sketch), b(42, Stream::Sketch), c(42, Stream::Probe);
  const Matrix A = a.gaussian_matrix(5, 3);
  EXPECT_EQ(A, b.gaussian_matrix(5, 3));
  EXPECT_NE(A, c.gaussian_matrix(5, 3));
}

TEST(Philox, SeekReplaysBlocks) {
  Philox4x32 g(7, 3);
  for (int i = 0; i < 40; ++i) g();
  const auto x = g();
  g.seek(10);
  EXPECT_EQ(g(), x);
}

TEST(Quadrature, GaussLegendreExactForOddDegree) {
  for (int n = 1; n <= 7; ++n) {
    const Rule1d r = gauss_legendre(n, -0.5, 0.5);
    for (int p = 0; p <= 2 * n - 1; ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * std::pow(r.nodes[i], p);
      const double exact = p % 2 ? 0.0 : 2.0 * std::pow(0.5, p + 1) / (p + 1);
      EXPECT_NEAR(s, exact, 1e-14) << "n=" << n << " p=" << p;
    }
  }
}

TEST(Quadrature, GaussHermiteMatchesNormalMoments) {
  for (int n = 1; n <= 9; n += 2) {
    const Rule1d r = gauss_hermite_probabilists(n);
    EXPECT_EQ(r.nodes[n / 2], 0.0);
    for (int p = 0; p <= 2 * n - 1; ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * std::pow(r.nodes[i], p);
      const double exact = p % 2 ? 0.0 : double_factorial(p - 1);
      EXPECT_NEAR(s, exact, 1e-11 * std::max(1.0, exact)) << "n=" << n << " p=" << p;
    }
  }
}

TEST(Mesh, CountsAndNumbering) {
  const Mesh m1 = Mesh::uniform(1, 8);
  EXPECT_EQ(m1.node_count(), 9);
  EXPECT_EQ(m1.element_count(), 8);
  EXPECT_EQ(m1.interior_count(), 7);
  EXPECT_EQ(m1.interior_node(0), 1);

  const Mesh m2 = Mesh::uniform(2, 0.25);
  EXPECT_EQ(m2.node_count(), 25);
  EXPECT_EQ(m2.element_count(), 32);
  EXPECT_EQ(m2.interior_count(), 9);
  EXPECT_EQ(m2.interior_node(0), 6);
  EXPECT_THROW(Mesh::uniform(1, 0.3), ConfigError);
}

TEST(Mesh, MassAndStiffnessMatchHandValues1d) {
  const Mesh m = Mesh::uniform(1, 4);
  const Matrix M = Matrix(m.interior_mass_matrix());
  const Matrix K = Matrix(m.interior_laplacian());
  const double h = 0.25;
  EXPECT_NEAR(M(0, 0), 2.0 * h / 3.0, 1e-15);
  EXPECT_NEAR(M(0, 1), h / 6.0, 1e-15);
  EXPECT_NEAR(K(1, 1), 2.0 / h, 1e-12);
  EXPECT_NEAR(K(1, 2), -1.0 / h, 1e-12);
  EXPECT_EQ(K(0, 2), 0.0);
}

TEST(Mesh, MassMatrixIntegratesProducts2d) {
  // 1^T M 1 = integral of (sum of interior hats)^2, computed independently by
  // element quadrature of the interpolant.
  const Mesh m = Mesh::uniform(2, 4);
  const Vector ones = Vector::Ones(m.interior_count());
  const Eigen::SparseMatrix<double> M = m.interior_mass_matrix();
  const double viaM = ones.dot(M * ones);
  const P1Function u = interp_p1(m, extend_by_zero(m, ones));
  double viaQ = 0.0;
  for (Index e = 0; e < m.element_count(); ++e) {
    const auto q = element_quadrature(m, e, 4);
    for (std::size_t k = 0; k < q.points.size(); ++k) viaQ += q.weights[k] * std::pow(u(q.points[k]), 2);
  }
  EXPECT_NEAR(viaM, viaQ, 1e-13);
}

TEST(Mesh, LocateGivesExactBarycentricOnNodes) {
  const Mesh m = Mesh::uniform(2, 8);
  std::array<double, 3> bary{};
  const Index e = m.locate({0.25, 0.5}, bary);
  int ones = 0;
  for (int a = 0; a < 3; ++a) {
    if (bary[a] == 1.0) {
      ++ones;
      EXPECT_EQ(m.node(m.element(e)[a])[0], 0.25);
    } else {
      EXPECT_EQ(bary[a], 0.0);
    }
  }
  EXPECT_EQ(ones, 1);
}

TEST(Mesh, P1InterpolationIsExactForLinears) {
  const Mesh m = Mesh::uniform(2, 4);
  Vector v(m.node_count());
  for (Index i = 0; i < m.node_count(); ++i) v[i] = 1.0 + 2.0 * m.node(i)[0] - 3.0 * m.node(i)[1];
  const P1Function f = interp_p1(m, v);
  EXPECT_NEAR(f({0.313, 0.777}), 1.0 + 2 * 0.313 - 3 * 0.777, 1e-14);
  EXPECT_THROW(P1Function(m, Vector::Zero(3)), ConfigError);
}

TEST(Stochastic, MonteCarloIsSeedReproducible) {
  const auto a = mc_sample(4, 100, Measure::Gaussian, 11);
  const auto b = mc_sample(4, 100, Measure::Gaussian, 11);
  const auto c = mc_sample(4, 100, Measure::Gaussian, 12);
  EXPECT_EQ(a->points, b->points);
  EXPECT_NE(a->points, c->points);
  EXPECT_EQ(a->hash(), b->hash());
  EXPECT_DOUBLE_EQ(a->weights.sum(), 1.0);
  const auto u = mc_sample(3, 1000, Measure::Uniform, 1);
  EXPECT_LE(u->points.maxCoeff(), 0.5);
  EXPECT_GE(u->points.minCoeff(), -0.5);
}

TEST(Stochastic, SmolyakPointCounts) {
  EXPECT_EQ(smolyak_point_count(12, 4), 3225);
  EXPECT_EQ(smolyak_point_count(20, 3), 881);
  EXPECT_EQ(smolyak_point_count(10, 4), 1981);
  EXPECT_EQ(smolyak_point_count(5, 1), 1);
}

TEST(Stochastic, SmolyakIntegratesLowDegreeMoments) {
  const auto g = smolyak(4, 3, Measure::Gaussian);
  EXPECT_NEAR(g->weights.sum(), 1.0, 1e-13);
  const auto moment = [&](auto f) {
    double s = 0.0;
    for (Index p = 0; p < g->size(); ++p) s += g->weights[p] * f(g->points.row(p));
    return s;
  };
  EXPECT_NEAR(moment([](auto x) { return x[0] * x[0] * x[1] * x[1]; }), 1.0, 1e-12);
  EXPECT_NEAR(moment([](auto x) { return std::pow(x[2], 4); }), 3.0, 1e-12);
  EXPECT_NEAR(moment([](auto x) { return x[0] * x[1] * x[3]; }), 0.0, 1e-12);

  const auto u = smolyak(3, 3, Measure::Uniform);
  double s = 0.0;
  for (Index p = 0; p < u->size(); ++p) s += u->weights[p] * u->points(p, 1) * u->points(p, 1);
  EXPECT_NEAR(s, 1.0 / 12.0, 1e-14);
}

TEST(Stochastic, SmolyakCapIsEnforced) {
  EXPECT_THROW(smolyak(40, 6, Measure::Gaussian, 1000), ConfigError);
}

TEST(Stochastic, RandomFunctionAlgebra) {
  const auto s = mc_sample(2, 4, Measure::Uniform, 3);
  const RandomFunction f(s, Vector::Constant(4, 2.0));
  const RandomFunction g(s, (Vector(4) << 1, 2, 3, 4).finished());
  EXPECT_DOUBLE_EQ(expect(g), 2.5);
  EXPECT_DOUBLE_EQ(inner(f, g), 5.0);
  EXPECT_DOUBLE_EQ(l2norm(f), 2.0);
  const RandomFunction other(mc_sample(2, 4, Measure::Uniform, 4), Vector::Ones(4));
  EXPECT_THROW(inner(f, other), MismatchError);
  EXPECT_THROW(RandomFunction(s, Vector::Ones(3)), ConfigError);
}

TEST(Stochastic, SampleSetRoundTrip) {
  const auto s = smolyak(3, 2, Measure::Gaussian);
  const std::string path = temp_path("ss.bin");
  save_sample_set(*s, path);
  const auto t = load_sample_set(path);
  EXPECT_EQ(s->points, t->points);
  EXPECT_EQ(s->weights, t->weights);
  EXPECT_EQ(s->hash(), t->hash());
  std::filesystem::remove(path);
  EXPECT_THROW(load_sample_set(path), IoError);
}

TEST(Field, DictionaryIsOrthonormal) {
  // The midpoint rule on 64 points is exact for trigonometric products of degree < 64.
  for (int dim : {1, 2}) {
    const FourierDict d(dim, 3);
    const int P = 64;
    const Index N = d.size();
    Matrix G = Matrix::Zero(N, N);
    const int outer = dim == 2 ? P : 1;
    for (int a = 0; a < P; ++a) {
      for (int b = 0; b < outer; ++b) {
        const Point x{(a + 0.5) / P, (b + 0.5) / P};
        Vector v(N);
        for (Index q = 0; q < N; ++q) v[q] = d.eval(q, x);
        G += v * v.transpose() / (static_cast<double>(P) * outer);
      }
    }
    EXPECT_LT((G - Matrix::Identity(N, N)).cwiseAbs().maxCoeff(), 1e-13) << "dim=" << dim;
  }
}

TEST(Field, DictionaryLoadMatrixMatchesForcingLoad) {
  for (int dim : {1, 2}) {
    const Mesh m = Mesh::uniform(dim, 8);
    const FourierDict d = FourierDict::for_mesh(m);
    EXPECT_EQ(d.l(), 4);
    const Matrix B = dictionary_load_matrix(m, d);
    RandomSource rng(5, Stream::Test);
    const Vector v = rng.gaussian_matrix(d.size(), 1).col(0);
    const Vector b = load_vector(m, forcing_from_vector(d, v));
    EXPECT_LT((B * v - b).norm(), 1e-12 * b.norm());
    // Constant mode against a hat: exact integral h (1D) or h^2 (2D).
    EXPECT_NEAR(B(0, 0), std::pow(m.h(), dim), 1e-14);
  }
}

TEST(Field, LoadVectorExactForCubicForcing) {
  const Mesh m = Mesh::uniform(1, 4);
  const Forcing f = forcing_from_json({{"kind", "preset"}, {"name", "cubic_1d"}});
  const Vector b = load_vector(m, f);
  // integral of hat at x_i times (1 - x + x^2 - x^3), done symbolically per node
  const double h = 0.25;
  for (Index k = 0; k < m.interior_count(); ++k) {
    const double xi = (k + 1) * h;
    // hat moments: int phi = h, int phi x = h xi, int phi x^2 = h (xi^2 + h^2/6),
    // int phi x^3 = h (xi^3 + xi h^2 / 2)
    const double exact = h - h * xi + h * (xi * xi + h * h / 6) - h * (xi * xi * xi + xi * h * h / 2);
    EXPECT_NEAR(b[k], exact, 1e-15);
  }
}

TEST(Field, CoefficientModelsFollowTheirFormulas) {
  const auto c = CoefficientModel::from_json({{"kind", "trig_lognormal_1d"}, {"m", 3}});
  const Vector th = (Vector(3) << 0.1, -0.2, 0.3).finished();
  const double x = 0.37;
  const double expected = std::exp(0.1 * std::cos(2 * std::numbers::pi * x) - 0.2 * std::cos(4 * std::numbers::pi * x) +
                                   0.3 * std::cos(6 * std::numbers::pi * x));
  EXPECT_NEAR(c.eval({x, 0}, th), expected, 1e-14);

  const auto n = CoefficientModel::from_json({{"kind", "normalized_1d"}, {"m", 4}});
  EXPECT_NEAR(n.eval({0.0, 0}, Vector::Constant(4, 0.5)), std::exp(10.0), 1e-6);

  const auto p = CoefficientModel::from_json({{"kind", "piecewise_2d"}});
  EXPECT_EQ(p.m, 12);
  // Zero input leaves only the quadrant offsets: e^0, e^1, e^2, e^3.
  EXPECT_NEAR(p.eval({0.2, 0.2}, Vector::Zero(12)), 1.0, 1e-15);
  EXPECT_NEAR(p.eval({0.7, 0.2}, Vector::Zero(12)), std::exp(1.0), 1e-13);
  EXPECT_NEAR(p.eval({0.2, 0.7}, Vector::Zero(12)), std::exp(2.0), 1e-13);
  EXPECT_NEAR(p.eval({0.7, 0.7}, Vector::Zero(12)), std::exp(3.0), 1e-12);
  EXPECT_NEAR(p.eval({0.5, 0.5}, Vector::Zero(12)), 1.0, 1e-15);
  Vector e10 = Vector::Zero(12);
  e10[9] = 1.0;  // D4, k = 10: sin(2 pi x) + cos(6 pi y)
  EXPECT_NEAR(p.eval({0.7, 0.6}, e10),
              std::exp(3.0 + std::sin(2 * std::numbers::pi * 0.7) + std::cos(6 * std::numbers::pi * 0.6)), 1e-12);

  const auto t = CoefficientModel::from_json({{"kind", "tensor_lognormal_2d"}, {"freq_x", 3}, {"freq_y", 2}});
  EXPECT_EQ(t.m, 6);
  EXPECT_EQ(t.natural_measure(), Measure::Gaussian);
  EXPECT_THROW(CoefficientModel::from_json({{"kind", "nope"}}), ConfigError);
  EXPECT_THROW(CoefficientModel::from_json({{"kind", "piecewise_2d"}, {"m", 5}}), ConfigError);
}

TEST(Field, CentroidTableMatchesPointwiseEvaluation) {
  const Mesh m = Mesh::uniform(2, 4);
  const auto c = CoefficientModel::from_json({{"kind", "trig_lognormal_2d"}, {"m", 5}});
  const auto s = mc_sample(5, 7, Measure::Gaussian, 9);
  const Matrix A = CentroidCoefficients(m, c).evaluate_all(*s);
  for (Index p = 0; p < s->size(); ++p) {
    for (Index e = 0; e < m.element_count(); ++e) {
      EXPECT_NEAR(A(e, p), c.eval(m.centroid(e), s->points.row(p).transpose()), 1e-12 * A(e, p));
    }
  }
}

TEST(Field, ExtremeExponentIsClampedNotInfinite) {
  const auto c = CoefficientModel::from_json({{"kind", "trig_lognormal_1d"}, {"m", 1}});
  const double a = c.eval({0.0, 0}, Vector::Constant(1, 1e4));
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_GT(a, 1e299);
}
