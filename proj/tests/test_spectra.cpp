#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "flowcent/integrator.hpp"
#include "flowcent/spectra.hpp"
#include "oracles.hpp"

using namespace flowcent;
using Catch::Approx;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

std::vector<Complex> reals(std::initializer_list<double> xs) {
  std::vector<Complex> out;
  for (double x : xs) out.emplace_back(x, 0.0);
  return out;
}

std::vector<Vec> lorenz_seeds() {
  std::vector<Vec> seeds;
  for (double x : {-10.0, 0.5, 10.0})
    for (double y : {-10.0, 0.5, 10.0})
      for (double z : {1.0, 25.0}) seeds.push_back(v3(x, y, z));
  return seeds;
}

// Exhaustive box enumeration without pruning; shares nothing with the library search.
bool brute_resonant(const std::vector<double>& re, double tol) {
  const std::size_t k = re.size();
  double maxb = 0, minb = 1e300;
  for (double r : re) {
    maxb = std::max(maxb, std::abs(r));
    minb = std::min(minb, std::abs(r));
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      if (std::abs(re[i] - re[j]) <= tol * maxb) return true;
  const int bound = static_cast<int>(std::ceil(maxb / minb)) + 1;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<int> n(k, 0);
    for (;;) {
      std::size_t pos = 0;
      while (pos < k) {
        if (pos == i) {
          ++pos;
          continue;
        }
        if (++n[pos] <= bound) break;
        n[pos] = 0;
        ++pos;
      }
      if (pos == k) break;
      int count = 0;
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) {
        count += n[j];
        s += n[j] * re[j];
      }
      if (count >= 2 && std::abs(re[i] - s) <= tol * maxb) return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("find_singularities on the Lorenz field", "[spectra][newton]") {
  const auto field = VectorField::lorenz();
  const auto found = find_singularities(field, lorenz_seeds());
  REQUIRE(found.points.size() == 3);
  const double c = std::sqrt(72.0);
  CHECK(found.points[0].isApprox(v3(-c, -c, 27.0), 1e-12));
  CHECK(found.points[1].norm() < 1e-12);
  CHECK(found.points[2].isApprox(v3(c, c, 27.0), 1e-12));
  for (const auto& p : found.points) {
    CHECK(field.eval(p).norm() <= 1e-10);
    // fixed points of the flow
    CHECK((flow(field, p, 1.0) - p).norm() <= 1e-8);
  }
}

TEST_CASE("find_singularities trivial cases", "[spectra][newton]") {
  Mat b(2, 2);
  b << -1, 2, 0.5, -3;
  const auto lin = find_singularities(VectorField::linear(b), {Vec::Constant(2, 3.0), Vec::Constant(2, -7.0)});
  REQUIRE(lin.points.size() == 1);
  CHECK(lin.points[0].norm() < 1e-12);

  Vec alpha(2);
  alpha << 1.0, std::sqrt(2.0);
  const auto tor = find_singularities(VectorField::torus_translation(alpha), {Vec::Constant(2, 0.3)});
  CHECK(tor.points.empty());
  REQUIRE(tor.dropped.size() == 1);

  // x' = x^2 + 1 has no real zero: the seed is dropped, not fatal
  const auto poly = VectorField::polynomial(1, {{0, 1.0, {2}}, {0, 1.0, {0}}});
  const auto none = find_singularities(poly, {Vec::Constant(1, 0.7)});
  CHECK(none.points.empty());
  CHECK(none.dropped.size() == 1);
}

TEST_CASE("classify_hyperbolic", "[spectra][classify]") {
  const auto lorenz = VectorField::lorenz();
  const auto s0 = eigs(lorenz.jacobian(Vec::Zero(3)));
  const auto c0 = classify_hyperbolic(s0);
  CHECK(c0.hyperbolic);
  CHECK(c0.index == 2);

  const auto zero = classify_hyperbolic(eigs(Mat::Zero(3, 3)));
  CHECK_FALSE(zero.hyperbolic);
  CHECK_FALSE(zero.index.has_value());

  Mat rot(2, 2);
  rot << 0, -1, 1, 0;
  CHECK_FALSE(classify_hyperbolic(eigs(rot)).hyperbolic);
  CHECK_THROWS_AS(classify_hyperbolic(s0, 0.0), ValidationError);
}

TEST_CASE("check_nonresonant examples", "[spectra][resonance]") {
  const auto r = check_nonresonant(reals({-1.0, -2.0}));
  CHECK_FALSE(r.nonresonant);
  REQUIRE(r.witness);
  CHECK(r.witness->kind == ResonanceWitness::Kind::relation);
  CHECK(r.witness->i == 1);
  CHECK(r.witness->coefficients == std::vector<int>{2, 0});

  const auto irr = check_nonresonant(reals({-1.0, -std::sqrt(2.0)}));
  CHECK(irr.nonresonant);
  CHECK_FALSE(irr.witness);
  CHECK(irr.margin > 1e-3);

  const double big = (-11.0 - std::sqrt(1201.0)) / 2.0;
  CHECK(check_nonresonant(reals({big, -8.0 / 3.0})).nonresonant);

  const auto same = check_nonresonant(reals({-1.5, -1.5}));
  CHECK_FALSE(same.nonresonant);
  CHECK(same.witness->kind == ResonanceWitness::Kind::coincident);

  // complex conjugates share a real part but are distinct eigenvalues
  const std::vector<Complex> pair{{-1.0, -2.0}, {-1.0, 2.0}};
  const auto cp = check_nonresonant(pair);
  CHECK(cp.nonresonant);

  // n_j runs over j != i only
  CHECK(check_nonresonant(reals({-3.0, -4.5})).nonresonant);
  const auto three = check_nonresonant(reals({-1.0, -1.7, -3.7}));
  CHECK_FALSE(three.nonresonant);  // 3.7 = 2(1) + 1.7
  CHECK(three.witness->i == 2);

  CHECK_THROWS_AS(check_nonresonant(reals({-1.0, 2.0})), ValidationError);
  CHECK_THROWS_AS(check_nonresonant(reals({0.0, -1.0})), ValidationError);
  CHECK_THROWS_AS(check_nonresonant({}), ValidationError);
}

TEST_CASE("check_nonresonant agrees with exhaustive enumeration", "[spectra][resonance][oracle]") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(2, 4);
  std::uniform_int_distribution<int> grid(1, 12);
  std::uniform_real_distribution<double> cont(0.3, 4.0);
  std::bernoulli_distribution use_grid(0.6);
  int resonant = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int k = size(rng);
    std::vector<double> re;
    for (int j = 0; j < k; ++j) re.push_back(use_grid(rng) ? -0.5 * grid(rng) : -cont(rng));
    std::vector<Complex> bundle;
    for (double x : re) bundle.emplace_back(x, 0.0);
    const bool expected = brute_resonant(re, kDefaultTolRes);
    const auto got = check_nonresonant(bundle);
    CHECK(got.nonresonant == !expected);
    resonant += expected;
    if (!got.nonresonant && got.witness->kind == ResonanceWitness::Kind::relation) {
      double s = 0;
      int count = 0;
      for (std::size_t j = 0; j < bundle.size(); ++j) {
        s += got.witness->coefficients[j] * bundle[j].real();
        count += got.witness->coefficients[j];
      }
      CHECK(got.witness->coefficients[got.witness->i] == 0);
      CHECK(count >= 2);
      CHECK(std::abs(bundle[got.witness->i].real() - s) <= 1e-9 * 6.0);
    }
  }
  CHECK(resonant > 20);
}

TEST_CASE("resonance verdict is invariant under positive scaling", "[spectra][resonance][property]") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  const std::vector<std::vector<double>> bundles{
      {-1.0, -2.0}, {-1.0, -std::sqrt(2.0)}, {-0.5, -1.5, -2.2}, {-2.0, -7.0}, {1.0, 3.0}, {0.7, 1.1, 2.9}};
  for (const auto& b : bundles) {
    std::vector<Complex> bundle;
    for (double x : b) bundle.emplace_back(x, 0.0);
    const bool verdict = check_nonresonant(bundle).nonresonant;
    for (int t = 0; t < 20; ++t) {
      const double c = scale(rng);
      std::vector<Complex> scaled;
      for (const auto& v : bundle) scaled.push_back(c * v);
      CHECK(check_nonresonant(scaled).nonresonant == verdict);
    }
  }
}

TEST_CASE("single eigenvalue bundles are non-resonant", "[spectra][resonance][property]") {
  for (double x : {-1e-3, -1.0, -42.0, 0.5, 7.0}) {
    const std::vector<Complex> one{{x, 0.0}};
    CHECK(check_nonresonant(one).nonresonant);
  }
}

TEST_CASE("kopell_order examples and tight minimality", "[spectra][kopell]") {
  CHECK(kopell_order(reals({-1.0, -3.0})) == 4);
  CHECK(kopell_order(reals({-2.0, -3.0})) == 2);
  const double big = (-11.0 - std::sqrt(1201.0)) / 2.0;
  CHECK(kopell_order(reals({big, -8.0 / 3.0})) == 9);
  CHECK(kopell_order(reals({-1.0})) == 2);
  CHECK_THROWS_AS(kopell_order(reals({-1.0, 0.5})), ValidationError);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mag(0.05, 20.0);
  for (int t = 0; t < 500; ++t) {
    const double a = -mag(rng), b = -mag(rng), c = -mag(rng);
    const int m = kopell_order(reals({a, b, c}));
    const double max_re = std::max({a, b, c});
    const double min_re = std::min({a, b, c});
    CHECK(m * max_re < min_re);
    CHECK(min_re <= (m - 1) * max_re);
    // linear search oracle
    int brute = 1;
    while (!(brute * max_re < min_re)) ++brute;
    CHECK(m == brute);
  }
}

TEST_CASE("full_report for the Lorenz singularities", "[spectra][report]") {
  const auto field = VectorField::lorenz();
  const auto s0 = full_report(field, Vec::Zero(3));
  REQUIRE(s0.spectrum.size() == 3);
  CHECK(s0.spectrum.values[0].real() == Approx((-11.0 - std::sqrt(1201.0)) / 2.0).margin(1e-9));
  CHECK(s0.spectrum.values[1].real() == Approx(-8.0 / 3.0).margin(1e-9));
  CHECK(s0.spectrum.values[2].real() == Approx((-11.0 + std::sqrt(1201.0)) / 2.0).margin(1e-9));
  CHECK(s0.hyperbolic);
  CHECK(s0.index == 2);
  CHECK(s0.is_saddle());
  CHECK(s0.nonresonant_stable.nonresonant);
  CHECK(s0.nonresonant_unstable.nonresonant);
  CHECK_FALSE(s0.kopell_m.has_value());
  CHECK(s0.kopell_m_stable == 9);
  CHECK(s0.kopell_m_unstable == 2);
  CHECK(s0.stable_basis.cols() + s0.unstable_basis.cols() == 3);
  CHECK(s0.stable_basis.cols() == *s0.index);

  const double c = std::sqrt(72.0);
  for (double sgn : {1.0, -1.0}) {
    const auto r = full_report(field, v3(sgn * c, sgn * c, 27.0));
    REQUIRE(r.spectrum.size() == 3);
    const auto& v = r.spectrum.values;
    CHECK(v[0].imag() == 0.0);
    CHECK(v[0].real() == Approx(-13.85).margin(0.01));
    CHECK(v[1].real() == Approx(0.09).margin(0.01));
    CHECK(std::abs(v[1].imag()) == Approx(10.19).margin(0.01));
    CHECK(v[2] == std::conj(v[1]));
    // the oracle sees the same spectrum
    const auto roots = oracle::poly_roots(oracle::char_poly(r.jacobian));
    for (const auto& z : roots) {
      const double nearest = std::min({std::abs(z - v[0]), std::abs(z - v[1]), std::abs(z - v[2])});
      CHECK(nearest < 1e-9);
    }
    CHECK(r.hyperbolic);
    CHECK(r.index == 1);
    CHECK(r.nonresonant());
  }
}

TEST_CASE("full_report on linear sinks and sources", "[spectra][report]") {
  Mat d(2, 2);
  d << -1, 0, 0, -2;
  const auto sink = full_report(VectorField::linear(d), Vec::Zero(2));
  CHECK(sink.hyperbolic);
  CHECK(sink.index == 2);
  CHECK_FALSE(sink.nonresonant_stable.nonresonant);
  CHECK(sink.kopell_m == 3);

  const auto source = full_report(VectorField::linear(Mat(-d)), Vec::Zero(2));
  CHECK(source.index == 0);
  CHECK(source.kopell_m == 3);
  CHECK(source.unstable_basis.cols() == 2);

  CHECK_THROWS_AS(full_report(VectorField::linear(d), Vec::Constant(2, 1.0)), ValidationError);
}

TEST_CASE("report is invariant under conjugation of the Jacobian", "[spectra][report][property]") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  for (int t = 0; t < 40; ++t) {
    const int n = 2 + t % 4;
    Mat b(n, n), p(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        b(i, j) = g(rng);
        p(i, j) = g(rng);
      }
    p += 3.0 * Mat::Identity(n, n);
    const Mat conj = p * b * p.inverse();
    const auto r1 = full_report(VectorField::linear(b), Vec::Zero(n));
    const auto r2 = full_report(VectorField::linear(conj), Vec::Zero(n));
    CHECK(r1.hyperbolic == r2.hyperbolic);
    CHECK(r1.index == r2.index);
    CHECK(r1.nonresonant_stable.nonresonant == r2.nonresonant_stable.nonresonant);
    CHECK(r1.nonresonant_unstable.nonresonant == r2.nonresonant_unstable.nonresonant);
    CHECK(r1.kopell_m_stable == r2.kopell_m_stable);
    CHECK(r1.kopell_m_unstable == r2.kopell_m_unstable);
    // conjugated stable basis spans the conjugate's stable space
    if (r1.hyperbolic && r1.stable_basis.cols() > 0) {
      const Mat mapped = p * r1.stable_basis;
      const Mat joined = (Mat(n, 2 * mapped.cols()) << mapped, r2.stable_basis).finished();
      CHECK(numerical_rank(joined, 1e-7) == mapped.cols());
    }
  }
}
