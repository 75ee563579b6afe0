#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "flowcent/linalg.hpp"
#include "oracles.hpp"

using namespace flowcent;
using Catch::Approx;

namespace {

Mat lorenz_jacobian_origin(double a, double b, double r) {
  Mat j(3, 3);
  j << -a, a, 0, r, -1, 0, 0, 0, -b;
  return j;
}

Mat random_matrix(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = u(rng);
  return m;
}

}  // namespace

TEST_CASE("eigs on diagonal and Lorenz origin", "[linalg][eigs]") {
  Mat d = Eigen::Vector3d(3, 1, 2).asDiagonal();
  const auto s = eigs(d);
  REQUIRE(s.size() == 3);
  CHECK(s.values[0] == Complex(1, 0));
  CHECK(s.values[1] == Complex(2, 0));
  CHECK(s.values[2] == Complex(3, 0));

  const auto l = eigs(lorenz_jacobian_origin(10, 8.0 / 3.0, 28));
  const double slow = (-11.0 - std::sqrt(1201.0)) / 2.0;
  const double fast = (-11.0 + std::sqrt(1201.0)) / 2.0;
  CHECK(l.values[0].real() == Approx(slow).margin(1e-12));
  CHECK(l.values[1].real() == Approx(-8.0 / 3.0).margin(1e-12));
  CHECK(l.values[2].real() == Approx(fast).margin(1e-12));
  for (const auto& v : l.values) CHECK(v.imag() == 0.0);
  // printed approximations
  CHECK(l.values[0].real() == Approx(-22.83).margin(0.005));
  CHECK(l.values[2].real() == Approx(11.83).margin(0.005));
}

TEST_CASE("eigs agrees with characteristic polynomial roots", "[linalg][eigs][oracle]") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat m = random_matrix(4, rng);
    const auto s = eigs(m);
    const auto roots = oracle::poly_roots(oracle::char_poly(m));
    REQUIRE(roots.size() == 4);
    std::vector<bool> used(4, false);
    for (const auto& v : s.values) {
      double best = 1e300;
      std::size_t bi = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        if (used[k]) continue;
        const double d = std::abs(roots[k] - v);
        if (d < best) {
          best = d;
          bi = k;
        }
      }
      used[bi] = true;
      CHECK(best < 1e-8);
    }
  }
}

TEST_CASE("spectrum invariants: conjugate pairs exact, sorted", "[linalg][eigs]") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + trial % 7);
    const auto s = eigs(random_matrix(n, rng, 3.0));
    REQUIRE(static_cast<Eigen::Index>(s.size()) == n);
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      const bool ordered = s.values[i].real() < s.values[i + 1].real() ||
                           (s.values[i].real() == s.values[i + 1].real() &&
                            s.values[i].imag() <= s.values[i + 1].imag());
      CHECK(ordered);
    }
    for (const auto& v : s.values) {
      if (v.imag() == 0.0) continue;
      const auto hit = std::count(s.values.begin(), s.values.end(), std::conj(v));
      CHECK(hit >= 1);
    }
  }
}

TEST_CASE("eigs rejects bad input", "[linalg][eigs]") {
  Mat nan = Mat::Zero(2, 2);
  nan(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(eigs(nan), ValidationError);
  CHECK_THROWS_AS(eigs(Mat::Zero(2, 3)), ValidationError);
  CHECK_THROWS_AS(eigs(Mat::Zero(17, 17)), ValidationError);
}

TEST_CASE("mat_exp special cases", "[linalg][expm]") {
  std::mt19937_64 rng(5);
  const Mat m = random_matrix(3, rng, 4.0);
  CHECK(mat_exp(m, 0.0) == Mat::Identity(3, 3));

  Mat d = Eigen::Vector2d(0.7, -1.3).asDiagonal();
  const Mat ed = mat_exp(d, 1.0);
  CHECK(ed(0, 0) == Approx(std::exp(0.7)).epsilon(1e-14));
  CHECK(ed(1, 1) == Approx(std::exp(-1.3)).epsilon(1e-14));
  CHECK(ed(0, 1) == 0.0);

  Mat nil = Mat::Zero(2, 2);
  nil(0, 1) = 1.0;
  for (double t : {-3.0, 0.01, 0.5, 2.0, 7.25}) {
    const Mat e = mat_exp(nil, t);
    CHECK(e(0, 0) == Approx(1.0).margin(1e-15));
    CHECK(e(1, 1) == Approx(1.0).margin(1e-15));
    CHECK(e(1, 0) == Approx(0.0).margin(1e-15));
    CHECK(e(0, 1) == Approx(t).margin(1e-14 * std::abs(t)));
  }

  Mat huge = Mat::Identity(2, 2) * 800.0;
  CHECK_THROWS_AS(mat_exp(huge, 1.0), NumericalError);
}

TEST_CASE("mat_exp matches an independent expm to 1e-12 relative", "[linalg][expm][oracle]") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + trial % 4);
    Mat m = random_matrix(n, rng);
    // scale so that ||tM|| spans the Pade order switches up to ~50
    const double target = std::pow(10.0, -2.5 + 4.2 * (trial / 59.0));
    m *= target / m.norm();
    const Mat ours = mat_exp(m, 1.0);
    const Mat ref = m.exp();
    CHECK((ours - ref).norm() <= 1e-12 * std::max(1.0, ref.norm()) * 10);
  }
}

TEST_CASE("mat_exp group law", "[linalg][expm][property]") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ut(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    Mat m = random_matrix(3, rng);
    m *= std::uniform_real_distribution<double>(0.1, 5.0)(rng) / m.norm();
    const double t = ut(rng), s = ut(rng);
    const Mat lhs = mat_exp(m, t + s);
    const Mat rhs = mat_exp(m, t) * mat_exp(m, s);
    CHECK((lhs - rhs).norm() <= 1e-10 * std::max(1.0, lhs.norm()));
  }
}

TEST_CASE("nullspace basics", "[linalg][nullspace]") {
  CHECK(nullspace(Mat::Identity(4, 4)).cols() == 0);
  const Mat z = nullspace(Mat::Zero(3, 3));
  CHECK(z.cols() == 3);
  CHECK((z.transpose() * z - Mat::Identity(3, 3)).norm() < 1e-14);
  CHECK_THROWS_AS(nullspace(Mat::Identity(2, 2), 0.0), ValidationError);

  // wide matrix: the extra columns are null
  Mat wide(1, 3);
  wide << 1, 2, 3;
  CHECK(nullspace(wide).cols() == 2);
}

TEST_CASE("nullspace of a rank-1 outer product is the complement of v", "[linalg][nullspace][oracle]") {
  const Eigen::Vector3d u(1.0, -2.0, 0.5), v(0.3, 0.4, 1.2);
  const Mat m = u * v.transpose();
  const Mat ns = nullspace(m);
  REQUIRE(ns.cols() == 2);
  // Gram-Schmidt complement of v
  const Eigen::Vector3d vhat = v.normalized();
  Eigen::Vector3d e1 = Eigen::Vector3d::UnitX() - vhat.dot(Eigen::Vector3d::UnitX()) * vhat;
  e1.normalize();
  Eigen::Vector3d e2 = Eigen::Vector3d::UnitY() - vhat.dot(Eigen::Vector3d::UnitY()) * vhat -
                       e1.dot(Eigen::Vector3d::UnitY()) * e1;
  e2.normalize();
  Mat ref(3, 2);
  ref << e1, e2;
  // same subspace: projectors agree
  CHECK((ns * ns.transpose() - ref * ref.transpose()).norm() < 1e-12);
  CHECK((ns.transpose() * v).norm() < 1e-12);
}

TEST_CASE("commutant examples", "[linalg][commutant]") {
  CHECK(commutant_basis(Mat::Identity(2, 2)).dimension() == 4);

  Mat d = Eigen::Vector2d(-1, -2).asDiagonal();
  const auto cd = commutant_basis(d);
  REQUIRE(cd.dimension() == 2);
  REQUIRE(oracle::nullity_gauss(oracle::commutator_system(d), 1e-9) == 2);
  for (const auto& c : cd.basis) {
    CHECK(std::abs(c(0, 1)) < 1e-12);
    CHECK(std::abs(c(1, 0)) < 1e-12);
  }

  Mat jordan(2, 2);
  jordan << -0.5, 1, 0, -0.5;
  const auto cj = commutant_basis(jordan);
  REQUIRE(cj.dimension() == 2);
  REQUIRE(oracle::nullity_gauss(oracle::commutator_system(jordan), 1e-9) == 2);
  // span{I, N}: lower-left zero and equal diagonal
  for (const auto& c : cj.basis) {
    CHECK(std::abs(c(1, 0)) < 1e-12);
    CHECK(std::abs(c(0, 0) - c(1, 1)) < 1e-12);
  }
}

TEST_CASE("commutant basis invariants and exponential commutation", "[linalg][commutant][property]") {
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> ut(-2.0, 2.0);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + trial % 5);
    std::vector<double> lambdas;
    for (Eigen::Index i = 0; i < n; ++i) lambdas.push_back(-2.0 + 1.1 * static_cast<double>(i) + 0.05 * trial);
    const Mat b = oracle::with_eigenvalues(lambdas, rng);
    const auto cb = commutant_basis(b);
    CHECK(static_cast<Eigen::Index>(cb.dimension()) == n);
    CHECK(oracle::nullity_gauss(oracle::commutator_system(b), 1e-9) == n);
    for (std::size_t i = 0; i < cb.basis.size(); ++i) {
      const Mat& c = cb.basis[i];
      CHECK((b * c - c * b).norm() <= cb.tol * (1.0 + b.norm()) * c.norm());
      for (std::size_t j = 0; j < cb.basis.size(); ++j) {
        const double ip = (c.array() * cb.basis[j].array()).sum();
        CHECK(ip == Approx(i == j ? 1.0 : 0.0).margin(1e-10));
      }
      const double t = ut(rng), s = ut(rng);
      const Mat lhs = mat_exp(b, t) * mat_exp(c, s);
      const Mat rhs = mat_exp(c, s) * mat_exp(b, t);
      CHECK((lhs - rhs).norm() < 1e-8);
    }
  }
}

TEST_CASE("is_proportional", "[linalg][proportional]") {
  std::mt19937_64 rng(8);
  const Mat b = random_matrix(3, rng);
  auto r = is_proportional(3.0 * b, b);
  CHECK(r.verdict);
  CHECK(*r.factor == Approx(3.0).epsilon(1e-14));

  Mat e = random_matrix(3, rng);
  e *= 1e-3 * b.norm() / e.norm();
  CHECK_FALSE(is_proportional(b + e, b, 1e-6).verdict);

  Mat b2 = Eigen::Vector2d(1, 2).asDiagonal();
  Mat c2 = Eigen::Vector2d(1, 3).asDiagonal();
  // independent fields at a sample point
  const Eigen::Vector2d x(1.0, 1.0);
  Eigen::Matrix2d frame;
  frame << b2 * x, c2 * x;
  REQUIRE(std::abs(frame.determinant()) > 0.5);
  CHECK_FALSE(is_proportional(c2, b2).verdict);

  const Mat zero = Mat::Zero(2, 2);
  auto z = is_proportional(zero, zero);
  CHECK(z.verdict);
  CHECK(*z.factor == 0.0);
  CHECK_FALSE(is_proportional(b2, zero).verdict);
  CHECK_THROWS_AS(is_proportional(b2, b), ValidationError);

  std::uniform_real_distribution<double> uc(-10.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat bb = random_matrix(1 + trial % 4, rng);
    const double c = uc(rng);
    const auto p = is_proportional(c * bb, bb);
    CHECK(p.verdict);
    CHECK(*p.factor == Approx(c).margin(1e-12));
  }
}

TEST_CASE("invariant splitting dimensions and invariance", "[linalg][splitting]") {
  std::mt19937_64 rng(4);
  const Mat b = oracle::with_eigenvalues({-3.0, -0.5, 1.5, 2.0}, rng);
  const auto sp = invariant_splitting(b, 2);
  REQUIRE(sp.stable.cols() == 2);
  REQUIRE(sp.unstable.cols() == 2);
  // B maps each subspace into itself
  const Mat ps = sp.stable * sp.stable.transpose();
  const Mat pu = sp.unstable * sp.unstable.transpose();
  CHECK((b * sp.stable - ps * b * sp.stable).norm() < 1e-9);
  CHECK((b * sp.unstable - pu * b * sp.unstable).norm() < 1e-9);
}
