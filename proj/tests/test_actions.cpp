#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "flowcent/actions.hpp"

using namespace flowcent;
using Catch::Approx;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

VectorField translation(std::initializer_list<double> xs) { return VectorField::torus_translation(vec(xs)); }

std::vector<Vec> torus_grid(int dim, int per_axis, double offset = 0.13) {
  std::vector<Vec> out;
  int total = 1;
  for (int i = 0; i < dim; ++i) total *= per_axis;
  for (int k = 0; k < total; ++k) {
    Vec x(dim);
    int idx = k;
    for (int i = 0; i < dim; ++i) {
      x(i) = (idx % per_axis + offset) / per_axis;
      idx /= per_axis;
    }
    out.push_back(x);
  }
  return out;
}

// Recombined generators Y_j = sum_i a_ij X_i.
std::vector<VectorField> recombine(const std::vector<VectorField>& xs, const Mat& a) {
  std::vector<VectorField> ys;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    std::vector<double> c(static_cast<std::size_t>(a.rows()));
    for (Eigen::Index i = 0; i < a.rows(); ++i) c[static_cast<std::size_t>(i)] = a(i, j);
    ys.push_back(VectorField::combination(c, xs));
  }
  return ys;
}

// Smallest |F^{-1} m| over integer m != 0 with |m_i| <= 50: the period lattice
// of the translation action with constant frame F on T^2.
double lattice_oracle(const Mat& f) {
  const Mat inv = f.inverse();
  double best = std::numeric_limits<double>::infinity();
  for (int m = -50; m <= 50; ++m)
    for (int k = -50; k <= 50; ++k) {
      if (m == 0 && k == 0) continue;
      Vec z(2);
      z << m, k;
      best = std::min(best, (inv * z).norm());
    }
  return best;
}

}  // namespace

TEST_CASE("verify_commuting", "[actions][commuting]") {
  const auto samples = torus_grid(2, 3);
  const auto consts = verify_commuting({translation({1.0, 0.0}), translation({0.3, 1.0})}, samples);
  CHECK(consts.pass);
  CHECK(consts.bracket == 0.0);

  const auto e1 = VectorField::polynomial(2, {{0, 1.0, {0, 0}}});
  const auto shear = VectorField::polynomial(2, {{1, 1.0, {1, 0}}});
  const auto bad = verify_commuting({e1, shear}, {vec({0.2, 0.4})});
  CHECK_FALSE(bad.pass);
  CHECK(bad.bracket == Approx(1.0));

  Mat b1(3, 3);
  b1 << -0.4, 0.3, 0.0, -0.2, -0.1, 0.5, 0.1, 0.0, -0.3;
  const Mat b2 = b1 * b1 + 2.0 * b1 + Mat::Identity(3, 3);
  REQUIRE((b1 * b2 - b2 * b1).norm() < 1e-15);
  const auto lin = verify_commuting({VectorField::linear(b1), VectorField::linear(b2)},
                                    {vec({1.0, 0.5, -0.2}), vec({-2.0, 1.0, 0.3})}, 1e-9);
  CHECK(lin.pass);

  CHECK_THROWS_AS(Action({e1, shear}, {vec({0.2, 0.4})}), ValidationError);
}

TEST_CASE("check_homogeneous", "[actions][homogeneous]") {
  const auto samples = torus_grid(3, 3);
  const auto a = translation({1.0, 0.0, 0.0});
  const auto b = translation({0.0, 1.0, std::sqrt(2.0)});
  CHECK(check_homogeneous({a, b}, samples).homogeneous);
  CHECK(check_homogeneous({b, a}, samples).homogeneous);
  CHECK_FALSE(check_homogeneous({a, translation({2.0, 0.0, 0.0})}, samples).homogeneous);

  const Vec centre = vec({0.4, 0.7});
  const auto damped = VectorField::damped_torus(vec({1.0, 0.0}), centre, 6.0);
  std::vector<Vec> with_zero = torus_grid(2, 4);
  with_zero.push_back(centre);
  const auto rep = check_homogeneous({damped, translation({0.0, 1.0})}, with_zero);
  CHECK_FALSE(rep.homogeneous);
  CHECK(rep.min_singular_value == 0.0);
  REQUIRE(rep.worst_point);
  CHECK(rep.worst_point->isApprox(centre));
  CHECK(check_homogeneous({translation({0.0, 1.0}), damped}, with_zero).homogeneous == rep.homogeneous);
  CHECK(check_homogeneous({damped, translation({0.0, 1.0})}, torus_grid(2, 4)).homogeneous);
}

TEST_CASE("action_min_period examples", "[actions][period]") {
  const auto samples = std::vector<Vec>{vec({0.2, 0.6})};
  const Action unit({translation({1.0, 0.0}), translation({0.0, 1.0})}, samples);
  const auto p = action_min_period(unit, samples, 3.0);
  CHECK(p.eps0_upper == Approx(1.0).margin(1e-9));
  CHECK(std::isinf(action_min_period(unit, samples, 0.0).eps0_upper));

  // Frame columns (1, sqrt 2) and (sqrt 3, 1): the action is transitive, so
  // its period lattice F^-1 Z^2 has short vectors.
  const Action skew({translation({1.0, std::sqrt(2.0)}), translation({std::sqrt(3.0), 1.0})}, samples);
  const double oracle = lattice_oracle(skew.frame(samples[0]));
  REQUIRE(oracle < 5.0);
  const auto q = action_min_period(skew, samples, 5.0);
  CHECK(q.eps0_upper == Approx(oracle).margin(1e-8));
}

TEST_CASE("action_min_period never undercuts the lattice minimum", "[actions][period][property]") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const std::vector<Vec> samples{vec({0.1, 0.3})};
  for (int trial = 0; trial < 12; ++trial) {
    Mat f(2, 2);
    f << u(rng), u(rng), u(rng), u(rng);
    if (std::abs(f.determinant()) < 0.3) continue;
    const Action act({VectorField::torus_translation(f.col(0)), VectorField::torus_translation(f.col(1))}, samples);
    const double oracle = lattice_oracle(f);
    const auto got = action_min_period(act, samples, 2.0);
    CHECK(got.eps0_upper >= oracle - 1e-9);
    if (oracle < 1.9) CHECK(got.eps0_upper == Approx(oracle).margin(1e-8));
  }
}

TEST_CASE("change_of_basis_A", "[actions][basis]") {
  const std::vector<VectorField> xs{translation({1.0, 0.3}), translation({0.2, 1.0})};
  const Vec x = vec({0.3, 0.8});
  CHECK(change_of_basis_A(xs, xs, x).A.isApprox(Mat::Identity(2, 2), 1e-14));

  Mat a(2, 2);
  a << 2, 1, 0, 1;
  const auto cb = change_of_basis_A(xs, recombine(xs, a), x);
  CHECK((cb.A - a).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(cb.residual <= 1e-12);

  // a transverse component on T^3
  const std::vector<VectorField> xs3{translation({1.0, 0.0, 0.0}), translation({0.0, 1.0, 0.0})};
  const std::vector<VectorField> ys3{translation({1.0, 0.0, 0.25}), translation({0.0, 1.0, 0.0})};
  const auto off = change_of_basis_A(xs3, ys3, vec({0.1, 0.2, 0.3}));
  CHECK(off.residual == Approx(0.25).margin(1e-14));

  CHECK_THROWS_AS(change_of_basis_A({translation({1.0, 0.0}), translation({2.0, 0.0})}, xs, x), ValidationError);
}

TEST_CASE("change_of_basis_A is equivariant under frame changes", "[actions][basis][property]") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 25; ++trial) {
    Mat f(3, 3), a(3, 3), p(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        f(i, j) = g(rng);
        a(i, j) = g(rng);
        p(i, j) = g(rng);
      }
    f += 2.0 * Mat::Identity(3, 3);
    p += 2.0 * Mat::Identity(3, 3);
    std::vector<VectorField> xs;
    for (int j = 0; j < 3; ++j) xs.push_back(VectorField::torus_translation(f.col(j)));
    const auto ys = recombine(xs, a);
    const Vec x = vec({0.1, 0.5, 0.9});
    const Mat base = change_of_basis_A(xs, ys, x).A;
    const Mat moved = change_of_basis_A(recombine(xs, p), ys, x).A;
    CHECK((moved - p.inverse() * base).norm() <= 1e-10 * (1.0 + base.norm()));
  }
}

TEST_CASE("action_reparam_field", "[actions][reparam]") {
  const auto samples = torus_grid(2, 3);
  const std::vector<VectorField> xs{translation({1.0, 0.3}), translation({0.2, 1.0})};
  const Action phi(xs, samples);
  const std::vector<Vec> checks{vec({0.5, -0.25}), vec({-1.0, 1.5})};
  {
    const auto r = action_reparam_field(phi, phi, samples, checks);
    for (const auto& s : r.samples) CHECK(s.A.isApprox(Mat::Identity(2, 2), 1e-12));
    CHECK(r.invariance_residual <= 1e-9);
    CHECK(r.certification_residual <= 1e-9);
  }
  {
    Mat a(2, 2);
    a << 2, 1, 0, 1;
    const Action psi(recombine(xs, a), samples);
    const auto r = action_reparam_field(phi, psi, samples, checks);
    for (const auto& s : r.samples) CHECK((s.A - a).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(r.certification_residual <= 1e-8);
  }
  {
    // orbits are the 2-tori {z = const}; h(z) is orbit invariant
    const auto x1 = translation({1.0, 0.0, 0.0});
    const auto x2 = translation({0.0, 1.0, 0.0});
    const auto h = ScalarFactor(SineRidge{2.0, 1.0, vec({0.0, 0.0, 1.0})});
    const auto samples3 = torus_grid(3, 3);
    const Action phi3({x1, x2}, samples3);
    const Action psi3({VectorField::scaled(h, x1), translation({1.0, 1.0, 0.0})}, samples3);
    const auto r = action_reparam_field(phi3, psi3, samples3, {vec({0.3, 0.4}), vec({-1.2, 0.7})});
    CHECK(r.invariance_residual <= 1e-4);
    CHECK(r.certification_residual <= 1e-6);
    double lo = 1e9, hi = -1e9;
    for (const auto& s : r.samples) {
      lo = std::min(lo, s.A(0, 0));
      hi = std::max(hi, s.A(0, 0));
      CHECK(s.A(0, 1) == Approx(1.0).margin(1e-12));
      CHECK(s.A(1, 1) == Approx(1.0).margin(1e-12));
    }
    CHECK(hi - lo > 0.5);

    // Psi generated by a non-invariant factor fails cross commutation
    const auto g = ScalarFactor(SineRidge{2.0, 1.0, vec({1.0, 0.0, 0.0})});
    const Action psi_bad({VectorField::scaled(g, x1)}, samples3);
    CHECK_THROWS_AS(action_reparam_field(Action({x1}, samples3), psi_bad, samples3, {vec({0.2})}), ValidationError);
  }
}

TEST_CASE("Psi_v equals Phi_{A v} on a 10x10 grid for |v| <= 2", "[actions][reparam][property]") {
  const auto samples = torus_grid(2, 10);
  const std::vector<VectorField> xs{translation({1.0, std::sqrt(2.0)}), translation({-0.5, 1.0})};
  Mat a(2, 2);
  a << 2, 1, 0, 1;
  const Action phi(xs, {samples[0]});
  const Action psi(recombine(xs, a), {samples[0]});
  std::vector<Vec> checks;
  for (double ang = 0.0; ang < 6.28; ang += 0.9) checks.push_back(2.0 * vec({std::cos(ang), std::sin(ang)}));
  checks.push_back(vec({0.3, -0.1}));
  const auto r = action_reparam_field(phi, psi, samples, checks);
  CHECK(r.certification_residual <= 1e-6);
}

TEST_CASE("collapse_to_flow", "[actions][collapse]") {
  ReparamOptions opt;
  opt.mu = 0.05;
  opt.eps_cap = 0.3;
  const std::vector<double> grid{-0.5, 0.5};
  {
    const auto x1 = translation({1.0, std::sqrt(2.0)});
    const auto x2 = translation({3.0, 3.0 * std::sqrt(2.0)});
    const auto samples = torus_grid(2, 2);
    const Action act({x1, x2}, samples);
    const auto r = collapse_to_flow(act, vec({1.0, 0.0}), {vec({0.0, 1.0})}, samples, grid, opt);
    CHECK(r.collinear);
    for (double f : r.directions[0].factors) CHECK(f == Approx(3.0).margin(1e-8));
  }
  {
    const auto samples = torus_grid(3, 2);
    const Action act({translation({1.0, 0.0, 0.0}), translation({0.0, 1.0, 0.0})}, samples);
    const auto r = collapse_to_flow(act, vec({1.0, 0.0}), {vec({0.0, 1.0})}, samples, grid, opt);
    CHECK_FALSE(r.collinear);
    CHECK_FALSE(r.directions[0].failure.empty());
    CHECK(r.directions[0].max_angle == Approx(M_PI / 2));
  }
  {
    const auto x1 = translation({2.0, 1.0});
    const auto h = ScalarFactor(SineRidge{2.0, 1.0, vec({1.0, -2.0})});
    const auto samples = torus_grid(2, 3);
    const Action act({x1, VectorField::scaled(h, x1)}, samples);
    const auto r = collapse_to_flow(act, vec({1.0, 0.0}), {vec({0.0, 1.0})}, samples, grid, opt);
    CHECK(r.collinear);
    for (std::size_t i = 0; i < samples.size(); ++i)
      CHECK(r.directions[0].factors[i] == Approx(h.value(samples[i])).margin(1e-6));
  }
}
