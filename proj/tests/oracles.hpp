#pragma once

// Independent reference computations used only by the test suites. None of
// these share code paths with the library routines they check.

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using cplx = std::complex<double>;

/// Characteristic polynomial coefficients c_0..c_n (monic) by Faddeev-LeVerrier.
inline std::vector<double> char_poly(const Eigen::MatrixXd& a) {
  const auto n = static_cast<int>(a.rows());
  std::vector<double> c(n + 1, 0.0);
  c[n] = 1.0;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= n; ++k) {
    m = a * m + c[n - k + 1] * id;
    c[n - k] = -(a * m).trace() / k;
  }
  return c;
}

/// Durand-Kerner simultaneous root iteration followed by Newton polishing.
inline std::vector<cplx> poly_roots(const std::vector<double>& c) {
  const int n = static_cast<int>(c.size()) - 1;
  auto eval = [&](cplx z) {
    cplx v = c[n];
    for (int k = n - 1; k >= 0; --k) v = v * z + c[k];
    return v;
  };
  auto deriv = [&](cplx z) {
    cplx v = static_cast<double>(n) * c[n];
    for (int k = n - 1; k >= 1; --k) v = v * z + static_cast<double>(k) * c[k];
    return v;
  };
  std::vector<cplx> z(n);
  const cplx seed(0.4, 0.9);
  z[0] = 1.0;
  for (int i = 0; i < n; ++i) z[i] = std::pow(seed, i) * (1.0 + 0.5 * i);
  for (int it = 0; it < 2000; ++it) {
    double change = 0;
    for (int i = 0; i < n; ++i) {
      cplx den = 1.0;
      for (int j = 0; j < n; ++j)
        if (j != i) den *= (z[i] - z[j]);
      const cplx step = eval(z[i]) / den;
      z[i] -= step;
      change = std::max(change, std::abs(step));
    }
    if (change < 1e-15) break;
  }
  for (auto& r : z) {
    for (int it = 0; it < 5; ++it) {
      const cplx d = deriv(r);
      if (std::abs(d) == 0.0) break;
      r -= eval(r) / d;
    }
  }
  return z;
}

/// Nullity by Gaussian elimination with partial pivoting (relative threshold).
inline int nullity_gauss(Eigen::MatrixXd a, double tol) {
  const auto rows = a.rows();
  const auto cols = a.cols();
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  Eigen::Index r = 0;
  for (Eigen::Index c = 0; c < cols && r < rows; ++c) {
    Eigen::Index piv = r;
    for (Eigen::Index i = r + 1; i < rows; ++i)
      if (std::abs(a(i, c)) > std::abs(a(piv, c))) piv = i;
    if (std::abs(a(piv, c)) <= tol * scale) continue;
    a.row(r).swap(a.row(piv));
    for (Eigen::Index i = r + 1; i < rows; ++i) a.row(i) -= (a(i, c) / a(r, c)) * a.row(r);
    ++r;
  }
  return static_cast<int>(cols - r);
}

/// The commutator system assembled column by column from elementary matrices.
inline Eigen::MatrixXd commutator_system(const Eigen::MatrixXd& b) {
  const auto n = b.rows();
  Eigen::MatrixXd k(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);
      e(i, j) = 1.0;
      const Eigen::MatrixXd img = b * e - e * b;
      k.col(j * n + i) = Eigen::Map<const Eigen::VectorXd>(img.data(), n * n);
    }
  }
  return k;
}

/// Random matrix with prescribed distinct real eigenvalues: P diag(l) P^{-1}.
inline Eigen::MatrixXd with_eigenvalues(const std::vector<double>& lambdas, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(lambdas.size());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd p(n, n);
  for (;;) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) p(i, j) = u(rng);
    p += 2.0 * Eigen::MatrixXd::Identity(n, n);
    if (std::abs(p.determinant()) > 0.1) break;
  }
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = lambdas[static_cast<std::size_t>(i)];
  return p * d.asDiagonal() * p.inverse();
}

}  // namespace oracle
