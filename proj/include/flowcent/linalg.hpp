#pragma once

// Dense real linear algebra kernels used throughout flowcent: spectra,
// matrix exponential, tolerant nullspaces and commutants of linear vector
// fields. Eigen provides the Schur/SVD decompositions; everything on top
// of them lives here.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowcent/errors.hpp"

namespace flowcent {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Complex = std::complex<double>;

inline constexpr int kMaxMatrixDim = 16;
inline constexpr double kDefaultRankTol = 1e-9;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void require_square(const Mat& m, const char* who) {
  require(m.rows() == m.cols(), std::string(who) + ": matrix must be square");
  require(m.rows() >= 1 && m.rows() <= kMaxMatrixDim,
          std::string(who) + ": dimension must lie in [1, 16]");
  require(all_finite(m), std::string(who) + ": matrix has non-finite entries");
}

/// Eigenvalues with algebraic multiplicity, sorted by (Re, Im) ascending.
struct Spectrum {
  std::vector<Complex> values;

  std::size_t size() const { return values.size(); }
  double min_real() const {
    double m = values.front().real();
    for (const auto& v : values) m = std::min(m, v.real());
    return m;
  }
  double max_real() const {
    double m = values.front().real();
    for (const auto& v : values) m = std::max(m, v.real());
    return m;
  }
};

namespace detail {

inline bool complex_less(const Complex& a, const Complex& b) {
  if (a.real() != b.real()) return a.real() < b.real();
  return a.imag() < b.imag();
}

// Pairs each eigenvalue of positive imaginary part with the closest unpaired
// value of negative imaginary part and replaces both by their average
// conjugate pair. Eigenvalues with negligible imaginary part become real.
inline void symmetrize_conjugates(std::vector<Complex>& vals, double scale) {
  const double tiny = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, scale);
  std::vector<bool> used(vals.size(), false);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (used[i]) continue;
    if (std::abs(vals[i].imag()) <= tiny) {
      vals[i] = Complex(vals[i].real(), 0.0);
      used[i] = true;
      continue;
    }
    if (vals[i].imag() < 0) continue;
    std::size_t best = vals.size();
    double best_d = 0;
    for (std::size_t j = 0; j < vals.size(); ++j) {
      if (j == i || used[j] || vals[j].imag() >= 0) continue;
      const double d = std::abs(vals[j] - std::conj(vals[i]));
      if (best == vals.size() || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    if (best == vals.size()) {
      throw NumericalError("eigs: unpaired complex eigenvalue from a real matrix");
    }
    const double re = 0.5 * (vals[i].real() + vals[best].real());
    const double im = 0.5 * (vals[i].imag() - vals[best].imag());
    vals[i] = Complex(re, im);
    vals[best] = Complex(re, -im);
    used[i] = used[best] = true;
  }
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (!used[i]) throw NumericalError("eigs: unpaired complex eigenvalue from a real matrix");
  }
}

}  // namespace detail

/// All eigenvalues of M. Conjugate pairs are made exactly symmetric.
inline Spectrum eigs(const Mat& m) {
  require_square(m, "eigs");
  Eigen::EigenSolver<Mat> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigs: QR iteration did not converge");
  }
  Spectrum s;
  const auto& ev = solver.eigenvalues();
  s.values.reserve(static_cast<std::size_t>(ev.size()));
  for (Eigen::Index i = 0; i < ev.size(); ++i) s.values.emplace_back(ev[i].real(), ev[i].imag());
  detail::symmetrize_conjugates(s.values, m.norm());
  std::sort(s.values.begin(), s.values.end(), detail::complex_less);
  return s;
}

namespace detail {

// Pade coefficients for the [m/m] approximants of exp (Higham 2005).
inline constexpr std::array<double, 4> kPade3 = {120., 60., 12., 1.};
inline constexpr std::array<double, 6> kPade5 = {30240., 15120., 3360., 420., 30., 1.};
inline constexpr std::array<double, 8> kPade7 = {17297280., 8648640., 1995840., 277200.,
                                                 25200.,    1512.,    56.,      1.};
inline constexpr std::array<double, 10> kPade9 = {
    17643225600., 8821612800., 2075673600., 302702400., 30270240.,
    2162160.,     110880.,     3960.,       90.,        1.};
inline constexpr std::array<double, 14> kPade13 = {
    64764752532480000., 32382376266240000., 7771770303897600., 1187353796428800.,
    129060195264000.,   10559470521600.,    670442572800.,     33522128640.,
    1323241920.,        40840800.,          960960.,           16380.,
    182.,               1.};

template <std::size_t K>
Mat pade_low(const Mat& a, const std::array<double, K>& b) {
  const Eigen::Index n = a.rows();
  const Mat id = Mat::Identity(n, n);
  const Mat a2 = a * a;
  Mat u_inner = b[1] * id;
  Mat v = b[0] * id;
  Mat power = id;
  for (std::size_t k = 2; k < K; k += 2) {
    power = power * a2;
    v += b[k] * power;
    u_inner += b[k + 1] * power;
  }
  const Mat u = a * u_inner;
  return (v - u).partialPivLu().solve(v + u);
}

inline Mat pade13(const Mat& a) {
  const auto& b = kPade13;
  const Eigen::Index n = a.rows();
  const Mat id = Mat::Identity(n, n);
  const Mat a2 = a * a;
  const Mat a4 = a2 * a2;
  const Mat a6 = a4 * a2;
  const Mat u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
                     b[3] * a2 + b[1] * id);
  const Mat v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
                b[2] * a2 + b[0] * id;
  return (v - u).partialPivLu().solve(v + u);
}

}  // namespace detail

/// e^{tM} by scaling and squaring with a diagonal Pade approximant.
inline Mat mat_exp(const Mat& m, double t) {
  require_square(m, "mat_exp");
  require(std::isfinite(t), "mat_exp: t must be finite");
  const Eigen::Index n = m.rows();
  if (t == 0.0) return Mat::Identity(n, n);
  const Mat a = t * m;
  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  Mat r;
  if (norm1 <= 1.495585217958292e-2) {
    r = detail::pade_low(a, detail::kPade3);
  } else if (norm1 <= 2.539398330063230e-1) {
    r = detail::pade_low(a, detail::kPade5);
  } else if (norm1 <= 9.504178996162932e-1) {
    r = detail::pade_low(a, detail::kPade7);
  } else if (norm1 <= 2.097847961257068) {
    r = detail::pade_low(a, detail::kPade9);
  } else {
    constexpr double theta13 = 5.371920351148152;
    int squarings = 0;
    if (norm1 > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
    if (squarings > 1000) throw NumericalError("mat_exp: norm of tM out of range");
    r = detail::pade13(a / std::ldexp(1.0, squarings));
    for (int i = 0; i < squarings; ++i) r = r * r;
  }
  if (!r.allFinite()) throw NumericalError("mat_exp: result overflowed");
  return r;
}

/// Orthonormal basis (as columns) of the numerical right nullspace: right
/// singular vectors whose singular value is at most tol * sigma_max. Empty
/// (zero columns) when M has full column rank.
inline Mat nullspace(const Mat& m, double tol = kDefaultRankTol) {
  require(tol > 0, "nullspace: tol must be positive");
  require(m.allFinite(), "nullspace: non-finite entries");
  const Eigen::Index cols = m.cols();
  if (m.rows() == 0 || cols == 0) return Mat::Identity(cols, cols);
  Eigen::BDCSVD<Mat> svd(m, Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) throw NumericalError("nullspace: SVD did not converge");
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (smax > 0 && sv(i) > tol * smax) ++rank;
  }
  return svd.matrixV().rightCols(cols - rank);
}

/// Numerical rank relative to the largest singular value.
inline Eigen::Index numerical_rank(const Mat& m, double tol = kDefaultRankTol) {
  return m.cols() - nullspace(m, tol).cols();
}

/// Orthonormal (Frobenius) basis of {C : BC = CB}.
struct CommutantBasis {
  Mat generator;
  std::vector<Mat> basis;
  double tol = kDefaultRankTol;

  std::size_t dimension() const { return basis.size(); }
};

/// The operator C -> BC - CB acting on column-major vec(C).
inline Mat commutator_operator(const Mat& b) {
  const Eigen::Index n = b.rows();
  const Eigen::Index nn = n * n;
  Mat k = Mat::Zero(nn, nn);
  // vec(BC) = (I kron B) vec(C), vec(CB) = (B^T kron I) vec(C)
  for (Eigen::Index blk = 0; blk < n; ++blk) {
    k.block(blk * n, blk * n, n, n) += b;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double bji = b(j, i);
      if (bji == 0.0) continue;
      for (Eigen::Index r = 0; r < n; ++r) k(i * n + r, j * n + r) -= bji;
    }
  }
  return k;
}

inline CommutantBasis commutant_basis(const Mat& b, double tol = kDefaultRankTol) {
  require_square(b, "commutant_basis");
  require(tol > 0, "commutant_basis: tol must be positive");
  const Eigen::Index n = b.rows();
  const Mat ns = nullspace(commutator_operator(b), tol);
  CommutantBasis out;
  out.generator = b;
  out.tol = tol;
  out.basis.reserve(static_cast<std::size_t>(ns.cols()));
  for (Eigen::Index c = 0; c < ns.cols(); ++c) {
    out.basis.emplace_back(Eigen::Map<const Mat>(ns.col(c).data(), n, n));
  }
  if (out.basis.empty()) throw NumericalError("commutant_basis: empty nullspace (B always commutes with I)");
  return out;
}

struct Proportionality {
  bool verdict = false;
  std::optional<double> factor;
};

/// Is C = c B for a scalar c (least-squares c, relative Frobenius residual)?
inline Proportionality is_proportional(const Mat& c, const Mat& b, double tol = kDefaultRankTol) {
  require(c.rows() == b.rows() && c.cols() == b.cols(), "is_proportional: dimension mismatch");
  const double bb = b.squaredNorm();
  if (bb == 0.0) {
    if (c.squaredNorm() == 0.0) return {true, 0.0};
    return {false, std::nullopt};
  }
  const double factor = (c.array() * b.array()).sum() / bb;
  const double resid = (c - factor * b).norm();
  if (resid <= tol * c.norm()) return {true, factor};
  return {false, std::nullopt};
}

/// Orthonormal bases of the stable and unstable invariant subspaces of a
/// matrix without purely imaginary eigenvalues, via the matrix sign function.
struct InvariantSplitting {
  Mat stable;    // n x n_s
  Mat unstable;  // n x n_u
};

inline InvariantSplitting invariant_splitting(const Mat& b, int n_stable) {
  require_square(b, "invariant_splitting");
  const Eigen::Index n = b.rows();
  require(n_stable >= 0 && n_stable <= n, "invariant_splitting: bad stable dimension");
  Mat s = b;
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    Eigen::PartialPivLU<Mat> lu(s);
    const double det = lu.determinant();
    if (!std::isfinite(det) || det == 0.0) {
      throw NumericalError("invariant_splitting: singular iterate (eigenvalue on imaginary axis?)");
    }
    const double scale = std::pow(std::abs(det), -1.0 / static_cast<double>(n));
    Mat next = 0.5 * (scale * s + lu.inverse() / scale);
    const double diff = (next - s).norm();
    s = std::move(next);
    if (diff <= 1e-13 * s.norm()) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NumericalError("invariant_splitting: sign iteration did not converge");
  const Mat id = Mat::Identity(n, n);
  auto range = [&](const Mat& p, Eigen::Index dim) -> Mat {
    if (dim == 0) return Mat(n, 0);
    Eigen::JacobiSVD<Mat> svd(p, Eigen::ComputeFullU);
    return svd.matrixU().leftCols(dim);
  };
  return {range(0.5 * (id - s), n_stable), range(0.5 * (id + s), n - n_stable)};
}

}  // namespace flowcent
