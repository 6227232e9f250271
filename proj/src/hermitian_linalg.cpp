#include "iscc/hermitian_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "iscc/errors.hpp"

namespace iscc {

namespace {

constexpr double kHermitianTol = 1e-12;
constexpr int kMaxJacobiSweeps = 100;

bool all_finite(const Eigen::MatrixXcd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!std::isfinite(m(i, j).real()) || !std::isfinite(m(i, j).imag())) return false;
    }
  }
  return true;
}

double off_diagonal_norm_sq(const Eigen::MatrixXcd& a) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (i != j) s += std::norm(a(i, j));
    }
  }
  return s;
}

// Cholesky with an acceptance floor on pivots. Returns the index of the first
// pivot below -floor, or -1 on success. Pivots in [-floor, 0] are clamped to 0
// and their column zeroed.
Eigen::Index factor(const Eigen::MatrixXcd& m, double floor, Eigen::MatrixXcd& l, double& bad) {
  const Eigen::Index n = m.rows();
  l = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = m(j, j).real();
    for (Eigen::Index k = 0; k < j; ++k) d -= std::norm(l(j, k));
    if (d < -floor || !std::isfinite(d)) {
      bad = d;
      return j;
    }
    if (d <= 0.0) continue;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      Complex s = m(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
      l(i, j) = s / ljj;
    }
  }
  return -1;
}

}  // namespace

HermitianMatrix::HermitianMatrix(Eigen::Index n) : m_(Eigen::MatrixXcd::Zero(n, n)) {}

HermitianMatrix HermitianMatrix::identity(Eigen::Index n) {
  return HermitianMatrix(Eigen::MatrixXcd(Eigen::MatrixXcd::Identity(n, n)));
}

HermitianMatrix HermitianMatrix::diagonal(const std::vector<double>& diag) {
  const auto n = static_cast<Eigen::Index>(diag.size());
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m(i, i) = diag[static_cast<std::size_t>(i)];
  return HermitianMatrix(std::move(m));
}

HermitianMatrix HermitianMatrix::from_matrix(const Eigen::MatrixXcd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw ValidationError("Hermitian matrix must be square and non-empty");
  }
  if (!all_finite(m)) throw ValidationError("Hermitian matrix has non-finite entries");
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      if (std::abs(m(i, j) - std::conj(m(j, i))) > kHermitianTol) {
        throw ValidationError("matrix is not Hermitian at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
    }
  }
  return symmetrized(m);
}

HermitianMatrix HermitianMatrix::symmetrized(const Eigen::MatrixXcd& m) {
  HermitianMatrix h{Eigen::MatrixXcd(m)};
  h.enforce_symmetry();
  return h;
}

void HermitianMatrix::enforce_symmetry() {
  Eigen::MatrixXcd adj = m_.adjoint();
  m_ = 0.5 * (m_ + adj);
  for (Eigen::Index i = 0; i < m_.rows(); ++i) m_(i, i) = m_(i, i).real();
}

HermitianMatrix& HermitianMatrix::operator+=(const HermitianMatrix& o) {
  if (o.dim() != dim()) throw ValidationError("dimension mismatch in Hermitian sum");
  m_ += o.m_;
  enforce_symmetry();
  return *this;
}

HermitianMatrix& HermitianMatrix::operator-=(const HermitianMatrix& o) {
  if (o.dim() != dim()) throw ValidationError("dimension mismatch in Hermitian difference");
  m_ -= o.m_;
  enforce_symmetry();
  return *this;
}

HermitianMatrix& HermitianMatrix::operator*=(double s) {
  m_ *= s;
  enforce_symmetry();
  return *this;
}

EigenDecomposition herm_eig(const HermitianMatrix& m) {
  const Eigen::Index n = m.dim();
  Eigen::MatrixXcd a = m.matrix();
  Eigen::MatrixXcd v = Eigen::MatrixXcd::Identity(n, n);

  const double scale = std::max(a.norm(), 1e-300);
  const double stop = std::pow(1e-16 * scale, 2);

  for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
    if (off_diagonal_norm_sq(a) <= stop) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double b = std::abs(a(p, q));
        if (b <= 1e-300) continue;
        const Complex phase = a(p, q) / b;  // e^{i alpha}
        const double zeta = (a(q, q).real() - a(p, p).real()) / (2.0 * b);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(zeta * zeta + 1.0));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        // G = diag(1, e^{-i alpha}) * [[c, s], [-s, c]]
        const Complex g00 = c;
        const Complex g01 = s;
        const Complex g10 = -s * std::conj(phase);
        const Complex g11 = c * std::conj(phase);

        Eigen::VectorXcd cp = a.col(p);
        Eigen::VectorXcd cq = a.col(q);
        a.col(p) = cp * g00 + cq * g10;
        a.col(q) = cp * g01 + cq * g11;
        Eigen::RowVectorXcd rp = a.row(p);
        Eigen::RowVectorXcd rq = a.row(q);
        a.row(p) = std::conj(g00) * rp + std::conj(g10) * rq;
        a.row(q) = std::conj(g01) * rp + std::conj(g11) * rq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();

        Eigen::VectorXcd vp = v.col(p);
        Eigen::VectorXcd vq = v.col(q);
        v.col(p) = vp * g00 + vq * g10;
        v.col(q) = vp * g01 + vq * g11;
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    return a(i, i).real() > a(j, j).real();
  });

  EigenDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.eigenvalues(k) = a(src, src).real();
    out.eigenvectors.col(k) = v.col(src).normalized();
  }
  return out;
}

Eigen::MatrixXcd cholesky_psd(const HermitianMatrix& m, double shift_tol) {
  const double round_floor = 64.0 * 2.220446049250313e-16 * std::max(1.0, m.frobenius_norm());

  // Decide on the shifted matrix: m + shift*I is PSD iff lambda_min(m) >= -shift.
  Eigen::MatrixXcd shifted = m.matrix();
  shifted.diagonal().array() += shift_tol;
  Eigen::MatrixXcd l;
  double bad = 0.0;
  const Eigen::Index pivot = factor(shifted, round_floor, l, bad);
  if (pivot >= 0) throw NotPsdError(static_cast<std::size_t>(pivot), bad);

  // Unshifted factor; pivots the shift tolerance admitted are clamped to zero.
  factor(m.matrix(), std::numeric_limits<double>::infinity(), l, bad);
  return l;
}

std::optional<double> log_det_pd(const HermitianMatrix& m) {
  const Eigen::Index n = m.dim();
  double logdet = 0.0;
  Eigen::MatrixXcd l = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = m(j, j).real();
    for (Eigen::Index k = 0; k < j; ++k) d -= std::norm(l(j, k));
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    logdet += std::log(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      Complex s = m(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
      l(i, j) = s / ljj;
    }
  }
  return logdet;
}

HermitianMatrix inverse_pd(const HermitianMatrix& m) {
  Eigen::LLT<Eigen::MatrixXcd> llt(m.matrix());
  if (llt.info() != Eigen::Success) throw NumericalFailure("inverse of non-positive-definite matrix");
  const Eigen::Index n = m.dim();
  return HermitianMatrix::symmetrized(llt.solve(Eigen::MatrixXcd::Identity(n, n)));
}

double quad_form(const HermitianMatrix& m, const ComplexVector& x) {
  if (x.size() != m.dim()) throw ValidationError("quad_form: dimension mismatch");
  return x.dot(m.matrix() * x).real();
}

HermitianMatrix outer_product(const ComplexVector& v) {
  return HermitianMatrix::symmetrized(v * v.adjoint());
}

double trace_product(const HermitianMatrix& a, const HermitianMatrix& b) {
  if (a.dim() != b.dim()) throw ValidationError("trace_product: dimension mismatch");
  // tr(AB) = sum_ij A_ij B_ji = sum_ij A_ij conj(B_ij) for Hermitian B.
  return (a.matrix().array() * b.matrix().conjugate().array()).sum().real();
}

ComplexVector canonical_phase(const ComplexVector& v) {
  if (v.size() == 0) return v;
  Eigen::Index imax = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // strict > keeps the first index on ties so the convention is deterministic
    if (std::abs(v(i)) > best * (1.0 + 1e-12)) {
      best = std::abs(v(i));
      imax = i;
    }
  }
  if (best <= 0.0) return v;
  const Complex rot = std::conj(v(imax)) / best;
  ComplexVector out = v * rot;
  out(imax) = std::abs(v(imax));
  return out;
}

RankOneExtraction principal_rank_one(const HermitianMatrix& m) {
  const EigenDecomposition eig = herm_eig(m);
  const double l1 = eig.eigenvalues(0);
  if (!(l1 > 0.0)) throw ValidationError("principal_rank_one: no positive principal eigenvalue");
  RankOneExtraction out;
  out.vector = canonical_phase(std::sqrt(l1) * eig.eigenvectors.col(0));
  if (m.dim() > 1) {
    out.residual_ratio = eig.eigenvalues(1) / l1;
    out.residual_bound = eig.eigenvalues.tail(m.dim() - 1).norm() / l1;
  }
  return out;
}

}  // namespace iscc
