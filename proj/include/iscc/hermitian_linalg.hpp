#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace iscc {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;

/// Dense n x n complex Hermitian matrix.
///
/// Every arithmetic result is re-symmetrized as (M + M^H) / 2, so the stored
/// matrix is exactly Hermitian regardless of round-off in the operands.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;
  /// Zero matrix of dimension n.
  explicit HermitianMatrix(Eigen::Index n);

  static HermitianMatrix identity(Eigen::Index n);
  static HermitianMatrix diagonal(const std::vector<double>& diag);
  /// Validates that |m(i,j) - conj(m(j,i))| <= 1e-12 and all entries are
  /// finite; throws ValidationError otherwise.
  static HermitianMatrix from_matrix(const Eigen::MatrixXcd& m);
  /// Unchecked projection onto the Hermitian part.
  static HermitianMatrix symmetrized(const Eigen::MatrixXcd& m);

  Eigen::Index dim() const { return m_.rows(); }
  const Eigen::MatrixXcd& matrix() const { return m_; }
  Complex operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  double trace() const { return m_.diagonal().real().sum(); }
  double frobenius_norm() const { return m_.norm(); }

  HermitianMatrix& operator+=(const HermitianMatrix& o);
  HermitianMatrix& operator-=(const HermitianMatrix& o);
  HermitianMatrix& operator*=(double s);

  friend HermitianMatrix operator+(HermitianMatrix a, const HermitianMatrix& b) { return a += b; }
  friend HermitianMatrix operator-(HermitianMatrix a, const HermitianMatrix& b) { return a -= b; }
  friend HermitianMatrix operator*(HermitianMatrix a, double s) { return a *= s; }
  friend HermitianMatrix operator*(double s, HermitianMatrix a) { return a *= s; }

 private:
  explicit HermitianMatrix(Eigen::MatrixXcd m) : m_(std::move(m)) {}
  void enforce_symmetry();

  Eigen::MatrixXcd m_;
};

struct EigenDecomposition {
  Eigen::VectorXd eigenvalues;    ///< sorted descending
  Eigen::MatrixXcd eigenvectors;  ///< column k pairs with eigenvalues(k)
};

/// Cyclic Jacobi eigensolver.
EigenDecomposition herm_eig(const HermitianMatrix& m);

/// Lower-triangular L with L L^H = m. Succeeds iff the smallest eigenvalue of
/// m is >= -shift_tol; otherwise throws NotPsdError with the failing pivot.
Eigen::MatrixXcd cholesky_psd(const HermitianMatrix& m, double shift_tol);

/// log det(m) if m is strictly positive definite, nullopt otherwise.
std::optional<double> log_det_pd(const HermitianMatrix& m);

/// Inverse of a positive definite matrix via its Cholesky factor.
HermitianMatrix inverse_pd(const HermitianMatrix& m);

/// Re(x^H m x).
double quad_form(const HermitianMatrix& m, const ComplexVector& x);

HermitianMatrix outer_product(const ComplexVector& v);

/// Re tr(a b).
double trace_product(const HermitianMatrix& a, const HermitianMatrix& b);

/// Rotates v so that its largest-magnitude entry is real and nonnegative.
ComplexVector canonical_phase(const ComplexVector& v);

struct RankOneExtraction {
  ComplexVector vector;          ///< sqrt(lambda_1) u_1, canonical phase
  double residual_ratio = 0.0;   ///< lambda_2 / lambda_1
  double residual_bound = 0.0;   ///< sqrt(sum_{k>=2} lambda_k^2) / lambda_1
};

/// Best rank-one approximation from the principal eigenpair. Throws
/// ValidationError when the largest eigenvalue is not positive.
RankOneExtraction principal_rank_one(const HermitianMatrix& m);

}  // namespace iscc
