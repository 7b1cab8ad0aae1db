#pragma once

// Dense Hermitian matrix algebra: operator norms, commutators, spectral
// decomposition, functional calculus and spectral projections.

#include <complex>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace almostcomm {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Absolute self-adjointness tolerance accepted by the checked constructor.
inline constexpr double kHermitianTolerance = 1e-12;

/// Complex square matrix with A = A*. The stored entries are exactly
/// symmetrized, so entry(i,j) == conj(entry(j,i)) bit for bit.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;

  /// Validates |A(i,j) - conj(A(j,i))| <= 1e-12 and symmetrizes.
  /// Throws NotHermitian or InvalidArgument (non-square).
  explicit HermitianMatrix(const Matrix& entries);

  /// Symmetrizes a computed result without the absolute check. Intended for
  /// products like V diag(f) V* whose asymmetry is rounding only.
  static HermitianMatrix from_computed(const Matrix& entries);

  static HermitianMatrix zero(Index n);
  static HermitianMatrix identity(Index n);
  static HermitianMatrix diagonal(const RealVector& diag);

  Index n() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  Complex operator()(Index i, Index j) const { return m_(i, j); }

  HermitianMatrix operator+(const HermitianMatrix& o) const;
  HermitianMatrix operator-(const HermitianMatrix& o) const;
  HermitianMatrix operator-() const;
  HermitianMatrix operator*(double s) const;
  friend HermitianMatrix operator*(double s, const HermitianMatrix& a) { return a * s; }

  /// Unitary conjugation U A U*.
  HermitianMatrix conjugated(const Matrix& u) const;
  /// A - s*1.
  HermitianMatrix shifted(double s) const;

 private:
  Matrix m_;
};

/// Eigenvalues ascending, eigenvectors as columns of a unitary basis.
struct SpectralDecomposition {
  RealVector eigenvalues;
  Matrix basis;

  Index n() const { return eigenvalues.size(); }
  /// max |eigenvalue|
  double norm() const;
  /// max(1, ||A||), the scale every relative tolerance is measured against.
  double scale() const;
  Matrix reconstruct() const;
};

/// Interval of the real line with independently open or closed ends.
/// Infinite ends are written as +-infinity.
class SpectralWindow {
 public:
  SpectralWindow(double lower, double upper, bool lower_closed, bool upper_closed);

  static SpectralWindow closed(double lower, double upper) { return {lower, upper, true, true}; }
  static SpectralWindow open(double lower, double upper) { return {lower, upper, false, false}; }
  /// [t, inf) or (t, inf)
  static SpectralWindow above(double t, bool closed);
  /// (-inf, t] or (-inf, t)
  static SpectralWindow below(double t, bool closed);

  double lower() const { return lower_; }
  double upper() const { return upper_; }
  bool lower_closed() const { return lower_closed_; }
  bool upper_closed() const { return upper_closed_; }

  /// Membership with endpoint tolerance: a value within `tol` of an endpoint
  /// is decided by that endpoint's closed flag.
  bool contains(double x, double tol) const;

  SpectralWindow intersect(const SpectralWindow& o) const;

 private:
  double lower_;
  double upper_;
  bool lower_closed_;
  bool upper_closed_;
};

using RealFunction = std::function<double(double)>;
using ComplexFunction = std::function<Complex(double)>;

double op_norm(const HermitianMatrix& a);
/// Largest singular value.
double op_norm(const Matrix& a);
/// Sum of singular values.
double trace_norm(const Matrix& a);

/// AB - BA. Throws DimensionMismatch.
Matrix commutator(const HermitianMatrix& a, const HermitianMatrix& b);
Matrix commutator(const Matrix& a, const Matrix& b);

/// Deterministic eigendecomposition. Eigenvalues closer than
/// 1e-10*max(1,||A||) are treated as one cluster whose basis is fixed by a
/// column-pivoted QR of the cluster's coordinate rows; every eigenvector's
/// largest entry is rotated onto the positive real axis.
/// Throws EigensolverFailure.
SpectralDecomposition spectral_decomp(const HermitianMatrix& a);

HermitianMatrix func_calc(const HermitianMatrix& a, const RealFunction& f);
HermitianMatrix func_calc(const SpectralDecomposition& d, const RealFunction& f);
/// basis * diag(g(lambda)) * basis*, for complex-valued g (e.g. exp(i z t)).
Matrix func_calc_complex(const SpectralDecomposition& d, const ComplexFunction& g);

/// Columns of the eigenbasis whose eigenvalues lie in `w`.
Matrix spectral_subspace(const SpectralDecomposition& d, const SpectralWindow& w);
HermitianMatrix spectral_projection(const HermitianMatrix& a, const SpectralWindow& w);
HermitianMatrix spectral_projection(const SpectralDecomposition& d, const SpectralWindow& w);

/// Endpoint tolerance used by spectral_projection: 1e-12 * max(1, ||A||).
double endpoint_tolerance(const SpectralDecomposition& d);

/// Projector onto the column span of an isometry V (V V*).
HermitianMatrix projector(const Matrix& isometry);

/// || U*U - 1 ||
double unitarity_defect(const Matrix& u);

}  // namespace almostcomm
