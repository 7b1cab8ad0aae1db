#include "almostcomm/herm_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <fmt/core.h>

#include "almostcomm/errors.hpp"

namespace almostcomm {

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw InvalidArgument(fmt::format("{}: matrix is {}x{}, expected square", what, m.rows(), m.cols()));
  }
}

void require_same_dim(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch(
        fmt::format("{}: {}x{} vs {}x{}", what, a.rows(), a.cols(), b.rows(), b.cols()));
  }
}

// Rotates the first entry of largest modulus onto the positive real axis.
void fix_phase(Eigen::Ref<Vector> v) {
  Index best = 0;
  double best_abs = -1.0;
  for (Index i = 0; i < v.size(); ++i) {
    const double m = std::abs(v(i));
    if (m > best_abs * (1.0 + 1e-12)) {
      best_abs = m;
      best = i;
    }
  }
  if (best_abs > 0.0) v *= std::conj(v(best)) / best_abs;
}

}  // namespace

// ---------------------------------------------------------------------------
// HermitianMatrix

HermitianMatrix::HermitianMatrix(const Matrix& entries) {
  require_square(entries, "HermitianMatrix");
  const double asym = (entries - entries.adjoint()).cwiseAbs().maxCoeff();
  if (entries.size() > 0 && !(asym <= kHermitianTolerance)) {
    throw NotHermitian(fmt::format("HermitianMatrix: max |A - A*| = {:.3e} exceeds {:.0e}", asym,
                                   kHermitianTolerance));
  }
  m_ = 0.5 * (entries + entries.adjoint());
}

HermitianMatrix HermitianMatrix::from_computed(const Matrix& entries) {
  require_square(entries, "HermitianMatrix::from_computed");
  if (!entries.allFinite()) throw NotHermitian("HermitianMatrix::from_computed: non-finite entries");
  HermitianMatrix h;
  h.m_ = 0.5 * (entries + entries.adjoint());
  return h;
}

HermitianMatrix HermitianMatrix::zero(Index n) { return from_computed(Matrix::Zero(n, n)); }

HermitianMatrix HermitianMatrix::identity(Index n) { return from_computed(Matrix::Identity(n, n)); }

HermitianMatrix HermitianMatrix::diagonal(const RealVector& diag) {
  return from_computed(diag.cast<Complex>().asDiagonal().toDenseMatrix());
}

HermitianMatrix HermitianMatrix::operator+(const HermitianMatrix& o) const {
  require_same_dim(m_, o.m_, "HermitianMatrix::operator+");
  return from_computed(m_ + o.m_);
}

HermitianMatrix HermitianMatrix::operator-(const HermitianMatrix& o) const {
  require_same_dim(m_, o.m_, "HermitianMatrix::operator-");
  return from_computed(m_ - o.m_);
}

HermitianMatrix HermitianMatrix::operator-() const { return from_computed(-m_); }

HermitianMatrix HermitianMatrix::operator*(double s) const { return from_computed(s * m_); }

HermitianMatrix HermitianMatrix::conjugated(const Matrix& u) const {
  if (u.cols() != n()) throw DimensionMismatch("HermitianMatrix::conjugated: column count differs");
  return from_computed(u * m_ * u.adjoint());
}

HermitianMatrix HermitianMatrix::shifted(double s) const {
  Matrix m = m_;
  m.diagonal().array() -= s;
  return from_computed(m);
}

// ---------------------------------------------------------------------------
// SpectralDecomposition

double SpectralDecomposition::norm() const {
  if (eigenvalues.size() == 0) return 0.0;
  return std::max(std::abs(eigenvalues(0)), std::abs(eigenvalues(eigenvalues.size() - 1)));
}

double SpectralDecomposition::scale() const { return std::max(1.0, norm()); }

Matrix SpectralDecomposition::reconstruct() const {
  return basis * eigenvalues.cast<Complex>().asDiagonal() * basis.adjoint();
}

// ---------------------------------------------------------------------------
// SpectralWindow

SpectralWindow::SpectralWindow(double lower, double upper, bool lower_closed, bool upper_closed)
    : lower_(lower), upper_(upper), lower_closed_(lower_closed), upper_closed_(upper_closed) {
  if (std::isnan(lower) || std::isnan(upper) || lower > upper) {
    throw InvalidArgument(fmt::format("SpectralWindow: lower {} > upper {}", lower, upper));
  }
}

SpectralWindow SpectralWindow::above(double t, bool closed) {
  return {t, std::numeric_limits<double>::infinity(), closed, false};
}

SpectralWindow SpectralWindow::below(double t, bool closed) {
  return {-std::numeric_limits<double>::infinity(), t, false, closed};
}

bool SpectralWindow::contains(double x, double tol) const {
  bool lower_ok;
  if (std::isinf(lower_)) {
    lower_ok = true;
  } else if (std::abs(x - lower_) <= tol) {
    lower_ok = lower_closed_;
  } else {
    lower_ok = x > lower_;
  }
  bool upper_ok;
  if (std::isinf(upper_)) {
    upper_ok = true;
  } else if (std::abs(x - upper_) <= tol) {
    upper_ok = upper_closed_;
  } else {
    upper_ok = x < upper_;
  }
  return lower_ok && upper_ok;
}

SpectralWindow SpectralWindow::intersect(const SpectralWindow& o) const {
  double lo = lower_;
  bool lo_closed = lower_closed_;
  if (o.lower_ > lo) {
    lo = o.lower_;
    lo_closed = o.lower_closed_;
  } else if (o.lower_ == lo) {
    lo_closed = lo_closed && o.lower_closed_;
  }
  double hi = upper_;
  bool hi_closed = upper_closed_;
  if (o.upper_ < hi) {
    hi = o.upper_;
    hi_closed = o.upper_closed_;
  } else if (o.upper_ == hi) {
    hi_closed = hi_closed && o.upper_closed_;
  }
  if (lo > hi) {
    // empty: a degenerate open interval
    return {lo, lo, false, false};
  }
  return {lo, hi, lo_closed, hi_closed};
}

// ---------------------------------------------------------------------------
// norms and commutators

double op_norm(const HermitianMatrix& a) {
  if (a.n() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.matrix(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw EigensolverFailure("op_norm: eigensolver did not converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double op_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

double trace_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(a);
  return svd.singularValues().sum();
}

Matrix commutator(const HermitianMatrix& a, const HermitianMatrix& b) {
  return commutator(a.matrix(), b.matrix());
}

Matrix commutator(const Matrix& a, const Matrix& b) {
  require_square(a, "commutator");
  require_same_dim(a, b, "commutator");
  return a * b - b * a;
}

// ---------------------------------------------------------------------------
// spectral decomposition

SpectralDecomposition spectral_decomp(const HermitianMatrix& a) {
  const Index n = a.n();
  SpectralDecomposition d;
  if (n == 0) {
    d.eigenvalues.resize(0);
    d.basis.resize(0, 0);
    return d;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.matrix());
  if (es.info() != Eigen::Success) {
    throw EigensolverFailure(fmt::format("spectral_decomp: eigensolver failed for n = {}", n));
  }
  d.eigenvalues = es.eigenvalues();
  d.basis = es.eigenvectors();
  if (!d.eigenvalues.allFinite() || !d.basis.allFinite()) {
    throw EigensolverFailure("spectral_decomp: non-finite eigen data");
  }

  const double gap = 1e-10 * d.scale();
  Index start = 0;
  while (start < n) {
    Index stop = start + 1;
    while (stop < n && d.eigenvalues(stop) - d.eigenvalues(stop - 1) <= gap) ++stop;
    const Index k = stop - start;
    if (k > 1) {
      // Canonical basis of the cluster subspace, independent of the basis the
      // eigensolver happened to return.
      const Matrix vc = d.basis.middleCols(start, k);
      Eigen::ColPivHouseholderQR<Matrix> qr(vc.adjoint());
      const Matrix q = qr.householderQ() * Matrix::Identity(k, k);
      Matrix canon = vc * q;
      std::vector<std::pair<double, Index>> order(static_cast<std::size_t>(k));
      for (Index j = 0; j < k; ++j) {
        const double rq = (canon.col(j).adjoint() * a.matrix() * canon.col(j))(0, 0).real();
        order[static_cast<std::size_t>(j)] = {rq, j};
      }
      std::stable_sort(order.begin(), order.end(),
                       [](const auto& x, const auto& y) { return x.first < y.first; });
      for (Index j = 0; j < k; ++j) {
        const auto& [rq, src] = order[static_cast<std::size_t>(j)];
        d.eigenvalues(start + j) = rq;
        d.basis.col(start + j) = canon.col(src);
      }
    }
    start = stop;
  }
  for (Index j = 0; j < n; ++j) fix_phase(d.basis.col(j));
  return d;
}

// ---------------------------------------------------------------------------
// functional calculus

HermitianMatrix func_calc(const HermitianMatrix& a, const RealFunction& f) {
  return func_calc(spectral_decomp(a), f);
}

HermitianMatrix func_calc(const SpectralDecomposition& d, const RealFunction& f) {
  RealVector values(d.n());
  for (Index i = 0; i < d.n(); ++i) {
    values(i) = f(d.eigenvalues(i));
    if (!std::isfinite(values(i))) {
      throw FunctionUndefined(
          fmt::format("func_calc: function undefined at eigenvalue {:.17g}", d.eigenvalues(i)));
    }
  }
  return HermitianMatrix::from_computed(d.basis * values.cast<Complex>().asDiagonal() *
                                        d.basis.adjoint());
}

Matrix func_calc_complex(const SpectralDecomposition& d, const ComplexFunction& g) {
  Vector values(d.n());
  for (Index i = 0; i < d.n(); ++i) {
    values(i) = g(d.eigenvalues(i));
    if (!std::isfinite(values(i).real()) || !std::isfinite(values(i).imag())) {
      throw FunctionUndefined(
          fmt::format("func_calc_complex: function undefined at eigenvalue {:.17g}", d.eigenvalues(i)));
    }
  }
  return d.basis * values.asDiagonal() * d.basis.adjoint();
}

double endpoint_tolerance(const SpectralDecomposition& d) { return 1e-12 * d.scale(); }

Matrix spectral_subspace(const SpectralDecomposition& d, const SpectralWindow& w) {
  const double tol = endpoint_tolerance(d);
  std::vector<Index> cols;
  for (Index i = 0; i < d.n(); ++i) {
    if (w.contains(d.eigenvalues(i), tol)) cols.push_back(i);
  }
  Matrix v(d.basis.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) v.col(static_cast<Index>(j)) = d.basis.col(cols[j]);
  return v;
}

HermitianMatrix spectral_projection(const HermitianMatrix& a, const SpectralWindow& w) {
  return spectral_projection(spectral_decomp(a), w);
}

HermitianMatrix spectral_projection(const SpectralDecomposition& d, const SpectralWindow& w) {
  return projector(spectral_subspace(d, w));
}

HermitianMatrix projector(const Matrix& isometry) {
  return HermitianMatrix::from_computed(isometry * isometry.adjoint());
}

double unitarity_defect(const Matrix& u) {
  return op_norm(Matrix(u.adjoint() * u - Matrix::Identity(u.cols(), u.cols())));
}

}  // namespace almostcomm
