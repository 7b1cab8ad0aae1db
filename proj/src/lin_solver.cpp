#include "almostcomm/lin_solver.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <fmt/core.h>

#include "almostcomm/errors.hpp"

namespace almostcomm {

namespace {

double offdiag_energy(const Matrix& m) {
  return m.squaredNorm() - m.diagonal().squaredNorm();
}

// The traceless part of the (i, j) plane of a Hermitian matrix as a Bloch
// vector, components ordered (z, x, y) and scaled by 2.
Eigen::Vector3d plane_vector(const Matrix& m, Index i, Index j) {
  const Complex beta = m(i, j);
  return {m(i, i).real() - m(j, j).real(), 2.0 * beta.real(), -2.0 * beta.imag()};
}

// A <- R* A R with R = [[c, -conj(s)], [s, c]] acting on coordinates (i, j).
void rotate_both_sides(Matrix& m, Index i, Index j, double c, Complex s) {
  for (Index r = 0; r < m.rows(); ++r) {
    const Complex mi = m(r, i);
    const Complex mj = m(r, j);
    m(r, i) = c * mi + s * mj;
    m(r, j) = -std::conj(s) * mi + c * mj;
  }
  for (Index k = 0; k < m.cols(); ++k) {
    const Complex mi = m(i, k);
    const Complex mj = m(j, k);
    m(i, k) = c * mi + std::conj(s) * mj;
    m(j, k) = -s * mi + c * mj;
  }
}

void rotate_columns(Matrix& u, Index i, Index j, double c, Complex s) {
  for (Index r = 0; r < u.rows(); ++r) {
    const Complex ui = u(r, i);
    const Complex uj = u(r, j);
    u(r, i) = c * ui + s * uj;
    u(r, j) = -std::conj(s) * ui + c * uj;
  }
}

}  // namespace

HermitianMatrix CommutingPair::a1() const {
  return HermitianMatrix::from_computed(basis * diag_a.cast<Complex>().asDiagonal() * basis.adjoint());
}

HermitianMatrix CommutingPair::b1() const {
  return HermitianMatrix::from_computed(basis * diag_b.cast<Complex>().asDiagonal() * basis.adjoint());
}

JointDiagonalization joint_diagonalize(const HermitianMatrix& a, const HermitianMatrix& b, double tol,
                                       int max_sweeps) {
  if (a.n() != b.n()) {
    throw DimensionMismatch(fmt::format("joint_diagonalize: dimensions {} and {}", a.n(), b.n()));
  }
  if (!(tol > 0.0)) throw InvalidArgument("joint_diagonalize: tol must be positive");
  if (max_sweeps < 0) throw InvalidArgument("joint_diagonalize: max_sweeps must be nonnegative");

  const Index n = a.n();
  Matrix ma = a.matrix();
  Matrix mb = b.matrix();
  JointDiagonalization out;
  out.unitary = Matrix::Identity(n, n);
  SolverReport& rep = out.report;

  const double total = ma.squaredNorm() + mb.squaredNorm();
  const double floor = 1e-30 * std::max(1.0, total);
  double energy = offdiag_energy(ma) + offdiag_energy(mb);
  rep.energy_trace.push_back(energy);

  while (rep.sweeps < max_sweeps) {
    if (energy <= floor) {
      rep.converged = true;
      break;
    }
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        const Eigen::Vector3d ra = plane_vector(ma, i, j);
        const Eigen::Vector3d rb = plane_vector(mb, i, j);
        const Eigen::Matrix3d g = ra * ra.transpose() + rb * rb.transpose();
        if (ra.tail<2>().squaredNorm() + rb.tail<2>().squaredNorm() == 0.0) continue;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(g);
        Eigen::Vector3d v = es.eigenvectors().col(2);
        if (v(0) < 0.0) v = -v;
        const double c = std::sqrt(0.5 * (1.0 + v(0)));
        const Complex s = Complex(v(1), v(2)) / std::sqrt(2.0 * (1.0 + v(0)));
        if (std::abs(s) == 0.0) continue;
        rotate_both_sides(ma, i, j, c, s);
        rotate_both_sides(mb, i, j, c, s);
        rotate_columns(out.unitary, i, j, c, s);
      }
    }
    ++rep.sweeps;
    const double next = offdiag_energy(ma) + offdiag_energy(mb);
    rep.energy_trace.push_back(next);
    const double decrease = energy - next;
    energy = next;
    if (decrease <= tol * rep.energy_trace[rep.energy_trace.size() - 2]) {
      rep.converged = true;
      break;
    }
  }
  if (!rep.converged && energy <= floor) rep.converged = true;
  rep.offdiag_energy = energy;
  return out;
}

CommutingPair commuting_approximation(const HermitianMatrix& a, const HermitianMatrix& b, double tol,
                                      int max_sweeps) {
  SolverReport report;
  return commuting_approximation(a, b, tol, max_sweeps, report);
}

CommutingPair commuting_approximation(const HermitianMatrix& a, const HermitianMatrix& b, double tol,
                                      int max_sweeps, SolverReport& report) {
  JointDiagonalization jd = joint_diagonalize(a, b, tol, max_sweeps);
  CommutingPair pair;
  pair.basis = std::move(jd.unitary);
  const Matrix ra = pair.basis.adjoint() * a.matrix() * pair.basis;
  const Matrix rb = pair.basis.adjoint() * b.matrix() * pair.basis;
  pair.diag_a = ra.diagonal().real();
  pair.diag_b = rb.diagonal().real();
  pair.dist_a = op_norm(a - pair.a1());
  pair.dist_b = op_norm(b - pair.b1());
  report = std::move(jd.report);
  return pair;
}

}  // namespace almostcomm
