#pragma once

// Exactly commuting approximations of almost commuting Hermitian pairs by
// Jacobi joint approximate diagonalization.

#include <vector>

#include "almostcomm/herm_core.hpp"

namespace almostcomm {

struct SolverReport {
  int sweeps = 0;
  /// Final sum over i != j of |A_ij|^2 + |B_ij|^2 in the rotated basis.
  double offdiag_energy = 0.0;
  bool converged = false;
  /// Off-diagonal energy before the first sweep and after each sweep.
  std::vector<double> energy_trace;
};

struct JointDiagonalization {
  Matrix unitary;
  SolverReport report;
};

/// a1 = basis diag(diag_a) basis*, b1 likewise.
struct CommutingPair {
  Matrix basis;
  RealVector diag_a;
  RealVector diag_b;
  double dist_a = 0.0;
  double dist_b = 0.0;

  HermitianMatrix a1() const;
  HermitianMatrix b1() const;
};

inline constexpr double kDefaultSolverTol = 1e-10;
inline constexpr int kDefaultMaxSweeps = 200;

/// Cyclic Jacobi sweeps over pairs (i, j), i < j, in row order, starting from
/// the identity. Each plane rotation maximizes the summed squared diagonal of
/// both matrices in that plane, so the off-diagonal energy never increases.
/// Stops once a sweep lowers the energy by a relative amount below `tol`, the
/// energy reaches rounding level, or `max_sweeps` sweeps have run.
JointDiagonalization joint_diagonalize(const HermitianMatrix& a, const HermitianMatrix& b,
                                       double tol = kDefaultSolverTol, int max_sweeps = kDefaultMaxSweeps);

/// Diagonals of U*aU and U*bU in the joint basis U, with the operator-norm
/// distances to the inputs.
CommutingPair commuting_approximation(const HermitianMatrix& a, const HermitianMatrix& b,
                                      double tol = kDefaultSolverTol, int max_sweeps = kDefaultMaxSweeps);

/// Same, also returning the solver report.
CommutingPair commuting_approximation(const HermitianMatrix& a, const HermitianMatrix& b, double tol,
                                      int max_sweeps, SolverReport& report);

}  // namespace almostcomm
