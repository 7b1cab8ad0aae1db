#pragma once

// Projections pinned between spectral projections of a that almost commute
// with both a and b, and the partitions of unity built from them.

#include <map>
#include <utility>

#include "almostcomm/herm_core.hpp"
#include "almostcomm/lin_solver.hpp"
#include "almostcomm/mollifiers.hpp"

namespace almostcomm {

struct WindowOptions {
  double solver_tol = kDefaultSolverTol;
  int max_sweeps = kDefaultMaxSweeps;
  /// Tolerance of the sandwich and projection certificates.
  double certificate_tol = 1e-9;
};

struct WindowProjectionResult {
  HermitianMatrix p;
  double comm_a = 0.0;
  double comm_b = 0.0;
  /// ||E_a[t+1/4, inf) (1 - p)||
  double sandwich_lo = 0.0;
  /// ||p (1 - E_a(t-1/4, inf))||
  double sandwich_hi = 0.0;
  /// ||p^2 - p||
  double idempotence = 0.0;
  /// Rank of the transition part E_a(t-1/4, t+1/4); the inner solve is
  /// skipped when it is zero.
  Index transition_rank = 0;
  bool retried = false;
  bool within_eps = true;
};

/// Builds p = q0 + E_a[t+1/4, inf), where q0 is the spectral projection onto
/// (1/2, inf) of the compression of q to E = E_a(t-1/4, t+1/4), and q is the
/// (1/2, inf) projection of c1 for a commuting approximation (b1, c1) of
/// (b, step(a - t)). Both certificates hold by construction; measured
/// commutators exceeding `eps` trigger one retry with a 10x tighter inner
/// tolerance and are then reported through `within_eps`.
/// Throws LinSolverFailure if the inner solve does not converge after the
/// retry and SandwichViolation if a certificate fails.
WindowProjectionResult window_projection(const HermitianMatrix& a, const HermitianMatrix& b, double t, double eps,
                                         const WindowOptions& options = {});
WindowProjectionResult window_projection(const SpectralDecomposition& a, const HermitianMatrix& b, double t,
                                         double eps, const WindowOptions& options = {});

struct PartitionDiagnostics {
  /// ||sum p_k - 1||
  double sum_defect = 0.0;
  /// max_{i != j} ||p_i p_j||
  double orthogonality = 0.0;
  /// max_k ||E_a[k+1/4, k+3/4] (1 - p_k)||
  double sandwich_lo = 0.0;
  /// max_k ||p_k (1 - E_a(k-1/4, k+5/4))||
  double sandwich_hi = 0.0;
  /// max_k ||e_{k+1} (1 - e_k)||
  double monotone = 0.0;
  /// max_k ||p_k^2 - p_k||
  double idempotence = 0.0;
  /// max_{j,k} ||[E_a(j-1/4, j+1/4), p_k]||, measured only.
  double window_commutator = 0.0;
  bool retried = false;
};

struct ProjectionPartition {
  /// Inclusive range [first, last] of k.
  std::pair<long, long> k_range{0, -1};
  std::map<long, HermitianMatrix> projections;
  /// k -> (||[a, p_k]||, ||[b, p_k]||)
  std::map<long, std::pair<double, double>> comm_bounds;
  PartitionDiagnostics diagnostics;

  /// Largest entry of comm_bounds.
  double max_comm() const;
};

struct PartitionOptions {
  WindowOptions window;
  /// Threads building the e_k; results do not depend on it.
  int workers = 1;
};

/// p_k = e_k - e_{k+1} for k from floor(min Sp a) - 1 to ceil(max Sp a) + 1,
/// with e_k = window_projection(a, b, k, eps/2).
/// Throws MonotonicityViolation if the chain e_k fails ||e_{k+1}(1 - e_k)||
/// <= 1e-9 after one retry with tightened inner tolerance.
ProjectionPartition partition(const HermitianMatrix& a, const HermitianMatrix& b, double eps,
                              const PartitionOptions& options = {});
ProjectionPartition partition(const SpectralDecomposition& a, const HermitianMatrix& b, double eps,
                              const PartitionOptions& options = {});

}  // namespace almostcomm
