#include "almostcomm/window_projections.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/core.h>

#include "almostcomm/errors.hpp"
#include "almostcomm/parallel.hpp"

namespace almostcomm {

namespace {

double comm_norm(const Matrix& x, const Matrix& y) { return op_norm(Matrix(x * y - y * x)); }

Matrix identity_like(const Matrix& m) { return Matrix::Identity(m.rows(), m.cols()); }

struct Attempt {
  WindowProjectionResult result;
  bool solver_converged = true;
};

Attempt build_window(const SpectralDecomposition& a, const Matrix& a_full, const HermitianMatrix& b, double t,
                     double eps, double solver_tol, int max_sweeps) {
  const Index n = a.n();
  Attempt out;
  WindowProjectionResult& r = out.result;

  const Matrix v_mid = spectral_subspace(a, SpectralWindow::open(t - 0.25, t + 0.25));
  const Matrix v_hi = spectral_subspace(a, SpectralWindow::above(t + 0.25, true));
  r.transition_rank = v_mid.cols();

  Matrix p = v_hi * v_hi.adjoint();
  if (v_mid.cols() > 0) {
    const StepKernel& step = default_step();
    const HermitianMatrix c = func_calc(a, [&step, t](double x) { return step(x - t); });
    SolverReport report;
    const CommutingPair pair = commuting_approximation(b, c, solver_tol, max_sweeps, report);
    out.solver_converged = report.converged;

    std::vector<Index> cols;
    for (Index j = 0; j < n; ++j) {
      if (pair.diag_b(j) > 0.5) cols.push_back(j);
    }
    Matrix vq(n, static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) vq.col(static_cast<Index>(j)) = pair.basis.col(cols[j]);

    // Compress q to the transition window and keep its (1/2, inf) part.
    const Matrix w = v_mid.adjoint() * vq;
    const HermitianMatrix compressed = HermitianMatrix::from_computed(w * w.adjoint());
    const SpectralDecomposition cd = spectral_decomp(compressed);
    const Matrix q0 = v_mid * spectral_subspace(cd, SpectralWindow::above(0.5, false));
    p += q0 * q0.adjoint();
  }
  r.p = HermitianMatrix::from_computed(p);

  const Matrix& pm = r.p.matrix();
  const Matrix one = identity_like(pm);
  r.comm_a = comm_norm(a_full, pm);
  r.comm_b = comm_norm(b.matrix(), pm);
  r.idempotence = op_norm(Matrix(pm * pm - pm));
  r.sandwich_lo = op_norm(Matrix(v_hi.adjoint() * (one - pm)));
  const Matrix v_above = spectral_subspace(a, SpectralWindow::above(t - 0.25, false));
  r.sandwich_hi = op_norm(Matrix(pm * (one - v_above * v_above.adjoint())));
  r.within_eps = r.comm_a < eps && r.comm_b < eps;
  return out;
}

void check_certificates(const WindowProjectionResult& r, double t, double tol) {
  if (!(r.sandwich_lo <= tol) || !(r.sandwich_hi <= tol) || !(r.idempotence <= tol)) {
    throw SandwichViolation(fmt::format(
        "window_projection at t = {}: certificates lo = {:.3e}, hi = {:.3e}, idempotence = {:.3e} exceed {:.0e}",
        t, r.sandwich_lo, r.sandwich_hi, r.idempotence, tol));
  }
}

}  // namespace

WindowProjectionResult window_projection(const HermitianMatrix& a, const HermitianMatrix& b, double t, double eps,
                                         const WindowOptions& options) {
  if (a.n() != b.n()) {
    throw DimensionMismatch(fmt::format("window_projection: dimensions {} and {}", a.n(), b.n()));
  }
  return window_projection(spectral_decomp(a), b, t, eps, options);
}

WindowProjectionResult window_projection(const SpectralDecomposition& a, const HermitianMatrix& b, double t,
                                         double eps, const WindowOptions& options) {
  if (a.n() != b.n()) {
    throw DimensionMismatch(fmt::format("window_projection: dimensions {} and {}", a.n(), b.n()));
  }
  if (!std::isfinite(t)) throw InvalidArgument("window_projection: t must be finite");
  if (!(eps > 0.0)) throw InvalidArgument("window_projection: eps must be positive");
  if (op_norm(b) > 1.0 + 1e-9) {
    throw InvalidArgument(fmt::format("window_projection: ||b|| = {:.6g} exceeds 1", op_norm(b)));
  }

  const Matrix a_full = a.reconstruct();
  Attempt first = build_window(a, a_full, b, t, eps, options.solver_tol, options.max_sweeps);
  if (first.result.within_eps && first.solver_converged) {
    check_certificates(first.result, t, options.certificate_tol);
    return first.result;
  }

  Attempt second = build_window(a, a_full, b, t, eps, 0.1 * options.solver_tol, options.max_sweeps);
  second.result.retried = true;
  if (!second.solver_converged) {
    throw LinSolverFailure(fmt::format("window_projection at t = {}: inner solver did not converge in {} sweeps",
                                       t, options.max_sweeps));
  }
  check_certificates(second.result, t, options.certificate_tol);
  const auto worst = [](const WindowProjectionResult& r) { return std::max(r.comm_a, r.comm_b); };
  if (first.solver_converged && worst(first.result) < worst(second.result)) {
    check_certificates(first.result, t, options.certificate_tol);
    first.result.retried = true;
    return first.result;
  }
  return second.result;
}

// ---------------------------------------------------------------------------
// partition

double ProjectionPartition::max_comm() const {
  double m = 0.0;
  for (const auto& [k, bounds] : comm_bounds) m = std::max({m, bounds.first, bounds.second});
  return m;
}

ProjectionPartition partition(const HermitianMatrix& a, const HermitianMatrix& b, double eps,
                              const PartitionOptions& options) {
  if (a.n() != b.n()) {
    throw DimensionMismatch(fmt::format("partition: dimensions {} and {}", a.n(), b.n()));
  }
  return partition(spectral_decomp(a), b, eps, options);
}

namespace {

std::vector<WindowProjectionResult> build_chain(const SpectralDecomposition& a, const HermitianMatrix& b,
                                                long first, long count, double eps, const WindowOptions& window,
                                                int workers) {
  std::vector<WindowProjectionResult> chain(static_cast<std::size_t>(count));
  // the failure with the smallest k is reported, independent of scheduling
  parallel_for(chain.size(), workers, [&](std::size_t i) {
    chain[i] = window_projection(a, b, static_cast<double>(first + static_cast<long>(i)), 0.5 * eps, window);
  });
  return chain;
}

double chain_monotone_residual(const std::vector<WindowProjectionResult>& chain) {
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    const Matrix& ek = chain[i].p.matrix();
    const Matrix& ek1 = chain[i + 1].p.matrix();
    worst = std::max(worst, op_norm(Matrix(ek1 - ek1 * ek)));
  }
  return worst;
}

}  // namespace

ProjectionPartition partition(const SpectralDecomposition& a, const HermitianMatrix& b, double eps,
                              const PartitionOptions& options) {
  if (a.n() != b.n()) {
    throw DimensionMismatch(fmt::format("partition: dimensions {} and {}", a.n(), b.n()));
  }
  if (a.n() == 0) throw InvalidArgument("partition: empty matrices");
  const double tol = options.window.certificate_tol;

  const long k_first = static_cast<long>(std::floor(a.eigenvalues(0))) - 1;
  const long k_last = static_cast<long>(std::ceil(a.eigenvalues(a.n() - 1))) + 1;
  const long count = k_last - k_first + 2;  // e_k for k_first .. k_last + 1

  ProjectionPartition part;
  part.k_range = {k_first, k_last};

  std::vector<WindowProjectionResult> chain =
      build_chain(a, b, k_first, count, eps, options.window, options.workers);
  double monotone = chain_monotone_residual(chain);
  if (!(monotone <= tol)) {
    WindowOptions tighter = options.window;
    tighter.solver_tol *= 0.1;
    chain = build_chain(a, b, k_first, count, eps, tighter, options.workers);
    part.diagnostics.retried = true;
    monotone = chain_monotone_residual(chain);
    if (!(monotone <= tol)) {
      throw MonotonicityViolation(
          fmt::format("partition: ||e_(k+1)(1 - e_k)|| = {:.3e} exceeds {:.0e} after retry", monotone, tol));
    }
  }
  PartitionDiagnostics& diag = part.diagnostics;
  diag.monotone = monotone;
  for (const auto& w : chain) diag.retried = diag.retried || w.retried;

  const Index n = a.n();
  const Matrix a_full = a.reconstruct();
  const Matrix one = Matrix::Identity(n, n);
  Matrix sum = Matrix::Zero(n, n);
  for (long k = k_first; k <= k_last; ++k) {
    const auto i = static_cast<std::size_t>(k - k_first);
    const HermitianMatrix pk = chain[i].p - chain[i + 1].p;
    const Matrix& pm = pk.matrix();
    sum += pm;
    part.comm_bounds[k] = {comm_norm(a_full, pm), comm_norm(b.matrix(), pm)};
    diag.idempotence = std::max(diag.idempotence, op_norm(Matrix(pm * pm - pm)));

    const double kd = static_cast<double>(k);
    const Matrix v_in = spectral_subspace(a, SpectralWindow::closed(kd + 0.25, kd + 0.75));
    const Matrix v_out = spectral_subspace(a, SpectralWindow::open(kd - 0.25, kd + 1.25));
    diag.sandwich_lo = std::max(diag.sandwich_lo, op_norm(Matrix(v_in.adjoint() * (one - pm))));
    diag.sandwich_hi = std::max(diag.sandwich_hi, op_norm(Matrix(pm * (one - v_out * v_out.adjoint()))));
    for (long j = k; j <= k + 1; ++j) {
      const double jd = static_cast<double>(j);
      const Matrix v_j = spectral_subspace(a, SpectralWindow::open(jd - 0.25, jd + 0.25));
      diag.window_commutator =
          std::max(diag.window_commutator, comm_norm(Matrix(v_j * v_j.adjoint()), pm));
    }
    part.projections.emplace(k, pk);
  }
  diag.sum_defect = op_norm(Matrix(sum - one));

  // Only projections with nonzero trace can fail orthogonality.
  std::vector<const Matrix*> nonzero;
  for (const auto& [k, pk] : part.projections) {
    if (pk.matrix().trace().real() > 0.5) nonzero.push_back(&pk.matrix());
  }
  for (std::size_t i = 0; i < nonzero.size(); ++i) {
    for (std::size_t j = i + 1; j < nonzero.size(); ++j) {
      diag.orthogonality = std::max(diag.orthogonality, op_norm(Matrix(*nonzero[i] * *nonzero[j])));
    }
  }
  return part;
}

}  // namespace almostcomm
