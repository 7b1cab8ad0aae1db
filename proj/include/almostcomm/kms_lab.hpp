#pragma once

// Gibbs states of h, their perturbations by inner terms b, the symmetry
// action of unitaries, and the two-point inequality comparing the values of
// perturbed states on nearby invariant projections.

#include <cstdint>
#include <string>
#include <vector>

#include "almostcomm/herm_core.hpp"

namespace almostcomm {

/// rho = exp(-c h)/Z for the flow alpha_t = Ad exp(i t h).
struct KmsState {
  HermitianMatrix h;
  double c = 1.0;
  Matrix rho;
  /// trace(exp(-c h)); may overflow to inf for large c||h||, see log_z.
  double z_partition = 0.0;
  double log_z = 0.0;
  SpectralDecomposition spectrum;

  /// Tr(rho x)
  Complex expect(const Matrix& x) const;
  /// exp(i z h) y exp(-i z h)
  Matrix evolve(Complex z, const Matrix& y) const;
};

/// Throws InvalidArgument when c == 0.
KmsState gibbs(const HermitianMatrix& h, double c);

/// max over t of |F(t + ic) - omega(alpha_t(y) x)| with F(z) = omega(x alpha_z(y)).
double kms_verify(const KmsState& state, const Matrix& x, const Matrix& y, const std::vector<double>& t_samples);
/// Same test for the functional Tr(density .) against the flow of h.
double kms_verify(const Matrix& density, const HermitianMatrix& h, double c, const Matrix& x, const Matrix& y,
                  const std::vector<double>& t_samples);

/// Unnormalized functional Tr(density .), density = exp(-c(h+b))/Z(h).
struct PerturbedFunctional {
  KmsState base;
  HermitianMatrix perturb;
  Matrix density;
  /// Tr(density), the norm of the functional.
  double weight = 0.0;

  Complex value(const Matrix& x) const;
  /// density / weight
  Matrix normalized_density() const;
};

PerturbedFunctional perturbed_functional(const KmsState& state, const HermitianMatrix& b);

struct SymmetryResult {
  /// Normalized density of the image functional.
  Matrix density;
  /// Value on 1 before normalization.
  double weight = 0.0;
  /// Trace norm of density - rho.
  double residual = 0.0;
};

/// Image of the state under gamma = Ad w, brought back to a KMS functional
/// for alpha by the cocycle u_t = w e^{ith} w* e^{-ith}:
/// x -> omega(w* x u*_{ic} w) with u*_{ic} = e^{-ch} w e^{ch} w*.
/// Replacing u_t by e^{ipt} u_t multiplies the functional by e^{cp}.
/// Throws NotUnitary if ||w*w - 1|| > 1e-10.
SymmetryResult symmetry_action(const KmsState& state, const Matrix& w, double phase = 0.0);

/// beta_t = Ad exp(itK) on M_2(M_n) with K = (h + b1) + (h + b2) blockwise.
struct DoubledFlow {
  HermitianMatrix h;
  HermitianMatrix b1;
  HermitianMatrix b2;
  HermitianMatrix k;
  SpectralDecomposition spectrum;

  Index n() const { return h.n(); }
  /// delta_beta(x) = i[K, x]
  Matrix generator(const Matrix& x) const;
  /// exp(izK) x exp(-izK)
  Matrix evolve(Complex z, const Matrix& x) const;
};

DoubledFlow doubled_flow(const HermitianMatrix& h, const HermitianMatrix& b1, const HermitianMatrix& b2);

/// The smooth function applied to x*x: t^{-1/2} on [3/4, 1], ramping to 0 on
/// [1/2, 3/4] and [1, 5/4], zero elsewhere.
double isometry_function(double t);

struct IsometryConstant {
  double sup_f = 0.0;
  /// int |s fhat(s)| ds
  double fourier_l1 = 0.0;
  /// sup|f| + 2 int |s fhat(s)| ds, so ||delta(v)|| <= C ||b1 - b2||.
  double c_const = 0.0;
};

/// Computed once per process. Throws QuadratureFailure if refinement
/// disagrees.
const IsometryConstant& isometry_constant();

struct IsometryResult {
  /// 2n x 2n partial isometry x f(x*x).
  Matrix v;
  /// [[0, e1 e2], [0, 0]]
  Matrix x;
  RealVector spectrum;
  double distance = 0.0;
  /// ||vv* - e1 (+) 0||
  double defect_left = 0.0;
  /// ||v*v - 0 (+) e2||
  double defect_right = 0.0;
};

/// Throws InvalidArgument for non-projections and SpectralGapMissing when
/// ||e1 - e2|| >= 1/2 or Sp(x*x) does not split as {0} u (1-||e1-e2||, 1].
IsometryResult close_projection_isometry(const HermitianMatrix& e1, const HermitianMatrix& e2);

/// F(z) = phi(v beta_z(v*)) with phi = Tr(exp(-cK)/Z(h) .), entire in z.
struct StripFunction {
  DoubledFlow flow;
  double c = 1.0;
  Matrix density;
  Matrix v;
  Matrix v_star_gen;  // delta_beta(v*)

  Complex value(Complex z) const;
  Complex derivative(Complex z) const;
};

StripFunction strip_function(const HermitianMatrix& h, const HermitianMatrix& b1, const HermitianMatrix& b2,
                             const HermitianMatrix& e1, const HermitianMatrix& e2, double c);

struct TheoremBResult {
  /// |F(ic) - F(0)|
  double lhs = 0.0;
  /// |c| C M ||b1 - b2||
  double rhs = 0.0;
  double f0 = 0.0;
  double fic = 0.0;
  double norm_b_diff = 0.0;
  /// max(omega_1(1), omega_2(1))
  double m_max = 0.0;
  double m_min = 0.0;
  double c_const = 0.0;
  /// ||delta_beta(v)|| and its bound C ||b1 - b2||
  double delta_v = 0.0;
  double delta_bound = 0.0;
};

/// Requires ||[h + b_i, e_i]|| <= 1e-8 (InvalidArgument otherwise).
/// Propagates SpectralGapMissing.
TheoremBResult theorem_b_inequality(const HermitianMatrix& h, const HermitianMatrix& b1, const HermitianMatrix& b2,
                                    const HermitianMatrix& e1, const HermitianMatrix& e2, double c);

struct TheoremBInstance {
  HermitianMatrix h;
  HermitianMatrix b1;
  HermitianMatrix b2;
  HermitianMatrix e1;
  HermitianMatrix e2;
};

/// Random h of norm about 1, b1 of norm 0.2 and b2 = b1 + d with ||d|| drawn
/// from [0.005, 0.1]; e_i projects onto the eigenvectors of h + b_i below
/// the widest spectral gap of h + b1. Redraws until ||e1 - e2|| < 1/2.
TheoremBInstance theorem_b_instance(Index n, std::uint64_t seed);

/// Identical perturbations (b1 = b2, e1 = e2); lhs must vanish.
TheoremBInstance theorem_b_degenerate_instance(Index n, std::uint64_t seed);

struct SubdivisionStep {
  double s0 = 0.0;
  double s1 = 0.0;
  TheoremBResult bound;
};

/// The chain of two-point inequalities along b(s) = (1-s) b_start + s b_end,
/// using the rank-`rank` bottom spectral projection of h + b(s). The number
/// of uniform segments doubles until neighbouring projections are closer
/// than 1/2.
struct SubdivisionResult {
  std::vector<SubdivisionStep> steps;
  /// |omega_end(e_end) - omega_start(e_start)|
  double endpoint_change = 0.0;
  double lhs_total = 0.0;
  /// |c| C M ||b_end - b_start|| with M the max weight over the grid.
  double rhs_total = 0.0;
  double m_max = 0.0;
  double m_min = 0.0;
};

SubdivisionResult subdivision_chain(const HermitianMatrix& h, const HermitianMatrix& b_start,
                                    const HermitianMatrix& b_end, Index rank, double c, int max_doublings = 12);

struct KmsRow {
  std::uint64_t seed = 0;
  Index n = 0;
  double c = 0.0;
  double norm_b_diff = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
};

/// seed,n,c,norm_b_diff,lhs,rhs,margin with leading "# key=value" lines.
std::string kms_csv(const std::vector<KmsRow>& rows, const std::vector<std::pair<std::string, std::string>>& meta);

}  // namespace almostcomm
