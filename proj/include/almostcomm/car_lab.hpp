#pragma once

// Fermionic Fock space over C^n, quasi-free flows and their second-quantized
// generators, Wick-ordered operators, and moment-preserving paths of
// discrete measures that contract onto three atoms.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>
#include <json.hpp>

#include "almostcomm/herm_core.hpp"

namespace almostcomm {

using SparseMatrix = Eigen::SparseMatrix<Complex>;

/// Jordan-Wigner creators on the 2^n dimensional Fock space. Basis vector
/// index i encodes occupations n_0 ... n_{n-1} with mode 0 as the most
/// significant bit; a*_k carries the sign (-1)^{n_0 + ... + n_{k-1}}.
struct FockRep {
  int modes = 0;
  std::vector<SparseMatrix> creators;

  Index dim() const { return Index{1} << modes; }
  /// a*(xi) = sum_k xi_k a*_k, linear in xi.
  SparseMatrix create(const Vector& xi) const;
  /// a(xi) = a*(xi)^*, antilinear in xi.
  SparseMatrix annihilate(const Vector& xi) const;
  /// dGamma(h) = sum_ij h_ij a*_i a_j
  SparseMatrix second_quantize(const Matrix& h) const;
};

/// Cached per n behind a shared lock; 1 <= n <= 12, else InvalidArgument.
const FockRep& fock_rep(int n);

struct QuasiFreeFlow {
  const FockRep* rep = nullptr;
  HermitianMatrix one_particle_h;
  /// dGamma(H)
  SparseMatrix generator_h;
};

QuasiFreeFlow quasi_free_flow(const FockRep& rep, const HermitianMatrix& h);

/// delta(x) = i[dGamma(H), x]. Throws DimensionMismatch.
Matrix quasi_free_generator(const QuasiFreeFlow& flow, const Matrix& x);

struct InnerPerturbation {
  /// sum_i lambda_i a*(zeta_i) a(zeta_i) over the eigensystem of T.
  HermitianMatrix b;
  double norm_b = 0.0;
  /// Tr|T|; equals norm_b when T is semidefinite.
  double trace_abs = 0.0;
};

/// Dense 2^n x 2^n result; n <= 10 to keep memory bounded.
InnerPerturbation inner_perturbation_from_rank(const HermitianMatrix& t);

/// Multi-index pair (mu, nu), each strictly increasing, 0-based.
using WickIndex = std::pair<std::vector<int>, std::vector<int>>;
using WickCoefficients = std::map<WickIndex, Complex>;

struct WickResult {
  Matrix x;
  /// ||x*x - 1||
  double unitarity_defect = 0.0;
};

/// x = sum a_{mu nu} a*(mu) a(nu) with a*(mu) = a*(f_{mu_1}) ... a*(f_{mu_k})
/// and a(nu) = a*(nu)^*, for the orthonormal family given by the columns of
/// `family` (identity when omitted). Throws InvalidArgument for malformed
/// indices or a non-unitary family.
WickResult wick_unitary(const FockRep& rep, const WickCoefficients& coeffs);
WickResult wick_unitary(const FockRep& rep, const WickCoefficients& coeffs, const Matrix& family);

/// ||i[dGamma(H), x]|| for the Wick operator built on `family`.
double wick_derivation_norm(const QuasiFreeFlow& flow, const WickCoefficients& coeffs, const Matrix& family);

struct ResidualVector {
  /// (H xi | xi)
  double c = 0.0;
  double eta_norm = 0.0;
  /// eta / ||eta||, or the zero vector when ||eta|| < 1e-12.
  Vector eta_unit;
  bool zero = false;
};

/// eta = H xi - c xi. Throws InvalidArgument unless ||xi|| = 1 within 1e-10.
ResidualVector residual_vector(const HermitianMatrix& h, const Vector& xi);

// ---------------------------------------------------------------------------
// discrete measures

/// Finite atom set with a probability measure nu and an amplitude xi of
/// unit norm in L^2(nu). The probability measure |xi|^2 dnu determines mean
/// and variance.
class DiscreteMeasureState {
 public:
  DiscreteMeasureState() = default;
  /// Validates ascending atoms, positive weights summing to 1 within 1e-12
  /// and sum weights |xi|^2 = 1 within 1e-12. Throws InvalidArgument.
  DiscreteMeasureState(RealVector atoms, RealVector weights, Vector xi);
  /// Rescales weights and xi to satisfy the normalizations first.
  static DiscreteMeasureState normalized(RealVector atoms, RealVector weights, Vector xi);

  const RealVector& atoms() const { return atoms_; }
  const RealVector& weights() const { return weights_; }
  const Vector& xi() const { return xi_; }
  Index size() const { return atoms_.size(); }

  /// weights_i |xi_i|^2
  RealVector masses() const;
  double norm() const;
  double mean() const;
  double variance() const;
  /// Atoms with nonzero mass.
  Index support_size() const;

  nlohmann::json to_json() const;
  /// {atoms, weights, xi_re, xi_im}; throws FormatError naming the field.
  static DiscreteMeasureState from_json(const nlohmann::json& j);

 private:
  RealVector atoms_;
  RealVector weights_;
  Vector xi_;
};

struct ThreePoints {
  std::array<double, 3> atoms{};
  std::array<Index, 3> indices{};
};

/// a = min S, b = max S; (a, c, b) if the mean c is an atom, else with
/// t1 < c < t2 the atoms adjacent to c: (a, t1, b) if (b-c)(c-t1) < v,
/// else (a, t2, b) if (t2-c)(c-a) < v, else (a, t1, t2).
/// Throws DegenerateMeasure when v = 0 or v = (b-c)(c-a) (mass on {a, b}).
ThreePoints select_three_points(const DiscreteMeasureState& state);

/// Masses on three atoms with total 1, mean c and variance v, from the
/// centred Vandermonde system.
std::array<double, 3> three_point_masses(const std::array<double, 3>& atoms, double c, double v);

struct PathOptions {
  int stages = 6;
  /// Grid points per stage (excluding each stage's start).
  int samples_per_stage = 8;
  /// Share of mass first spread over the non-target atoms of a stage.
  double spread = 0.5;
};

struct MeasurePath {
  std::vector<double> times;
  std::vector<int> stage;
  std::vector<DiscreteMeasureState> states;
  ThreePoints targets;
  /// Spread share actually used per stage after retries.
  std::vector<double> spread_used;
};

/// Stage 0 rotates xi to |xi|. Stage j >= 1 moves along
/// xi_t = ((1-tau) xi^2 + tau g_j)^{1/2} to a density g_j whose mass sits on
/// the targets and, with share `spread`, on the other atoms within
/// (b-a) 2^{-j-1} of a target; the last stage uses no spread. Stage j spans
/// global times [1 - 2^{-j}, 1 - 2^{-j-1}].
/// Throws DegenerateMeasure and MomentInfeasible (after halving the spread
/// share down to zero).
MeasurePath three_point_path(const DiscreteMeasureState& state, const PathOptions& options = {});

/// stage,t,mean,variance,support_size,w0,...,w{m-1} (masses per atom).
std::string path_csv(const MeasurePath& path, const std::vector<std::pair<std::string, std::string>>& meta);

/// m atoms uniform on [0, 1], weights and |xi| random, phases random.
DiscreteMeasureState random_measure(Index m, std::uint64_t seed);

/// m equispaced atoms on [0, 1], uniform weights, xi proportional to a
/// Gaussian profile centred at `center` with width `width`.
DiscreteMeasureState gaussian_measure(Index m, double center, double width);

}  // namespace almostcomm
