#pragma once

// Band-limited smoothing kernels.
//
// The mollifier f is |psi|^2 normalized to unit mass, where the Fourier side
// of psi is the bump x -> exp(-1/(1-(4x)^2)) on (-1/4, 1/4). Its transfer
// function F(w) = int f(t) e^{itw} dt is then the normalized autocorrelation
// of the bump and vanishes identically for |w| >= 1/2.
//
// The step kernel is the normalized running integral of the same bump: a C^inf
// ramp that is 0 below -1/4 and 1 above 1/4.

#include <utility>
#include <vector>

#include <json.hpp>

#include "almostcomm/herm_core.hpp"

namespace almostcomm {

/// The bump exp(-1/(1-(4x)^2)) on (-1/4, 1/4), zero outside.
double bump(double x);

/// Cosine transform of the bump, int bump(x) cos(t x) dx, by composite
/// Simpson on `points` intervals. Accurate while 4*pi*points >> 2|t|.
double bump_cosine_transform(double t, int points);

struct MollifierKernel {
  int grid_points = 0;
  /// Uniform grid on [-1/2, 1/2] with grid_points + 1 nodes.
  std::vector<double> fourier_grid;
  /// F sampled on fourier_grid; nonnegative, zero at both ends.
  std::vector<double> fourier_values;
  /// int f(t) |t| dt
  double k1 = 0.0;
  /// int f(t) dt as recovered by the quadrature (1 up to its error).
  double unit_mass_check = 0.0;

  /// F(w) evaluated by quadrature at w (not interpolated).
  double transfer(double omega) const;
  /// f(t) in the time domain.
  double time_profile(double t) const;

 private:
  friend MollifierKernel build_mollifier(int grid_points);
  double autocorr_norm_ = 1.0;
};

/// Throws InvalidArgument when grid_points < 64 and QuadratureFailure when a
/// refinement check disagrees beyond tolerance.
MollifierKernel build_mollifier(int grid_points);

/// b1 = int f(t) e^{ita} b e^{-ita} dt, computed in the eigenbasis of a as the
/// entrywise multiplier F(lambda_i - lambda_j). Entries with
/// |lambda_i - lambda_j| >= 1/2 are set to zero.
HermitianMatrix band_smooth(const HermitianMatrix& a, const HermitianMatrix& b,
                            const MollifierKernel& kernel);
HermitianMatrix band_smooth(const SpectralDecomposition& a, const HermitianMatrix& b,
                            const MollifierKernel& kernel);

struct StepKernel {
  int grid_points = 0;
  /// int |(f')^(t)| dt with (g)^(t) = (1/2pi) int g(s) e^{-its} ds.
  double c_const = 0.0;

  double operator()(double t) const;
  double derivative(double t) const;

 private:
  friend StepKernel build_step(int grid_points);
  double mass_ = 1.0;
  /// Running integral of the bump at -1/4 + i*cell_, exact to rounding.
  std::vector<double> cumulative_;
  double cell_ = 0.0;
};

StepKernel build_step(int grid_points);

/// Returns (||[b, step(a)]||, c_const * ||[a, b]||).
std::pair<double, double> lipschitz_commutator_check(const HermitianMatrix& a, const HermitianMatrix& b,
                                                     const StepKernel& step);

/// Process-wide kernels built once with 256 grid points.
const MollifierKernel& default_mollifier();
const StepKernel& default_step();

/// {grid, values, k1, c_const}
nlohmann::json kernel_dump(const MollifierKernel& mollifier, const StepKernel& step);

}  // namespace almostcomm
