#include "almostcomm/mollifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <fmt/core.h>

#include "almostcomm/errors.hpp"
#include "quadrature.hpp"

namespace almostcomm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHalfWidth = 0.25;
// Transform of the bump is below 1e-13 of its peak past this point.
constexpr double kTransformCutoff = 2000.0;

void require_grid(int grid_points, const char* what) {
  if (grid_points < 64) {
    throw InvalidArgument(fmt::format("{}: grid_points = {} < 64", what, grid_points));
  }
}

// int bump(x) bump(x + w) dx over the overlap of the two supports.
double autocorrelation(double omega, int intervals) {
  const double w = std::abs(omega);
  if (w >= 2.0 * kHalfWidth) return 0.0;
  return detail::simpson([w](double x) { return bump(x) * bump(x + w); }, -kHalfWidth, kHalfWidth - w,
                         intervals);
}

// d/dx bump
double bump_derivative(double x) {
  const double y = 4.0 * x;
  if (std::abs(y) >= 1.0) return 0.0;
  const double s = 1.0 - y * y;
  return bump(x) * (-32.0 * x / (s * s));
}

double mollifier_k1(const MollifierKernel& kernel, double curvature, int intervals) {
  // int f(t)|t| dt = (2/pi) [ int_0^{1/2} (1 - F(w))/w^2 dw + 2 ]
  auto integrand = [&](double w) {
    if (w == 0.0) return curvature;
    return (1.0 - kernel.transfer(w)) / (w * w);
  };
  return 2.0 / kPi * (detail::simpson(integrand, 0.0, 2.0 * kHalfWidth, intervals) + 2.0);
}

// (1/pi) int_0^T |Phi(t)| dt for Phi the cosine transform of the bump, split
// at the sign changes of Phi so each piece is a smooth lobe.
double abs_transform_integral(int points) {
  const double h = 2.0 * kHalfWidth / points;
  std::vector<double> xs(static_cast<std::size_t>(points) + 1);
  std::vector<double> ws(xs.size());
  for (int i = 0; i <= points; ++i) {
    xs[static_cast<std::size_t>(i)] = -kHalfWidth + i * h;
    const double simpson_w = (i == 0 || i == points) ? 1.0 : (i % 2 != 0 ? 4.0 : 2.0);
    ws[static_cast<std::size_t>(i)] = simpson_w * h / 3.0 * bump(xs[static_cast<std::size_t>(i)]);
  }
  auto phi = [&](double t) {
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += ws[i] * std::cos(t * xs[i]);
    return s;
  };

  const double dt = 0.5;
  const int samples = static_cast<int>(kTransformCutoff / dt);
  std::vector<double> breaks{0.0};
  double prev = phi(0.0);
  for (int j = 1; j <= samples; ++j) {
    const double t = j * dt;
    const double cur = phi(t);
    if ((prev > 0.0 && cur < 0.0) || (prev < 0.0 && cur > 0.0)) {
      boost::uintmax_t iters = 100;
      auto [lo, hi] = boost::math::tools::toms748_solve(
          phi, t - dt, t, prev, cur, boost::math::tools::eps_tolerance<double>(50), iters);
      breaks.push_back(0.5 * (lo + hi));
    }
    prev = cur;
  }
  breaks.push_back(kTransformCutoff);

  double total = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    total += std::abs(boost::math::quadrature::gauss<double, 30>::integrate(phi, breaks[k], breaks[k + 1]));
  }
  return total / kPi;
}

using Gauss15 = boost::math::quadrature::gauss<double, 15>;
constexpr int kStepCells = 4096;

}  // namespace

double bump(double x) {
  const double y = 4.0 * x;
  if (std::abs(y) >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - y * y));
}

double bump_cosine_transform(double t, int points) {
  return detail::simpson([t](double x) { return bump(x) * std::cos(t * x); }, -kHalfWidth, kHalfWidth, points);
}

// ---------------------------------------------------------------------------
// MollifierKernel

double MollifierKernel::transfer(double omega) const {
  if (std::abs(omega) >= 2.0 * kHalfWidth) return 0.0;
  return autocorrelation(omega, 4 * grid_points) / autocorr_norm_;
}

double MollifierKernel::time_profile(double t) const {
  // f = |psi|^2 / (2 pi int bump^2), psi the inverse transform of the bump
  const int points = std::max(8 * grid_points, static_cast<int>(std::abs(t)) + 512);
  const double psi = bump_cosine_transform(t, points);
  return psi * psi / (2.0 * kPi * autocorr_norm_);
}

MollifierKernel build_mollifier(int grid_points) {
  require_grid(grid_points, "build_mollifier");
  MollifierKernel k;
  k.grid_points = grid_points;
  k.autocorr_norm_ = autocorrelation(0.0, 4 * grid_points);

  const double refined = autocorrelation(0.0, 8 * grid_points);
  k.unit_mass_check = k.autocorr_norm_ / refined;
  if (!(std::abs(k.unit_mass_check - 1.0) <= 1e-6)) {
    throw QuadratureFailure(fmt::format("build_mollifier: mass check {:.10f} off by more than 1e-6",
                                        k.unit_mass_check));
  }

  k.fourier_grid.resize(static_cast<std::size_t>(grid_points) + 1);
  k.fourier_values.resize(k.fourier_grid.size());
  for (int j = 0; j <= grid_points; ++j) {
    const double w = -2.0 * kHalfWidth + static_cast<double>(j) / grid_points;
    k.fourier_grid[static_cast<std::size_t>(j)] = w;
    k.fourier_values[static_cast<std::size_t>(j)] = k.transfer(w);
  }

  // -F''(0)/2 = int bump'^2 / (2 int bump^2), the integrand's limit at w = 0
  const double slope_sq = detail::simpson([](double x) { return std::pow(bump_derivative(x), 2); },
                                          -kHalfWidth, kHalfWidth, 8 * grid_points);
  const double curvature = slope_sq / (2.0 * k.autocorr_norm_);
  const double coarse = mollifier_k1(k, curvature, grid_points);
  const double fine = mollifier_k1(k, curvature, 2 * grid_points);
  if (!(std::abs(coarse - fine) <= 1e-6) || !(fine > 0.0)) {
    throw QuadratureFailure(
        fmt::format("build_mollifier: k1 refinement disagrees ({:.10g} vs {:.10g})", coarse, fine));
  }
  k.k1 = fine;
  return k;
}

HermitianMatrix band_smooth(const HermitianMatrix& a, const HermitianMatrix& b, const MollifierKernel& kernel) {
  if (a.n() != b.n()) {
    throw DimensionMismatch(fmt::format("band_smooth: dimensions {} and {}", a.n(), b.n()));
  }
  return band_smooth(spectral_decomp(a), b, kernel);
}

HermitianMatrix band_smooth(const SpectralDecomposition& a, const HermitianMatrix& b,
                            const MollifierKernel& kernel) {
  if (a.n() != b.n()) {
    throw DimensionMismatch(fmt::format("band_smooth: dimensions {} and {}", a.n(), b.n()));
  }
  const Index n = a.n();
  Matrix m = a.basis.adjoint() * b.matrix() * a.basis;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double omega = a.eigenvalues(i) - a.eigenvalues(j);
      if (std::abs(omega) >= 2.0 * kHalfWidth) {
        m(i, j) = 0.0;
        m(j, i) = 0.0;
      } else {
        const double f = kernel.transfer(omega);
        m(i, j) *= f;
        m(j, i) *= f;
      }
    }
  }
  return HermitianMatrix::from_computed(a.basis * m * a.basis.adjoint());
}

// ---------------------------------------------------------------------------
// StepKernel

double StepKernel::operator()(double t) const {
  if (t <= -kHalfWidth) return 0.0;
  if (t >= kHalfWidth) return 1.0;
  const double u = (t + kHalfWidth) / cell_;
  const auto i = std::min(static_cast<std::size_t>(u), cumulative_.size() - 2);
  const double left = -kHalfWidth + static_cast<double>(i) * cell_;
  const double partial = cumulative_[i] + Gauss15::integrate(bump, left, t);
  return std::clamp(partial / mass_, 0.0, 1.0);
}

double StepKernel::derivative(double t) const { return bump(t) / mass_; }

StepKernel build_step(int grid_points) {
  require_grid(grid_points, "build_step");
  StepKernel s;
  s.grid_points = grid_points;
  s.cell_ = 2.0 * kHalfWidth / kStepCells;
  s.cumulative_.assign(kStepCells + 1, 0.0);
  for (int i = 0; i < kStepCells; ++i) {
    const double left = -kHalfWidth + i * s.cell_;
    s.cumulative_[static_cast<std::size_t>(i) + 1] =
        s.cumulative_[static_cast<std::size_t>(i)] + Gauss15::integrate(bump, left, left + s.cell_);
  }
  s.mass_ = s.cumulative_.back();
  const double check =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(bump, -kHalfWidth, kHalfWidth, 15, 1e-14);
  if (!(std::abs(check - s.mass_) <= 1e-12 * s.mass_)) {
    throw QuadratureFailure(fmt::format("build_step: bump mass {:.17g} vs {:.17g}", s.mass_, check));
  }
  const int points = std::max(8 * grid_points, 2048);
  const double fine = abs_transform_integral(points) / s.mass_;
  const double coarse = abs_transform_integral(points / 2) / s.mass_;
  if (!(std::abs(fine - coarse) <= 1e-6) || !(fine > 0.0)) {
    throw QuadratureFailure(
        fmt::format("build_step: c_const refinement disagrees ({:.10g} vs {:.10g})", coarse, fine));
  }
  s.c_const = fine;
  return s;
}

std::pair<double, double> lipschitz_commutator_check(const HermitianMatrix& a, const HermitianMatrix& b,
                                                     const StepKernel& step) {
  const HermitianMatrix fa = func_calc(a, [&step](double t) { return step(t); });
  const double lhs = op_norm(commutator(b, fa));
  const double rhs = step.c_const * op_norm(commutator(a, b));
  return {lhs, rhs};
}

const MollifierKernel& default_mollifier() {
  static const MollifierKernel kernel = build_mollifier(256);
  return kernel;
}

const StepKernel& default_step() {
  static const StepKernel step = build_step(256);
  return step;
}

nlohmann::json kernel_dump(const MollifierKernel& mollifier, const StepKernel& step) {
  return {{"grid", mollifier.fourier_grid},
          {"values", mollifier.fourier_values},
          {"k1", mollifier.k1},
          {"c_const", step.c_const}};
}

}  // namespace almostcomm
