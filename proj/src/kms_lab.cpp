#include "almostcomm/kms_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/core.h>

#include "almostcomm/errors.hpp"
#include "almostcomm/mollifiers.hpp"
#include "quadrature.hpp"

namespace almostcomm {

namespace {

constexpr Complex kI{0.0, 1.0};

void require_same(const HermitianMatrix& a, const HermitianMatrix& b, const char* what) {
  if (a.n() != b.n()) throw DimensionMismatch(fmt::format("{}: dimensions {} and {}", what, a.n(), b.n()));
}

void require_square_of(const Matrix& m, Index n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    throw DimensionMismatch(fmt::format("{}: expected {}x{}, got {}x{}", what, n, n, m.rows(), m.cols()));
  }
}

// log trace exp(-c h), shifted so the largest exponent is zero.
double log_partition(const SpectralDecomposition& d, double c) {
  double top = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < d.n(); ++i) top = std::max(top, -c * d.eigenvalues(i));
  double sum = 0.0;
  for (Index i = 0; i < d.n(); ++i) sum += std::exp(-c * d.eigenvalues(i) - top);
  return top + std::log(sum);
}

// exp(-c X) / exp(log_z) for X with decomposition d.
Matrix scaled_boltzmann(const SpectralDecomposition& d, double c, double log_z) {
  return func_calc_complex(d, [c, log_z](double x) { return Complex(std::exp(-c * x - log_z), 0.0); });
}

Matrix exp_i(const SpectralDecomposition& d, Complex z) {
  return func_calc_complex(d, [z](double x) { return std::exp(kI * z * x); });
}

double projection_defect(const HermitianMatrix& e) {
  return op_norm(Matrix(e.matrix() * e.matrix() - e.matrix()));
}

HermitianMatrix bottom_projection(const HermitianMatrix& m, Index rank) {
  const SpectralDecomposition d = spectral_decomp(m);
  return projector(d.basis.leftCols(rank));
}

}  // namespace

// ---------------------------------------------------------------------------
// Gibbs states

Complex KmsState::expect(const Matrix& x) const {
  require_square_of(x, h.n(), "KmsState::expect");
  return (rho * x).trace();
}

Matrix KmsState::evolve(Complex z, const Matrix& y) const {
  require_square_of(y, h.n(), "KmsState::evolve");
  return exp_i(spectrum, z) * y * exp_i(spectrum, -z);
}

KmsState gibbs(const HermitianMatrix& h, double c) {
  if (!(c != 0.0) || !std::isfinite(c)) throw InvalidArgument("gibbs: c must be a nonzero real");
  if (h.n() == 0) throw InvalidArgument("gibbs: empty Hamiltonian");
  KmsState s;
  s.h = h;
  s.c = c;
  s.spectrum = spectral_decomp(h);
  s.log_z = log_partition(s.spectrum, c);
  s.z_partition = std::exp(s.log_z);
  s.rho = scaled_boltzmann(s.spectrum, c, s.log_z);
  s.rho = 0.5 * (s.rho + s.rho.adjoint());
  return s;
}

double kms_verify(const KmsState& state, const Matrix& x, const Matrix& y, const std::vector<double>& t_samples) {
  return kms_verify(state.rho, state.h, state.c, x, y, t_samples);
}

double kms_verify(const Matrix& density, const HermitianMatrix& h, double c, const Matrix& x, const Matrix& y,
                  const std::vector<double>& t_samples) {
  const Index n = h.n();
  require_square_of(density, n, "kms_verify(density)");
  require_square_of(x, n, "kms_verify(x)");
  require_square_of(y, n, "kms_verify(y)");
  const SpectralDecomposition d = spectral_decomp(h);
  double worst = 0.0;
  for (double t : t_samples) {
    const Complex z(t, c);
    const Matrix alpha_z = exp_i(d, z) * y * exp_i(d, -z);
    const Matrix alpha_t = exp_i(d, Complex(t, 0.0)) * y * exp_i(d, Complex(-t, 0.0));
    const Complex f_top = (density * x * alpha_z).trace();
    const Complex boundary = (density * alpha_t * x).trace();
    worst = std::max(worst, std::abs(f_top - boundary));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// perturbed functionals

Complex PerturbedFunctional::value(const Matrix& x) const {
  require_square_of(x, density.rows(), "PerturbedFunctional::value");
  return (density * x).trace();
}

Matrix PerturbedFunctional::normalized_density() const { return density / weight; }

PerturbedFunctional perturbed_functional(const KmsState& state, const HermitianMatrix& b) {
  require_same(state.h, b, "perturbed_functional");
  PerturbedFunctional pf;
  pf.base = state;
  pf.perturb = b;
  const SpectralDecomposition d = spectral_decomp(state.h + b);
  pf.density = scaled_boltzmann(d, state.c, state.log_z);
  pf.density = 0.5 * (pf.density + pf.density.adjoint());
  pf.weight = pf.density.trace().real();
  return pf;
}

SymmetryResult symmetry_action(const KmsState& state, const Matrix& w, double phase) {
  const Index n = state.h.n();
  require_square_of(w, n, "symmetry_action");
  const double defect = unitarity_defect(w);
  if (!(defect <= 1e-10)) {
    throw NotUnitary(fmt::format("symmetry_action: ||w*w - 1|| = {:.3e} exceeds 1e-10", defect));
  }
  const double c = state.c;
  const Matrix e_minus = func_calc_complex(state.spectrum, [c](double x) { return Complex(std::exp(-c * x), 0.0); });
  const Matrix e_plus = func_calc_complex(state.spectrum, [c](double x) { return Complex(std::exp(c * x), 0.0); });
  // u*_t = e^{ith} w e^{-ith} w*, continued to t = ic
  const Matrix u_star_ic = std::exp(c * phase) * (e_minus * w * e_plus * w.adjoint());
  const Matrix image = u_star_ic * w * state.rho * w.adjoint();

  SymmetryResult r;
  r.weight = image.trace().real();
  r.density = image / r.weight;
  r.residual = trace_norm(Matrix(r.density - state.rho));
  return r;
}

// ---------------------------------------------------------------------------
// doubled flow

Matrix DoubledFlow::generator(const Matrix& x) const {
  require_square_of(x, 2 * n(), "DoubledFlow::generator");
  return kI * (k.matrix() * x - x * k.matrix());
}

Matrix DoubledFlow::evolve(Complex z, const Matrix& x) const {
  require_square_of(x, 2 * n(), "DoubledFlow::evolve");
  return exp_i(spectrum, z) * x * exp_i(spectrum, -z);
}

DoubledFlow doubled_flow(const HermitianMatrix& h, const HermitianMatrix& b1, const HermitianMatrix& b2) {
  require_same(h, b1, "doubled_flow");
  require_same(h, b2, "doubled_flow");
  DoubledFlow f{h, b1, b2, {}, {}};
  const Index n = h.n();
  Matrix k = Matrix::Zero(2 * n, 2 * n);
  k.topLeftCorner(n, n) = (h + b1).matrix();
  k.bottomRightCorner(n, n) = (h + b2).matrix();
  f.k = HermitianMatrix::from_computed(k);
  f.spectrum = spectral_decomp(f.k);
  return f;
}

// ---------------------------------------------------------------------------
// partial isometry between close projections

namespace {

double ramp_up(double t) { return default_step()(2.0 * (t - 0.625)); }
double ramp_down(double t) { return 1.0 - default_step()(2.0 * (t - 1.125)); }

double isometry_function_derivative(double t) {
  if (t <= 0.5 || t >= 1.25) return 0.0;
  const StepKernel& step = default_step();
  const double up = ramp_up(t);
  const double down = ramp_down(t);
  const double d_up = 2.0 * step.derivative(2.0 * (t - 0.625));
  const double d_down = -2.0 * step.derivative(2.0 * (t - 1.125));
  return -0.5 * std::pow(t, -1.5) * up * down + (d_up * down + up * d_down) / std::sqrt(t);
}

IsometryConstant compute_isometry_constant() {
  constexpr double kLo = 0.5;
  constexpr double kHi = 1.25;
  constexpr int kIntervals = 4096;
  constexpr double kCutoff = 4000.0;
  constexpr double kDs = 0.1;

  IsometryConstant ic;
  for (int i = 0; i <= 75000; ++i) {
    ic.sup_f = std::max(ic.sup_f, isometry_function(kLo + (kHi - kLo) * i / 75000.0));
  }

  // Simpson nodes of int f'(t) e^{-ist} dt, advanced in s by phasor steps.
  const double h = (kHi - kLo) / kIntervals;
  std::vector<Complex> weight(kIntervals + 1);
  std::vector<Complex> phasor(kIntervals + 1, Complex(1.0, 0.0));
  std::vector<Complex> step(kIntervals + 1);
  for (int j = 0; j <= kIntervals; ++j) {
    const double t = kLo + j * h;
    const double sw = (j == 0 || j == kIntervals) ? 1.0 : (j % 2 != 0 ? 4.0 : 2.0);
    weight[static_cast<std::size_t>(j)] = sw * h / 3.0 * isometry_function_derivative(t);
    step[static_cast<std::size_t>(j)] = std::exp(Complex(0.0, -kDs * t));
  }
  const int samples = static_cast<int>(std::lround(kCutoff / kDs));
  std::vector<double> modulus(static_cast<std::size_t>(samples) + 1);
  for (int m = 0; m <= samples; ++m) {
    Complex acc(0.0, 0.0);
    for (std::size_t j = 0; j < weight.size(); ++j) {
      acc += weight[j] * phasor[j];
      phasor[j] *= step[j];
    }
    modulus[static_cast<std::size_t>(m)] = std::abs(acc);
  }
  auto simpson_samples = [&](int stride) {
    const int count = samples / stride;
    double odd = 0.0;
    double even = 0.0;
    for (int i = 1; i < count; ++i) {
      const double v = modulus[static_cast<std::size_t>(i * stride)];
      (i % 2 != 0 ? odd : even) += v;
    }
    return kDs * stride / 3.0 *
           (modulus[0] + modulus[static_cast<std::size_t>(count * stride)] + 4.0 * odd + 2.0 * even);
  };
  const double fine = simpson_samples(1);
  const double coarse = simpson_samples(2);
  if (!(std::abs(fine - coarse) <= 1e-6 * std::max(1.0, fine))) {
    throw QuadratureFailure(fmt::format("isometry_constant: refinement disagrees ({:.10g} vs {:.10g})", coarse, fine));
  }
  ic.fourier_l1 = fine / std::numbers::pi;
  ic.c_const = ic.sup_f + 2.0 * ic.fourier_l1;
  return ic;
}

}  // namespace

double isometry_function(double t) {
  if (t <= 0.5 || t >= 1.25) return 0.0;
  return ramp_up(t) * ramp_down(t) / std::sqrt(t);
}

const IsometryConstant& isometry_constant() {
  static const IsometryConstant constant = compute_isometry_constant();
  return constant;
}

IsometryResult close_projection_isometry(const HermitianMatrix& e1, const HermitianMatrix& e2) {
  require_same(e1, e2, "close_projection_isometry");
  if (!(projection_defect(e1) <= 1e-8) || !(projection_defect(e2) <= 1e-8)) {
    throw InvalidArgument("close_projection_isometry: inputs must be projections");
  }
  const Index n = e1.n();
  IsometryResult r;
  r.distance = op_norm(e1 - e2);
  if (!(r.distance < 0.5)) {
    throw SpectralGapMissing(
        fmt::format("close_projection_isometry: ||e1 - e2|| = {:.6f} is not below 1/2", r.distance));
  }
  r.x = Matrix::Zero(2 * n, 2 * n);
  r.x.topRightCorner(n, n) = e1.matrix() * e2.matrix();
  const SpectralDecomposition d = spectral_decomp(HermitianMatrix::from_computed(r.x.adjoint() * r.x));
  r.spectrum = d.eigenvalues;
  constexpr double kTol = 1e-9;
  for (Index i = 0; i < d.n(); ++i) {
    const double mu = d.eigenvalues(i);
    const bool zero = std::abs(mu) <= kTol;
    const bool upper = mu > 1.0 - r.distance - kTol && mu <= 1.0 + kTol;
    if (!zero && !upper) {
      throw SpectralGapMissing(
          fmt::format("close_projection_isometry: eigenvalue {:.6g} of x*x outside {{0}} u (1 - {:.6g}, 1]", mu,
                      r.distance));
    }
  }
  r.v = r.x * func_calc(d, isometry_function).matrix();

  Matrix left = Matrix::Zero(2 * n, 2 * n);
  left.topLeftCorner(n, n) = e1.matrix();
  Matrix right = Matrix::Zero(2 * n, 2 * n);
  right.bottomRightCorner(n, n) = e2.matrix();
  r.defect_left = op_norm(Matrix(r.v * r.v.adjoint() - left));
  r.defect_right = op_norm(Matrix(r.v.adjoint() * r.v - right));
  return r;
}

// ---------------------------------------------------------------------------
// the two-point inequality

Complex StripFunction::value(Complex z) const {
  return (density * v * flow.evolve(z, Matrix(v.adjoint()))).trace();
}

Complex StripFunction::derivative(Complex z) const { return (density * v * flow.evolve(z, v_star_gen)).trace(); }

StripFunction strip_function(const HermitianMatrix& h, const HermitianMatrix& b1, const HermitianMatrix& b2,
                             const HermitianMatrix& e1, const HermitianMatrix& e2, double c) {
  if (!(c != 0.0) || !std::isfinite(c)) throw InvalidArgument("strip_function: c must be a nonzero real");
  require_same(h, e1, "strip_function");
  require_same(h, e2, "strip_function");
  StripFunction sf;
  sf.flow = doubled_flow(h, b1, b2);
  sf.c = c;
  const double log_z = log_partition(spectral_decomp(h), c);
  sf.density = scaled_boltzmann(sf.flow.spectrum, c, log_z);
  sf.v = close_projection_isometry(e1, e2).v;
  sf.v_star_gen = sf.flow.generator(Matrix(sf.v.adjoint()));
  return sf;
}

TheoremBResult theorem_b_inequality(const HermitianMatrix& h, const HermitianMatrix& b1, const HermitianMatrix& b2,
                                    const HermitianMatrix& e1, const HermitianMatrix& e2, double c) {
  require_same(h, b1, "theorem_b_inequality");
  require_same(h, b2, "theorem_b_inequality");
  for (const auto& [b, e] : {std::pair{&b1, &e1}, std::pair{&b2, &e2}}) {
    const double res = op_norm(commutator(h + *b, *e));
    if (!(res <= 1e-8)) {
      throw InvalidArgument(
          fmt::format("theorem_b_inequality: ||[h + b_i, e_i]|| = {:.3e} exceeds 1e-8", res));
    }
  }
  const StripFunction sf = strip_function(h, b1, b2, e1, e2, c);
  const IsometryConstant& ic = isometry_constant();
  const Index n = h.n();

  TheoremBResult r;
  const Complex f0 = sf.value(Complex(0.0, 0.0));
  const Complex fic = sf.value(Complex(0.0, c));
  r.f0 = f0.real();
  r.fic = fic.real();
  r.lhs = std::abs(fic - f0);
  r.norm_b_diff = op_norm(b1 - b2);
  const double w1 = sf.density.topLeftCorner(n, n).trace().real();
  const double w2 = sf.density.bottomRightCorner(n, n).trace().real();
  r.m_max = std::max(w1, w2);
  r.m_min = std::min(w1, w2);
  r.c_const = ic.c_const;
  r.rhs = std::abs(c) * ic.c_const * r.m_max * r.norm_b_diff;
  r.delta_v = op_norm(sf.flow.generator(sf.v));
  r.delta_bound = ic.c_const * r.norm_b_diff;
  return r;
}

namespace {

HermitianMatrix unit_hermitian(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(i, j) = Complex(re, im);
    }
  }
  HermitianMatrix h = HermitianMatrix::from_computed(0.5 * (g + g.adjoint()));
  return h * (1.0 / op_norm(h));
}

Index widest_gap_rank(const HermitianMatrix& m) {
  const SpectralDecomposition d = spectral_decomp(m);
  Index best = 1;
  double gap = -1.0;
  for (Index k = 1; k < d.n(); ++k) {
    const double g = d.eigenvalues(k) - d.eigenvalues(k - 1);
    if (g > gap) {
      gap = g;
      best = k;
    }
  }
  return best;
}

}  // namespace

TheoremBInstance theorem_b_instance(Index n, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("theorem_b_instance: n must be at least 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> size(0.005, 0.1);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const HermitianMatrix h = unit_hermitian(n, rng);
    const HermitianMatrix b1 = unit_hermitian(n, rng) * 0.2;
    const double delta = size(rng);
    const HermitianMatrix b2 = b1 + unit_hermitian(n, rng) * delta;
    const Index rank = widest_gap_rank(h + b1);
    const HermitianMatrix e1 = bottom_projection(h + b1, rank);
    const HermitianMatrix e2 = bottom_projection(h + b2, rank);
    if (op_norm(e1 - e2) < 0.5) return {h, b1, b2, e1, e2};
  }
  throw SpectralGapMissing(fmt::format("theorem_b_instance: no admissible draw for seed {}", seed));
}

TheoremBInstance theorem_b_degenerate_instance(Index n, std::uint64_t seed) {
  TheoremBInstance inst = theorem_b_instance(n, seed);
  inst.b2 = inst.b1;
  inst.e2 = inst.e1;
  return inst;
}

SubdivisionResult subdivision_chain(const HermitianMatrix& h, const HermitianMatrix& b_start,
                                    const HermitianMatrix& b_end, Index rank, double c, int max_doublings) {
  require_same(h, b_start, "subdivision_chain");
  require_same(h, b_end, "subdivision_chain");
  if (rank < 1 || rank > h.n()) throw InvalidArgument("subdivision_chain: rank out of range");
  auto b_at = [&](double s) { return b_start * (1.0 - s) + b_end * s; };

  int segments = 1;
  std::vector<HermitianMatrix> proj;
  for (int d = 0;; ++d) {
    proj.clear();
    for (int j = 0; j <= segments; ++j) {
      proj.push_back(bottom_projection(h + b_at(static_cast<double>(j) / segments), rank));
    }
    double worst = 0.0;
    for (int j = 0; j < segments; ++j) {
      worst = std::max(worst, op_norm(proj[static_cast<std::size_t>(j) + 1] - proj[static_cast<std::size_t>(j)]));
    }
    if (worst < 0.5) break;
    if (d >= max_doublings) {
      throw SpectralGapMissing(
          fmt::format("subdivision_chain: neighbouring projections still {:.3f} apart after {} segments", worst,
                      segments));
    }
    segments *= 2;
  }

  SubdivisionResult r;
  r.m_min = std::numeric_limits<double>::infinity();
  for (int j = 0; j < segments; ++j) {
    const double s0 = static_cast<double>(j) / segments;
    const double s1 = static_cast<double>(j + 1) / segments;
    SubdivisionStep st{s0, s1,
                       theorem_b_inequality(h, b_at(s0), b_at(s1), proj[static_cast<std::size_t>(j)],
                                            proj[static_cast<std::size_t>(j) + 1], c)};
    r.lhs_total += st.bound.lhs;
    r.m_max = std::max(r.m_max, st.bound.m_max);
    r.m_min = std::min(r.m_min, st.bound.m_min);
    if (j == 0) r.endpoint_change -= st.bound.f0;
    if (j == segments - 1) r.endpoint_change += st.bound.fic;
    r.steps.push_back(st);
  }
  r.endpoint_change = std::abs(r.endpoint_change);
  r.rhs_total = std::abs(c) * isometry_constant().c_const * r.m_max * op_norm(b_end - b_start);
  return r;
}

std::string kms_csv(const std::vector<KmsRow>& rows, const std::vector<std::pair<std::string, std::string>>& meta) {
  std::string out;
  for (const auto& [k, v] : meta) out += fmt::format("# {}={}\n", k, v);
  out += "seed,n,c,norm_b_diff,lhs,rhs,margin\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.seed, r.n, r.c, r.norm_b_diff, r.lhs,
                       r.rhs, r.margin);
  }
  return out;
}

}  // namespace almostcomm
