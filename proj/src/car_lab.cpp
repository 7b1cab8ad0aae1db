#include "almostcomm/car_lab.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <shared_mutex>

#include <fmt/core.h>

#include "almostcomm/errors.hpp"

namespace almostcomm {

// ---------------------------------------------------------------------------
// Fock space

namespace {

FockRep build_fock(int n) {
  FockRep rep;
  rep.modes = n;
  const Index dim = rep.dim();
  for (int k = 0; k < n; ++k) {
    const std::uint64_t bit = std::uint64_t{1} << (n - 1 - k);
    std::vector<Eigen::Triplet<Complex>> entries;
    entries.reserve(static_cast<std::size_t>(dim / 2));
    for (std::uint64_t s = 0; s < static_cast<std::uint64_t>(dim); ++s) {
      if ((s & bit) != 0) continue;
      // occupations of modes 0..k-1 sit above bit k
      const int parity = std::popcount(s >> (n - k)) & 1;
      entries.emplace_back(static_cast<Index>(s | bit), static_cast<Index>(s), parity != 0 ? -1.0 : 1.0);
    }
    SparseMatrix c(dim, dim);
    c.setFromTriplets(entries.begin(), entries.end());
    rep.creators.push_back(std::move(c));
  }
  return rep;
}

void require_modes(const FockRep& rep, Index size, const char* what) {
  if (size != rep.modes) {
    throw DimensionMismatch(fmt::format("{}: expected {} modes, got {}", what, rep.modes, size));
  }
}

}  // namespace

SparseMatrix FockRep::create(const Vector& xi) const {
  require_modes(*this, xi.size(), "FockRep::create");
  SparseMatrix out(dim(), dim());
  for (int k = 0; k < modes; ++k) {
    if (xi(k) != Complex(0.0)) out += xi(k) * creators[static_cast<std::size_t>(k)];
  }
  return out;
}

SparseMatrix FockRep::annihilate(const Vector& xi) const { return SparseMatrix(create(xi).adjoint()); }

SparseMatrix FockRep::second_quantize(const Matrix& h) const {
  if (h.rows() != modes || h.cols() != modes) {
    throw DimensionMismatch(fmt::format("second_quantize: {}x{} for {} modes", h.rows(), h.cols(), modes));
  }
  SparseMatrix out(dim(), dim());
  for (int i = 0; i < modes; ++i) {
    for (int j = 0; j < modes; ++j) {
      if (h(i, j) == Complex(0.0)) continue;
      const auto& ci = creators[static_cast<std::size_t>(i)];
      const auto& cj = creators[static_cast<std::size_t>(j)];
      out += h(i, j) * SparseMatrix(ci * SparseMatrix(cj.adjoint()));
    }
  }
  return out;
}

const FockRep& fock_rep(int n) {
  if (n < 1 || n > 12) throw InvalidArgument(fmt::format("fock_rep: n = {} outside [1, 12]", n));
  static std::shared_mutex mutex;
  static std::map<int, std::unique_ptr<FockRep>> cache;
  {
    std::shared_lock lock(mutex);
    if (auto it = cache.find(n); it != cache.end()) return *it->second;
  }
  std::unique_lock lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FockRep>(build_fock(n));
  return *slot;
}

QuasiFreeFlow quasi_free_flow(const FockRep& rep, const HermitianMatrix& h) {
  QuasiFreeFlow flow;
  flow.rep = &rep;
  flow.one_particle_h = h;
  flow.generator_h = rep.second_quantize(h.matrix());
  return flow;
}

Matrix quasi_free_generator(const QuasiFreeFlow& flow, const Matrix& x) {
  const Index dim = flow.rep->dim();
  if (x.rows() != dim || x.cols() != dim) {
    throw DimensionMismatch(fmt::format("quasi_free_generator: {}x{} on a {} dimensional Fock space", x.rows(),
                                        x.cols(), dim));
  }
  const Matrix hx = flow.generator_h * x;
  const Matrix xh = x * flow.generator_h;
  return Complex(0.0, 1.0) * (hx - xh);
}

InnerPerturbation inner_perturbation_from_rank(const HermitianMatrix& t) {
  if (t.n() < 1 || t.n() > 10) {
    throw InvalidArgument(fmt::format("inner_perturbation_from_rank: n = {} outside [1, 10]", t.n()));
  }
  const FockRep& rep = fock_rep(static_cast<int>(t.n()));
  const SpectralDecomposition d = spectral_decomp(t);
  Matrix b = Matrix::Zero(rep.dim(), rep.dim());
  for (Index i = 0; i < d.n(); ++i) {
    if (d.eigenvalues(i) == 0.0) continue;
    const Vector zeta = d.basis.col(i);
    const SparseMatrix number = rep.create(zeta) * rep.annihilate(zeta);
    b += d.eigenvalues(i) * Matrix(number);
  }
  InnerPerturbation out;
  out.b = HermitianMatrix::from_computed(b);
  out.norm_b = op_norm(out.b);
  out.trace_abs = d.eigenvalues.cwiseAbs().sum();
  return out;
}

// ---------------------------------------------------------------------------
// Wick operators

namespace {

void check_multi_index(const std::vector<int>& idx, int limit) {
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= limit) {
      throw InvalidArgument(fmt::format("wick_unitary: index {} outside [0, {})", idx[i], limit));
    }
    if (i > 0 && idx[i] <= idx[i - 1]) throw InvalidArgument("wick_unitary: multi-index not strictly increasing");
  }
}

Matrix wick_operator(const FockRep& rep, const WickCoefficients& coeffs, const Matrix& family) {
  if (family.rows() != rep.modes) {
    throw DimensionMismatch(fmt::format("wick_unitary: family has {} rows for {} modes", family.rows(), rep.modes));
  }
  const Matrix gram = family.adjoint() * family;
  if ((gram - Matrix::Identity(family.cols(), family.cols())).norm() > 1e-10) {
    throw InvalidArgument("wick_unitary: family is not orthonormal");
  }
  const int limit = static_cast<int>(family.cols());
  std::vector<SparseMatrix> up;
  for (int k = 0; k < limit; ++k) up.push_back(rep.create(family.col(k)));

  Matrix x = Matrix::Zero(rep.dim(), rep.dim());
  SparseMatrix identity(rep.dim(), rep.dim());
  identity.setIdentity();
  for (const auto& [key, coeff] : coeffs) {
    const auto& [mu, nu] = key;
    check_multi_index(mu, limit);
    check_multi_index(nu, limit);
    SparseMatrix left = identity;
    for (int k : mu) left = SparseMatrix(left * up[static_cast<std::size_t>(k)]);
    SparseMatrix right = identity;
    for (int k : nu) right = SparseMatrix(right * up[static_cast<std::size_t>(k)]);
    const SparseMatrix term = left * SparseMatrix(right.adjoint());
    x += coeff * Matrix(term);
  }
  return x;
}

}  // namespace

WickResult wick_unitary(const FockRep& rep, const WickCoefficients& coeffs) {
  return wick_unitary(rep, coeffs, Matrix::Identity(rep.modes, rep.modes));
}

WickResult wick_unitary(const FockRep& rep, const WickCoefficients& coeffs, const Matrix& family) {
  WickResult out;
  out.x = wick_operator(rep, coeffs, family);
  out.unitarity_defect = unitarity_defect(out.x);
  return out;
}

double wick_derivation_norm(const QuasiFreeFlow& flow, const WickCoefficients& coeffs, const Matrix& family) {
  return op_norm(quasi_free_generator(flow, wick_operator(*flow.rep, coeffs, family)));
}

ResidualVector residual_vector(const HermitianMatrix& h, const Vector& xi) {
  if (xi.size() != h.n()) {
    throw DimensionMismatch(fmt::format("residual_vector: vector of size {} for n = {}", xi.size(), h.n()));
  }
  if (!(std::abs(xi.norm() - 1.0) <= 1e-10)) {
    throw InvalidArgument(fmt::format("residual_vector: ||xi|| = {:.12g}", xi.norm()));
  }
  ResidualVector out;
  const Vector hx = h.matrix() * xi;
  out.c = xi.dot(hx).real();
  const Vector eta = hx - out.c * xi;
  out.eta_norm = eta.norm();
  out.zero = out.eta_norm < 1e-12;
  out.eta_unit = out.zero ? Vector::Zero(xi.size()) : Vector(eta / out.eta_norm);
  return out;
}

// ---------------------------------------------------------------------------
// discrete measures

DiscreteMeasureState::DiscreteMeasureState(RealVector atoms, RealVector weights, Vector xi)
    : atoms_(std::move(atoms)), weights_(std::move(weights)), xi_(std::move(xi)) {
  const Index m = atoms_.size();
  if (m < 1) throw InvalidArgument("DiscreteMeasureState: no atoms");
  if (weights_.size() != m || xi_.size() != m) {
    throw InvalidArgument(fmt::format("DiscreteMeasureState: {} atoms, {} weights, {} amplitudes", m,
                                      weights_.size(), xi_.size()));
  }
  for (Index i = 0; i < m; ++i) {
    if (!std::isfinite(atoms_(i)) || (i > 0 && !(atoms_(i) > atoms_(i - 1)))) {
      throw InvalidArgument("DiscreteMeasureState: atoms must be finite and strictly ascending");
    }
    if (!(weights_(i) > 0.0)) throw InvalidArgument("DiscreteMeasureState: weights must be positive");
  }
  if (!(std::abs(weights_.sum() - 1.0) <= 1e-12)) {
    throw InvalidArgument(fmt::format("DiscreteMeasureState: weights sum to {:.17g}", weights_.sum()));
  }
  if (!(std::abs(norm() - 1.0) <= 1e-12)) {
    throw InvalidArgument(fmt::format("DiscreteMeasureState: ||xi|| = {:.17g}", norm()));
  }
}

DiscreteMeasureState DiscreteMeasureState::normalized(RealVector atoms, RealVector weights, Vector xi) {
  const double total = weights.sum();
  if (!(total > 0.0)) throw InvalidArgument("DiscreteMeasureState::normalized: weights sum to zero");
  weights /= total;
  const double norm_sq = (weights.array() * xi.array().abs2()).sum();
  if (!(norm_sq > 0.0)) throw InvalidArgument("DiscreteMeasureState::normalized: xi vanishes");
  xi /= std::sqrt(norm_sq);
  return {std::move(atoms), std::move(weights), std::move(xi)};
}

RealVector DiscreteMeasureState::masses() const { return weights_.array() * xi_.array().abs2(); }

double DiscreteMeasureState::norm() const { return std::sqrt(masses().sum()); }

double DiscreteMeasureState::mean() const { return masses().dot(atoms_); }

double DiscreteMeasureState::variance() const {
  const double c = mean();
  return masses().dot((atoms_.array() - c).square().matrix());
}

Index DiscreteMeasureState::support_size() const { return (masses().array() > 0.0).count(); }

nlohmann::json DiscreteMeasureState::to_json() const {
  std::vector<double> a(atoms_.begin(), atoms_.end());
  std::vector<double> w(weights_.begin(), weights_.end());
  std::vector<double> re;
  std::vector<double> im;
  for (const Complex& z : xi_) {
    re.push_back(z.real());
    im.push_back(z.imag());
  }
  return {{"atoms", a}, {"weights", w}, {"xi_re", re}, {"xi_im", im}};
}

DiscreteMeasureState DiscreteMeasureState::from_json(const nlohmann::json& j) {
  auto field = [&j](const char* name) {
    if (!j.is_object() || !j.contains(name) || !j.at(name).is_array()) {
      throw FormatError(fmt::format("measure: field '{}' missing or not an array", name));
    }
    const auto& arr = j.at(name);
    RealVector v(static_cast<Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number()) throw FormatError(fmt::format("measure: field '{}' has a non-numeric entry", name));
      v(static_cast<Index>(i)) = arr[i].get<double>();
    }
    return v;
  };
  RealVector atoms = field("atoms");
  RealVector weights = field("weights");
  const RealVector re = field("xi_re");
  const RealVector im = j.contains("xi_im") ? field("xi_im") : RealVector(RealVector::Zero(re.size()));
  if (im.size() != re.size()) throw FormatError("measure: fields 'xi_re' and 'xi_im' differ in length");
  Vector xi(re.size());
  for (Index i = 0; i < re.size(); ++i) xi(i) = Complex(re(i), im(i));
  return {std::move(atoms), std::move(weights), std::move(xi)};
}

std::array<double, 3> three_point_masses(const std::array<double, 3>& atoms, double c, double v) {
  // centred moments 1, 0, v; m_i = E[L_i(X)] for the Lagrange basis L_i
  std::array<double, 3> x{atoms[0] - c, atoms[1] - c, atoms[2] - c};
  std::array<double, 3> m{};
  for (int i = 0; i < 3; ++i) {
    const double xj = x[static_cast<std::size_t>((i + 1) % 3)];
    const double xk = x[static_cast<std::size_t>((i + 2) % 3)];
    const double xi = x[static_cast<std::size_t>(i)];
    m[static_cast<std::size_t>(i)] = (v + xj * xk) / ((xi - xj) * (xi - xk));
  }
  return m;
}

ThreePoints select_three_points(const DiscreteMeasureState& state) {
  const RealVector& s = state.atoms();
  const Index m = s.size();
  const double a = s(0);
  const double b = s(m - 1);
  const double c = state.mean();
  const double v = state.variance();
  const double width = b - a;
  if (m < 2 || !(v > 1e-14 * width * width)) {
    throw DegenerateMeasure(fmt::format("select_three_points: variance {:.3g} vanishes", v));
  }
  const double bound = (b - c) * (c - a);
  if (!(v < bound * (1.0 - 1e-12))) {
    throw DegenerateMeasure("select_three_points: all mass sits on the two extreme atoms");
  }

  ThreePoints out;
  auto set = [&](Index i0, Index i1, Index i2) {
    out.indices = {i0, i1, i2};
    out.atoms = {s(i0), s(i1), s(i2)};
  };
  // the mean itself may be an atom
  const double tol = 1e-12 * width;
  for (Index i = 1; i + 1 < m; ++i) {
    if (std::abs(s(i) - c) <= tol) {
      set(0, i, m - 1);
      return out;
    }
  }
  Index i2 = 0;
  while (s(i2) <= c) ++i2;
  const Index i1 = i2 - 1;
  const double t1 = s(i1);
  const double t2 = s(i2);
  if ((b - c) * (c - t1) < v) {
    set(0, i1, m - 1);
  } else if ((t2 - c) * (c - a) < v) {
    set(0, i2, m - 1);
  } else {
    set(0, i1, i2);
  }
  return out;
}

MeasurePath three_point_path(const DiscreteMeasureState& state, const PathOptions& options) {
  if (options.stages < 1 || options.samples_per_stage < 1 || !(options.spread >= 0.0 && options.spread < 1.0)) {
    throw InvalidArgument("three_point_path: need stages >= 1, samples >= 1 and spread in [0, 1)");
  }
  MeasurePath path;
  path.targets = select_three_points(state);
  const RealVector& s = state.atoms();
  const RealVector& w = state.weights();
  const Index m = s.size();
  const double c = state.mean();
  const double v = state.variance();
  const double width = s(m - 1) - s(0);

  auto push = [&](double t, int stage, Vector xi) {
    path.times.push_back(t);
    path.stage.push_back(stage);
    path.states.emplace_back(s, w, std::move(xi));
  };
  auto stage_start = [](int j) { return 1.0 - std::ldexp(1.0, -j); };
  const int samples = options.samples_per_stage;

  // stage 0: rotate the phases away, |xi| stays fixed
  const RealVector modulus = state.xi().cwiseAbs();
  const RealVector phase = state.xi().unaryExpr([](const Complex& z) { return std::arg(z); }).real();
  for (int k = 0; k <= samples; ++k) {
    const double tau = static_cast<double>(k) / samples;
    Vector xi(m);
    for (Index i = 0; i < m; ++i) xi(i) = std::polar(modulus(i), (1.0 - tau) * phase(i));
    push(stage_start(0) + tau * (stage_start(1) - stage_start(0)), 0, std::move(xi));
  }

  RealVector density = modulus.array().square();  // |xi|^2, a density against nu
  const auto& tgt = path.targets.indices;
  for (int j = 1; j <= options.stages; ++j) {
    std::vector<Index> spread_atoms;
    if (j < options.stages) {
      const double radius = width * std::ldexp(1.0, -(j + 1));
      for (Index i = 0; i < m; ++i) {
        if (i == tgt[0] || i == tgt[1] || i == tgt[2]) continue;
        for (Index t : tgt) {
          if (std::abs(s(i) - s(t)) <= radius) {
            spread_atoms.push_back(i);
            break;
          }
        }
      }
    }
    double lambda = spread_atoms.empty() ? 0.0 : options.spread;
    RealVector target_mass;
    for (int attempt = 0;; ++attempt) {
      target_mass = RealVector::Zero(m);
      double m0 = 1.0;
      double m1 = 0.0;
      double m2 = v;
      if (lambda > 0.0) {
        const double each = lambda / static_cast<double>(spread_atoms.size());
        for (Index i : spread_atoms) {
          target_mass(i) = each;
          const double x = s(i) - c;
          m0 -= each;
          m1 -= each * x;
          m2 -= each * x * x;
        }
      }
      // residual moments on the targets: Lagrange form with moments m0, m1, m2
      std::array<double, 3> x{};
      for (int i = 0; i < 3; ++i) x[static_cast<std::size_t>(i)] = s(tgt[static_cast<std::size_t>(i)]) - c;
      bool positive = true;
      for (int i = 0; i < 3; ++i) {
        const double xi = x[static_cast<std::size_t>(i)];
        const double xj = x[static_cast<std::size_t>((i + 1) % 3)];
        const double xk = x[static_cast<std::size_t>((i + 2) % 3)];
        const double mass = (m2 - (xj + xk) * m1 + xj * xk * m0) / ((xi - xj) * (xi - xk));
        target_mass(tgt[static_cast<std::size_t>(i)]) = mass;
        positive = positive && mass > 0.0;
      }
      if (positive) break;
      if (lambda == 0.0) {
        throw MomentInfeasible(fmt::format("three_point_path: no positive three-point masses at stage {}", j));
      }
      lambda = attempt < 40 ? 0.5 * lambda : 0.0;
    }
    path.spread_used.push_back(lambda);

    const RealVector g = target_mass.array() / w.array();
    const double t0 = stage_start(j);
    const double t1 = stage_start(j + 1);
    for (int k = 1; k <= samples; ++k) {
      const double tau = static_cast<double>(k) / samples;
      const RealVector mix = k == samples ? g : RealVector((1.0 - tau) * density.array() + tau * g.array());
      push(t0 + tau * (t1 - t0), j, mix.cwiseSqrt().cast<Complex>());
    }
    density = g;
  }
  return path;
}

std::string path_csv(const MeasurePath& path, const std::vector<std::pair<std::string, std::string>>& meta) {
  std::string out;
  for (const auto& [k, v] : meta) out += fmt::format("# {}={}\n", k, v);
  out += "stage,t,mean,variance,support_size";
  const Index m = path.states.empty() ? 0 : path.states.front().size();
  for (Index i = 0; i < m; ++i) out += fmt::format(",w{}", i);
  out += "\n";
  for (std::size_t r = 0; r < path.states.size(); ++r) {
    const auto& st = path.states[r];
    out += fmt::format("{},{:.17g},{:.17g},{:.17g},{}", path.stage[r], path.times[r], st.mean(), st.variance(),
                       st.support_size());
    const RealVector mass = st.masses();
    for (Index i = 0; i < m; ++i) out += fmt::format(",{:.17g}", mass(i));
    out += "\n";
  }
  return out;
}

DiscreteMeasureState random_measure(Index m, std::uint64_t seed) {
  if (m < 1) throw InvalidArgument("random_measure: m < 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> amp(0.1, 1.0);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::vector<double> pts;
  while (static_cast<Index>(pts.size()) < m) {
    pts.push_back(unit(rng));
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  }
  RealVector atoms = Eigen::Map<RealVector>(pts.data(), m);
  RealVector weights(m);
  Vector xi(m);
  for (Index i = 0; i < m; ++i) weights(i) = amp(rng);
  for (Index i = 0; i < m; ++i) {
    const double r = amp(rng);
    xi(i) = std::polar(r, angle(rng));
  }
  return DiscreteMeasureState::normalized(std::move(atoms), std::move(weights), std::move(xi));
}

DiscreteMeasureState gaussian_measure(Index m, double center, double width) {
  if (m < 2 || !(width > 0.0)) throw InvalidArgument("gaussian_measure: need m >= 2 and width > 0");
  RealVector atoms(m);
  Vector xi(m);
  for (Index i = 0; i < m; ++i) {
    atoms(i) = static_cast<double>(i) / static_cast<double>(m - 1);
    const double z = (atoms(i) - center) / width;
    xi(i) = std::exp(-0.25 * z * z);
  }
  return DiscreteMeasureState::normalized(std::move(atoms), RealVector::Constant(m, 1.0), std::move(xi));
}

}  // namespace almostcomm
