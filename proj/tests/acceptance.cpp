// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 only when
// all pass. Every tolerance, ensemble size and time limit is pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <unsupported/Eigen/KroneckerProduct>

#include "almostcomm/car_lab.hpp"
#include "almostcomm/errors.hpp"
#include "almostcomm/kms_lab.hpp"
#include "almostcomm/matrix_io.hpp"
#include "almostcomm/mollifiers.hpp"
#include "almostcomm/pipeline.hpp"
#include "almostcomm/window_projections.hpp"
#include "cli.hpp"
#include "test_support.hpp"

using namespace almostcomm;
using namespace testing_support;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 != 0 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

// ---------------------------------------------------------------------------
// 1, 2: smoothing and Lipschitz bounds on one shared ensemble

constexpr int kSmoothingPairs = 200;
constexpr double kSmoothingSlack = 1e-8;
constexpr double kBandingRoundoff = 1e-13;
constexpr double kSmoothingSeconds = 30.0;

std::vector<AlmostCommuting> smoothing_ensemble() {
  static const std::vector<AlmostCommuting> pairs = [] {
    Rng rng(20240001);
    const Index dims[] = {8, 16, 32};
    const double nus[] = {1e-2, 1e-3, 1e-4};
    std::vector<AlmostCommuting> out;
    for (int i = 0; i < kSmoothingPairs; ++i) out.push_back(almost_commuting(dims[i % 3], nus[(i / 3) % 3], 1.0, rng));
    return out;
  }();
  return pairs;
}

Verdict criterion_smoothing() {
  const auto t0 = Clock::now();
  const MollifierKernel& k = default_mollifier();
  Verdict v;
  int bad_shift = 0;
  int bad_comm = 0;
  double worst_band = 0.0;
  for (const AlmostCommuting& p : smoothing_ensemble()) {
    const double nu = max_singular(commutator(p.a, p.b));
    const SpectralDecomposition d = spectral_decomp(p.a);
    const HermitianMatrix b1 = band_smooth(d, p.b, k);
    if (max_singular(p.b.matrix() - b1.matrix()) > k.k1 * nu + kSmoothingSlack) ++bad_shift;
    if (max_singular(commutator(p.a, b1)) > nu + kSmoothingSlack) ++bad_comm;
    const Matrix m = d.basis.adjoint() * b1.matrix() * d.basis;
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        if (std::abs(d.eigenvalues(i) - d.eigenvalues(j)) >= 0.5) worst_band = std::max(worst_band, std::abs(m(i, j)));
      }
    }
  }
  // the multiplier itself vanishes identically off the band
  bool transfer_zero = true;
  for (int i = 0; i <= 1000; ++i) {
    const double w = 0.5 + 2.5 * i / 1000.0;
    transfer_zero = transfer_zero && k.transfer(w) == 0.0 && k.transfer(-w) == 0.0;
  }
  const double secs = seconds_since(t0);
  v.pass = bad_shift == 0 && bad_comm == 0 && transfer_zero && worst_band <= kBandingRoundoff &&
           secs < kSmoothingSeconds;
  v.detail = fmt::format(
      "{} pairs; ||b-b1|| violations {}, ||[a,b1]|| violations {}; multiplier zero off band: {}; "
      "largest off-band entry after change of basis {:.2e}; {:.1f} s",
      kSmoothingPairs, bad_shift, bad_comm, transfer_zero ? "yes" : "no", worst_band, secs);
  return v;
}

Verdict criterion_lipschitz() {
  const StepKernel& s = default_step();
  int bad = 0;
  double worst_ratio = 0.0;
  for (const AlmostCommuting& p : smoothing_ensemble()) {
    const auto [lhs, rhs] = lipschitz_commutator_check(p.a, p.b, s);
    // independent left-hand side from Eigen's eigensolver
    Eigen::SelfAdjointEigenSolver<Matrix> es(p.a.matrix());
    Vector fa(p.a.n());
    for (Index i = 0; i < fa.size(); ++i) fa(i) = s(es.eigenvalues()(i));
    const Matrix step_a = es.eigenvectors() * fa.asDiagonal() * es.eigenvectors().adjoint();
    const double lhs_oracle = max_singular(p.b.matrix() * step_a - step_a * p.b.matrix());
    const double nu = max_singular(commutator(p.a, p.b));
    if (std::abs(lhs - lhs_oracle) > 1e-10 || lhs_oracle > s.c_const * nu + kSmoothingSlack) ++bad;
    if (rhs > 0.0) worst_ratio = std::max(worst_ratio, lhs / rhs);
  }
  return {bad == 0, fmt::format("{} pairs, C = {:.6f}; violations {}; largest lhs/rhs {:.3f}", kSmoothingPairs,
                                s.c_const, bad, worst_ratio)};
}

// ---------------------------------------------------------------------------
// 3: partition certificates on the calibrated ensemble

constexpr int kPartitionPerRow = 40;
constexpr double kCertificateTol = 1e-9;
constexpr double kPartitionPassRate = 0.99;

Verdict criterion_partition() {
  const CalibrationTable& table = default_calibration();
  const Index dims[] = {8, 16, 32};
  int total = 0;
  int certified = 0;
  int diagnosed = 0;
  int silent = 0;
  std::string first_diagnosis;
  for (std::size_t row = 0; row < table.rows().size(); ++row) {
    const auto [eps, nu] = table.rows()[row];
    for (int i = 0; i < kPartitionPerRow; ++i) {
      const Index n = dims[i % 3];
      const EnsembleInstance inst = random_instance(n, nu, 1.0, instance_seed(777, n, row, static_cast<std::size_t>(i)));
      ++total;
      ProjectionPartition part;
      try {
        part = partition(inst.a, inst.b, eps);
      } catch (const Error& e) {
        if (diagnosed++ == 0) first_diagnosis = e.what();
        continue;
      }
      Eigen::SelfAdjointEigenSolver<Matrix> es(inst.a.matrix());
      const auto window = [&](double lo, double hi, bool closed) {
        Matrix e = Matrix::Zero(n, n);
        for (Index j = 0; j < n; ++j) {
          const double x = es.eigenvalues()(j);
          if (closed ? (x >= lo && x <= hi) : (x > lo && x < hi)) {
            e += es.eigenvectors().col(j) * es.eigenvectors().col(j).adjoint();
          }
        }
        return e;
      };
      const Matrix id = Matrix::Identity(n, n);
      Matrix sum = Matrix::Zero(n, n);
      double worst = 0.0;
      for (const auto& [k, p] : part.projections) {
        sum += p.matrix();
        worst = std::max(worst, max_singular(window(k + 0.25, k + 0.75, true) * (id - p.matrix())));
        worst = std::max(worst, max_singular(p.matrix() * (id - window(k - 0.25, k + 1.25, false))));
        for (const auto& [j, q] : part.projections) {
          if (j != k) worst = std::max(worst, max_singular(p.matrix() * q.matrix()));
        }
      }
      worst = std::max({worst, max_singular(sum - id), part.diagnostics.monotone});
      if (worst <= kCertificateTol) {
        ++certified;
      } else {
        ++silent;
      }
    }
  }
  const double rate = static_cast<double>(certified) / total;
  return {rate >= kPartitionPassRate && silent == 0,
          fmt::format("{} instances over {} calibrated (eps, nu) rows; certified {:.1f}%, failures with "
                      "diagnostics {}{}, silent failures {}",
                      total, table.rows().size(), 100.0 * rate, diagnosed,
                      first_diagnosis.empty() ? "" : " [" + first_diagnosis + "]", silent)};
}

// ---------------------------------------------------------------------------
// 4: end-to-end correction

constexpr double kEndToEndEps = 0.05;
constexpr int kEndToEndTrials = 50;
constexpr double kExactness = 1e-11;
constexpr double kBoundSlack = 1e-8;
constexpr double kNormRobustFactor = 3.0;
constexpr int kNormRobustSeeds = 10;
constexpr double kEndToEndSeconds = 300.0;

Verdict criterion_end_to_end() {
  const auto t0 = Clock::now();
  const double nus[] = {1e-1, 1e-2, 1e-4};
  int runs = 0;
  int inexact = 0;
  int defect_bad = 0;
  int block_bad = 0;
  std::string trend;
  bool decreasing = true;
  for (Index n : {8, 16}) {
    std::vector<double> med;
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> d;
      for (int i = 0; i < kEndToEndTrials; ++i) {
        const EnsembleInstance inst = random_instance(n, nus[k], 1.0, instance_seed(1, n, k, static_cast<std::size_t>(i)));
        const CorrectionResult r = theorem_c_correct(inst.a, inst.b, kEndToEndEps);
        ++runs;
        const Matrix a1 = r.pair.a1().matrix();
        const Matrix b1 = r.pair.b1().matrix();
        if (max_singular(a1 * b1 - b1 * a1) > kExactness * std::max(1.0, max_singular(a1))) ++inexact;
        if (!(r.compress_defect_a < 4 * kEndToEndEps + kBoundSlack) ||
            !(r.compress_defect_b < 4 * kEndToEndEps + kBoundSlack)) {
          ++defect_bad;
        }
        for (const BlockReport& blk : r.blocks) {
          if (blk.commutator > 2 * kEndToEndEps + r.nu + kBoundSlack) {
            ++block_bad;
            break;
          }
        }
        d.push_back(r.pair.dist_a + r.pair.dist_b);
      }
      med.push_back(median(d));
    }
    decreasing = decreasing && med[0] > med[1] && med[1] > med[2];
    trend += fmt::format(" n={}: {:.3g} > {:.3g} > {:.3g};", n, med[0], med[1], med[2]);
  }

  // norm robustness on instances whose perturbation does not depend on ||a||
  double worst_ratio = 1.0;
  for (double nu : {1e-2, 1e-3}) {
    for (int s = 0; s < kNormRobustSeeds; ++s) {
      std::vector<double> d;
      for (double norm_a : {1.0, 10.0, 100.0}) {
        const EnsembleInstance inst = clustered_instance(12, nu, norm_a - 0.5, 2, 4000 + static_cast<std::uint64_t>(s));
        const CorrectionResult r = theorem_c_correct(inst.a, inst.b, kEndToEndEps);
        d.push_back(r.pair.dist_a + r.pair.dist_b);
      }
      worst_ratio = std::max(worst_ratio, *std::max_element(d.begin(), d.end()) / *std::min_element(d.begin(), d.end()));
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = inexact == 0 && defect_bad == 0 && block_bad == 0 && decreasing &&
                    worst_ratio <= kNormRobustFactor && secs < kEndToEndSeconds;
  return {pass, fmt::format("{} runs; inexact outputs {}, compression-defect violations {}, block-commutator "
                            "violations {}; medians{} norm-robustness worst ratio {:.3f} over ||a|| in "
                            "{{1, 10, 100}}; {:.1f} s",
                            runs, inexact, defect_bad, block_bad, trend, worst_ratio, secs)};
}

// ---------------------------------------------------------------------------
// 5: KMS suite

constexpr double kKmsTol = 1e-9;
constexpr int kKmsPairs = 20;

Complex purification_value(const HermitianMatrix& h, const HermitianMatrix& b, double c, const Matrix& x) {
  const Index n = h.n();
  const Matrix id = Matrix::Identity(n, n);
  const Matrix e = expm(Matrix(-c * h.matrix()));
  const Matrix rho = e / e.trace().real();
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
  const Matrix root =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  Vector omega(n * n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) omega(i * n + j) = root(i, j);
  }
  const Matrix big_h = Eigen::kroneckerProduct(h.matrix(), id).eval() -
                       Eigen::kroneckerProduct(id, Matrix(h.matrix().transpose())).eval();
  const Matrix pi_b = Eigen::kroneckerProduct(b.matrix(), id).eval();
  const Vector w = expm(Matrix(-c / 2 * (big_h + pi_b))) * omega;
  return w.dot(Eigen::kroneckerProduct(x, id).eval() * w);
}

Verdict criterion_kms() {
  Rng rng(20240005);
  const std::vector<double> cs{-2.0, -1.0, -0.5, 0.5, 1.0, 2.0};
  const std::vector<double> times{-1.0, -0.3, 0.0, 0.7, 1.5};
  double worst_kms = 0.0;
  double worst_closed = 0.0;
  double worst_gns = 0.0;
  double worst_sym = 0.0;
  for (Index n = 2; n <= 8; ++n) {
    for (double c : cs) {
      const HermitianMatrix h = random_hermitian(n, rng);
      const KmsState s = gibbs(h, c);
      for (int i = 0; i < kKmsPairs; ++i) {
        worst_kms = std::max(worst_kms, kms_verify(s, ginibre(n, rng), ginibre(n, rng), times));
      }
      const HermitianMatrix b = random_hermitian(n, rng, 0.3);
      const PerturbedFunctional f = perturbed_functional(s, b);
      worst_closed = std::max(worst_closed, max_singular(f.normalized_density() - gibbs(h + b, c).rho));
      const Matrix x = ginibre(n, rng);
      worst_gns = std::max(worst_gns, std::abs(f.value(x) - purification_value(h, b, c, x)));
      const Matrix w = random_unitary(n, rng);
      const SymmetryResult sym = symmetry_action(s, w);
      // independent trace norm of the difference
      Eigen::SelfAdjointEigenSolver<Matrix> diff(Matrix(sym.density - s.rho));
      worst_sym = std::max({worst_sym, sym.residual, diff.eigenvalues().cwiseAbs().sum()});
    }
  }
  const bool pass = worst_kms < kKmsTol && worst_closed < kKmsTol && worst_gns < kKmsTol && worst_sym < kKmsTol;
  return {pass, fmt::format("dims 2-8 x 6 values of c x {} (x, y) pairs: KMS residual {:.2e}; perturbed vs "
                            "Gibbs(h+b) {:.2e}; perturbed vs purification {:.2e}; symmetry {:.2e}",
                            kKmsPairs, worst_kms, worst_closed, worst_gns, worst_sym)};
}

// ---------------------------------------------------------------------------
// 6: two-point inequality

constexpr int kTheoremBSeeds = 50;
constexpr double kTheoremBSlack = 1e-8;

Verdict criterion_two_point() {
  int violations = 0;
  int runs = 0;
  double worst_margin = 1e300;
  for (std::uint64_t seed = 1; seed <= kTheoremBSeeds; ++seed) {
    const TheoremBInstance inst = theorem_b_instance(2 + static_cast<Index>(seed % 7), seed);
    for (double c : {-2.0, -1.0, 1.0, 2.0}) {
      const TheoremBResult r = theorem_b_inequality(inst.h, inst.b1, inst.b2, inst.e1, inst.e2, c);
      ++runs;
      if (r.lhs > r.rhs + kTheoremBSlack || r.delta_v > r.delta_bound + kTheoremBSlack) ++violations;
      worst_margin = std::min(worst_margin, r.rhs - r.lhs);
    }
  }
  return {violations == 0, fmt::format("{} runs ({} seeds, c in {{-2,-1,1,2}}); violations {}; smallest rhs-lhs {:.3e}",
                                       runs, kTheoremBSeeds, violations, worst_margin)};
}

// ---------------------------------------------------------------------------
// 7: CAR suite

constexpr double kCarTol = 1e-12;
constexpr double kGeneratorTol = 1e-10;
constexpr double kFiniteDifferenceTol = 1e-6;
constexpr double kFiniteDifferenceStep = 1e-4;

Verdict criterion_car() {
  const Complex i_unit(0.0, 1.0);
  Rng rng(20240007);
  double worst_car = 0.0;
  for (int n = 1; n <= 6; ++n) {
    const FockRep& rep = fock_rep(n);
    const Matrix id = Matrix::Identity(rep.dim(), rep.dim());
    for (int j = 0; j < n; ++j) {
      const Matrix cj(rep.creators[j]);
      for (int k = 0; k < n; ++k) {
        const Matrix ck(rep.creators[k]);
        const Matrix expect = j == k ? id : Matrix::Zero(rep.dim(), rep.dim());
        worst_car = std::max({worst_car, max_singular(cj.adjoint() * ck + ck * cj.adjoint() - expect),
                              max_singular(cj * ck + ck * cj)});
      }
    }
  }
  double worst_gen = 0.0;
  double worst_fd = 0.0;
  double worst_cov = 0.0;
  for (int n = 2; n <= 6; ++n) {
    const FockRep& rep = fock_rep(n);
    const HermitianMatrix h = random_hermitian(n, rng);
    const QuasiFreeFlow flow = quasi_free_flow(rep, h);
    const Vector xi = random_vector(n, rng);
    const Matrix x(rep.create(xi));
    worst_gen = std::max(worst_gen, max_singular(quasi_free_generator(flow, x) - i_unit * Matrix(rep.create(h.matrix() * xi))));
    if (n <= 4) {
      const Matrix big(flow.generator_h);
      const Matrix y = ginibre(rep.dim(), rng);
      const auto conj = [&](double t) { return Matrix(expm(i_unit * t * big) * y * expm(-i_unit * t * big)); };
      const Matrix fd = (conj(kFiniteDifferenceStep) - conj(-kFiniteDifferenceStep)) / (2 * kFiniteDifferenceStep);
      worst_fd = std::max(worst_fd, max_singular(fd - quasi_free_generator(flow, y)));
    }
    const HermitianMatrix t = random_hermitian(n, rng, 0.5);
    const InnerPerturbation p = inner_perturbation_from_rank(t);
    const Matrix lhs = i_unit * (p.b.matrix() * x - x * p.b.matrix());
    worst_cov = std::max(worst_cov, max_singular(lhs - i_unit * Matrix(rep.create(t.matrix() * xi))));
  }
  const bool pass = worst_car <= kCarTol && worst_gen <= kGeneratorTol && worst_fd <= kFiniteDifferenceTol &&
                    worst_cov <= kGeneratorTol;
  return {pass, fmt::format("CAR (n<=6) {:.2e}; generator {:.2e}; finite difference {:.2e}; covariance {:.2e}",
                            worst_car, worst_gen, worst_fd, worst_cov)};
}

// ---------------------------------------------------------------------------
// 8: three-point paths

constexpr double kDriftTol = 1e-10;
constexpr int kRandomMeasures = 20;
constexpr double kPathSeconds = 5.0;

Verdict criterion_paths() {
  const auto t0 = Clock::now();
  std::vector<DiscreteMeasureState> inputs{
      DiscreteMeasureState::from_json(read_json_file(fixture_dir() + "/measure_gaussian16.json"))};
  for (int s = 1; s <= kRandomMeasures; ++s) inputs.push_back(random_measure(4 + s % 13, 5000 + static_cast<std::uint64_t>(s)));
  double worst_drift = 0.0;
  int bad_support = 0;
  int nonpositive = 0;
  for (const DiscreteMeasureState& in : inputs) {
    const MeasurePath path = three_point_path(in);
    for (const DiscreteMeasureState& st : path.states) {
      worst_drift = std::max({worst_drift, std::abs(st.mean() - in.mean()), std::abs(st.variance() - in.variance())});
    }
    const RealVector m = path.states.back().masses();
    Index support = 0;
    for (Index i = 0; i < m.size(); ++i) {
      const bool target = std::find(path.targets.indices.begin(), path.targets.indices.end(), i) != path.targets.indices.end();
      if (m(i) > 0.0) ++support;
      if (m(i) > 0.0 && !target) ++bad_support;
      if (target && !(m(i) > 0.0)) ++nonpositive;
    }
    if (support != 3) ++bad_support;
  }
  const double secs = seconds_since(t0);
  return {worst_drift <= kDriftTol && bad_support == 0 && nonpositive == 0 && secs < kPathSeconds,
          fmt::format("{} measures; worst mean/variance drift {:.2e}; support errors {}; non-positive target "
                      "weights {}; {:.2f} s",
                      inputs.size(), worst_drift, bad_support, nonpositive, secs)};
}

// ---------------------------------------------------------------------------
// 9: determinism of every command across worker counts

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict criterion_determinism() {
  const std::string fx = fixture_dir();
  const std::vector<std::vector<std::string>> commands{
      {"correct", "--input", fx + "/correct_nu_1e-3.json"},
      {"sweep", "--dims", "8,16", "--nu-targets", "1e-1,1e-2,1e-4", "--trials", "4", "--seed", "11"},
      {"kms", "--dims", "2,3,4,5", "--trials", "12", "--seed", "12", "--c", "-2"},
      {"car-path", "--input", fx + "/measure_gaussian16.json"},
      {"calibrate", "--dims", "6,8", "--nu-targets", "1e-3,1e-2,1e-1", "--trials", "3", "--seed", "13"},
  };
  const auto dir = std::filesystem::temp_directory_path() / "almostcomm_acceptance";
  std::filesystem::create_directories(dir);
  int identical = 0;
  std::string failed;
  for (const auto& cmd : commands) {
    std::vector<std::string> outputs;
    std::vector<int> codes;
    for (const char* workers : {"1", "2", "1"}) {
      const auto file = dir / fmt::format("{}_{}_{}.out", cmd[0], workers, outputs.size());
      std::filesystem::remove(file);
      std::vector<std::string> args{"almostcomm"};
      args.insert(args.end(), cmd.begin(), cmd.end());
      args.insert(args.end(), {"--workers", workers, "--output", file.string()});
      std::vector<const char*> argv;
      for (const auto& a : args) argv.push_back(a.c_str());
      std::ostringstream out;
      std::ostringstream err;
      codes.push_back(cli::main_entry(static_cast<int>(argv.size()), argv.data(), out, err));
      outputs.push_back(read_bytes(file) + "\n--stdout--\n" + out.str());
    }
    const bool same = codes[0] != cli::kExitError && codes[0] == codes[1] && codes[1] == codes[2] &&
                      outputs[0] == outputs[1] && outputs[1] == outputs[2] && outputs[0].size() > 20;
    if (same) {
      ++identical;
    } else {
      failed += " " + cmd[0];
    }
  }
  return {identical == static_cast<int>(commands.size()),
          fmt::format("{}/{} commands byte-identical across workers 1, 2, 1{}", identical, commands.size(),
                      failed.empty() ? "" : "; differing:" + failed)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"smoothing bounds and banding", criterion_smoothing},
      {"Lipschitz commutator bound", criterion_lipschitz},
      {"partition certificates", criterion_partition},
      {"end-to-end correction", criterion_end_to_end},
      {"KMS suite", criterion_kms},
      {"two-point inequality", criterion_two_point},
      {"CAR suite", criterion_car},
      {"three-point paths", criterion_paths},
      {"CLI determinism", criterion_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << fmt::format("{} {}: {} ({})", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail)
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
