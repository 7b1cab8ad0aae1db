#include "almostcomm/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <random>

#include <fmt/core.h>

#include "almostcomm/errors.hpp"
#include "almostcomm/matrix_io.hpp"
#include "almostcomm/mollifiers.hpp"
#include "almostcomm/parallel.hpp"

namespace almostcomm {

// ---------------------------------------------------------------------------
// calibration table

CalibrationTable::CalibrationTable(std::vector<std::pair<double, double>> rows, nlohmann::json provenance)
    : rows_(std::move(rows)), provenance_(std::move(provenance)) {
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (!(rows_[i].first > 0.0) || !(rows_[i].second > 0.0)) {
      throw InvalidArgument("CalibrationTable: entries must be positive");
    }
    if (i > 0 && !(rows_[i].first > rows_[i - 1].first)) {
      throw InvalidArgument("CalibrationTable: eps must be strictly increasing");
    }
  }
}

double CalibrationTable::admissible_nu(double eps) const {
  if (rows_.empty()) throw InvalidArgument("CalibrationTable: empty table");
  if (!(eps > 0.0)) throw InvalidArgument("CalibrationTable: eps must be positive");
  if (eps <= rows_.front().first) return rows_.front().second * eps / rows_.front().first;
  if (eps >= rows_.back().first) return rows_.back().second;
  std::size_t i = 1;
  while (rows_[i].first < eps) ++i;
  const auto& [e0, n0] = rows_[i - 1];
  const auto& [e1, n1] = rows_[i];
  const double s = std::log(eps / e0) / std::log(e1 / e0);
  return std::exp(std::log(n0) + s * (std::log(n1) - std::log(n0)));
}

nlohmann::json CalibrationTable::to_json() const {
  nlohmann::json eps = nlohmann::json::array();
  nlohmann::json nu = nlohmann::json::array();
  for (const auto& [e, v] : rows_) {
    eps.push_back(e);
    nu.push_back(v);
  }
  return {{"version", 1}, {"eps", eps}, {"admissible_nu", nu}, {"provenance", provenance_}};
}

CalibrationTable CalibrationTable::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("eps") || !j.contains("admissible_nu") || !j.at("eps").is_array() ||
      !j.at("admissible_nu").is_array() || j.at("eps").size() != j.at("admissible_nu").size()) {
    throw FormatError("calibration: expected arrays \"eps\" and \"admissible_nu\" of equal length");
  }
  std::vector<std::pair<double, double>> rows;
  for (std::size_t i = 0; i < j.at("eps").size(); ++i) {
    if (!j.at("eps")[i].is_number() || !j.at("admissible_nu")[i].is_number()) {
      throw FormatError(fmt::format("calibration: row {} is not numeric", i));
    }
    rows.emplace_back(j.at("eps")[i].get<double>(), j.at("admissible_nu")[i].get<double>());
  }
  try {
    return CalibrationTable(std::move(rows), j.value("provenance", nlohmann::json::object()));
  } catch (const InvalidArgument& e) {
    throw FormatError(fmt::format("calibration: {}", e.what()));
  }
}

std::string fixture_dir() {
  if (const char* env = std::getenv("ALMOSTCOMM_FIXTURES"); env != nullptr && *env != '\0') return env;
  return ALMOSTCOMM_FIXTURE_DIR;
}

const CalibrationTable& default_calibration() {
  static const CalibrationTable table =
      CalibrationTable::from_json(read_json_file(fixture_dir() + "/calibration.json"));
  return table;
}

// ---------------------------------------------------------------------------
// correction

bool CorrectionResult::has_flag(const std::string& f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

nlohmann::json CorrectionResult::to_json(bool include_basis) const {
  nlohmann::json blocks_json = nlohmann::json::array();
  for (const auto& blk : blocks) {
    blocks_json.push_back(
        {{"k", blk.k}, {"rank", blk.rank}, {"commutator", blk.commutator}, {"scaled_norm", blk.scaled_norm}});
  }
  nlohmann::json out = {
      {"nu", nu},
      {"eps", eps},
      {"eps_used", eps_used},
      {"dist_a", pair.dist_a},
      {"dist_b", pair.dist_b},
      {"compress_defect_a", compress_defect_a},
      {"compress_defect_b", compress_defect_b},
      {"tridiag_residual", tridiag_residual},
      {"block_count", block_count},
      {"b_scale", b_scale},
      {"smoothing_shift", smoothing_shift},
      {"max_block_commutator", max_block_commutator},
      {"output_commutator", output_commutator},
      {"admissible_nu", admissible_nu ? nlohmann::json(*admissible_nu) : nlohmann::json(nullptr)},
      {"flags", flags},
      {"partition",
       {{"sum_defect", partition.sum_defect},
        {"orthogonality", partition.orthogonality},
        {"sandwich_lo", partition.sandwich_lo},
        {"sandwich_hi", partition.sandwich_hi},
        {"monotone", partition.monotone},
        {"idempotence", partition.idempotence},
        {"window_commutator", partition.window_commutator},
        {"retried", partition.retried}}},
      {"blocks", blocks_json},
      {"diag_a", real_vector_to_json(pair.diag_a)},
      {"diag_b", real_vector_to_json(pair.diag_b)},
  };
  if (include_basis) out["basis"] = matrix_to_json(pair.basis);
  return out;
}

double tridiagonal_check(const ProjectionPartition& partition, const HermitianMatrix& a,
                         const HermitianMatrix& b_smoothed) {
  if (a.n() != b_smoothed.n()) throw DimensionMismatch("tridiagonal_check: dimensions differ");
  std::vector<std::pair<long, const Matrix*>> live;
  for (const auto& [k, p] : partition.projections) {
    if (p.n() != a.n()) throw DimensionMismatch("tridiagonal_check: projection dimension differs");
    if (p.matrix().trace().real() > 0.5) live.emplace_back(k, &p.matrix());
  }
  double worst = 0.0;
  for (const auto& [i, pi] : live) {
    const Matrix pa = *pi * a.matrix();
    const Matrix pb = *pi * b_smoothed.matrix();
    for (const auto& [j, pj] : live) {
      if (std::abs(i - j) <= 1) continue;
      worst = std::max({worst, op_norm(Matrix(pa * *pj)), op_norm(Matrix(pb * *pj))});
    }
  }
  return worst;
}

CorrectionResult theorem_c_correct(const HermitianMatrix& a, const HermitianMatrix& b, double eps,
                                   const CorrectionOptions& options) {
  if (a.n() != b.n()) {
    throw DimensionMismatch(fmt::format("theorem_c_correct: dimensions {} and {}", a.n(), b.n()));
  }
  if (a.n() == 0) throw InvalidArgument("theorem_c_correct: empty matrices");
  if (!(eps > 0.0)) throw InvalidArgument("theorem_c_correct: eps must be positive");

  CorrectionResult res;
  res.eps = eps;
  res.nu = op_norm(commutator(a, b));

  const double b_norm = op_norm(b);
  HermitianMatrix b_unit = b;
  if (b_norm > 1.0 + 1e-9) {
    res.b_scale = b_norm;
    b_unit = b * (1.0 / b_norm);
  }

  const SpectralDecomposition da = spectral_decomp(a);
  const HermitianMatrix b_smooth = band_smooth(da, b_unit, default_mollifier());
  res.smoothing_shift = op_norm(b_unit - b_smooth);

  const ProjectionPartition part = partition(da, b_smooth, eps, options.partition);
  res.partition = part.diagnostics;
  res.eps_used = part.max_comm();

  const Index n = a.n();
  Matrix basis(n, n);
  RealVector diag_a(n);
  RealVector diag_b(n);
  Matrix compressed_a = Matrix::Zero(n, n);
  Matrix compressed_b = Matrix::Zero(n, n);
  Index filled = 0;
  for (const auto& [k, p] : part.projections) {
    const SpectralDecomposition dp = spectral_decomp(p);
    const Matrix w = spectral_subspace(dp, SpectralWindow::above(0.5, false));
    const Index r = w.cols();
    if (r == 0) continue;
    if (filled + r > n) {
      throw SandwichViolation(fmt::format("theorem_c_correct: partition ranks exceed n = {}", n));
    }
    const HermitianMatrix ak = HermitianMatrix::from_computed(w.adjoint() * a.matrix() * w);
    const HermitianMatrix bk = HermitianMatrix::from_computed(w.adjoint() * b_smooth.matrix() * w);
    compressed_a += w * ak.matrix() * w.adjoint();
    compressed_b += w * bk.matrix() * w.adjoint();

    const double center = static_cast<double>(k) + 0.5;
    const HermitianMatrix scaled = ak.shifted(center) * kBlockScale;
    BlockReport blk;
    blk.k = k;
    blk.rank = r;
    blk.scaled_norm = op_norm(scaled);
    blk.commutator = op_norm(commutator(ak, bk));
    if (blk.scaled_norm > 1.0 + 1e-6) {
      throw BlockNormViolation(fmt::format("theorem_c_correct: block k = {} has scaled norm {:.9f} > 1", k,
                                           blk.scaled_norm));
    }
    const CommutingPair inner = commuting_approximation(scaled, bk, options.solver_tol, options.max_sweeps);
    basis.middleCols(filled, r) = w * inner.basis;
    diag_a.segment(filled, r) = (inner.diag_a.array() / kBlockScale + center).matrix();
    diag_b.segment(filled, r) = inner.diag_b;
    filled += r;
    res.max_block_commutator = std::max(res.max_block_commutator, blk.commutator);
    res.blocks.push_back(blk);
  }
  if (filled != n) {
    throw SandwichViolation(fmt::format("theorem_c_correct: partition ranks sum to {} instead of {}", filled, n));
  }
  res.block_count = static_cast<int>(res.blocks.size());
  res.compress_defect_a = op_norm(HermitianMatrix::from_computed(a.matrix() - compressed_a));
  res.compress_defect_b = op_norm(HermitianMatrix::from_computed(b_smooth.matrix() - compressed_b));
  res.tridiag_residual = tridiagonal_check(part, a, b_smooth);

  res.pair.basis = std::move(basis);
  res.pair.diag_a = std::move(diag_a);
  res.pair.diag_b = diag_b * res.b_scale;
  const HermitianMatrix a1 = res.pair.a1();
  const HermitianMatrix b1 = res.pair.b1();
  res.pair.dist_a = op_norm(a - a1);
  res.pair.dist_b = op_norm(b - b1);
  res.output_commutator = op_norm(commutator(a1, b1));

  if (res.eps_used >= eps) res.flags.emplace_back("eps-exceeded");
  if (options.calibration != nullptr && !options.calibration->empty()) {
    res.admissible_nu = options.calibration->admissible_nu(eps);
    if (res.nu / res.b_scale > *res.admissible_nu) res.flags.emplace_back("out-of-regime");
  }
  return res;
}

// ---------------------------------------------------------------------------
// ensembles

std::uint64_t instance_seed(std::uint64_t seed, Index n, std::size_t nu_index, std::size_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(nu_index),
                    static_cast<std::uint32_t>(trial)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

Matrix gaussian_matrix(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(i, j) = Complex(re, im);
    }
  }
  return g;
}

Matrix haar_unitary(Index n, std::mt19937_64& rng) {
  const Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(n, rng));
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    const double m = std::abs(r(j, j));
    if (m > 0.0) q.col(j) *= r(j, j) / m;
  }
  return q;
}

HermitianMatrix unit_gue(Index n, std::mt19937_64& rng) {
  const Matrix g = gaussian_matrix(n, rng);
  HermitianMatrix h = HermitianMatrix::from_computed(0.5 * (g + g.adjoint()));
  return h * (1.0 / op_norm(h));
}

RealVector uniform_vector(Index n, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  RealVector v(n);
  for (Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

EnsembleInstance perturb(const HermitianMatrix& a0, const HermitianMatrix& b0, const HermitianMatrix& g,
                         double nu) {
  EnsembleInstance inst{a0, b0, a0, b0};
  if (nu > 0.0) {
    const double t = nu / op_norm(commutator(a0, g));
    inst.b = b0 + g * t;
    const double nb = op_norm(inst.b);
    if (nb > 1.0) inst.b = inst.b * (1.0 / nb);
  }
  return inst;
}

}  // namespace

EnsembleInstance random_instance(Index n, double nu, double a_norm, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("random_instance: n must be positive");
  if (!(nu >= 0.0) || !(a_norm > 0.0)) throw InvalidArgument("random_instance: need nu >= 0 and a_norm > 0");
  std::mt19937_64 rng(seed);
  const Matrix q = haar_unitary(n, rng);
  const RealVector x = uniform_vector(n, -a_norm, a_norm, rng);
  const RealVector y = uniform_vector(n, -0.9, 0.9, rng);
  const HermitianMatrix g = unit_gue(n, rng);
  return perturb(HermitianMatrix::diagonal(x).conjugated(q), HermitianMatrix::diagonal(y).conjugated(q), g, nu);
}

EnsembleInstance clustered_instance(Index n, double nu, double scale, Index clusters, std::uint64_t seed) {
  if (clusters < 1 || n < clusters) throw InvalidArgument("clustered_instance: need 1 <= clusters <= n");
  if (!(nu >= 0.0) || !(scale >= 0.0)) throw InvalidArgument("clustered_instance: need nu >= 0 and scale >= 0");
  std::mt19937_64 rng(seed);
  const Matrix q = haar_unitary(n, rng);
  const RealVector fine = uniform_vector(n, -0.5, 0.5, rng);
  const RealVector y = uniform_vector(n, -0.9, 0.9, rng);
  const Matrix g_full = gaussian_matrix(n, rng);

  RealVector x(n);
  Matrix g = Matrix::Zero(n, n);
  Index start = 0;
  for (Index c = 0; c < clusters; ++c) {
    const Index len = n / clusters + (c < n % clusters ? 1 : 0);
    const double center = clusters == 1 ? 0.0 : scale * (2.0 * static_cast<double>(c) / (clusters - 1) - 1.0);
    x.segment(start, len) = fine.segment(start, len).array() + center;
    g.block(start, start, len, len) = g_full.block(start, start, len, len);
    start += len;
  }
  HermitianMatrix gh = HermitianMatrix::from_computed(0.5 * (g + g.adjoint()));
  gh = gh * (1.0 / op_norm(gh));
  return perturb(HermitianMatrix::diagonal(x).conjugated(q), HermitianMatrix::diagonal(y).conjugated(q),
                 gh.conjugated(q), nu);
}

// ---------------------------------------------------------------------------
// sweeps

namespace {

struct Job {
  Index n;
  std::size_t nu_index;
  double nu;
  std::size_t trial;
};

std::string flag_of(const CorrectionResult& r) {
  if (r.has_flag("out-of-regime")) return "out-of-regime";
  if (r.has_flag("eps-exceeded")) return "eps-exceeded";
  return "ok";
}

std::string sanitize(std::string s) {
  for (char& ch : s) {
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ';';
  }
  return s;
}

}  // namespace

std::vector<SweepRow> modulus_sweep(const std::vector<Index>& dims, const std::vector<double>& nu_targets,
                                    int trials, std::uint64_t seed, const SweepOptions& options) {
  if (trials < 1) throw InvalidArgument("modulus_sweep: trials must be >= 1");
  for (Index n : dims) {
    if (n < 1) throw InvalidArgument("modulus_sweep: dimensions must be positive");
  }
  for (double nu : nu_targets) {
    if (!(nu >= 0.0)) throw InvalidArgument("modulus_sweep: nu targets must be nonnegative");
  }
  std::vector<Job> jobs;
  for (Index n : dims) {
    for (std::size_t v = 0; v < nu_targets.size(); ++v) {
      for (std::size_t t = 0; t < static_cast<std::size_t>(trials); ++t) jobs.push_back({n, v, nu_targets[v], t});
    }
  }
  CorrectionOptions copts;
  copts.calibration = options.calibration;

  std::vector<SweepRow> rows(jobs.size());
  parallel_for(jobs.size(), options.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    SweepRow& row = rows[i];
    row.n = job.n;
    row.nu_target = job.nu;
    row.seed = instance_seed(seed, job.n, job.nu_index, job.trial);
    const auto start = std::chrono::steady_clock::now();
    try {
      const EnsembleInstance inst = random_instance(job.n, job.nu, options.a_norm, row.seed);
      row.nu_measured = op_norm(commutator(inst.a, inst.b));
      const CorrectionResult res = theorem_c_correct(inst.a, inst.b, options.eps, copts);
      row.dist_a = res.pair.dist_a;
      row.dist_b = res.pair.dist_b;
      row.eps_used = res.eps_used;
      row.flag = flag_of(res);
    } catch (const std::exception& e) {
      row.flag = "error:" + sanitize(e.what());
    }
    if (options.timing) {
      row.runtime_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
  });
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows,
                      const std::vector<std::pair<std::string, std::string>>& meta) {
  std::string out;
  for (const auto& [k, v] : meta) out += fmt::format("# {}={}\n", k, v);
  out += "n,nu_target,nu_measured,dist_a,dist_b,seed,runtime_ms,flag\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{},{:.6f},{}\n", r.n, r.nu_target, r.nu_measured,
                       r.dist_a, r.dist_b, r.seed, r.runtime_ms, r.flag);
  }
  return out;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 != 0 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

std::vector<std::pair<double, double>> sweep_medians(const std::vector<SweepRow>& rows) {
  std::vector<double> order;
  std::map<double, std::vector<double>> by_nu;
  for (const auto& r : rows) {
    if (by_nu.find(r.nu_target) == by_nu.end()) order.push_back(r.nu_target);
    auto& bucket = by_nu[r.nu_target];
    if (r.flag.rfind("error:", 0) != 0) bucket.push_back(r.dist_a + r.dist_b);
  }
  std::vector<std::pair<double, double>> out;
  for (double nu : order) out.emplace_back(nu, median(by_nu[nu]));
  return out;
}

CalibrationTable calibrate(const CalibrationOptions& options) {
  if (options.trials < 1) throw InvalidArgument("calibrate: trials must be >= 1");
  std::vector<double> nu_grid = options.nu_grid;
  std::sort(nu_grid.begin(), nu_grid.end());
  std::vector<double> eps_grid = options.eps_grid;
  std::sort(eps_grid.begin(), eps_grid.end());

  // eps only steers retries, so one pass at the largest eps measures eps_used
  // for every row of the table.
  SweepOptions sopts;
  sopts.eps = eps_grid.empty() ? 1.0 : eps_grid.back();
  sopts.workers = options.workers;
  const std::vector<SweepRow> rows = modulus_sweep(options.dims, nu_grid, options.trials, options.seed, sopts);

  std::vector<std::pair<double, double>> table;
  for (double eps : eps_grid) {
    double admissible = 0.0;
    for (double nu : nu_grid) {
      std::size_t total = 0;
      std::size_t good = 0;
      for (const auto& r : rows) {
        if (r.nu_target != nu) continue;
        ++total;
        if (r.flag.rfind("error:", 0) != 0 && r.eps_used < eps) ++good;
      }
      if (total == 0 || static_cast<double>(good) < options.success_rate * static_cast<double>(total)) break;
      admissible = nu;
    }
    if (admissible > 0.0) table.emplace_back(eps, admissible);
  }
  nlohmann::json provenance = {{"dims", options.dims},         {"nu_grid", nu_grid},
                               {"trials", options.trials},     {"seed", options.seed},
                               {"success_rate", options.success_rate}};
  return CalibrationTable(std::move(table), std::move(provenance));
}

}  // namespace almostcomm
