#pragma once

// End-to-end correction of an almost commuting pair (a, b) with ||b|| <= 1
// and a of arbitrary norm: smooth b, partition the spectrum of a into unit
// windows, solve each compressed block in the unit-norm regime and assemble.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "almostcomm/herm_core.hpp"
#include "almostcomm/lin_solver.hpp"
#include "almostcomm/window_projections.hpp"

namespace almostcomm {

/// Admissible commutator norm per eps, as measured by `calibrate`.
class CalibrationTable {
 public:
  CalibrationTable() = default;
  /// Rows must be sorted by eps with positive entries.
  explicit CalibrationTable(std::vector<std::pair<double, double>> rows, nlohmann::json provenance = {});

  const std::vector<std::pair<double, double>>& rows() const { return rows_; }
  const nlohmann::json& provenance() const { return provenance_; }
  bool empty() const { return rows_.empty(); }

  /// Log-log interpolation between rows. Below the first row the admissible
  /// value shrinks proportionally to eps; above the last row it is held.
  double admissible_nu(double eps) const;

  nlohmann::json to_json() const;
  static CalibrationTable from_json(const nlohmann::json& j);

 private:
  std::vector<std::pair<double, double>> rows_;
  nlohmann::json provenance_;
};

/// Directory of fixture files: $ALMOSTCOMM_FIXTURES when set, otherwise the
/// directory configured at build time.
std::string fixture_dir();
/// Loads calibration.json from fixture_dir(). Throws FormatError.
const CalibrationTable& default_calibration();

struct CorrectionOptions {
  PartitionOptions partition;
  double solver_tol = kDefaultSolverTol;
  int max_sweeps = kDefaultMaxSweeps;
  /// Regime check against this table; no check when null.
  const CalibrationTable* calibration = nullptr;
};

struct BlockReport {
  long k = 0;
  Index rank = 0;
  /// ||[p_k a p_k, p_k b' p_k]||
  double commutator = 0.0;
  /// Norm of the shifted and scaled a-block handed to the inner solver.
  double scaled_norm = 0.0;
};

inline constexpr double kBlockScale = 4.0 / 3.0;

struct CorrectionResult {
  CommutingPair pair;
  /// ||[a, b]|| of the input.
  double nu = 0.0;
  double eps = 0.0;
  /// Largest measured ||[a, p_k]||, ||[b', p_k]|| over the partition.
  double eps_used = 0.0;
  double compress_defect_a = 0.0;
  double compress_defect_b = 0.0;
  double tridiag_residual = 0.0;
  int block_count = 0;
  /// ||b|| when b had to be rescaled to unit norm, else 1.
  double b_scale = 1.0;
  /// ||b - b'|| in the units of the rescaled b.
  double smoothing_shift = 0.0;
  double max_block_commutator = 0.0;
  /// ||[a1, b1]||
  double output_commutator = 0.0;
  /// Admissible nu for eps from the calibration table, if one was given.
  std::optional<double> admissible_nu;
  PartitionDiagnostics partition;
  std::vector<BlockReport> blocks;
  /// "out-of-regime", "eps-exceeded"
  std::vector<std::string> flags;

  bool has_flag(const std::string& f) const;
  nlohmann::json to_json(bool include_basis = true) const;
};

/// Throws InvalidArgument, the errors of partition(), and BlockNormViolation
/// when a scaled block exceeds norm 1 by more than 1e-6.
CorrectionResult theorem_c_correct(const HermitianMatrix& a, const HermitianMatrix& b, double eps,
                                   const CorrectionOptions& options = {});

/// max over |i - j| > 1 of ||p_i a p_j|| and ||p_i b p_j||.
double tridiagonal_check(const ProjectionPartition& partition, const HermitianMatrix& a,
                         const HermitianMatrix& b_smoothed);

// ---------------------------------------------------------------------------
// random ensembles and sweeps

/// Seeded 64-bit generator for instance `trial` of configuration
/// (n, nu_index); independent of execution order.
std::uint64_t instance_seed(std::uint64_t seed, Index n, std::size_t nu_index, std::size_t trial);

struct EnsembleInstance {
  HermitianMatrix a;
  HermitianMatrix b;
  /// The commuting pair the perturbation started from.
  HermitianMatrix a0;
  HermitianMatrix b0;
};

/// a = Q diag(x) Q*, b = Q diag(y) Q* + t G with Q Haar unitary, x uniform on
/// [-a_norm, a_norm], y uniform on [-0.9, 0.9], G a GUE sample scaled to unit
/// norm and t chosen so ||[a, b]|| = nu. b is renormalized if ||b|| > 1.
EnsembleInstance random_instance(Index n, double nu, double a_norm, std::uint64_t seed);

/// Instances whose difficulty does not depend on ||a||: the spectrum of a is
/// `clusters` groups of unit-spaced fine structure placed 2*scale apart, and
/// the perturbation couples only indices within a group, so ||[a, b]|| and
/// the perturbation are independent of `scale`.
EnsembleInstance clustered_instance(Index n, double nu, double scale, Index clusters, std::uint64_t seed);

struct SweepOptions {
  double eps = 0.05;
  double a_norm = 1.0;
  int workers = 1;
  /// Record wall-clock time per instance; otherwise runtime_ms is 0.
  bool timing = false;
  const CalibrationTable* calibration = nullptr;
};

struct SweepRow {
  Index n = 0;
  double nu_target = 0.0;
  double nu_measured = 0.0;
  double dist_a = 0.0;
  double dist_b = 0.0;
  std::uint64_t seed = 0;
  double runtime_ms = 0.0;
  double eps_used = 0.0;
  /// "ok", a correction flag, or "error:<message>"
  std::string flag = "ok";
};

/// Rows ordered by (n, nu, trial) whatever the worker count.
std::vector<SweepRow> modulus_sweep(const std::vector<Index>& dims, const std::vector<double>& nu_targets,
                                    int trials, std::uint64_t seed, const SweepOptions& options = {});

/// CSV with leading "# key=value" lines for `meta`, then
/// n,nu_target,nu_measured,dist_a,dist_b,seed,runtime_ms,flag.
std::string sweep_csv(const std::vector<SweepRow>& rows, const std::vector<std::pair<std::string, std::string>>& meta);

/// Median of dist_a + dist_b per nu over rows without errors, by nu order.
std::vector<std::pair<double, double>> sweep_medians(const std::vector<SweepRow>& rows);

struct CalibrationOptions {
  std::vector<double> eps_grid{0.01, 0.02, 0.05, 0.1, 0.2};
  std::vector<double> nu_grid{1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 2e-1, 3e-1, 5e-1, 1.0};
  std::vector<Index> dims{8, 16, 32};
  int trials = 20;
  std::uint64_t seed = 20240611;
  /// Required fraction of instances with eps_used < eps.
  double success_rate = 0.99;
  int workers = 1;
};

/// For each eps, the largest grid nu such that at that nu and every smaller
/// grid nu the required fraction of random_instance runs reaches
/// eps_used < eps. Rows with no admissible nu are omitted.
CalibrationTable calibrate(const CalibrationOptions& options);

}  // namespace almostcomm
