#pragma once

// Command-line driver: configuration, validation and the five commands.
// Each command returns 0 on success, 2 when the run completed but flagged a
// result, 1 on error.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "almostcomm/herm_core.hpp"

namespace almostcomm::cli {

enum class Command { correct, sweep, kms, car_path, calibrate };

Command command_from_name(const std::string& name);
std::string command_name(Command c);

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFlagged = 2;

struct RunConfig {
  Command command = Command::correct;
  std::optional<std::string> input;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  std::optional<double> eps;
  /// sweep shorthand for nu_targets = [nu]
  std::optional<double> nu;
  std::optional<double> c;
  std::optional<double> a_norm;
  std::optional<std::vector<Index>> dims;
  std::optional<std::vector<double>> nu_targets;
  std::optional<int> trials;
  std::optional<int> stages;
  std::optional<int> workers;
  std::optional<bool> timing;
  std::optional<bool> degenerate;
};

/// Reads a config object; throws InvalidArgument on unknown keys, wrong
/// types, or a "command" entry that differs from `command`.
RunConfig config_from_json(Command command, const nlohmann::json& j);

/// Fields set in `overrides` replace those in `base`.
RunConfig merge(RunConfig base, const RunConfig& overrides);

/// Rejects fields that do not apply to the command, missing inputs and
/// out-of-range values (InvalidArgument), then fills defaults.
RunConfig resolve(const RunConfig& config);

/// The resolved config as embedded in outputs: every field except workers
/// and the output path, which do not affect results.
nlohmann::json config_record(const RunConfig& resolved);

int cmd_correct(const RunConfig& resolved, std::ostream& out, std::ostream& err);
int cmd_sweep(const RunConfig& resolved, std::ostream& out, std::ostream& err);
int cmd_kms(const RunConfig& resolved, std::ostream& out, std::ostream& err);
int cmd_car_path(const RunConfig& resolved, std::ostream& out, std::ostream& err);
int cmd_calibrate(const RunConfig& resolved, std::ostream& out, std::ostream& err);

/// Resolves and dispatches; errors become a message on `err` and exit 1.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Full entry point: argument parsing, --config merging and dispatch.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace almostcomm::cli
