#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "almostcomm/car_lab.hpp"
#include "almostcomm/errors.hpp"
#include "almostcomm/kms_lab.hpp"
#include "almostcomm/matrix_io.hpp"
#include "almostcomm/mollifiers.hpp"
#include "almostcomm/parallel.hpp"
#include "almostcomm/pipeline.hpp"

namespace almostcomm::cli {

namespace {

using Meta = std::vector<std::pair<std::string, std::string>>;

constexpr double kKmsTolerance = 1e-8;
constexpr double kDriftTolerance = 1e-9;

struct Defaults {
  double eps = 0.05;
  std::vector<Index> sweep_dims{8, 16};
  std::vector<double> sweep_nu{1e-1, 1e-2, 1e-4};
  int sweep_trials = 10;
  std::vector<Index> kms_dims{2, 3, 4, 5, 6, 7, 8};
  int kms_trials = 50;
  double c = 1.0;
  int stages = 6;
  std::uint64_t seed = 1;
  double a_norm = 1.0;
};

[[noreturn]] void bad(const std::string& msg) { throw InvalidArgument(msg); }

template <class T>
T json_get(const nlohmann::json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    bad(fmt::format("config: key \"{}\" has the wrong type", key));
  }
}

void write_output(const RunConfig& cfg, std::ostream& out, const std::string& text) {
  if (cfg.output) {
    write_text_file(*cfg.output, text);
  } else {
    out << text;
  }
}

Meta meta_of(const RunConfig& cfg) {
  Meta meta;
  const nlohmann::json rec = config_record(cfg);
  for (const auto& [k, v] : rec.items()) meta.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
  meta.emplace_back("k1", fmt::format("{:.17g}", default_mollifier().k1));
  meta.emplace_back("c_const", fmt::format("{:.17g}", default_step().c_const));
  return meta;
}

nlohmann::json kernel_record() {
  return {{"k1", default_mollifier().k1}, {"c_const", default_step().c_const}};
}

bool is_set_for(const RunConfig& c, const std::string& field) {
  if (field == "input") return c.input.has_value();
  if (field == "output") return c.output.has_value();
  if (field == "seed") return c.seed.has_value();
  if (field == "eps") return c.eps.has_value();
  if (field == "nu") return c.nu.has_value();
  if (field == "c") return c.c.has_value();
  if (field == "a_norm") return c.a_norm.has_value();
  if (field == "dims") return c.dims.has_value();
  if (field == "nu_targets") return c.nu_targets.has_value();
  if (field == "trials") return c.trials.has_value();
  if (field == "stages") return c.stages.has_value();
  if (field == "workers") return c.workers.has_value();
  if (field == "timing") return c.timing.has_value();
  if (field == "degenerate") return c.degenerate.has_value();
  return false;
}

const std::vector<std::string>& all_fields() {
  static const std::vector<std::string> f{"input",  "output",     "seed",   "eps",    "nu",
                                          "c",      "a_norm",     "dims",   "nu_targets",
                                          "trials", "stages",     "workers", "timing", "degenerate"};
  return f;
}

std::vector<std::string> applicable(Command cmd) {
  switch (cmd) {
    case Command::correct:
      return {"input", "output", "eps", "workers"};
    case Command::sweep:
      return {"output", "seed", "eps", "nu", "nu_targets", "dims", "trials", "workers", "timing", "a_norm"};
    case Command::kms:
      return {"output", "seed", "c", "dims", "trials", "workers", "degenerate"};
    case Command::car_path:
      return {"input", "output", "stages", "workers"};
    case Command::calibrate:
      return {"output", "seed", "dims", "nu_targets", "trials", "workers"};
  }
  return {};
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

}  // namespace

Command command_from_name(const std::string& name) {
  if (name == "correct") return Command::correct;
  if (name == "sweep") return Command::sweep;
  if (name == "kms") return Command::kms;
  if (name == "car-path") return Command::car_path;
  if (name == "calibrate") return Command::calibrate;
  bad(fmt::format("unknown command \"{}\"", name));
}

std::string command_name(Command c) {
  switch (c) {
    case Command::correct:
      return "correct";
    case Command::sweep:
      return "sweep";
    case Command::kms:
      return "kms";
    case Command::car_path:
      return "car-path";
    case Command::calibrate:
      return "calibrate";
  }
  return "?";
}

RunConfig config_from_json(Command command, const nlohmann::json& j) {
  if (!j.is_object()) bad("config: expected a JSON object");
  RunConfig c;
  c.command = command;
  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "command") {
      if (!v.is_string() || command_from_name(v.get<std::string>()) != command) {
        bad(fmt::format("config: command \"{}\" does not match \"{}\"", v.dump(), command_name(command)));
      }
    } else if (key == "input") {
      c.input = json_get<std::string>(v, k);
    } else if (key == "output") {
      c.output = json_get<std::string>(v, k);
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) bad("config: key \"seed\" must be a non-negative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "eps" || key == "nu" || key == "c" || key == "a_norm") {
      if (!v.is_number()) bad(fmt::format("config: key \"{}\" must be a number", key));
      const double x = v.get<double>();
      (key == "eps" ? c.eps : key == "nu" ? c.nu : key == "c" ? c.c : c.a_norm) = x;
    } else if (key == "dims") {
      if (!v.is_array()) bad("config: key \"dims\" must be an array of integers");
      std::vector<Index> d;
      for (const auto& e : v) {
        if (!e.is_number_integer()) bad("config: key \"dims\" must be an array of integers");
        d.push_back(e.get<Index>());
      }
      c.dims = d;
    } else if (key == "nu_targets") {
      if (!v.is_array()) bad("config: key \"nu_targets\" must be an array of numbers");
      std::vector<double> d;
      for (const auto& e : v) {
        if (!e.is_number()) bad("config: key \"nu_targets\" must be an array of numbers");
        d.push_back(e.get<double>());
      }
      c.nu_targets = d;
    } else if (key == "trials" || key == "stages" || key == "workers") {
      if (!v.is_number_integer()) bad(fmt::format("config: key \"{}\" must be an integer", key));
      const int x = v.get<int>();
      (key == "trials" ? c.trials : key == "stages" ? c.stages : c.workers) = x;
    } else if (key == "timing" || key == "degenerate") {
      if (!v.is_boolean()) bad(fmt::format("config: key \"{}\" must be a boolean", key));
      (key == "timing" ? c.timing : c.degenerate) = v.get<bool>();
    } else {
      bad(fmt::format("config: unknown key \"{}\"", key));
    }
  }
  return c;
}

RunConfig merge(RunConfig base, const RunConfig& o) {
  auto take = [](auto& dst, const auto& src) {
    if (src) dst = src;
  };
  base.command = o.command;
  take(base.input, o.input);
  take(base.output, o.output);
  take(base.seed, o.seed);
  take(base.eps, o.eps);
  take(base.nu, o.nu);
  take(base.c, o.c);
  take(base.a_norm, o.a_norm);
  take(base.dims, o.dims);
  take(base.nu_targets, o.nu_targets);
  take(base.trials, o.trials);
  take(base.stages, o.stages);
  take(base.workers, o.workers);
  take(base.timing, o.timing);
  take(base.degenerate, o.degenerate);
  return base;
}

RunConfig resolve(const RunConfig& config) {
  const Command cmd = config.command;
  const auto allowed = applicable(cmd);
  for (const auto& f : all_fields()) {
    if (is_set_for(config, f) && std::find(allowed.begin(), allowed.end(), f) == allowed.end()) {
      bad(fmt::format("{}: option \"{}\" does not apply (accepted: {})", command_name(cmd), f, join(allowed)));
    }
  }
  if (config.nu && config.nu_targets) bad("sweep: give either nu or nu_targets, not both");

  const Defaults d;
  RunConfig r = config;
  if (cmd == Command::correct || cmd == Command::car_path) {
    if (!r.input) bad(fmt::format("{}: --input is required", command_name(cmd)));
  }
  if (cmd == Command::correct || cmd == Command::sweep) {
    if (!r.eps) r.eps = d.eps;
    if (!(std::isfinite(*r.eps) && *r.eps > 0.0 && *r.eps < 1.0)) bad("eps must lie in (0, 1)");
  }
  if (cmd == Command::sweep) {
    if (r.nu) {
      r.nu_targets = std::vector<double>{*r.nu};
      r.nu.reset();
    }
    if (!r.nu_targets) r.nu_targets = d.sweep_nu;
    if (!r.dims) r.dims = d.sweep_dims;
    if (!r.trials) r.trials = d.sweep_trials;
    if (!r.a_norm) r.a_norm = d.a_norm;
    if (!r.timing) r.timing = false;
    if (!(std::isfinite(*r.a_norm) && *r.a_norm > 0.0)) bad("a_norm must be positive");
  }
  if (cmd == Command::kms) {
    if (!r.c) r.c = d.c;
    if (!r.dims) r.dims = d.kms_dims;
    if (!r.trials) r.trials = d.kms_trials;
    if (!r.degenerate) r.degenerate = false;
    if (!std::isfinite(*r.c) || *r.c == 0.0) bad("kms: c must be a nonzero finite number");
  }
  if (cmd == Command::calibrate) {
    const CalibrationOptions co;
    if (!r.dims) r.dims = co.dims;
    if (!r.trials) r.trials = co.trials;
    if (!r.nu_targets) r.nu_targets = co.nu_grid;
    if (!r.seed) r.seed = co.seed;
  }
  if (cmd == Command::car_path && !r.stages) r.stages = d.stages;
  if ((cmd == Command::sweep || cmd == Command::kms) && !r.seed) r.seed = d.seed;

  if (!r.workers) r.workers = 1;
  if (*r.workers < 1 || *r.workers > 256) bad("workers must lie in [1, 256]");
  if (r.trials && (*r.trials < 1 || *r.trials > 100000)) bad("trials must lie in [1, 100000]");
  if (r.stages && (*r.stages < 1 || *r.stages > 30)) bad("stages must lie in [1, 30]");
  if (r.dims) {
    if (r.dims->empty()) bad("dims must not be empty");
    const Index lo = cmd == Command::kms ? 2 : 1;
    const Index hi = cmd == Command::kms ? 32 : 512;
    for (Index n : *r.dims) {
      if (n < lo || n > hi) bad(fmt::format("dims entry {} outside [{}, {}]", n, lo, hi));
    }
  }
  if (r.nu_targets) {
    if (r.nu_targets->empty()) bad("nu_targets must not be empty");
    for (double nu : *r.nu_targets) {
      if (!(std::isfinite(nu) && nu >= 0.0)) bad(fmt::format("nu target {} must be finite and >= 0", nu));
    }
    if (cmd == Command::calibrate && !std::is_sorted(r.nu_targets->begin(), r.nu_targets->end())) {
      bad("calibrate: nu_targets must be ascending");
    }
  }
  return r;
}

nlohmann::json config_record(const RunConfig& r) {
  nlohmann::json j;
  j["command"] = command_name(r.command);
  if (r.input) j["input"] = *r.input;
  if (r.seed) j["seed"] = *r.seed;
  if (r.eps) j["eps"] = *r.eps;
  if (r.nu) j["nu"] = *r.nu;
  if (r.c) j["c"] = *r.c;
  if (r.a_norm) j["a_norm"] = *r.a_norm;
  if (r.dims) j["dims"] = *r.dims;
  if (r.nu_targets) j["nu_targets"] = *r.nu_targets;
  if (r.trials) j["trials"] = *r.trials;
  if (r.stages) j["stages"] = *r.stages;
  if (r.timing) j["timing"] = *r.timing;
  if (r.degenerate) j["degenerate"] = *r.degenerate;
  return j;
}

// ---------------------------------------------------------------------------
// commands

int cmd_correct(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const nlohmann::json in = read_json_file(*cfg.input);
  if (!in.is_object()) throw FormatError("input: expected an object with matrices \"a\" and \"b\"");
  for (const char* f : {"a", "b"}) {
    if (!in.contains(f)) throw FormatError(fmt::format("input: missing matrix \"{}\"", f));
  }
  const HermitianMatrix a = hermitian_from_json(in.at("a"), "a");
  const HermitianMatrix b = hermitian_from_json(in.at("b"), "b");
  CorrectionOptions options;
  options.partition.workers = *cfg.workers;
  options.calibration = &default_calibration();
  const CorrectionResult res = theorem_c_correct(a, b, *cfg.eps, options);

  nlohmann::json doc;
  doc["config"] = config_record(cfg);
  doc["kernel"] = kernel_record();
  doc["result"] = res.to_json(true);
  write_output(cfg, out, doc.dump(2) + "\n");
  if (!res.flags.empty()) {
    err << fmt::format("correct: flagged {}\n", join(res.flags));
    return kExitFlagged;
  }
  return kExitOk;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  SweepOptions options;
  options.eps = *cfg.eps;
  options.a_norm = *cfg.a_norm;
  options.workers = *cfg.workers;
  options.timing = *cfg.timing;
  options.calibration = &default_calibration();
  const auto rows = modulus_sweep(*cfg.dims, *cfg.nu_targets, *cfg.trials, *cfg.seed, options);
  write_output(cfg, out, sweep_csv(rows, meta_of(cfg)));

  std::string summary = "medians";
  for (const auto& [nu, med] : sweep_medians(rows)) summary += fmt::format(" nu={:g}:{:.6g}", nu, med);
  err << summary << "\n";
  const auto flagged = std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.flag != "ok"; });
  if (flagged > 0) {
    err << fmt::format("sweep: {} of {} rows flagged\n", flagged, rows.size());
    return kExitFlagged;
  }
  return kExitOk;
}

int cmd_kms(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto& dims = *cfg.dims;
  const auto trials = static_cast<std::size_t>(*cfg.trials);
  const double c = *cfg.c;
  const bool degenerate = *cfg.degenerate;
  std::vector<KmsRow> rows(trials);
  std::vector<char> bound_ok(trials, 1);
  parallel_for(trials, *cfg.workers, [&](std::size_t i) {
    const Index n = dims[i % dims.size()];
    const std::uint64_t s = instance_seed(*cfg.seed, n, 0, i);
    try {
      const TheoremBInstance inst = degenerate ? theorem_b_degenerate_instance(n, s) : theorem_b_instance(n, s);
      const TheoremBResult r = theorem_b_inequality(inst.h, inst.b1, inst.b2, inst.e1, inst.e2, c);
      rows[i] = {s, n, c, r.norm_b_diff, r.lhs, r.rhs, r.rhs - r.lhs};
      bound_ok[i] = r.delta_v <= r.delta_bound + kKmsTolerance ? 1 : 0;
    } catch (const std::exception& e) {
      throw Error(fmt::format("kms: instance seed {} (n = {}): {}", s, n, e.what()));
    }
  });
  Meta meta = meta_of(cfg);
  meta.emplace_back("isometry_c", fmt::format("{:.17g}", isometry_constant().c_const));
  write_output(cfg, out, kms_csv(rows, meta));

  std::size_t violations = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    if (rows[i].lhs > rows[i].rhs + kKmsTolerance || bound_ok[i] == 0) {
      err << fmt::format("kms: bound violated for instance seed {}\n", rows[i].seed);
      ++violations;
    }
  }
  return violations == 0 ? kExitOk : kExitFlagged;
}

int cmd_car_path(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const DiscreteMeasureState state = DiscreteMeasureState::from_json(read_json_file(*cfg.input));
  PathOptions options;
  options.stages = *cfg.stages;
  MeasurePath path;
  try {
    path = three_point_path(state, options);
  } catch (const DegenerateMeasure& e) {
    throw DegenerateMeasure(fmt::format(
        "{}. The measure |xi|^2 dnu has zero variance or sits entirely on the two extreme atoms, so it already "
        "has at most two points and no three-point path is needed; supply xi with mass on an interior atom.",
        e.what()));
  }
  const double c = state.mean();
  const double v = state.variance();
  double drift = 0.0;
  for (const auto& st : path.states) {
    drift = std::max({drift, std::abs(st.mean() - c), std::abs(st.variance() - v)});
  }
  Meta meta = meta_of(cfg);
  meta.emplace_back("targets", nlohmann::json(std::vector<double>(path.targets.atoms.begin(),
                                                                    path.targets.atoms.end()))
                                   .dump());
  meta.emplace_back("mean", fmt::format("{:.17g}", c));
  meta.emplace_back("variance", fmt::format("{:.17g}", v));
  meta.emplace_back("max_drift", fmt::format("{:.3g}", drift));
  write_output(cfg, out, path_csv(path, meta));
  if (drift > kDriftTolerance) {
    err << fmt::format("car-path: moment drift {:.3g} exceeds {:.0e}\n", drift, kDriftTolerance);
    return kExitFlagged;
  }
  return kExitOk;
}

int cmd_calibrate(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  CalibrationOptions options;
  options.dims = *cfg.dims;
  options.trials = *cfg.trials;
  options.nu_grid = *cfg.nu_targets;
  options.seed = *cfg.seed;
  options.workers = *cfg.workers;
  const CalibrationTable table = calibrate(options);
  nlohmann::json provenance;
  provenance["config"] = config_record(cfg);
  provenance["kernel"] = kernel_record();
  provenance["eps_grid"] = options.eps_grid;
  provenance["success_rate"] = options.success_rate;
  const CalibrationTable stamped(table.rows(), provenance);
  write_output(cfg, out, stamped.to_json().dump(2) + "\n");
  return kExitOk;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig r = resolve(config);
    switch (r.command) {
      case Command::correct:
        return cmd_correct(r, out, err);
      case Command::sweep:
        return cmd_sweep(r, out, err);
      case Command::kms:
        return cmd_kms(r, out, err);
      case Command::car_path:
        return cmd_car_path(r, out, err);
      case Command::calibrate:
        return cmd_calibrate(r, out, err);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kExitError;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Almost commuting matrices: corrections, sweeps, KMS and CAR experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig flags;
  std::string config_path;
  std::string input, output;
  std::uint64_t seed = 0;
  double eps = 0, nu = 0, c = 0, a_norm = 0;
  std::vector<Index> dims;
  std::vector<double> nu_targets;
  int trials = 0, stages = 0, workers = 0;
  bool timing = false, degenerate = false;

  auto* o_config = app.add_option("--config", config_path, "JSON config; flags override its entries");
  auto* o_input = app.add_option("--input", input, "input JSON (correct, car-path)");
  auto* o_output = app.add_option("--output", output, "output file (default: standard output)");
  auto* o_seed = app.add_option("--seed", seed, "master seed");
  auto* o_eps = app.add_option("--eps", eps, "target commutator size of the partition");
  auto* o_nu = app.add_option("--nu", nu, "single nu target (sweep)");
  auto* o_c = app.add_option("--c", c, "inverse temperature (kms), nonzero");
  auto* o_a_norm = app.add_option("--a-norm", a_norm, "spectral radius of a (sweep)");
  auto* o_dims = app.add_option("--dims", dims, "comma separated dimensions")->delimiter(',');
  auto* o_nus = app.add_option("--nu-targets", nu_targets, "comma separated nu targets")->delimiter(',');
  auto* o_trials = app.add_option("--trials", trials, "trials per configuration");
  auto* o_stages = app.add_option("--stages", stages, "shrink stages (car-path)");
  auto* o_workers = app.add_option("--workers", workers, "worker threads; results do not depend on it");
  auto* o_timing = app.add_flag("--timing", timing, "record per-instance wall time (sweep)");
  auto* o_degenerate = app.add_flag("--degenerate", degenerate, "use b1 = b2 instances (kms)");

  const std::pair<const char*, const char*> subcommands[] = {
      {"correct", "replace a near-commuting pair from --input by an exactly commuting one"},
      {"sweep", "distance to commuting pairs over a random ensemble, as CSV"},
      {"kms", "check the two-point inequality on random KMS instances, as CSV"},
      {"car-path", "moment-preserving path from the measure in --input to three atoms, as CSV"},
      {"calibrate", "measure the admissible nu for each eps and write a calibration table"},
  };
  for (const auto& [name, help] : subcommands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o;
    std::ostringstream e_out;
    const int code = app.exit(e, o, e_out);
    out << o.str();
    err << e_out.str();
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    const Command cmd = command_from_name(app.get_subcommands().front()->get_name());
    flags.command = cmd;
    if (o_input->count()) flags.input = input;
    if (o_output->count()) flags.output = output;
    if (o_seed->count()) flags.seed = seed;
    if (o_eps->count()) flags.eps = eps;
    if (o_nu->count()) flags.nu = nu;
    if (o_c->count()) flags.c = c;
    if (o_a_norm->count()) flags.a_norm = a_norm;
    if (o_dims->count()) flags.dims = dims;
    if (o_nus->count()) flags.nu_targets = nu_targets;
    if (o_trials->count()) flags.trials = trials;
    if (o_stages->count()) flags.stages = stages;
    if (o_workers->count()) flags.workers = workers;
    if (o_timing->count()) flags.timing = timing;
    if (o_degenerate->count()) flags.degenerate = degenerate;

    RunConfig base;
    base.command = cmd;
    if (o_config->count()) base = config_from_json(cmd, read_json_file(config_path));
    return run(merge(base, flags), out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace almostcomm::cli
