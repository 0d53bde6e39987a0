#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mcaudit/analytics.hpp"
#include "mcaudit/audit.hpp"
#include "mcaudit/document.hpp"
#include "mcaudit/report.hpp"
#include "mcaudit/step_session.hpp"

namespace mcaudit::cli {

enum ExitCode : int { kClean = 0, kCalcError = 1, kAuditError = 2, kUsage = 3 };

struct GlobalFlags {
  std::optional<long long> trials;
  std::optional<std::uint64_t> seed;
  std::string out = "mcaudit-out";
};

namespace detail {

inline void print_problems(std::ostream& err, const std::vector<std::string>& problems) {
  for (const auto& p : problems) err << "error: " << p << "\n";
}

/// Loads the document and applies --trials/--seed. Returns an exit code on failure.
inline std::optional<int> load(const std::string& path, const GlobalFlags& flags, std::optional<ModelDocument>& doc,
                               std::ostream& err) {
  try {
    doc = load_document(path);
  } catch (const SchemaError& e) {
    print_problems(err, e.problems());
    return kUsage;
  } catch (const ModelError& e) {
    print_problems(err, e.problems());
    return kCalcError;
  }
  if (flags.trials) {
    if (*flags.trials < 1) {
      err << "error: --trials must be at least 1\n";
      return kUsage;
    }
    doc->spec.trials = static_cast<std::size_t>(*flags.trials);
  }
  if (flags.seed) doc->spec.seed = *flags.seed;
  if (auto problems = check_spec(doc->model, doc->spec); !problems.empty()) {
    print_problems(err, problems);
    return kUsage;
  }
  return std::nullopt;
}

inline std::filesystem::path prepare_out(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

template <typename Writer>
inline void write_with(const std::filesystem::path& path, Writer&& w) {
  std::ofstream f(path, std::ios::binary);
  w(f);
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  try {
    auto doc = load_document(path);
    out << "ok: " << doc.name << " (" << doc.model.size() << " cells, " << doc.spec.assumptions.size()
        << " assumptions, " << doc.spec.forecasts.size() << " forecasts)\n";
    return kClean;
  } catch (const SchemaError& e) {
    print_problems(err, e.problems());
    return kUsage;
  } catch (const ModelError& e) {
    print_problems(err, e.problems());
    return kCalcError;
  }
}

inline int cmd_run(const std::string& path, const GlobalFlags& flags, bool keep_going, std::size_t bins,
                   std::ostream& out, std::ostream& err) {
  std::optional<ModelDocument> doc;
  if (auto code = load(path, flags, doc, err)) return *code;
  doc->spec.stop_on_error = !keep_going;
  TrialStore store;
  try {
    store = run(doc->model, doc->spec);
  } catch (const NoSuccessfulTrials& e) {
    err << "error: " << e.what() << "\n";
    return kCalcError;
  }
  const auto dir = prepare_out(flags.out);
  const auto tornados = tornado_all(doc->model, doc->spec);
  write_file(dir / "report.json", dump(run_report(doc->name, doc->spec, store, tornados, bins)));
  write_with(dir / "trials.csv", [&](std::ostream& f) { write_trials_csv(f, store); });
  write_with(dir / "errors.csv", [&](std::ostream& f) { write_errors_csv(f, store); });
  if (store.completed() >= 1) {
    for (std::size_t f = 0; f < store.forecast_labels.size(); ++f) {
      write_with(dir / ("histogram-" + slug(store.forecast_labels[f]) + ".csv"),
                 [&](std::ostream& o) { write_histogram_csv(o, histogram(store.forecasts.column(f), bins)); });
    }
  }
  out << "completed " << store.completed() << " of " << store.trials_requested << " trials (seed " << store.seed
      << ")\n";
  if (!store.errors.empty()) out << store.errors.size() << " trial(s) raised calculation errors; see errors.csv\n";
  if (store.halted) {
    const auto dossier = dossier_to_json(store, *store.halted);
    write_file(dir / "dossier.json", dump(dossier));
    out << "halted by calculation error:\n" << dump(dossier);
    return kCalcError;
  }
  return kClean;
}

inline int cmd_tornado(const std::string& path, const GlobalFlags& flags, double low, double high, std::ostream& out,
                       std::ostream& err) {
  std::optional<ModelDocument> doc;
  if (auto code = load(path, flags, doc, err)) return *code;
  if (!(low > 0.0 && low < high && high < 1.0)) {
    err << "error: tornado quantiles must satisfy 0 < low < high < 1\n";
    return kUsage;
  }
  const auto results = tornado_all(doc->model, doc->spec, {low, high});
  const auto dir = prepare_out(flags.out);
  Json all = Json::array();
  for (const auto& t : results) {
    all.push_back(tornado_to_json(t));
    write_with(dir / ("tornado-" + slug(t.forecast) + ".csv"), [&](std::ostream& o) { write_tornado_csv(o, t); });
    out << t.forecast << " base " << (t.base ? format_number(*t.base) : std::string("error")) << "\n";
    for (const auto& b : t.bars) {
      out << "  " << b.label << ": ";
      if (b.error) {
        out << to_string(b.error->kind) << " at " << b.error->cell.to_string() << "\n";
      } else {
        out << "low " << format_number(b.low) << ", high " << format_number(b.high) << ", swing "
            << format_number(b.swing) << ", direction " << b.direction << "\n";
      }
    }
  }
  write_file(dir / "tornado.json", dump(all));
  return kClean;
}

inline int cmd_scenario(const std::string& path, const GlobalFlags& flags, const std::string& forecast, double lo,
                        double hi, std::optional<long long> apply, bool keep_going, std::ostream& out,
                        std::ostream& err) {
  std::optional<ModelDocument> doc;
  if (auto code = load(path, flags, doc, err)) return *code;
  if (lo > hi) {
    err << "error: --min must not exceed --max\n";
    return kUsage;
  }
  doc->spec.stop_on_error = !keep_going;
  TrialStore store;
  try {
    store = run(doc->model, doc->spec);
  } catch (const NoSuccessfulTrials& e) {
    err << "error: " << e.what() << "\n";
    return kCalcError;
  }
  if (!store.forecast_index(forecast)) {
    err << "error: unknown forecast '" << forecast << "'\n";
    return kUsage;
  }
  const auto set = scenario_filter(store, forecast, lo, hi);
  const auto dir = prepare_out(flags.out);
  write_with(dir / "scenario.csv", [&](std::ostream& o) { write_scenario_csv(o, store, set); });
  out << set.trials.size() << " of " << store.completed() << " completed trials have " << set.forecast << " in ["
      << format_number(lo) << ", " << format_number(hi) << "]\n";
  if (apply) {
    auto it = std::find(set.trials.begin(), set.trials.end(), static_cast<std::size_t>(std::max(0LL, *apply)));
    if (*apply < 0 || it == set.trials.end()) {
      err << "error: trial " << *apply << " is not in the scenario set\n";
      return kUsage;
    }
    const auto& values = set.assumptions[static_cast<std::size_t>(it - set.trials.begin())];
    const auto name = slug(doc->name) + ".scenario" + std::to_string(*apply) + ".json";
    write_file(dir / name, dump(bake_assumptions(*doc, values)));
    out << "wrote " << (dir / name).string() << "\n";
  }
  return store.halted ? kCalcError : kClean;
}

inline int cmd_audit(const std::string& path, const GlobalFlags& flags, const std::optional<std::string>& history_path,
                     const AuditThresholds& thresholds, std::ostream& out, std::ostream& err) {
  std::optional<ModelDocument> doc;
  if (auto code = load(path, flags, doc, err)) return *code;
  AuditOptions options;
  options.thresholds = thresholds;
  if (history_path) {
    std::ifstream in(*history_path);
    if (!in) {
      err << "error: cannot open history '" << *history_path << "'\n";
      return kUsage;
    }
    try {
      options.history = read_history_csv(in, doc->model, doc->spec);
    } catch (const std::invalid_argument& e) {
      err << "error: " << e.what() << "\n";
      return kUsage;
    }
  }
  const auto report = audit(doc->model, doc->spec, options);
  const auto labels = resolve_spec(doc->model, doc->spec).assumption_labels;
  const auto dir = prepare_out(flags.out);
  write_file(dir / "audit.json", dump(audit_to_json(report, labels)));
  if (options.history) {
    const auto bc = backcast(doc->model, doc->spec, *options.history);
    write_with(dir / "backcast.csv", [&](std::ostream& o) {
      o << "row,forecast,model,observed,residual\n";
      for (const auto& r : bc.residuals)
        o << r.row << ',' << r.forecast.to_string() << ',' << format_number(r.model) << ','
          << format_number(r.observed) << ',' << format_number(r.residual) << '\n';
    });
  }
  out << report.findings.size() << " finding(s) over " << report.completed << " completed trials (seed " << report.seed
      << ")\n";
  for (const auto& f : report.findings)
    out << "  [" << to_string(f.severity) << "] " << to_string(f.kind) << ": " << f.message << "\n";
  return report.has_errors() ? kAuditError : kClean;
}

inline int cmd_step(const std::string& path, const GlobalFlags& flags, std::istream& in, std::ostream& out,
                    std::ostream& err) {
  std::optional<ModelDocument> doc;
  if (auto code = load(path, flags, doc, err)) return *code;
  if (!doc->spec.correlation.is_identity())
    out << "note: declared correlations are applied only to full runs; single steps draw independently\n";
  StepSession session(doc->model, doc->spec);
  out << StepSession::help();
  std::string line;
  out << "> " << std::flush;
  while (std::getline(in, line)) {
    if (!session.execute(line, out)) break;
    out << "> " << std::flush;
  }
  return kClean;
}

}  // namespace detail

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monte Carlo risk analysis and logic audit for formula models", "mcaudit"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags flags;
  long long trials = 0;
  std::uint64_t seed = 0;
  auto* trials_opt = app.add_option("--trials", trials, "number of trials");
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--out", flags.out, "output directory");

  std::string path;
  auto* validate = app.add_subcommand("validate", "check a model document");
  validate->add_option("model", path, "model document")->required();

  bool keep_going = false;
  std::size_t bins = 0;
  auto* run_cmd = app.add_subcommand("run", "simulate and write report + trials CSV");
  run_cmd->add_option("model", path, "model document")->required();
  run_cmd->add_flag("--continue-on-error", keep_going, "record calculation errors and keep going");
  run_cmd->add_option("--bins", bins, "histogram bins (default ceil(sqrt n), max 100)");

  double low = 0.10, high = 0.90;
  auto* tornado_cmd = app.add_subcommand("tornado", "one-at-a-time sensitivity sweep");
  tornado_cmd->add_option("model", path, "model document")->required();
  tornado_cmd->add_option("--low", low, "low quantile");
  tornado_cmd->add_option("--high", high, "high quantile");

  std::string forecast;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  long long apply_index = -1;
  auto* scenario_cmd = app.add_subcommand("scenario", "trials whose forecast falls in a range");
  scenario_cmd->add_option("model", path, "model document")->required();
  scenario_cmd->add_option("--forecast", forecast, "forecast label or cell")->required();
  scenario_cmd->add_option("--min", lo, "lower bound (inclusive)");
  scenario_cmd->add_option("--max", hi, "upper bound (inclusive)");
  auto* apply_opt = scenario_cmd->add_option("--apply", apply_index, "write a copy of the model with this trial's inputs");
  scenario_cmd->add_flag("--continue-on-error", keep_going, "record calculation errors and keep going");

  std::string history;
  AuditThresholds thresholds;
  auto* audit_cmd = app.add_subcommand("audit", "run every logic-error detector");
  audit_cmd->add_option("model", path, "model document")->required();
  auto* history_opt = audit_cmd->add_option("--history", history, "history CSV for back-casting");
  audit_cmd->add_option("--z", thresholds.z, "noise band multiplier for rank correlation");
  audit_cmd->add_option("--epsilon", thresholds.epsilon, "relative tornado swing floor");

  auto* step_cmd = app.add_subcommand("step", "interactive single-step session");
  step_cmd->add_option("model", path, "model document")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kClean;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kClean;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  }
  if (*trials_opt) flags.trials = trials;
  if (*seed_opt) flags.seed = seed;

  try {
    if (*validate) return detail::cmd_validate(path, out, err);
    if (*run_cmd) return detail::cmd_run(path, flags, keep_going, bins, out, err);
    if (*tornado_cmd) return detail::cmd_tornado(path, flags, low, high, out, err);
    if (*scenario_cmd) {
      std::optional<long long> apply;
      if (*apply_opt) apply = apply_index;
      return detail::cmd_scenario(path, flags, forecast, lo, hi, apply, keep_going, out, err);
    }
    if (*audit_cmd) {
      std::optional<std::string> h;
      if (*history_opt) h = history;
      return detail::cmd_audit(path, flags, h, thresholds, out, err);
    }
    if (*step_cmd) return detail::cmd_step(path, flags, in, out, err);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace mcaudit::cli
