#pragma once

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mcaudit/analytics.hpp"
#include "mcaudit/simulation.hpp"

namespace mcaudit {

/// Interactive single-step driver. The only state is the next trial index;
/// trial t always uses the same draws as trial t of an uncorrelated run().
class StepSession {
 public:
  struct Step {
    std::size_t trial = 0;
    std::vector<double> assumptions;
    Evaluation evaluation;
  };

  StepSession(const Model& model, SimulationSpec spec) : model_(model), spec_(std::move(spec)) {
    resolved_ = resolve_spec(model_, spec_);
    current_ = model_.evaluate_indexed({});
  }

  std::size_t next_trial() const { return next_; }

  Step step() {
    Step s;
    s.trial = next_++;
    const auto draws = detail::sample_independent(spec_, s.trial, 1);
    s.assumptions.assign(draws.row(0).begin(), draws.row(0).end());
    s.evaluation = replay(model_, spec_, s.assumptions);
    current_ = s.evaluation;
    return s;
  }

  /// Runs the next n trials and advances the stream past them.
  TrialStore run(std::size_t n) {
    auto store = run_segment(model_, spec_, next_, n);
    next_ += store.attempted();
    return store;
  }

  void reset() {
    next_ = 0;
    current_ = model_.evaluate_indexed({});
  }

  /// Current value of a cell (NaN when the last trial failed before reaching it).
  double value(std::size_t cell) const { return current_.values[cell]; }

  /// Executes one REPL command. Returns false on `quit`.
  bool execute(std::string_view line, std::ostream& out) {
    std::istringstream in{std::string(line)};
    std::string cmd;
    in >> cmd;
    if (cmd.empty()) return true;
    if (cmd == "quit") return false;
    if (cmd == "step") {
      print_step(step(), out);
    } else if (cmd == "show" || cmd == "trace") {
      std::string name;
      in >> name;
      auto cell = model_.resolve(name);
      if (!cell) {
        out << "unknown cell '" << name << "'\n";
        return true;
      }
      out << model_.display_name(*cell) << " (" << model_.cell(*cell).to_string() << ") = " << fmt(value(*cell)) << "\n";
      if (cmd == "trace") {
        out << "  formula: " << model_.formula(*cell).render() << "\n";
        for (auto p : model_.precedents(*cell))
          out << "  " << model_.display_name(p) << " (" << model_.cell(p).to_string() << ") = " << fmt(value(p)) << "\n";
      }
    } else if (cmd == "run") {
      long long n = 0;
      if (!(in >> n) || n < 1) {
        out << "usage: run N (N >= 1)\n";
        return true;
      }
      const std::size_t first = next_;
      const auto store = run(static_cast<std::size_t>(n));
      out << "ran trials " << first << ".." << next_ - 1 << ": " << store.completed() << " completed";
      if (store.halted) {
        out << ", halted at trial " << store.halted->trial << " with " << to_string(store.halted->error.kind)
            << " at " << store.halted->error.cell.to_string();
      }
      out << "\n";
      for (std::size_t f = 0; f < store.forecast_labels.size() && store.completed() >= 2; ++f) {
        const auto s = describe(store.forecasts.column(f));
        out << "  " << store.forecast_labels[f] << ": mean " << fmt(s.mean) << ", sd " << fmt(s.sd) << ", min "
            << fmt(s.min) << ", max " << fmt(s.max) << "\n";
      }
    } else if (cmd == "reset") {
      reset();
      out << "reset to trial 0\n";
    } else {
      out << help();
    }
    return true;
  }

  static std::string help() {
    return "commands: step | show CELL | trace CELL | run N | reset | quit\n";
  }

 private:
  static std::string fmt(double v) {
    if (std::isnan(v)) return "#N/A";
    return format_number(v);
  }

  void print_step(const Step& s, std::ostream& out) const {
    out << "trial " << s.trial << "\n  assumptions:";
    for (std::size_t j = 0; j < s.assumptions.size(); ++j)
      out << " " << resolved_.assumption_labels[j] << "=" << fmt(s.assumptions[j]);
    out << "\n";
    if (s.evaluation.error) {
      const auto& e = *s.evaluation.error;
      out << "  " << to_string(e.kind) << " at " << e.cell.to_string() << ": " << e.detail << "\n";
      return;
    }
    out << "  forecasts:";
    for (std::size_t f = 0; f < resolved_.forecast_cells.size(); ++f)
      out << " " << resolved_.forecast_labels[f] << "=" << fmt(s.evaluation.values[resolved_.forecast_cells[f]]);
    out << "\n";
  }

  const Model& model_;
  SimulationSpec spec_;
  ResolvedSpec resolved_;
  std::size_t next_ = 0;
  Evaluation current_;
};

}  // namespace mcaudit
