#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mcaudit/correlation.hpp"
#include "mcaudit/distribution.hpp"
#include "mcaudit/matrix.hpp"
#include "mcaudit/model.hpp"
#include "mcaudit/random.hpp"

namespace mcaudit {

struct AssumptionDef {
  CellRef cell;
  Distribution distribution;
};

struct Interval {
  double lo = -INFINITY;
  double hi = INFINITY;
};

struct ForecastDef {
  CellRef cell;
  std::string label;  // empty: use the model's display name
  std::optional<Interval> target;
};

struct LimitDef {
  CellRef cell;
  std::optional<double> min;
  std::optional<double> max;
};

enum class Sign { Positive = 1, Negative = -1 };

struct Expectation {
  CellRef assumption;
  CellRef forecast;
  Sign sign;
};

struct ExpectedInterval {
  CellRef forecast;
  double lo;
  double hi;
};

struct SimulationSpec {
  std::vector<AssumptionDef> assumptions;
  CorrelationSpec correlation;  // empty means independent
  std::vector<ForecastDef> forecasts;
  std::vector<LimitDef> limits;
  std::vector<Expectation> expectations;
  std::vector<ExpectedInterval> expected_intervals;
  std::size_t trials = 5000;
  std::uint64_t seed = 42;
  bool stop_on_error = true;
};

/// Thrown when a spec does not fit its model; carries every problem found.
class SpecError : public std::invalid_argument {
 public:
  explicit SpecError(std::vector<std::string> problems)
      : std::invalid_argument(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : "; ") + s;
    return out;
  }
  std::vector<std::string> problems_;
};

/// Thrown by run() in continue mode when no trial completed.
class NoSuccessfulTrials : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CalcErrorDossier {
  CalcError error;
  std::size_t trial = 0;
  std::vector<double> assumptions;
};

/// Per-trial record of a simulation. Rows are completed trials in trial order.
struct TrialStore {
  std::vector<std::string> assumption_labels;
  std::vector<CellRef> assumption_cells;
  std::vector<bool> assumption_correlated;
  std::vector<std::string> forecast_labels;
  std::vector<CellRef> forecast_cells;
  std::vector<std::string> monitored_labels;
  std::vector<CellRef> monitored_cells;

  std::vector<std::size_t> trial_ids;
  Matrix assumptions;  // completed trials x assumptions (post-correlation)
  Matrix forecasts;    // completed trials x forecasts
  Matrix monitored;    // completed trials x limit cells

  std::uint64_t seed = 0;
  std::size_t trials_requested = 0;
  std::optional<CalcErrorDossier> halted;  // stop-on-error termination
  std::vector<CalcErrorDossier> errors;    // continue mode

  std::size_t completed() const { return trial_ids.size(); }
  /// Trials attempted: completed rows plus recorded or terminating errors.
  std::size_t attempted() const { return completed() + errors.size() + (halted ? 1 : 0); }

  std::optional<std::size_t> forecast_index(const std::string& label) const {
    for (std::size_t i = 0; i < forecast_labels.size(); ++i)
      if (forecast_labels[i] == label || forecast_cells[i].to_string() == label) return i;
    return std::nullopt;
  }
  std::optional<std::size_t> row_of_trial(std::size_t trial) const {
    auto it = std::lower_bound(trial_ids.begin(), trial_ids.end(), trial);
    if (it == trial_ids.end() || *it != trial) return std::nullopt;
    return static_cast<std::size_t>(it - trial_ids.begin());
  }
};

/// A spec resolved against a model: everything as model cell indices.
struct ResolvedSpec {
  std::vector<std::size_t> assumption_cells;
  std::vector<std::string> assumption_labels;
  std::vector<std::size_t> forecast_cells;
  std::vector<std::string> forecast_labels;
  std::vector<std::size_t> monitored_cells;
  std::vector<std::string> monitored_labels;
};

/// Lists every mismatch between spec and model; empty when valid.
inline std::vector<std::string> check_spec(const Model& model, const SimulationSpec& spec) {
  std::vector<std::string> problems;
  std::set<CellRef> assumed;
  for (const auto& a : spec.assumptions) {
    if (!model.index_of(a.cell)) problems.push_back("assumption cell " + a.cell.to_string() + " is not in the model");
    if (!assumed.insert(a.cell).second) problems.push_back("assumption cell " + a.cell.to_string() + " is declared twice");
  }
  std::set<CellRef> forecast_cells;
  for (const auto& f : spec.forecasts) {
    if (!model.index_of(f.cell)) problems.push_back("forecast cell " + f.cell.to_string() + " is not in the model");
    forecast_cells.insert(f.cell);
    if (f.target && !(f.target->lo <= f.target->hi))
      problems.push_back("forecast " + f.cell.to_string() + " target range is reversed");
  }
  for (const auto& l : spec.limits) {
    if (!model.index_of(l.cell)) problems.push_back("limit cell " + l.cell.to_string() + " is not in the model");
    if (!l.min && !l.max) problems.push_back("limit on " + l.cell.to_string() + " has neither min nor max");
    if (l.min && l.max && *l.min > *l.max) problems.push_back("limit on " + l.cell.to_string() + " has min > max");
  }
  std::set<std::pair<CellRef, CellRef>> pairs;
  for (const auto& e : spec.expectations) {
    if (!assumed.count(e.assumption))
      problems.push_back("expectation names " + e.assumption.to_string() + ", which is not an assumption");
    if (!forecast_cells.count(e.forecast))
      problems.push_back("expectation names " + e.forecast.to_string() + ", which is not a forecast");
    if (!pairs.insert({e.assumption, e.forecast}).second)
      problems.push_back("expectation " + e.assumption.to_string() + " -> " + e.forecast.to_string() + " declared twice");
  }
  for (const auto& iv : spec.expected_intervals) {
    if (!forecast_cells.count(iv.forecast))
      problems.push_back("expected interval names " + iv.forecast.to_string() + ", which is not a forecast");
    if (!(iv.lo <= iv.hi)) problems.push_back("expected interval on " + iv.forecast.to_string() + " is reversed");
  }
  if (spec.trials < 1) problems.push_back("trials must be at least 1");
  if (spec.correlation.size() != 0) {
    if (spec.correlation.size() != spec.assumptions.size()) {
      problems.push_back("correlation matrix size does not match assumption count");
    } else if (auto issue = validate_correlation(spec.correlation)) {
      problems.push_back("correlation: " + issue->message);
    } else if (!spec.correlation.is_identity() && spec.trials < 10 * spec.assumptions.size()) {
      problems.push_back("correlated sampling needs at least 10 trials per assumption");
    }
  }
  return problems;
}

inline ResolvedSpec resolve_spec(const Model& model, const SimulationSpec& spec) {
  if (auto problems = check_spec(model, spec); !problems.empty()) throw SpecError(std::move(problems));
  ResolvedSpec r;
  for (const auto& a : spec.assumptions) {
    const auto i = *model.index_of(a.cell);
    r.assumption_cells.push_back(i);
    r.assumption_labels.push_back(model.display_name(i));
  }
  for (const auto& f : spec.forecasts) {
    const auto i = *model.index_of(f.cell);
    r.forecast_cells.push_back(i);
    r.forecast_labels.push_back(f.label.empty() ? model.display_name(i) : f.label);
  }
  for (const auto& l : spec.limits) {
    const auto i = *model.index_of(l.cell);
    if (std::find(r.monitored_cells.begin(), r.monitored_cells.end(), i) != r.monitored_cells.end()) continue;
    r.monitored_cells.push_back(i);
    r.monitored_labels.push_back(model.display_name(i));
  }
  return r;
}

/// Evaluates the model with the assumption cells pinned to `assumptions`
/// (in spec order). Throws std::invalid_argument on a length mismatch.
inline Evaluation replay(const Model& model, const SimulationSpec& spec, std::span<const double> assumptions) {
  if (assumptions.size() != spec.assumptions.size())
    throw std::invalid_argument("replay vector has " + std::to_string(assumptions.size()) + " values, expected " +
                                std::to_string(spec.assumptions.size()));
  std::vector<std::optional<double>> pinned(model.size());
  for (std::size_t j = 0; j < spec.assumptions.size(); ++j) {
    auto i = model.index_of(spec.assumptions[j].cell);
    if (!i) throw std::invalid_argument("assumption cell " + spec.assumptions[j].cell.to_string() + " not in model");
    pinned[*i] = assumptions[j];
  }
  return model.evaluate_indexed(pinned);
}

struct RunOptions {
  unsigned threads = 0;  // 0: hardware concurrency
  bool apply_correlation = true;
};

namespace detail {

inline unsigned thread_count(unsigned requested) {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Independent draws for trials [first, first+count).
inline Matrix sample_independent(const SimulationSpec& spec, std::size_t first, std::size_t count) {
  const RandomSource src(spec.seed);
  Matrix out(count, spec.assumptions.size());
  for (std::size_t t = 0; t < count; ++t)
    for (std::size_t j = 0; j < spec.assumptions.size(); ++j)
      out(t, j) = spec.assumptions[j].distribution.inverse_cdf(uniform_for(src, first + t, j));
  return out;
}

inline TrialStore empty_store(const SimulationSpec& spec, const ResolvedSpec& r) {
  TrialStore store;
  store.assumption_labels = r.assumption_labels;
  for (std::size_t j = 0; j < spec.assumptions.size(); ++j) {
    store.assumption_cells.push_back(spec.assumptions[j].cell);
    store.assumption_correlated.push_back(spec.correlation.size() == spec.assumptions.size() &&
                                          spec.correlation.is_correlated(j));
  }
  store.forecast_labels = r.forecast_labels;
  for (const auto& f : spec.forecasts) store.forecast_cells.push_back(f.cell);
  store.monitored_labels = r.monitored_labels;
  for (const auto& l : spec.limits) {
    if (std::find(store.monitored_cells.begin(), store.monitored_cells.end(), l.cell) == store.monitored_cells.end())
      store.monitored_cells.push_back(l.cell);
  }
  store.assumptions = Matrix(0, spec.assumptions.size());
  store.forecasts = Matrix(0, spec.forecasts.size());
  store.monitored = Matrix(0, store.monitored_cells.size());
  store.seed = spec.seed;
  return store;
}

/// Evaluates pre-sampled rows (trial ids first..first+rows) into the store.
inline void evaluate_rows(const Model& model, const SimulationSpec& spec, const ResolvedSpec& r, const Matrix& samples,
                          std::size_t first, unsigned threads, TrialStore& store) {
  const std::size_t n = samples.rows();
  const std::size_t k = samples.cols();
  const unsigned workers = std::max(1u, std::min<unsigned>(thread_count(threads), static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  const std::size_t block = spec.stop_on_error ? std::max<std::size_t>(64, 64 * workers) : n;

  std::vector<Evaluation> results;
  for (std::size_t start = 0; start < n; start += block) {
    const std::size_t stop = std::min(n, start + block);
    results.assign(stop - start, Evaluation{});
    auto work = [&](unsigned w) {
      std::vector<std::optional<double>> pinned(model.size());
      for (std::size_t t = start + w; t < stop; t += workers) {
        for (std::size_t j = 0; j < k; ++j) pinned[r.assumption_cells[j]] = samples(t, j);
        results[t - start] = model.evaluate_indexed(pinned);
      }
    };
    if (workers == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
      for (auto& th : pool) th.join();
    }

    std::vector<double> fc(r.forecast_cells.size());
    std::vector<double> mon(r.monitored_cells.size());
    for (std::size_t t = start; t < stop; ++t) {
      const auto& ev = results[t - start];
      const auto row = samples.row(t);
      if (ev.error) {
        CalcErrorDossier dossier{*ev.error, first + t, std::vector<double>(row.begin(), row.end())};
        if (spec.stop_on_error) {
          store.halted = std::move(dossier);
          return;
        }
        store.errors.push_back(std::move(dossier));
        continue;
      }
      for (std::size_t f = 0; f < fc.size(); ++f) fc[f] = ev.values[r.forecast_cells[f]];
      for (std::size_t m = 0; m < mon.size(); ++m) mon[m] = ev.values[r.monitored_cells[m]];
      store.trial_ids.push_back(first + t);
      store.assumptions.append_row(row);
      store.forecasts.append_row(fc);
      store.monitored.append_row(mon);
    }
  }
}

}  // namespace detail

/// Runs trials [first, first+count) with independent draws. Used by run() when
/// no correlation is declared and by single-step sessions.
inline TrialStore run_segment(const Model& model, const SimulationSpec& spec, std::size_t first, std::size_t count,
                              const RunOptions& options = {}) {
  const auto r = resolve_spec(model, spec);
  auto store = detail::empty_store(spec, r);
  store.trials_requested = count;
  const auto samples = detail::sample_independent(spec, first, count);
  detail::evaluate_rows(model, spec, r, samples, first, options.threads, store);
  return store;
}

/// Full simulation: sample, induce declared rank correlations over the whole
/// batch, evaluate every trial. Throws SpecError on a spec/model mismatch and
/// NoSuccessfulTrials when every trial errs in continue mode.
inline TrialStore run(const Model& model, const SimulationSpec& spec, const RunOptions& options = {}) {
  const auto r = resolve_spec(model, spec);
  auto store = detail::empty_store(spec, r);
  store.trials_requested = spec.trials;
  auto samples = detail::sample_independent(spec, 0, spec.trials);
  if (options.apply_correlation && spec.correlation.size() == spec.assumptions.size() &&
      !spec.correlation.is_identity()) {
    samples = induce_rank_correlation(samples, spec.correlation, RandomSource(spec.seed).derive(0xC0AA));
  }
  detail::evaluate_rows(model, spec, r, samples, 0, options.threads, store);
  if (!spec.stop_on_error && store.completed() == 0)
    throw NoSuccessfulTrials("all " + std::to_string(spec.trials) + " trials raised calculation errors");
  return store;
}

}  // namespace mcaudit
