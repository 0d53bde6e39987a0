#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mcaudit/analytics.hpp"
#include "mcaudit/simulation.hpp"

namespace mcaudit {

enum class FindingKind {
  Disconnected,
  SignMismatch,
  CorrelationMasking,
  LimitViolation,
  IntervalBreach,
  ErrorCensus,
  BackcastFailure
};

inline std::string_view to_string(FindingKind k) {
  switch (k) {
    case FindingKind::Disconnected: return "Disconnected";
    case FindingKind::SignMismatch: return "SignMismatch";
    case FindingKind::CorrelationMasking: return "CorrelationMasking";
    case FindingKind::LimitViolation: return "LimitViolation";
    case FindingKind::IntervalBreach: return "IntervalBreach";
    case FindingKind::ErrorCensus: return "ErrorCensus";
    case FindingKind::BackcastFailure: return "BackcastFailure";
  }
  return "?";
}

enum class Severity { Warning, Error };

inline std::string_view to_string(Severity s) { return s == Severity::Error ? "error" : "warning"; }

struct AuditFinding {
  FindingKind kind;
  Severity severity;
  std::vector<CellRef> cells;  // subject cells, assumption first where applicable
  std::string message;
  std::vector<std::pair<std::string, double>> evidence;  // ordered
  std::optional<std::vector<double>> witness;           // assumption vector, spec order

  std::optional<double> evidence_value(std::string_view key) const {
    for (const auto& [k, v] : evidence)
      if (k == key) return v;
    return std::nullopt;
  }
};

struct AuditThresholds {
  double z = 2.58;        // |rho| noise band is z / sqrt(n)
  double epsilon = 1e-6;  // swing floor relative to the forecast's observed range
};

namespace detail {

inline const ForecastSensitivity* find_sensitivity(const std::vector<ForecastSensitivity>& all, const CellRef& f) {
  for (const auto& s : all)
    if (s.cell == f) return &s;
  return nullptr;
}
inline const TornadoResult* find_tornado(const std::vector<TornadoResult>& all, const CellRef& f) {
  for (const auto& t : all)
    if (t.cell == f) return &t;
  return nullptr;
}
inline const SensitivityEntry* find_entry(const ForecastSensitivity& s, const CellRef& a) {
  for (const auto& e : s.entries)
    if (e.assumption == a) return &e;
  return nullptr;
}
inline const TornadoBar* find_bar(const TornadoResult& t, const CellRef& a) {
  for (const auto& b : t.bars)
    if (b.assumption == a) return &b;
  return nullptr;
}

}  // namespace detail

/// Flags (assumption, forecast) pairs with no detectable influence: rank
/// correlation inside the noise band AND a negligible tornado swing. Pairs with
/// a declared expectation are errors, the rest warnings.
inline std::vector<AuditFinding> detect_disconnected(const TrialStore& store,
                                                     const std::vector<ForecastSensitivity>& sens,
                                                     const std::vector<TornadoResult>& tornados,
                                                     const AuditThresholds& th = {},
                                                     const std::vector<Expectation>& expectations = {}) {
  std::vector<AuditFinding> out;
  const std::size_t n = store.completed();
  if (n < 100) throw std::invalid_argument("disconnected-input detection needs at least 100 completed trials");
  const double rho_band = th.z * std::sqrt(1.0 / static_cast<double>(n));
  for (std::size_t f = 0; f < store.forecast_cells.size(); ++f) {
    const auto* s = detail::find_sensitivity(sens, store.forecast_cells[f]);
    const auto* t = detail::find_tornado(tornados, store.forecast_cells[f]);
    if (!s || !t) continue;
    const auto column = store.forecasts.column(f);
    const auto [mn, mx] = std::minmax_element(column.begin(), column.end());
    const double range = *mx - *mn;
    for (std::size_t j = 0; j < store.assumption_cells.size(); ++j) {
      const auto& a = store.assumption_cells[j];
      const auto* e = detail::find_entry(*s, a);
      const auto* bar = detail::find_bar(*t, a);
      if (!e || !bar || bar->error) continue;
      if (std::abs(e->spearman) >= rho_band) continue;
      if (bar->swing > th.epsilon * range) continue;
      // a declared direction is a claim of influence, so its absence is a contradiction
      const bool declared = std::any_of(expectations.begin(), expectations.end(), [&](const Expectation& ex) {
        return ex.assumption == a && ex.forecast == store.forecast_cells[f];
      });
      AuditFinding finding{FindingKind::Disconnected, declared ? Severity::Error : Severity::Warning,
                           {a, store.forecast_cells[f]},
                           store.assumption_labels[j] + " has no detectable effect on " + store.forecast_labels[f],
                           {{"spearman", e->spearman},
                            {"rho_band", rho_band},
                            {"swing", bar->swing},
                            {"swing_floor", th.epsilon * range},
                            {"forecast_range", range}},
                           bar->high_inputs};
      out.push_back(std::move(finding));
    }
  }
  return out;
}

/// Compares declared directions against the isolated (tornado) direction, and
/// flags rank-correlation signs that only disagree because of declared correlations.
inline std::vector<AuditFinding> check_signs(const std::vector<ForecastSensitivity>& sens,
                                             const std::vector<TornadoResult>& tornados,
                                             const std::vector<Expectation>& expectations) {
  std::vector<AuditFinding> out;
  for (const auto& ex : expectations) {
    const auto* s = detail::find_sensitivity(sens, ex.forecast);
    const auto* t = detail::find_tornado(tornados, ex.forecast);
    const SensitivityEntry* e = s ? detail::find_entry(*s, ex.assumption) : nullptr;
    const TornadoBar* bar = t ? detail::find_bar(*t, ex.assumption) : nullptr;
    if (!e || !bar)
      throw std::invalid_argument("expectation " + ex.assumption.to_string() + " -> " + ex.forecast.to_string() +
                                  " has no matching sensitivity/tornado result");
    if (bar->error || bar->direction == 0) continue;
    const int declared = static_cast<int>(ex.sign);
    const int rank_sign = e->spearman > 0 ? 1 : (e->spearman < 0 ? -1 : 0);
    const std::string pair = bar->label + " -> " + s->forecast;
    if (bar->direction != declared) {
      out.push_back({FindingKind::SignMismatch, Severity::Error, {ex.assumption, ex.forecast},
                     pair + ": isolated effect contradicts the declared direction",
                     {{"declared", static_cast<double>(declared)},
                      {"tornado_direction", static_cast<double>(bar->direction)},
                      {"tornado_low", bar->low},
                      {"tornado_high", bar->high},
                      {"spearman", e->spearman}},
                     std::nullopt});
    } else if (rank_sign != 0 && rank_sign != declared && e->correlated) {
      out.push_back({FindingKind::CorrelationMasking, Severity::Warning, {ex.assumption, ex.forecast},
                     pair + ": rank correlation sign is masked by a declared input correlation; "
                            "the isolated effect matches the declaration",
                     {{"declared", static_cast<double>(declared)},
                      {"tornado_direction", static_cast<double>(bar->direction)},
                      {"spearman", e->spearman}},
                     std::nullopt});
    }
  }
  return out;
}

/// One finding per limit cell that left its theoretical bounds in any trial.
inline std::vector<AuditFinding> check_limits(const TrialStore& store, const std::vector<LimitDef>& limits) {
  std::vector<AuditFinding> out;
  for (const auto& lim : limits) {
    auto it = std::find(store.monitored_cells.begin(), store.monitored_cells.end(), lim.cell);
    if (it == store.monitored_cells.end())
      throw std::invalid_argument("limit cell " + lim.cell.to_string() + " was not monitored");
    const auto m = static_cast<std::size_t>(it - store.monitored_cells.begin());
    std::size_t count = 0;
    double worst_excess = 0.0;
    std::size_t worst_row = 0;
    for (std::size_t t = 0; t < store.completed(); ++t) {
      const double v = store.monitored(t, m);
      double excess = 0.0;
      if (lim.min && v < *lim.min) excess = *lim.min - v;
      if (lim.max && v > *lim.max) excess = v - *lim.max;
      if (excess <= 0.0) continue;
      ++count;
      if (excess > worst_excess) {
        worst_excess = excess;
        worst_row = t;
      }
    }
    if (count == 0) continue;
    const auto row = store.assumptions.row(worst_row);
    out.push_back({FindingKind::LimitViolation, Severity::Error, {lim.cell},
                   store.monitored_labels[m] + " left its theoretical limits in " + std::to_string(count) + " trial(s)",
                   {{"violations", static_cast<double>(count)},
                    {"rate", static_cast<double>(count) / static_cast<double>(store.completed())},
                    {"worst_value", store.monitored(worst_row, m)},
                    {"worst_trial", static_cast<double>(store.trial_ids[worst_row])},
                    {"limit_min", lim.min.value_or(-INFINITY)},
                    {"limit_max", lim.max.value_or(INFINITY)}},
                   std::vector<double>(row.begin(), row.end())});
  }
  return out;
}

/// Observed forecast range must sit inside each declared interval.
inline std::vector<AuditFinding> check_intervals(const TrialStore& store, const std::vector<ExpectedInterval>& intervals) {
  std::vector<AuditFinding> out;
  for (const auto& iv : intervals) {
    auto it = std::find(store.forecast_cells.begin(), store.forecast_cells.end(), iv.forecast);
    if (it == store.forecast_cells.end()) throw std::invalid_argument("unknown forecast " + iv.forecast.to_string());
    const auto f = static_cast<std::size_t>(it - store.forecast_cells.begin());
    if (store.completed() == 0) continue;
    std::size_t outside = 0;
    double lo = INFINITY, hi = -INFINITY, worst = 0.0;
    std::size_t worst_row = 0;
    for (std::size_t t = 0; t < store.completed(); ++t) {
      const double v = store.forecasts(t, f);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      const double excess = v < iv.lo ? iv.lo - v : (v > iv.hi ? v - iv.hi : 0.0);
      if (excess > 0.0) {
        ++outside;
        if (excess > worst) worst = excess, worst_row = t;
      }
    }
    if (outside == 0) continue;
    const auto row = store.assumptions.row(worst_row);
    out.push_back({FindingKind::IntervalBreach, Severity::Warning, {iv.forecast},
                   store.forecast_labels[f] + " ranged outside its declared interval",
                   {{"declared_lo", iv.lo},
                    {"declared_hi", iv.hi},
                    {"observed_min", lo},
                    {"observed_max", hi},
                    {"exceedance", static_cast<double>(outside) / static_cast<double>(store.completed())},
                    {"worst_trial", static_cast<double>(store.trial_ids[worst_row])}},
                   std::vector<double>(row.begin(), row.end())});
  }
  return out;
}

/// Counts recorded calculation errors per (cell, kind), each with one replayable dossier.
inline std::vector<AuditFinding> error_census(const TrialStore& store) {
  std::map<std::pair<CellRef, int>, std::vector<const CalcErrorDossier*>> groups;
  for (const auto& d : store.errors) groups[{d.error.cell, static_cast<int>(d.error.kind)}].push_back(&d);
  if (store.halted) groups[{store.halted->error.cell, static_cast<int>(store.halted->error.kind)}].push_back(&*store.halted);
  std::vector<AuditFinding> out;
  const double attempted = static_cast<double>(store.attempted());
  for (const auto& [key, list] : groups) {
    const auto& first = *list.front();
    out.push_back({FindingKind::ErrorCensus, Severity::Error, {key.first},
                   std::string(to_string(first.error.kind)) + " at " + key.first.to_string() + " in " +
                       std::to_string(list.size()) + " trial(s): " + first.error.detail,
                   {{"count", static_cast<double>(list.size())},
                    {"rate", static_cast<double>(list.size()) / attempted},
                    {"witness_trial", static_cast<double>(first.trial)}},
                   first.assumptions});
  }
  return out;
}

/// Historical input records; columns follow the spec's assumption order.
struct History {
  std::vector<std::vector<double>> rows;
  std::vector<CellRef> observed_forecasts;                  // optional trailing columns
  std::vector<std::vector<std::optional<double>>> observed;  // per row, per observed forecast
};

struct ResidualRow {
  std::size_t row = 0;
  CellRef forecast;
  double model = 0.0;
  double observed = 0.0;
  double residual = 0.0;
};

struct BackcastResult {
  std::vector<AuditFinding> findings;
  std::vector<ResidualRow> residuals;
  std::vector<std::pair<CellRef, double>> mean_abs_residual;
  std::size_t resampled_draws = 0;
  std::size_t resampled_failures = 0;
};

/// Parses a history CSV whose header names assumptions (by label or address) and
/// optionally forecasts. Empty fields in forecast columns mean "not observed".
inline History read_history_csv(std::istream& in, const Model& model, const SimulationSpec& spec) {
  const auto r = resolve_spec(model, spec);
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("history is empty");
  const auto header = split(line);
  const std::size_t k = spec.assumptions.size();
  std::vector<std::size_t> column_of(k, SIZE_MAX);
  std::vector<std::pair<std::size_t, CellRef>> forecast_columns;
  for (std::size_t c = 0; c < header.size(); ++c) {
    bool matched = false;
    for (std::size_t j = 0; j < k; ++j) {
      if (header[c] == r.assumption_labels[j] || header[c] == spec.assumptions[j].cell.to_string()) {
        column_of[j] = c;
        matched = true;
      }
    }
    for (std::size_t f = 0; f < spec.forecasts.size() && !matched; ++f) {
      if (header[c] == r.forecast_labels[f] || header[c] == spec.forecasts[f].cell.to_string()) {
        forecast_columns.emplace_back(c, spec.forecasts[f].cell);
        matched = true;
      }
    }
    if (!matched) throw std::invalid_argument("history column '" + header[c] + "' matches no assumption or forecast");
  }
  for (std::size_t j = 0; j < k; ++j)
    if (column_of[j] == SIZE_MAX) throw std::invalid_argument("history lacks a column for " + r.assumption_labels[j]);
  History h;
  for (const auto& [c, cell] : forecast_columns) h.observed_forecasts.push_back(cell);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split(line);
    if (fields.size() != header.size())
      throw std::invalid_argument("history line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                                  " fields, expected " + std::to_string(header.size()));
    auto number = [&](const std::string& s) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size() || s.empty())
        throw std::invalid_argument("history line " + std::to_string(line_no) + ": '" + s + "' is not a number");
      return v;
    };
    std::vector<double> row(k);
    for (std::size_t j = 0; j < k; ++j) row[j] = number(fields[column_of[j]]);
    std::vector<std::optional<double>> obs;
    for (const auto& [c, cell] : forecast_columns) {
      if (fields[c].empty()) {
        obs.emplace_back(std::nullopt);
      } else {
        obs.emplace_back(number(fields[c]));
      }
    }
    h.rows.push_back(std::move(row));
    h.observed.push_back(std::move(obs));
  }
  if (h.rows.empty()) throw std::invalid_argument("history has no records");
  return h;
}

/// Replays every historical record through the model; resamples records
/// uniformly when the spec asks for more trials than there are records.
inline BackcastResult backcast(const Model& model, const SimulationSpec& spec, const History& history) {
  if (history.rows.empty()) throw std::invalid_argument("history has no records");
  const auto r = resolve_spec(model, spec);
  for (const auto& row : history.rows)
    if (row.size() != spec.assumptions.size()) throw std::invalid_argument("history row width does not match assumptions");

  BackcastResult result;
  std::vector<bool> failed(history.rows.size(), false);
  std::vector<double> abs_sum(history.observed_forecasts.size(), 0.0);
  std::vector<std::size_t> abs_n(history.observed_forecasts.size(), 0);

  for (std::size_t i = 0; i < history.rows.size(); ++i) {
    const auto ev = replay(model, spec, history.rows[i]);
    if (ev.error) {
      failed[i] = true;
      result.findings.push_back({FindingKind::BackcastFailure, Severity::Error, {ev.error->cell},
                                 "history row " + std::to_string(i) + " raises " +
                                     std::string(to_string(ev.error->kind)) + " at " + ev.error->cell.to_string(),
                                 {{"row", static_cast<double>(i)}, {"kind", static_cast<double>(ev.error->kind)}},
                                 history.rows[i]});
      continue;
    }
    for (const auto& lim : spec.limits) {
      const double v = ev.values[*model.index_of(lim.cell)];
      if ((lim.min && v < *lim.min) || (lim.max && v > *lim.max)) {
        failed[i] = true;
        result.findings.push_back({FindingKind::BackcastFailure, Severity::Error, {lim.cell},
                                   "history row " + std::to_string(i) + " drives " + lim.cell.to_string() +
                                       " outside its limits",
                                   {{"row", static_cast<double>(i)}, {"value", v}},
                                   history.rows[i]});
      }
    }
    for (std::size_t f = 0; f < history.observed_forecasts.size(); ++f) {
      if (i >= history.observed.size() || !history.observed[i][f]) continue;
      const double modeled = ev.values[*model.index_of(history.observed_forecasts[f])];
      const double observed = *history.observed[i][f];
      result.residuals.push_back({i, history.observed_forecasts[f], modeled, observed, modeled - observed});
      abs_sum[f] += std::abs(modeled - observed);
      abs_n[f]++;
    }
  }
  for (std::size_t f = 0; f < history.observed_forecasts.size(); ++f)
    if (abs_n[f] > 0) result.mean_abs_residual.emplace_back(history.observed_forecasts[f], abs_sum[f] / static_cast<double>(abs_n[f]));

  if (spec.trials > history.rows.size()) {
    const RandomSource pick = RandomSource(spec.seed).derive(0xBAC4);
    for (std::size_t t = 0; t < spec.trials; ++t) {
      auto row = static_cast<std::size_t>(pick.uniform(t, 0) * static_cast<double>(history.rows.size()));
      row = std::min(row, history.rows.size() - 1);
      ++result.resampled_draws;
      if (failed[row]) ++result.resampled_failures;
    }
  }
  (void)r;
  return result;
}

struct AuditReport {
  std::vector<AuditFinding> findings;  // ordered by detector kind
  std::map<std::string, std::size_t> counts;
  AuditThresholds thresholds;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::size_t completed = 0;

  bool has_errors() const {
    return std::any_of(findings.begin(), findings.end(), [](const auto& f) { return f.severity == Severity::Error; });
  }
  std::size_t count(FindingKind k) const {
    auto it = counts.find(std::string(to_string(k)));
    return it == counts.end() ? 0 : it->second;
  }
};

struct AuditOptions {
  AuditThresholds thresholds;
  TornadoOptions tornado;
  std::optional<History> history;
  RunOptions run;
};

/// Runs the simulation in continue-on-error mode and every detector over it.
inline AuditReport audit(const Model& model, SimulationSpec spec, const AuditOptions& options = {}) {
  spec.stop_on_error = false;
  AuditReport report;
  report.thresholds = options.thresholds;
  report.seed = spec.seed;
  report.trials = spec.trials;

  const auto tornados = tornado_all(model, spec, options.tornado);
  std::vector<AuditFinding> all;
  auto append = [&](std::vector<AuditFinding> v) {
    for (auto& f : v) all.push_back(std::move(f));
  };

  std::optional<TrialStore> store;
  try {
    store = run(model, spec, options.run);
  } catch (const NoSuccessfulTrials&) {
    store = run_segment(model, spec, 0, spec.trials, options.run);
  }
  report.completed = store->completed();
  if (store->completed() >= 100) {
    const auto sens = sensitivity(*store);
    append(detect_disconnected(*store, sens, tornados, options.thresholds, spec.expectations));
    append(check_signs(sens, tornados, spec.expectations));
  }
  append(check_limits(*store, spec.limits));
  append(check_intervals(*store, spec.expected_intervals));
  append(error_census(*store));
  if (options.history) append(backcast(model, spec, *options.history).findings);

  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.kind < b.kind; });
  for (const auto& f : all) report.counts[std::string(to_string(f.kind))]++;
  report.findings = std::move(all);
  return report;
}

}  // namespace mcaudit
