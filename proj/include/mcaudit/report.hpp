#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcaudit/analytics.hpp"
#include "mcaudit/audit.hpp"
#include "mcaudit/document.hpp"

namespace mcaudit {

namespace detail {

/// Non-finite values become null.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
inline Json num(const std::optional<double>& v) { return v ? num(*v) : Json(nullptr); }

inline std::string csv_number(double v) { return std::isfinite(v) ? format_number(v) : ""; }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace detail

inline Json stats_to_json(const ForecastStats& s) {
  using detail::num;
  Json pct = Json::object();
  for (std::size_t i = 0; i < kPercentileLevels.size(); ++i)
    pct["p" + std::to_string(static_cast<int>(kPercentileLevels[i]))] = num(s.percentiles[i]);
  return {{"n", s.n},       {"mean", num(s.mean)},
          {"median", num(s.median)}, {"sd", num(s.sd)},
          {"variance", num(s.variance)}, {"skewness", num(s.skewness)},
          {"excess_kurtosis", num(s.excess_kurtosis)}, {"cv", num(s.cv)},
          {"min", num(s.min)},     {"max", num(s.max)},
          {"range", num(s.range)}, {"sem", num(s.sem)},
          {"percentiles", pct}};
}

inline Json histogram_to_json(const Histogram& h) {
  Json edges = Json::array();
  for (double e : h.edges) edges.push_back(detail::num(e));
  return {{"edges", edges}, {"counts", h.counts}};
}

inline Json sensitivity_to_json(const ForecastSensitivity& s) {
  Json out = Json::array();
  for (const auto& e : s.entries) {
    Json j = {{"label", e.label},
              {"spearman", detail::num(e.spearman)},
              {"pearson", detail::num(e.pearson)},
              {"contribution", detail::num(e.contribution)},
              {"correlated", e.correlated}};
    if (e.degenerate) j["note"] = "assumption column has zero variance";
    out.push_back(j);
  }
  return out;
}

inline Json calc_error_to_json(const CalcError& e) {
  return {{"kind", std::string(to_string(e.kind))}, {"cell", e.cell.to_string()}, {"detail", e.detail}};
}

inline Json tornado_to_json(const TornadoResult& t) {
  Json bars = Json::array();
  for (const auto& b : t.bars) {
    Json j = {{"label", b.label}, {"low", detail::num(b.low)}, {"high", detail::num(b.high)},
              {"swing", detail::num(b.swing)}, {"direction", b.direction}};
    if (b.error) {
      j["low"] = nullptr;
      j["high"] = nullptr;
      j["swing"] = nullptr;
      j["error"] = calc_error_to_json(*b.error);
    }
    bars.push_back(j);
  }
  Json out = {{"forecast", t.forecast},
              {"low_quantile", t.options.low_quantile},
              {"high_quantile", t.options.high_quantile},
              {"base", detail::num(t.base)},
              {"bars", bars}};
  if (t.base_error) out["base_error"] = calc_error_to_json(*t.base_error);
  return out;
}

inline Json assumptions_to_json(const std::vector<std::string>& labels, std::span<const double> values) {
  Json out = Json::object();
  for (std::size_t j = 0; j < labels.size() && j < values.size(); ++j) out[labels[j]] = detail::num(values[j]);
  return out;
}

inline Json dossier_to_json(const TrialStore& store, const CalcErrorDossier& d) {
  Json out = calc_error_to_json(d.error);
  out["trial"] = d.trial;
  out["assumptions"] = assumptions_to_json(store.assumption_labels, d.assumptions);
  return out;
}

/// The per-forecast analytics report for a completed run.
inline Json run_report(const std::string& name, const SimulationSpec& spec, const TrialStore& store,
                       const std::vector<TornadoResult>& tornados, std::size_t bins = 0) {
  Json forecasts = Json::array();
  std::optional<std::vector<ForecastSensitivity>> sens;
  if (store.completed() >= 10) sens = sensitivity(store);
  for (std::size_t f = 0; f < store.forecast_labels.size(); ++f) {
    const auto& label = store.forecast_labels[f];
    Json entry = {{"forecast", label}};
    if (store.completed() >= 2) {
      entry["stats"] = stats_to_json(forecast_stats(store, label));
      entry["histogram"] = histogram_to_json(histogram(store.forecasts.column(f), bins));
    } else {
      entry["stats"] = nullptr;
      entry["histogram"] = nullptr;
    }
    Json cert = Json::array();
    auto add_certainty = [&](double lo, double hi) {
      cert.push_back({{"lo", detail::num(lo)}, {"hi", detail::num(hi)}, {"p", certainty(store, label, lo, hi)}});
    };
    if (spec.forecasts[f].target) add_certainty(spec.forecasts[f].target->lo, spec.forecasts[f].target->hi);
    for (const auto& iv : spec.expected_intervals)
      if (iv.forecast == store.forecast_cells[f]) add_certainty(iv.lo, iv.hi);
    entry["certainty"] = cert;
    entry["sensitivity"] = sens ? sensitivity_to_json((*sens)[f]) : Json(nullptr);
    entry["tornado"] = f < tornados.size() ? tornado_to_json(tornados[f]) : Json(nullptr);
    forecasts.push_back(entry);
  }
  Json run = {{"seed", store.seed},
              {"trials", store.trials_requested},
              {"completed", store.completed()},
              {"errors", store.errors.size()}};
  if (store.halted) run["halted"] = dossier_to_json(store, *store.halted);
  return {{"model", name}, {"run", run}, {"forecasts", forecasts}};
}

inline Json finding_to_json(const AuditFinding& f, const std::vector<std::string>& assumption_labels) {
  Json cells = Json::array();
  for (const auto& c : f.cells) cells.push_back(c.to_string());
  Json evidence = Json::object();
  for (const auto& [k, v] : f.evidence) evidence[k] = detail::num(v);
  Json out = {{"kind", std::string(to_string(f.kind))},
              {"severity", std::string(to_string(f.severity))},
              {"cells", cells},
              {"message", f.message},
              {"evidence", evidence}};
  if (f.witness) out["witness"] = assumptions_to_json(assumption_labels, *f.witness);
  return out;
}

inline Json audit_to_json(const AuditReport& report, const std::vector<std::string>& assumption_labels) {
  Json findings = Json::array();
  for (const auto& f : report.findings) findings.push_back(finding_to_json(f, assumption_labels));
  Json counts = Json::object();
  for (const auto& [k, v] : report.counts) counts[k] = v;
  return {{"findings", findings},
          {"counts", counts},
          {"thresholds", {{"z", report.thresholds.z}, {"epsilon", report.thresholds.epsilon}}},
          {"run", {{"seed", report.seed}, {"trials", report.trials}, {"completed", report.completed}}}};
}

/// `trial,<assumption labels...>,<forecast labels...>`, one row per completed trial.
inline void write_trials_csv(std::ostream& out, const TrialStore& store) {
  out << "trial";
  for (const auto& l : store.assumption_labels) out << ',' << detail::csv_field(l);
  for (const auto& l : store.forecast_labels) out << ',' << detail::csv_field(l);
  out << '\n';
  for (std::size_t t = 0; t < store.completed(); ++t) {
    out << store.trial_ids[t];
    for (double v : store.assumptions.row(t)) out << ',' << detail::csv_number(v);
    for (double v : store.forecasts.row(t)) out << ',' << detail::csv_number(v);
    out << '\n';
  }
}

/// `trial,kind,cell` for every recorded or terminating error.
inline void write_errors_csv(std::ostream& out, const TrialStore& store) {
  out << "trial,kind,cell\n";
  auto line = [&](const CalcErrorDossier& d) {
    out << d.trial << ',' << to_string(d.error.kind) << ',' << d.error.cell.to_string() << '\n';
  };
  for (const auto& d : store.errors) line(d);
  if (store.halted) line(*store.halted);
}

inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "edge,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) out << detail::csv_number(h.edges[i]) << ',' << h.counts[i] << '\n';
  out << detail::csv_number(h.edges.back()) << ",\n";
}

inline void write_tornado_csv(std::ostream& out, const TornadoResult& t) {
  out << "label,low,high\n";
  for (const auto& b : t.bars) {
    out << detail::csv_field(b.label) << ',';
    if (b.error) {
      out << ",\n";
    } else {
      out << detail::csv_number(b.low) << ',' << detail::csv_number(b.high) << '\n';
    }
  }
}

inline void write_scenario_csv(std::ostream& out, const TrialStore& store, const ScenarioSet& set) {
  out << "trial";
  for (const auto& l : store.assumption_labels) out << ',' << detail::csv_field(l);
  out << ',' << detail::csv_field(set.forecast) << '\n';
  for (std::size_t i = 0; i < set.trials.size(); ++i) {
    out << set.trials[i];
    for (double v : set.assumptions[i]) out << ',' << detail::csv_number(v);
    out << ',' << detail::csv_number(set.values[i]) << '\n';
  }
}

/// File-name-safe version of a label.
inline std::string slug(const std::string& label) {
  std::string out;
  for (char c : label) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out.empty() ? "forecast" : out;
}

}  // namespace mcaudit
