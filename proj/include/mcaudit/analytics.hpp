#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcaudit/simulation.hpp"
#include "mcaudit/statistics.hpp"

namespace mcaudit {

inline constexpr std::array<double, 9> kPercentileLevels = {1, 5, 10, 25, 50, 75, 90, 95, 99};

struct ForecastStats {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
  double variance = 0.0;
  std::optional<double> skewness;         // undefined for zero spread
  std::optional<double> excess_kurtosis;  // undefined for zero spread
  std::optional<double> cv;               // undefined for zero mean
  double min = 0.0;
  double max = 0.0;
  double range = 0.0;
  double sem = 0.0;
  std::array<double, kPercentileLevels.size()> percentiles{};
};

/// Linear interpolation between closest ranks on sorted data, level p in [0,1].
inline double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty data");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// Descriptive statistics with population (n-denominator) moments.
inline ForecastStats describe(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("statistics need at least two values");
  ForecastStats s;
  s.n = values.size();
  const double n = static_cast<double>(s.n);
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - s.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.variance = m2;
  s.sd = std::sqrt(m2);
  if (m2 > 0.0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  if (s.mean != 0.0) s.cv = s.sd / s.mean;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.range = s.max - s.min;
  s.sem = s.sd / std::sqrt(n);
  s.median = percentile_sorted(sorted, 0.5);
  for (std::size_t i = 0; i < kPercentileLevels.size(); ++i)
    s.percentiles[i] = percentile_sorted(sorted, kPercentileLevels[i] / 100.0);
  return s;
}

namespace detail {

inline std::size_t require_forecast(const TrialStore& store, const std::string& label) {
  auto f = store.forecast_index(label);
  if (!f) throw std::invalid_argument("unknown forecast '" + label + "'");
  return *f;
}

}  // namespace detail

inline ForecastStats forecast_stats(const TrialStore& store, const std::string& forecast) {
  const auto f = detail::require_forecast(store, forecast);
  return describe(store.forecasts.column(f));
}

struct Histogram {
  std::vector<double> edges;  // bins + 1, strictly increasing
  std::vector<std::size_t> counts;
};

inline std::size_t default_bin_count(std::size_t n) {
  const auto bins = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  return std::clamp<std::size_t>(bins, 1, 100);
}

/// Uniform-width bins spanning [min, max]; the last bin is closed.
inline Histogram histogram(std::span<const double> values, std::size_t bins = 0) {
  if (values.empty()) throw std::invalid_argument("histogram of empty data");
  if (bins == 0) bins = default_bin_count(values.size());
  auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(i == bins ? hi : lo + width * static_cast<double>(i));
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto bin = static_cast<std::size_t>(std::floor((v - lo) / width));
    h.counts[std::min(bin, bins - 1)]++;
  }
  return h;
}

/// Fraction of completed trials with lo <= value <= hi.
inline double certainty(const TrialStore& store, const std::string& forecast, double lo = -INFINITY,
                        double hi = INFINITY) {
  if (lo > hi) throw std::invalid_argument("certainty bounds are reversed");
  const auto f = detail::require_forecast(store, forecast);
  if (store.completed() == 0) return 0.0;
  std::size_t inside = 0;
  for (std::size_t t = 0; t < store.completed(); ++t) {
    const double v = store.forecasts(t, f);
    if (v >= lo && v <= hi) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(store.completed());
}

struct SensitivityEntry {
  std::string label;
  CellRef assumption;
  double spearman = 0.0;
  double pearson = 0.0;
  double contribution = 0.0;  // sign(rho) * rho^2 / sum rho^2
  bool correlated = false;
  bool degenerate = false;  // assumption column had no spread
};

struct ForecastSensitivity {
  std::string forecast;
  CellRef cell;
  std::vector<SensitivityEntry> entries;  // sorted by |spearman| descending
};

inline std::vector<ForecastSensitivity> sensitivity(const TrialStore& store) {
  if (store.completed() < 10) throw std::invalid_argument("sensitivity needs at least 10 completed trials");
  std::vector<std::vector<double>> a_cols, a_ranks;
  for (std::size_t j = 0; j < store.assumption_labels.size(); ++j) {
    a_cols.push_back(store.assumptions.column(j));
    a_ranks.push_back(average_ranks(a_cols.back()));
  }
  std::vector<ForecastSensitivity> out;
  for (std::size_t f = 0; f < store.forecast_labels.size(); ++f) {
    const auto fc = store.forecasts.column(f);
    const auto fr = average_ranks(fc);
    ForecastSensitivity fs{store.forecast_labels[f], store.forecast_cells[f], {}};
    double total = 0.0;
    for (std::size_t j = 0; j < a_cols.size(); ++j) {
      SensitivityEntry e;
      e.label = store.assumption_labels[j];
      e.assumption = store.assumption_cells[j];
      e.correlated = store.assumption_correlated[j];
      const auto [mn, mx] = std::minmax_element(a_cols[j].begin(), a_cols[j].end());
      e.degenerate = !(*mx > *mn);
      if (!e.degenerate) {
        e.spearman = pearson(a_ranks[j], fr);
        e.pearson = pearson(a_cols[j], fc);
      }
      total += e.spearman * e.spearman;
      fs.entries.push_back(std::move(e));
    }
    for (auto& e : fs.entries)
      if (total > 0.0) e.contribution = (e.spearman < 0 ? -1.0 : 1.0) * e.spearman * e.spearman / total;
    std::stable_sort(fs.entries.begin(), fs.entries.end(),
                     [](const auto& a, const auto& b) { return std::abs(a.spearman) > std::abs(b.spearman); });
    out.push_back(std::move(fs));
  }
  return out;
}

struct TornadoOptions {
  double low_quantile = 0.10;
  double high_quantile = 0.90;
};

struct TornadoBar {
  std::string label;
  CellRef assumption;
  std::size_t assumption_index = 0;
  double low = 0.0;   // forecast with this assumption at its low quantile
  double high = 0.0;  // ... at its high quantile
  double swing = 0.0;
  int direction = 0;  // sign(high - low)
  std::vector<double> low_inputs;
  std::vector<double> high_inputs;
  std::optional<CalcError> error;
};

struct TornadoResult {
  std::string forecast;
  CellRef cell;
  std::optional<double> base;
  std::optional<CalcError> base_error;
  std::vector<double> base_inputs;  // every assumption at its median
  std::vector<TornadoBar> bars;     // by swing descending; errored bars last
  TornadoOptions options;
};

/// One-at-a-time sweeps for every forecast: each assumption moved to its low and
/// high quantile with the others held at their medians. Correlations are ignored.
inline std::vector<TornadoResult> tornado_all(const Model& model, const SimulationSpec& spec,
                                              const TornadoOptions& options = {}) {
  if (!(options.low_quantile > 0.0 && options.low_quantile < options.high_quantile && options.high_quantile < 1.0))
    throw std::invalid_argument("tornado quantiles must satisfy 0 < low < high < 1");
  const auto r = resolve_spec(model, spec);
  const std::size_t k = spec.assumptions.size();
  std::vector<double> medians(k);
  for (std::size_t j = 0; j < k; ++j) medians[j] = spec.assumptions[j].distribution.median();

  const auto base = replay(model, spec, medians);
  std::vector<Evaluation> lows, highs;
  std::vector<std::vector<double>> low_inputs, high_inputs;
  for (std::size_t j = 0; j < k; ++j) {
    auto lo = medians;
    auto hi = medians;
    lo[j] = spec.assumptions[j].distribution.inverse_cdf(options.low_quantile);
    hi[j] = spec.assumptions[j].distribution.inverse_cdf(options.high_quantile);
    lows.push_back(replay(model, spec, lo));
    highs.push_back(replay(model, spec, hi));
    low_inputs.push_back(std::move(lo));
    high_inputs.push_back(std::move(hi));
  }

  std::vector<TornadoResult> out;
  for (std::size_t f = 0; f < spec.forecasts.size(); ++f) {
    const auto cell = r.forecast_cells[f];
    TornadoResult result;
    result.forecast = r.forecast_labels[f];
    result.cell = spec.forecasts[f].cell;
    result.options = options;
    result.base_inputs = medians;
    if (base.error) {
      result.base_error = base.error;
    } else {
      result.base = base.values[cell];
    }
    for (std::size_t j = 0; j < k; ++j) {
      TornadoBar bar;
      bar.label = r.assumption_labels[j];
      bar.assumption = spec.assumptions[j].cell;
      bar.assumption_index = j;
      bar.low_inputs = low_inputs[j];
      bar.high_inputs = high_inputs[j];
      if (lows[j].error) {
        bar.error = lows[j].error;
      } else if (highs[j].error) {
        bar.error = highs[j].error;
      } else {
        bar.low = lows[j].values[cell];
        bar.high = highs[j].values[cell];
        bar.swing = std::abs(bar.high - bar.low);
        bar.direction = bar.high > bar.low ? 1 : (bar.high < bar.low ? -1 : 0);
      }
      result.bars.push_back(std::move(bar));
    }
    std::stable_sort(result.bars.begin(), result.bars.end(), [](const auto& a, const auto& b) {
      if (a.error.has_value() != b.error.has_value()) return !a.error.has_value();
      return a.swing > b.swing;
    });
    out.push_back(std::move(result));
  }
  return out;
}

inline TornadoResult tornado(const Model& model, const SimulationSpec& spec, const std::string& forecast,
                             const TornadoOptions& options = {}) {
  for (auto& t : tornado_all(model, spec, options))
    if (t.forecast == forecast || t.cell.to_string() == forecast) return t;
  throw std::invalid_argument("unknown forecast '" + forecast + "'");
}

struct ScenarioSet {
  std::string forecast;
  std::vector<std::size_t> trials;
  std::vector<std::vector<double>> assumptions;
  std::vector<double> values;
};

/// Every completed trial whose forecast lies in [lo, hi].
inline ScenarioSet scenario_filter(const TrialStore& store, const std::string& forecast, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("scenario bounds are reversed");
  const auto f = detail::require_forecast(store, forecast);
  ScenarioSet out{store.forecast_labels[f], {}, {}, {}};
  for (std::size_t t = 0; t < store.completed(); ++t) {
    const double v = store.forecasts(t, f);
    if (v < lo || v > hi) continue;
    const auto row = store.assumptions.row(t);
    out.trials.push_back(store.trial_ids[t]);
    out.assumptions.emplace_back(row.begin(), row.end());
    out.values.push_back(v);
  }
  return out;
}

}  // namespace mcaudit
