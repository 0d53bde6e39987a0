#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "mcaudit/statistics.hpp"

namespace mcaudit {

struct Uniform {
  double min;
  double max;
};
struct Triangular {
  double min;
  double mode;
  double max;
};
struct Normal {
  double mean;
  double sd;
};
struct Lognormal {
  double log_mean;
  double log_sd;
};
struct DiscreteUniform {
  std::int64_t lo;
  std::int64_t hi;
};
/// Discrete distribution over explicit points; stored sorted by value.
struct Custom {
  std::vector<std::pair<double, double>> points;  // (value, probability)
};

/// An assumption distribution. Parameters are validated on construction.
class Distribution {
 public:
  using Variant = std::variant<Uniform, Triangular, Normal, Lognormal, DiscreteUniform, Custom>;

  Distribution(Uniform d) : dist_(d) {  // NOLINT
    require(std::isfinite(d.min) && std::isfinite(d.max) && d.min < d.max, "uniform requires min < max");
  }
  Distribution(Triangular d) : dist_(d) {  // NOLINT
    require(std::isfinite(d.min) && std::isfinite(d.max) && d.min < d.max, "triangular requires min < max");
    require(d.min <= d.mode && d.mode <= d.max, "triangular requires min <= mode <= max");
  }
  Distribution(Normal d) : dist_(d) {  // NOLINT
    require(std::isfinite(d.mean) && std::isfinite(d.sd) && d.sd > 0.0, "normal requires sd > 0");
  }
  Distribution(Lognormal d) : dist_(d) {  // NOLINT
    require(std::isfinite(d.log_mean) && std::isfinite(d.log_sd) && d.log_sd > 0.0, "lognormal requires log_sd > 0");
  }
  Distribution(DiscreteUniform d) : dist_(d) {  // NOLINT
    require(d.lo < d.hi, "discrete uniform requires lo < hi");
  }
  Distribution(Custom d) {  // NOLINT
    require(!d.points.empty(), "custom distribution needs at least one point");
    double total = 0.0;
    for (const auto& [v, p] : d.points) {
      require(std::isfinite(v), "custom values must be finite");
      require(p > 0.0, "custom probabilities must be positive");
      total += p;
    }
    require(std::abs(total - 1.0) <= 1e-9, "custom probabilities must sum to 1");
    std::stable_sort(d.points.begin(), d.points.end(), [](auto& a, auto& b) { return a.first < b.first; });
    dist_ = std::move(d);
  }

  const Variant& variant() const { return dist_; }

  std::string_view type_name() const {
    static constexpr std::string_view names[] = {"uniform", "triangular", "normal",
                                                 "lognormal", "discrete_uniform", "custom"};
    return names[dist_.index()];
  }

  /// F^-1(u) for 0 < u < 1; non-decreasing in u.
  double inverse_cdf(double u) const {
    return std::visit([u](const auto& d) { return quantile(d, u); }, dist_);
  }

  double median() const { return inverse_cdf(0.5); }

  double mean() const {
    return std::visit(
        [](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Uniform>) return 0.5 * (d.min + d.max);
          if constexpr (std::is_same_v<T, Triangular>) return (d.min + d.mode + d.max) / 3.0;
          if constexpr (std::is_same_v<T, Normal>) return d.mean;
          if constexpr (std::is_same_v<T, Lognormal>) return std::exp(d.log_mean + 0.5 * d.log_sd * d.log_sd);
          if constexpr (std::is_same_v<T, DiscreteUniform>) return 0.5 * static_cast<double>(d.lo + d.hi);
          if constexpr (std::is_same_v<T, Custom>) {
            double m = 0.0;
            for (const auto& [v, p] : d.points) m += v * p;
            return m;
          }
        },
        dist_);
  }

 private:
  static void require(bool ok, const char* message) {
    if (!ok) throw std::invalid_argument(message);
  }

  static double quantile(const Uniform& d, double u) { return d.min + u * (d.max - d.min); }

  static double quantile(const Triangular& d, double u) {
    const double width = d.max - d.min;
    const double at_mode = (d.mode - d.min) / width;
    if (u < at_mode) return d.min + std::sqrt(u * width * (d.mode - d.min));
    return d.max - std::sqrt((1.0 - u) * width * (d.max - d.mode));
  }

  static double quantile(const Normal& d, double u) { return d.mean + d.sd * normal_quantile(u); }

  static double quantile(const Lognormal& d, double u) {
    return std::exp(d.log_mean + d.log_sd * normal_quantile(u));
  }

  static double quantile(const DiscreteUniform& d, double u) {
    const double count = static_cast<double>(d.hi - d.lo + 1);
    auto k = static_cast<std::int64_t>(std::floor(u * count));
    return static_cast<double>(std::min(d.lo + k, d.hi));
  }

  static double quantile(const Custom& d, double u) {
    double cumulative = 0.0;
    for (const auto& [v, p] : d.points) {
      cumulative += p;
      if (u <= cumulative) return v;
    }
    return d.points.back().first;
  }

  Variant dist_{Uniform{0.0, 1.0}};
};

}  // namespace mcaudit
