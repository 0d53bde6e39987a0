#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mcaudit/cell_ref.hpp"
#include "mcaudit/expected.hpp"

namespace mcaudit {

enum class CalcErrorKind { DivByZero, DomainError, LookupMiss, NonConvergent, RefError };

inline std::string_view to_string(CalcErrorKind kind) {
  switch (kind) {
    case CalcErrorKind::DivByZero: return "DivByZero";
    case CalcErrorKind::DomainError: return "DomainError";
    case CalcErrorKind::LookupMiss: return "LookupMiss";
    case CalcErrorKind::NonConvergent: return "NonConvergent";
    case CalcErrorKind::RefError: return "RefError";
  }
  return "?";
}

inline std::optional<CalcErrorKind> calc_error_kind_from(std::string_view name) {
  for (auto k : {CalcErrorKind::DivByZero, CalcErrorKind::DomainError, CalcErrorKind::LookupMiss,
                 CalcErrorKind::NonConvergent, CalcErrorKind::RefError})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

/// A calculation failure before it is attributed to a cell.
struct Fault {
  CalcErrorKind kind;
  std::string detail;
};

/// A calculation failure attributed to the formula cell that raised it.
struct CalcError {
  CalcErrorKind kind;
  CellRef cell;
  std::string detail;
};

using Calc = Expected<double, Fault>;

enum class LookupMode { Exact, Step };

/// Spreadsheet NPV: the first flow is discounted one full period.
inline Calc npv(double rate, std::span<const double> cashflows) {
  if (!(rate > -1.0)) return Fault{CalcErrorKind::DomainError, "NPV rate must exceed -1"};
  if (cashflows.empty()) return Fault{CalcErrorKind::DomainError, "NPV needs at least one cash flow"};
  const double growth = 1.0 + rate;
  double discount = 1.0;
  double total = 0.0;
  for (double cf : cashflows) {
    discount *= growth;
    total += cf / discount;
  }
  if (!std::isfinite(total)) return Fault{CalcErrorKind::DomainError, "NPV overflow"};
  return total;
}

namespace detail {

/// NPV with the first flow at period zero, plus its derivative in the rate.
inline std::pair<double, double> npv0_with_slope(double rate, std::span<const double> cashflows) {
  const double growth = 1.0 + rate;
  double value = 0.0;
  double slope = 0.0;
  double discount = 1.0;  // (1+r)^-i
  for (std::size_t i = 0; i < cashflows.size(); ++i) {
    value += cashflows[i] * discount;
    slope -= static_cast<double>(i) * cashflows[i] * discount / growth;
    discount /= growth;
  }
  return {value, slope};
}

}  // namespace detail

struct IrrOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-9;
  double bracket_low = -0.99;
  double bracket_high = 10.0;
  int bracket_steps = 2000;
};

/// Internal rate of return. Newton from the guess, then bisection on the first
/// sign change found by scanning (bracket_low, bracket_high]. Shared cap on iterations.
inline Calc irr(std::span<const double> cashflows, double guess = 0.1, const IrrOptions& opt = {}) {
  if (cashflows.size() < 2) return Fault{CalcErrorKind::NonConvergent, "IRR needs at least two cash flows"};
  bool positive = false;
  bool negative = false;
  double scale = 0.0;
  for (double cf : cashflows) {
    positive |= cf > 0.0;
    negative |= cf < 0.0;
    scale += std::abs(cf);
  }
  if (!positive || !negative) return Fault{CalcErrorKind::NonConvergent, "IRR cash flows never change sign"};
  const double tol = opt.relative_tolerance * scale;
  auto f = [&](double r) { return detail::npv0_with_slope(r, cashflows).first; };
  // one extra Newton step once accepted; kept only if it lowers the residual
  auto polish = [&](double r) {
    auto [value, slope] = detail::npv0_with_slope(r, cashflows);
    if (slope == 0.0 || !std::isfinite(slope)) return r;
    const double next = r - value / slope;
    return next > -1.0 && std::abs(f(next)) < std::abs(value) ? next : r;
  };

  int iterations = 0;
  double r = guess;
  for (; iterations < 50 && iterations < opt.max_iterations; ++iterations) {
    if (!(r > -1.0) || !std::isfinite(r)) break;
    auto [value, slope] = detail::npv0_with_slope(r, cashflows);
    if (std::abs(value) <= tol) return polish(r);
    if (slope == 0.0 || !std::isfinite(slope)) break;
    r -= value / slope;
  }

  double lo = opt.bracket_low;
  double f_lo = f(lo);
  if (std::abs(f_lo) <= tol) return polish(lo);
  const double step = (opt.bracket_high - opt.bracket_low) / opt.bracket_steps;
  std::optional<double> hi;
  for (int i = 1; i <= opt.bracket_steps; ++i) {
    const double x = opt.bracket_low + step * i;
    const double fx = f(x);
    if (std::abs(fx) <= tol) return polish(x);
    if ((fx > 0.0) != (f_lo > 0.0)) {
      hi = x;
      break;
    }
    lo = x;
    f_lo = fx;
  }
  if (!hi) return Fault{CalcErrorKind::NonConvergent, "IRR found no root bracket"};
  double upper = *hi;
  for (; iterations < opt.max_iterations; ++iterations) {
    const double mid = 0.5 * (lo + upper);
    // adjacent doubles: the root is as resolved as it can be
    if (mid <= lo || mid >= upper) return std::abs(f_lo) <= std::abs(f(upper)) ? lo : upper;
    const double fm = f(mid);
    if (std::abs(fm) <= tol) return polish(mid);
    if ((fm > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = fm;
    } else {
      upper = mid;
    }
  }
  return Fault{CalcErrorKind::NonConvergent, "IRR iteration cap reached"};
}

/// Two-column table lookup. Step mode picks the last row whose key is <= the probe.
inline Calc lookup(std::span<const std::pair<double, double>> table, double key, LookupMode mode) {
  if (table.empty()) return Fault{CalcErrorKind::LookupMiss, "empty lookup table"};
  if (mode == LookupMode::Exact) {
    for (const auto& [k, v] : table)
      if (k == key) return v;
    return Fault{CalcErrorKind::LookupMiss, "key " + std::to_string(key) + " not in table"};
  }
  for (std::size_t i = 1; i < table.size(); ++i)
    if (table[i].first < table[i - 1].first) return Fault{CalcErrorKind::LookupMiss, "step lookup table not sorted"};
  if (key < table.front().first) return Fault{CalcErrorKind::LookupMiss, "key " + std::to_string(key) + " below table"};
  std::size_t best = 0;
  for (std::size_t i = 0; i < table.size() && table[i].first <= key; ++i) best = i;
  return table[best].second;
}

}  // namespace mcaudit
