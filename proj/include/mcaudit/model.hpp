#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mcaudit/cell_ref.hpp"
#include "mcaudit/expected.hpp"
#include "mcaudit/formula.hpp"
#include "mcaudit/functions.hpp"

namespace mcaudit {

struct CellDefinition {
  CellRef cell;
  std::optional<std::string> label;
  std::string formula;  // "=..." or a bare number
};

struct BuildDiagnostic {
  enum class Kind { Parse, Cycle, UndefinedRef, DuplicateCell, DuplicateLabel };
  Kind kind;
  CellRef cell;
  std::string message;
  std::optional<ParseError> parse_error;
  std::vector<CellRef> cycle;     // closed path, first == last
  std::optional<CellRef> missing;  // for UndefinedRef

  std::string describe() const {
    std::string out = cell.to_string() + ": " + message;
    if (parse_error) out += " " + parse_error->describe();
    return out;
  }
};

using BuildErrors = std::vector<BuildDiagnostic>;

/// Result of evaluating every cell. Cells after a failure are NaN.
struct Evaluation {
  std::vector<double> values;  // indexed like Model::cells()
  std::optional<CalcError> error;

  bool ok() const { return !error.has_value(); }
};

/// Immutable spreadsheet model: cells sorted by address, a dependency DAG and a
/// fixed evaluation order. Safe to share between threads.
class Model {
 public:
  std::size_t size() const { return cells_.size(); }
  const std::vector<CellRef>& cells() const { return cells_; }
  const CellRef& cell(std::size_t i) const { return cells_[i]; }
  const Formula& formula(std::size_t i) const { return formulas_[i]; }
  const std::optional<std::string>& label(std::size_t i) const { return labels_[i]; }
  /// Label when present, otherwise the address.
  std::string display_name(std::size_t i) const { return labels_[i] ? *labels_[i] : cells_[i].to_string(); }
  const std::vector<std::size_t>& precedents(std::size_t i) const { return precedents_[i]; }
  const std::vector<std::size_t>& order() const { return order_; }

  std::optional<std::size_t> index_of(const CellRef& ref) const {
    auto it = index_.find(ref);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> index_of_label(const std::string& label) const {
    auto it = by_label_.find(label);
    if (it == by_label_.end()) return std::nullopt;
    return it->second;
  }
  /// Accepts either a label or an address.
  std::optional<std::size_t> resolve(const std::string& name) const {
    if (auto i = index_of_label(name)) return i;
    if (auto ref = CellRef::parse(name)) return index_of(*ref);
    return std::nullopt;
  }

  /// Evaluates all cells in topological order. An engaged `overrides[i]` replaces
  /// cell i's formula for this evaluation only. An empty span means no overrides.
  Evaluation evaluate_indexed(std::span<const std::optional<double>> overrides) const;

  /// Same, with an explicit evaluation order (must be a valid topological order).
  Evaluation evaluate_in_order(std::span<const std::size_t> order,
                               std::span<const std::optional<double>> overrides) const;

  friend Expected<Model, BuildErrors> build_model(const std::vector<CellDefinition>& definitions);

 private:
  std::vector<CellRef> cells_;
  std::vector<Formula> formulas_;
  std::vector<std::optional<std::string>> labels_;
  std::vector<std::vector<std::size_t>> precedents_;
  std::vector<std::size_t> order_;
  std::unordered_map<CellRef, std::size_t> index_;
  std::map<std::string, std::size_t> by_label_;
};

namespace detail {

inline std::vector<CellRef> find_cycle(const std::vector<CellRef>& cells,
                                       const std::vector<std::vector<std::size_t>>& precedents,
                                       const std::vector<bool>& unresolved) {
  // DFS over the unresolved nodes following "reads from" edges.
  std::vector<int> state(cells.size(), 0);  // 0 new, 1 on stack, 2 done
  std::vector<std::size_t> stack;
  std::vector<CellRef> cycle;
  std::function<bool(std::size_t)> visit = [&](std::size_t v) {
    state[v] = 1;
    stack.push_back(v);
    for (auto w : precedents[v]) {
      if (!unresolved[w]) continue;
      if (state[w] == 1) {
        auto it = std::find(stack.begin(), stack.end(), w);
        for (; it != stack.end(); ++it) cycle.push_back(cells[*it]);
        cycle.push_back(cells[w]);
        return true;
      }
      if (state[w] == 0 && visit(w)) return true;
    }
    stack.pop_back();
    state[v] = 2;
    return false;
  };
  for (std::size_t v = 0; v < cells.size(); ++v)
    if (unresolved[v] && state[v] == 0 && visit(v)) break;
  return cycle;
}

}  // namespace detail

/// Parses every formula, checks references, and fixes a stable topological order
/// (ties broken row-major by address). Reports every diagnostic it can find.
inline Expected<Model, BuildErrors> build_model(const std::vector<CellDefinition>& definitions) {
  BuildErrors errors;
  std::map<CellRef, const CellDefinition*> sorted;
  for (const auto& def : definitions) {
    if (!sorted.emplace(def.cell, &def).second) {
      errors.push_back({BuildDiagnostic::Kind::DuplicateCell, def.cell, "cell defined more than once", {}, {}, {}});
    }
  }

  Model m;
  std::vector<std::optional<Formula>> parsed;
  for (const auto& [ref, def] : sorted) {
    m.index_.emplace(ref, m.cells_.size());
    m.cells_.push_back(ref);
    m.labels_.push_back(def->label);
    auto f = parse_formula(def->formula);
    if (!f) {
      errors.push_back({BuildDiagnostic::Kind::Parse, ref, "cannot parse '" + def->formula + "'", f.error(), {}, {}});
      parsed.emplace_back(std::nullopt);
    } else {
      parsed.emplace_back(*f);
    }
    if (def->label) {
      if (def->label->empty()) {
        errors.push_back({BuildDiagnostic::Kind::DuplicateLabel, ref, "label is empty", {}, {}, {}});
      } else if (CellRef::parse(*def->label)) {
        errors.push_back({BuildDiagnostic::Kind::DuplicateLabel, ref,
                          "label '" + *def->label + "' collides with a cell address", {}, {}, {}});
      } else if (!m.by_label_.emplace(*def->label, m.cells_.size() - 1).second) {
        errors.push_back({BuildDiagnostic::Kind::DuplicateLabel, ref, "label '" + *def->label + "' is not unique", {}, {}, {}});
      }
    }
  }

  m.precedents_.resize(m.cells_.size());
  for (std::size_t i = 0; i < m.cells_.size(); ++i) {
    if (!parsed[i]) continue;
    for (const auto& ref : parsed[i]->precedents()) {
      auto it = m.index_.find(ref);
      if (it == m.index_.end()) {
        errors.push_back({BuildDiagnostic::Kind::UndefinedRef, m.cells_[i],
                          "RefError: reference to undefined cell " + ref.to_string(), {}, {}, ref});
      } else {
        m.precedents_[i].push_back(it->second);
      }
    }
  }
  if (!errors.empty()) return errors;

  for (auto& f : parsed) m.formulas_.push_back(std::move(*f));

  // Kahn's algorithm with a min-heap on index; cells_ is address-sorted so
  // index order is row-major address order.
  const std::size_t n = m.cells_.size();
  std::vector<std::size_t> pending(n, 0);
  std::vector<std::vector<std::size_t>> dependents(n);
  for (std::size_t i = 0; i < n; ++i) {
    pending[i] = m.precedents_[i].size();
    for (auto p : m.precedents_[i]) dependents[p].push_back(i);
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (pending[i] == 0) ready.push(i);
  while (!ready.empty()) {
    const auto v = ready.top();
    ready.pop();
    m.order_.push_back(v);
    for (auto d : dependents[v])
      if (--pending[d] == 0) ready.push(d);
  }
  if (m.order_.size() != n) {
    std::vector<bool> unresolved(n, false);
    for (std::size_t i = 0; i < n; ++i) unresolved[i] = pending[i] > 0;
    auto cycle = detail::find_cycle(m.cells_, m.precedents_, unresolved);
    std::string path;
    for (std::size_t i = 0; i < cycle.size(); ++i) path += (i ? "->" : "") + cycle[i].to_string();
    errors.push_back({BuildDiagnostic::Kind::Cycle, cycle.empty() ? CellRef{} : cycle.front(),
                      "circular reference " + path, {}, cycle, {}});
    return errors;
  }
  return m;
}

namespace detail {

class Evaluator {
 public:
  Evaluator(const Model& model, std::span<const double> values) : model_(model), values_(values) {}

  Calc eval(const Expr& e) const {
    return std::visit([&](const auto& node) { return eval_node(node); }, e.node);
  }

 private:
  double cell_value(const CellRef& ref) const { return values_[*model_.index_of(ref)]; }

  Calc eval_node(const Number& n) const { return n.value; }
  Calc eval_node(const Ref& r) const { return cell_value(r.cell); }
  Calc eval_node(const Negate& n) const {
    auto v = eval(*n.operand);
    if (!v) return v;
    return -*v;
  }

  static Calc finite(double v, const char* what) {
    if (std::isnan(v) || std::isinf(v)) return Fault{CalcErrorKind::DomainError, std::string(what) + " is not finite"};
    return v;
  }

  Calc eval_node(const Binary& b) const {
    auto lhs = eval(*b.lhs);
    if (!lhs) return lhs;
    auto rhs = eval(*b.rhs);
    if (!rhs) return rhs;
    const double x = *lhs;
    const double y = *rhs;
    switch (b.op) {
      case BinaryOp::Add: return finite(x + y, "sum");
      case BinaryOp::Sub: return finite(x - y, "difference");
      case BinaryOp::Mul: return finite(x * y, "product");
      case BinaryOp::Div:
        if (y == 0.0) return Fault{CalcErrorKind::DivByZero, "division by zero"};
        return finite(x / y, "quotient");
      case BinaryOp::Pow:
        if (x == 0.0 && y < 0.0) return Fault{CalcErrorKind::DomainError, "zero raised to a negative power"};
        return finite(std::pow(x, y), "power");
      case BinaryOp::Eq: return x == y ? 1.0 : 0.0;
      case BinaryOp::Ne: return x != y ? 1.0 : 0.0;
      case BinaryOp::Lt: return x < y ? 1.0 : 0.0;
      case BinaryOp::Le: return x <= y ? 1.0 : 0.0;
      case BinaryOp::Gt: return x > y ? 1.0 : 0.0;
      case BinaryOp::Ge: return x >= y ? 1.0 : 0.0;
    }
    return Fault{CalcErrorKind::DomainError, "unknown operator"};
  }

  Expected<std::vector<double>, Fault> flatten(std::span<const Argument> args) const {
    std::vector<double> out;
    for (const auto& arg : args) {
      if (const auto* sub = std::get_if<ExprPtr>(&arg)) {
        auto v = eval(**sub);
        if (!v) return v.error();
        out.push_back(*v);
      } else {
        for (const auto& c : std::get<RangeRef>(arg).cells()) out.push_back(cell_value(c));
      }
    }
    return out;
  }

  Calc scalar(const Argument& arg) const { return eval(*std::get<ExprPtr>(arg)); }

  Calc eval_node(const Call& call) const {
    const auto& args = call.args;
    switch (call.fn) {
      case Function::If: {
        auto cond = scalar(args[0]);
        if (!cond) return cond;
        return scalar(*cond != 0.0 ? args[1] : args[2]);
      }
      case Function::Sum:
      case Function::Average:
      case Function::Min:
      case Function::Max: {
        auto xs = flatten(args);
        if (!xs) return xs.error();
        const auto& v = *xs;
        if (call.fn == Function::Min) return *std::min_element(v.begin(), v.end());
        if (call.fn == Function::Max) return *std::max_element(v.begin(), v.end());
        double total = 0.0;
        for (double x : v) total += x;
        if (call.fn == Function::Average) total /= static_cast<double>(v.size());
        return finite(total, "sum");
      }
      case Function::Abs:
      case Function::Sqrt:
      case Function::Ln:
      case Function::Exp: {
        auto x = scalar(args[0]);
        if (!x) return x;
        const double v = *x;
        if (call.fn == Function::Abs) return std::abs(v);
        if (call.fn == Function::Sqrt) {
          if (v < 0.0) return Fault{CalcErrorKind::DomainError, "square root of negative number " + format_number(v)};
          return std::sqrt(v);
        }
        if (call.fn == Function::Ln) {
          if (v <= 0.0) return Fault{CalcErrorKind::DomainError, "logarithm of non-positive number " + format_number(v)};
          return std::log(v);
        }
        return finite(std::exp(v), "exponential");
      }
      case Function::Npv: {
        auto rate = scalar(args[0]);
        if (!rate) return rate;
        auto flows = flatten(std::span<const Argument>(args).subspan(1));
        if (!flows) return flows.error();
        return npv(*rate, *flows);
      }
      case Function::Irr: {
        auto flows = flatten(std::span<const Argument>(args).first(1));
        if (!flows) return flows.error();
        double guess = 0.1;
        if (args.size() == 2) {
          auto g = scalar(args[1]);
          if (!g) return g;
          guess = *g;
        }
        return irr(*flows, guess);
      }
      case Function::Lookup: {
        auto key = scalar(args[0]);
        if (!key) return key;
        auto mode = scalar(args[2]);
        if (!mode) return mode;
        if (*mode != 0.0 && *mode != 1.0) return Fault{CalcErrorKind::DomainError, "LOOKUP mode must be 0 or 1"};
        const auto& range = std::get<RangeRef>(args[1]);
        std::vector<std::pair<double, double>> table;
        for (int r = range.first.row; r <= range.last.row; ++r)
          table.emplace_back(cell_value({range.first.column, r}), cell_value({range.last.column, r}));
        return lookup(table, *key, *mode == 0.0 ? LookupMode::Exact : LookupMode::Step);
      }
    }
    return Fault{CalcErrorKind::DomainError, "unknown function"};
  }

  const Model& model_;
  std::span<const double> values_;
};

}  // namespace detail

inline Evaluation Model::evaluate_in_order(std::span<const std::size_t> order,
                                           std::span<const std::optional<double>> overrides) const {
  Evaluation out;
  out.values.assign(size(), std::numeric_limits<double>::quiet_NaN());
  detail::Evaluator ev(*this, out.values);
  for (auto i : order) {
    if (!overrides.empty() && overrides[i]) {
      out.values[i] = *overrides[i];
      continue;
    }
    auto v = ev.eval(formulas_[i].root());
    if (!v) {
      out.error = CalcError{v.error().kind, cells_[i], v.error().detail};
      return out;
    }
    out.values[i] = *v;
  }
  return out;
}

inline Evaluation Model::evaluate_indexed(std::span<const std::optional<double>> overrides) const {
  return evaluate_in_order(order_, overrides);
}

/// Evaluates the model with the given cells pinned to fixed values.
/// Throws std::invalid_argument if an override names a cell outside the model.
inline Expected<std::map<CellRef, double>, CalcError> evaluate(const Model& model,
                                                               const std::map<CellRef, double>& overrides) {
  std::vector<std::optional<double>> pinned(model.size());
  for (const auto& [ref, v] : overrides) {
    auto i = model.index_of(ref);
    if (!i) throw std::invalid_argument("override for unknown cell " + ref.to_string());
    pinned[*i] = v;
  }
  auto result = model.evaluate_indexed(pinned);
  if (result.error) return *result.error;
  std::map<CellRef, double> out;
  for (std::size_t i = 0; i < model.size(); ++i) out.emplace(model.cell(i), result.values[i]);
  return out;
}

}  // namespace mcaudit
