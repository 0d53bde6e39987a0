#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "mcaudit/cell_ref.hpp"
#include "mcaudit/expected.hpp"

namespace mcaudit {

enum class BinaryOp { Add, Sub, Mul, Div, Pow, Eq, Ne, Lt, Le, Gt, Ge };

enum class Function { If, Sum, Average, Min, Max, Abs, Sqrt, Ln, Exp, Npv, Irr, Lookup };

inline std::string_view function_name(Function fn) {
  switch (fn) {
    case Function::If: return "IF";
    case Function::Sum: return "SUM";
    case Function::Average: return "AVERAGE";
    case Function::Min: return "MIN";
    case Function::Max: return "MAX";
    case Function::Abs: return "ABS";
    case Function::Sqrt: return "SQRT";
    case Function::Ln: return "LN";
    case Function::Exp: return "EXP";
    case Function::Npv: return "NPV";
    case Function::Irr: return "IRR";
    case Function::Lookup: return "LOOKUP";
  }
  return "?";
}

inline std::optional<Function> function_from_name(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (auto fn : {Function::If, Function::Sum, Function::Average, Function::Min, Function::Max,
                  Function::Abs, Function::Sqrt, Function::Ln, Function::Exp, Function::Npv,
                  Function::Irr, Function::Lookup}) {
    if (function_name(fn) == upper) return fn;
  }
  return std::nullopt;
}

inline std::string_view op_symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Pow: return "^";
    case BinaryOp::Eq: return "=";
    case BinaryOp::Ne: return "<>";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
  }
  return "?";
}

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Number {
  double value = 0.0;
};
struct Ref {
  CellRef cell;
};
/// Rectangular block, normalized so that first is the top-left corner.
struct RangeRef {
  CellRef first;
  CellRef last;

  int columns() const { return last.column - first.column + 1; }
  int rows() const { return last.row - first.row + 1; }

  /// Cells in row-major order.
  std::vector<CellRef> cells() const {
    std::vector<CellRef> out;
    out.reserve(static_cast<std::size_t>(rows()) * static_cast<std::size_t>(columns()));
    for (int r = first.row; r <= last.row; ++r)
      for (int c = first.column; c <= last.column; ++c) out.push_back({c, r});
    return out;
  }
  friend bool operator==(const RangeRef&, const RangeRef&) = default;
};
struct Negate {
  ExprPtr operand;
};
struct Binary {
  BinaryOp op;
  ExprPtr lhs;
  ExprPtr rhs;
};
using Argument = std::variant<ExprPtr, RangeRef>;
struct Call {
  Function fn;
  std::vector<Argument> args;
};

struct Expr {
  std::variant<Number, Ref, Negate, Binary, Call> node;
};

bool operator==(const Expr& a, const Expr& b);

inline bool same_tree(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

inline bool operator==(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& lhs) -> bool {
        using T = std::decay_t<decltype(lhs)>;
        const auto& rhs = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, Number>) {
          return lhs.value == rhs.value;
        } else if constexpr (std::is_same_v<T, Ref>) {
          return lhs.cell == rhs.cell;
        } else if constexpr (std::is_same_v<T, Negate>) {
          return same_tree(lhs.operand, rhs.operand);
        } else if constexpr (std::is_same_v<T, Binary>) {
          return lhs.op == rhs.op && same_tree(lhs.lhs, rhs.lhs) && same_tree(lhs.rhs, rhs.rhs);
        } else {
          if (lhs.fn != rhs.fn || lhs.args.size() != rhs.args.size()) return false;
          for (std::size_t i = 0; i < lhs.args.size(); ++i) {
            const auto& x = lhs.args[i];
            const auto& y = rhs.args[i];
            if (x.index() != y.index()) return false;
            if (x.index() == 0) {
              if (!same_tree(std::get<0>(x), std::get<0>(y))) return false;
            } else if (std::get<1>(x) != std::get<1>(y)) {
              return false;
            }
          }
          return true;
        }
      },
      a.node);
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

namespace detail {

enum class Prec { Compare = 1, Additive = 2, Multiplicative = 3, Power = 4, Unary = 5, Atom = 6 };

inline Prec precedence(const Expr& e) {
  if (const auto* bin = std::get_if<Binary>(&e.node)) {
    switch (bin->op) {
      case BinaryOp::Add:
      case BinaryOp::Sub: return Prec::Additive;
      case BinaryOp::Mul:
      case BinaryOp::Div: return Prec::Multiplicative;
      case BinaryOp::Pow: return Prec::Power;
      default: return Prec::Compare;
    }
  }
  if (std::holds_alternative<Negate>(e.node)) return Prec::Unary;
  return Prec::Atom;
}

inline void render_into(const Expr& e, std::string& out);

inline void render_child(const Expr& child, bool parens, std::string& out) {
  if (parens) out += '(';
  render_into(child, out);
  if (parens) out += ')';
}

inline void render_into(const Expr& e, std::string& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Number>) {
          out += format_number(n.value);
        } else if constexpr (std::is_same_v<T, Ref>) {
          out += n.cell.to_string();
        } else if constexpr (std::is_same_v<T, Negate>) {
          out += '-';
          render_child(*n.operand, precedence(*n.operand) < Prec::Unary, out);
        } else if constexpr (std::is_same_v<T, Binary>) {
          const Prec mine = precedence(e);
          const Prec left = precedence(*n.lhs);
          const Prec right = precedence(*n.rhs);
          // Left-associative; comparisons do not chain at all.
          render_child(*n.lhs, left < mine || (mine == Prec::Compare && left == mine), out);
          out += op_symbol(n.op);
          render_child(*n.rhs, right <= mine, out);
        } else {
          out += function_name(n.fn);
          out += '(';
          for (std::size_t i = 0; i < n.args.size(); ++i) {
            if (i > 0) out += ',';
            if (const auto* sub = std::get_if<ExprPtr>(&n.args[i])) {
              render_into(**sub, out);
            } else {
              const auto& range = std::get<RangeRef>(n.args[i]);
              out += range.first.to_string() + ":" + range.last.to_string();
            }
          }
          out += ')';
        }
      },
      e.node);
}

inline void collect_refs(const Expr& e, std::set<CellRef>& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Ref>) {
          out.insert(n.cell);
        } else if constexpr (std::is_same_v<T, Negate>) {
          collect_refs(*n.operand, out);
        } else if constexpr (std::is_same_v<T, Binary>) {
          collect_refs(*n.lhs, out);
          collect_refs(*n.rhs, out);
        } else if constexpr (std::is_same_v<T, Call>) {
          for (const auto& arg : n.args) {
            if (const auto* sub = std::get_if<ExprPtr>(&arg)) {
              collect_refs(**sub, out);
            } else {
              for (const auto& c : std::get<RangeRef>(arg).cells()) out.insert(c);
            }
          }
        }
      },
      e.node);
}

}  // namespace detail

/// A parsed cell formula. Constants are formulas whose root is a Number.
class Formula {
 public:
  explicit Formula(ExprPtr root) : root_(std::move(root)) {}

  const Expr& root() const { return *root_; }
  bool is_constant() const { return std::holds_alternative<Number>(root_->node); }

  /// Canonical text, always with a leading '='.
  std::string render() const {
    std::string out = "=";
    detail::render_into(*root_, out);
    return out;
  }

  /// Every cell this formula reads, ranges expanded.
  std::set<CellRef> precedents() const {
    std::set<CellRef> out;
    detail::collect_refs(*root_, out);
    return out;
  }

  friend bool operator==(const Formula& a, const Formula& b) { return *a.root_ == *b.root_; }

 private:
  ExprPtr root_;
};

struct ParseError {
  enum class Kind { Syntax, UnknownFunction, Arity };
  Kind kind = Kind::Syntax;
  std::size_t position = 0;
  std::string message;
  std::vector<std::string> expected;

  std::string describe() const {
    std::string out = "at position " + std::to_string(position) + ": " + message;
    if (!expected.empty()) {
      out += " (expected ";
      for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i > 0) out += i + 1 == expected.size() ? " or " : ", ";
        out += expected[i];
      }
      out += ")";
    }
    return out;
  }
};

namespace detail {

class FormulaParser {
 public:
  explicit FormulaParser(std::string_view text) : text_(text) {}

  ExprPtr parse() {
    skip_space();
    if (peek() != '=') {
      const bool negative = peek() == '-';
      if (negative) ++pos_;
      auto value = try_number();
      if (value && negative) *value = -*value;
      if (!value) fail(ParseError::Kind::Syntax, "formula must start with '=' or be a number",
                       {"'='", "number"});
      skip_space();
      if (!at_end()) fail(ParseError::Kind::Syntax, "unexpected trailing input", {"end of input"});
      return make(Number{*value});
    }
    ++pos_;
    auto expr = parse_compare();
    skip_space();
    if (!at_end()) fail(ParseError::Kind::Syntax, "unexpected character", {"operator", "end of input"});
    return expr;
  }

 private:
  struct Failure {
    ParseError error;
  };

 public:
  static Expected<Formula, ParseError> run(std::string_view text) {
    try {
      FormulaParser p(text);
      return Formula(p.parse());
    } catch (const Failure& f) {
      return f.error;
    }
  }

 private:
  static ExprPtr make(auto node) { return std::make_shared<const Expr>(Expr{std::move(node)}); }

  [[noreturn]] void fail(ParseError::Kind kind, std::string message, std::vector<std::string> expected = {},
                         std::optional<std::size_t> at = std::nullopt) const {
    throw Failure{ParseError{kind, at.value_or(pos_), std::move(message), std::move(expected)}};
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }
  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::optional<double> try_number() {
    const std::size_t start = pos_;
    std::size_t i = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (i < text_.size() && std::isdigit(static_cast<unsigned char>(text_[i]))) ++i, ++n;
      return n;
    };
    std::size_t mantissa = digits();
    if (i < text_.size() && text_[i] == '.') {
      ++i;
      mantissa += digits();
    }
    if (mantissa == 0) return std::nullopt;
    if (i < text_.size() && (text_[i] == 'e' || text_[i] == 'E')) {
      std::size_t j = i + 1;
      if (j < text_.size() && (text_[j] == '+' || text_[j] == '-')) ++j;
      std::size_t k = j;
      while (k < text_.size() && std::isdigit(static_cast<unsigned char>(text_[k]))) ++k;
      if (k > j) i = k;
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + i, value);
    if (ec != std::errc{} || ptr != text_.data() + i || !std::isfinite(value)) {
      fail(ParseError::Kind::Syntax, "number out of range", {}, start);
    }
    pos_ = i;
    return value;
  }

  std::optional<BinaryOp> match_compare() {
    skip_space();
    const char c = peek();
    const char d = peek(1);
    if (c == '<' && d == '>') return pos_ += 2, BinaryOp::Ne;
    if (c == '<' && d == '=') return pos_ += 2, BinaryOp::Le;
    if (c == '>' && d == '=') return pos_ += 2, BinaryOp::Ge;
    if (c == '<') return ++pos_, BinaryOp::Lt;
    if (c == '>') return ++pos_, BinaryOp::Gt;
    if (c == '=') return ++pos_, BinaryOp::Eq;
    return std::nullopt;
  }

  ExprPtr parse_compare() {
    auto lhs = parse_additive();
    if (auto op = match_compare()) {
      auto rhs = parse_additive();
      return make(Binary{*op, lhs, rhs});
    }
    return lhs;
  }

  ExprPtr parse_additive() {
    auto lhs = parse_multiplicative();
    for (;;) {
      skip_space();
      const char c = peek();
      if (c != '+' && c != '-') return lhs;
      ++pos_;
      auto rhs = parse_multiplicative();
      lhs = make(Binary{c == '+' ? BinaryOp::Add : BinaryOp::Sub, lhs, rhs});
    }
  }

  ExprPtr parse_multiplicative() {
    auto lhs = parse_power();
    for (;;) {
      skip_space();
      const char c = peek();
      if (c != '*' && c != '/') return lhs;
      ++pos_;
      auto rhs = parse_power();
      lhs = make(Binary{c == '*' ? BinaryOp::Mul : BinaryOp::Div, lhs, rhs});
    }
  }

  ExprPtr parse_power() {
    auto lhs = parse_unary();
    for (;;) {
      skip_space();
      if (peek() != '^') return lhs;
      ++pos_;
      auto rhs = parse_unary();
      lhs = make(Binary{BinaryOp::Pow, lhs, rhs});
    }
  }

  ExprPtr parse_unary() {
    skip_space();
    if (peek() == '-') {
      ++pos_;
      return make(Negate{parse_unary()});
    }
    return parse_atom();
  }

  std::string_view read_word() {
    const std::size_t start = pos_;
    while (!at_end() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  CellRef expect_cell(std::string_view word, std::size_t start) const {
    auto ref = CellRef::parse(word);
    if (!ref) fail(ParseError::Kind::Syntax, "invalid cell reference '" + std::string(word) + "'", {"cell reference"}, start);
    return *ref;
  }

  ExprPtr parse_atom() {
    skip_space();
    const char c = peek();
    if (c == '(') {
      ++pos_;
      auto inner = parse_compare();
      skip_space();
      if (peek() != ')') fail(ParseError::Kind::Syntax, "unbalanced parenthesis", {"')'"});
      ++pos_;
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      if (auto value = try_number()) return make(Number{*value});
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      auto word = read_word();
      const std::size_t after = pos_;
      skip_space();
      if (peek() == '(') return parse_call(word, start);
      pos_ = after;
      return make(Ref{expect_cell(word, start)});
    }
    fail(ParseError::Kind::Syntax, at_end() ? "unexpected end of input" : "unexpected character",
         {"expression"});
  }

  std::optional<RangeRef> try_range() {
    const std::size_t save = pos_;
    skip_space();
    const std::size_t start = pos_;
    if (!std::isalpha(static_cast<unsigned char>(peek()))) return pos_ = save, std::nullopt;
    auto word = read_word();
    skip_space();
    if (peek() != ':') return pos_ = save, std::nullopt;
    const auto first = expect_cell(word, start);
    ++pos_;
    skip_space();
    const std::size_t second_start = pos_;
    auto word2 = read_word();
    if (word2.empty()) fail(ParseError::Kind::Syntax, "incomplete range", {"cell reference"});
    const auto second = expect_cell(word2, second_start);
    return RangeRef{{std::min(first.column, second.column), std::min(first.row, second.row)},
                    {std::max(first.column, second.column), std::max(first.row, second.row)}};
  }

  ExprPtr parse_call(std::string_view name, std::size_t name_pos) {
    auto fn = function_from_name(name);
    if (!fn) fail(ParseError::Kind::UnknownFunction, "unknown function '" + std::string(name) + "'", {}, name_pos);
    ++pos_;  // '('
    Call call{*fn, {}};
    skip_space();
    if (peek() == ')') {
      ++pos_;
    } else {
      for (;;) {
        if (auto range = try_range()) {
          call.args.emplace_back(*range);
        } else {
          call.args.emplace_back(parse_compare());
        }
        skip_space();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        if (peek() == ')') {
          ++pos_;
          break;
        }
        fail(ParseError::Kind::Syntax, at_end() ? "unexpected end of input" : "unexpected character",
             {"','", "')'"});
      }
    }
    check_signature(call, name_pos);
    return make(std::move(call));
  }

  void check_signature(const Call& call, std::size_t at) const {
    const std::size_t n = call.args.size();
    const std::string name(function_name(call.fn));
    auto arity = [&](std::size_t lo, std::size_t hi) {
      if (n < lo || n > hi) {
        std::string want = lo == hi ? std::to_string(lo)
                           : hi == SIZE_MAX ? "at least " + std::to_string(lo)
                                            : std::to_string(lo) + " to " + std::to_string(hi);
        fail(ParseError::Kind::Arity, name + " takes " + want + " argument(s), got " + std::to_string(n), {}, at);
      }
    };
    auto is_range = [&](std::size_t i) { return std::holds_alternative<RangeRef>(call.args[i]); };
    auto scalar_only = [&](std::size_t from, std::size_t to) {
      for (std::size_t i = from; i < std::min(to, n); ++i)
        if (is_range(i)) fail(ParseError::Kind::Arity, name + " argument " + std::to_string(i + 1) + " cannot be a range", {}, at);
    };
    switch (call.fn) {
      case Function::If: arity(3, 3); scalar_only(0, 3); break;
      case Function::Sum:
      case Function::Average:
      case Function::Min:
      case Function::Max: arity(1, SIZE_MAX); break;
      case Function::Abs:
      case Function::Sqrt:
      case Function::Ln:
      case Function::Exp: arity(1, 1); scalar_only(0, 1); break;
      case Function::Npv: arity(2, SIZE_MAX); scalar_only(0, 1); break;
      case Function::Irr:
        arity(1, 2);
        if (!is_range(0)) fail(ParseError::Kind::Arity, "IRR expects a range of cash flows", {}, at);
        scalar_only(1, 2);
        break;
      case Function::Lookup:
        arity(3, 3);
        scalar_only(0, 1);
        scalar_only(2, 3);
        if (!is_range(1) || std::get<RangeRef>(call.args[1]).columns() != 2)
          fail(ParseError::Kind::Arity, "LOOKUP expects a two-column table range", {}, at);
        break;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses "=expr" or a bare number. Positions in errors are zero-based offsets into text.
inline Expected<Formula, ParseError> parse_formula(std::string_view text) {
  return detail::FormulaParser::run(text);
}

}  // namespace mcaudit
