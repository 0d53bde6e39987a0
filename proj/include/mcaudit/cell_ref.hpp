#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mcaudit {

/// Address of a cell: zero-based column (A=0 .. ZZ=701) and one-based row.
struct CellRef {
  static constexpr int kMaxColumn = 26 + 26 * 26 - 1;  // ZZ

  int column = 0;
  int row = 1;

  /// Row-major ordering: the tie-break used for evaluation order.
  friend constexpr auto operator<=>(const CellRef& a, const CellRef& b) {
    if (auto c = a.row <=> b.row; c != 0) return c;
    return a.column <=> b.column;
  }
  friend constexpr bool operator==(const CellRef&, const CellRef&) = default;

  std::string to_string() const {
    std::string col;
    if (column >= 26) {
      col += static_cast<char>('A' + column / 26 - 1);
      col += static_cast<char>('A' + column % 26);
    } else {
      col += static_cast<char>('A' + column);
    }
    return col + std::to_string(row);
  }

  /// Parses "B12". Returns nullopt for anything not matching [A-Z]{1,2}[1-9][0-9]*.
  static std::optional<CellRef> parse(std::string_view text) {
    std::size_t i = 0;
    int col = -1;
    while (i < text.size() && text[i] >= 'A' && text[i] <= 'Z') {
      if (i == 2) return std::nullopt;
      col = (col + 1) * 26 + (text[i] - 'A');
      ++i;
    }
    if (i == 0 || i == text.size() || text[i] == '0') return std::nullopt;
    long long row = 0;
    for (; i < text.size(); ++i) {
      if (text[i] < '0' || text[i] > '9') return std::nullopt;
      row = row * 10 + (text[i] - '0');
      if (row > 1'000'000'000) return std::nullopt;
    }
    return CellRef{col, static_cast<int>(row)};
  }

  static CellRef from_string(std::string_view text) {
    auto ref = parse(text);
    if (!ref) throw std::invalid_argument("invalid cell address: " + std::string(text));
    return *ref;
  }
};

}  // namespace mcaudit

template <>
struct std::hash<mcaudit::CellRef> {
  std::size_t operator()(const mcaudit::CellRef& r) const noexcept {
    return std::hash<std::int64_t>{}((static_cast<std::int64_t>(r.row) << 16) | r.column);
  }
};
