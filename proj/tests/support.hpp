#pragma once

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mcaudit/model.hpp"

namespace testing_support {

inline std::string example(const std::string& name) { return std::string(MCAUDIT_EXAMPLES_DIR) + "/" + name; }

inline std::vector<mcaudit::CellDefinition> defs(std::initializer_list<std::pair<const char*, const char*>> cells) {
  std::vector<mcaudit::CellDefinition> out;
  for (const auto& [addr, text] : cells) out.push_back({mcaudit::CellRef::from_string(addr), std::nullopt, text});
  return out;
}

inline mcaudit::Model model_of(std::initializer_list<std::pair<const char*, const char*>> cells) {
  auto built = mcaudit::build_model(defs(cells));
  if (!built) throw std::runtime_error("fixture model failed to build: " + built.error().front().describe());
  return std::move(*built);
}

/// Labelled variant: {address, label, formula}.
struct Labelled {
  const char* address;
  const char* label;
  const char* formula;
};

inline mcaudit::Model labelled_model(std::initializer_list<Labelled> cells) {
  std::vector<mcaudit::CellDefinition> out;
  for (const auto& c : cells) {
    std::optional<std::string> label;
    if (c.label && *c.label) label = c.label;
    out.push_back({mcaudit::CellRef::from_string(c.address), label, c.formula});
  }
  auto built = mcaudit::build_model(out);
  if (!built) throw std::runtime_error("fixture model failed to build: " + built.error().front().describe());
  return std::move(*built);
}

}  // namespace testing_support
