#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcaudit/model.hpp"
#include "mcaudit/simulation.hpp"

namespace mcaudit {

using Json = nlohmann::ordered_json;

/// Structural problems with a model document (exit code 3 territory).
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(std::vector<std::string> problems)
      : std::runtime_error(problems.empty() ? "schema error" : problems.front()), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Semantic problems: formulas, references, distributions (exit code 1 territory).
class ModelError : public std::runtime_error {
 public:
  explicit ModelError(std::vector<std::string> problems)
      : std::runtime_error(problems.empty() ? "model error" : problems.front()), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

namespace detail {

class SchemaChecker {
 public:
  std::vector<std::string> problems;

  void check_document(const Json& doc) {
    if (!doc.is_object()) return add("", "document must be an object");
    keys(doc, "", {"name", "cells", "assumptions", "correlations", "forecasts", "limits", "expectations",
                   "expected_intervals", "run"},
         {"name", "cells"});
    if (doc.contains("name") && !doc["name"].is_string()) add("/name", "must be a string");
    array_of(doc, "cells", [&](const Json& c, const std::string& at) {
      keys(c, at, {"address", "label", "formula"}, {"address", "formula"});
      string_field(c, at, "address");
      string_field(c, at, "label");
      if (c.contains("formula") && !c["formula"].is_string() && !c["formula"].is_number())
        add(at + "/formula", "must be a string or a number");
    });
    array_of(doc, "assumptions", [&](const Json& a, const std::string& at) {
      keys(a, at, {"cell", "distribution"}, {"cell", "distribution"});
      string_field(a, at, "cell");
      if (a.contains("distribution")) check_distribution(a["distribution"], at + "/distribution");
    });
    array_of(doc, "correlations", [&](const Json& c, const std::string& at) {
      keys(c, at, {"a", "b", "rho"}, {"a", "b", "rho"});
      string_field(c, at, "a");
      string_field(c, at, "b");
      number_field(c, at, "rho");
    });
    array_of(doc, "forecasts", [&](const Json& f, const std::string& at) {
      keys(f, at, {"cell", "label", "target"}, {"cell"});
      string_field(f, at, "cell");
      string_field(f, at, "label");
      if (f.contains("target")) {
        const auto& t = f["target"];
        keys(t, at + "/target", {"min", "max"}, {});
        number_field(t, at + "/target", "min");
        number_field(t, at + "/target", "max");
      }
    });
    array_of(doc, "limits", [&](const Json& l, const std::string& at) {
      keys(l, at, {"cell", "min", "max"}, {"cell"});
      string_field(l, at, "cell");
      number_field(l, at, "min");
      number_field(l, at, "max");
    });
    array_of(doc, "expectations", [&](const Json& e, const std::string& at) {
      keys(e, at, {"assumption", "forecast", "sign"}, {"assumption", "forecast", "sign"});
      string_field(e, at, "assumption");
      string_field(e, at, "forecast");
      if (e.contains("sign") && !(e["sign"] == "+" || e["sign"] == "-")) add(at + "/sign", "must be \"+\" or \"-\"");
    });
    array_of(doc, "expected_intervals", [&](const Json& e, const std::string& at) {
      keys(e, at, {"forecast", "min", "max"}, {"forecast", "min", "max"});
      string_field(e, at, "forecast");
      number_field(e, at, "min");
      number_field(e, at, "max");
    });
    if (doc.contains("run")) {
      const auto& r = doc["run"];
      keys(r, "/run", {"trials", "seed"}, {});
      if (r.is_object()) {
        if (r.contains("trials") && !(r["trials"].is_number_unsigned() && r["trials"].get<std::uint64_t>() >= 1))
          add("/run/trials", "must be an integer >= 1");
        if (r.contains("seed") && !r["seed"].is_number_unsigned()) add("/run/seed", "must be a non-negative integer");
      }
    }
  }

 private:
  void add(const std::string& at, const std::string& what) { problems.push_back((at.empty() ? "/" : at) + ": " + what); }

  void keys(const Json& obj, const std::string& at, std::set<std::string> allowed, std::set<std::string> required) {
    if (!obj.is_object()) return add(at, "must be an object");
    for (const auto& [k, v] : obj.items())
      if (!allowed.count(k)) add(at + "/" + k, "unknown property");
    for (const auto& k : required)
      if (!obj.contains(k)) add(at + "/" + k, "is required");
  }
  void string_field(const Json& obj, const std::string& at, const char* key) {
    if (obj.is_object() && obj.contains(key) && !obj[key].is_string()) add(at + "/" + key, "must be a string");
  }
  void number_field(const Json& obj, const std::string& at, const char* key) {
    if (obj.is_object() && obj.contains(key) && !obj[key].is_number()) add(at + "/" + key, "must be a number");
  }
  template <typename F>
  void array_of(const Json& doc, const char* key, F&& each) {
    if (!doc.contains(key)) return;
    const auto& arr = doc[key];
    const std::string at = std::string("/") + key;
    if (!arr.is_array()) return add(at, "must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) each(arr[i], at + "/" + std::to_string(i));
  }

  void check_distribution(const Json& d, const std::string& at) {
    static const std::map<std::string, std::set<std::string>> params = {
        {"uniform", {"min", "max"}},        {"triangular", {"min", "mode", "max"}},
        {"normal", {"mean", "sd"}},         {"lognormal", {"log_mean", "log_sd"}},
        {"discrete_uniform", {"lo", "hi"}}, {"custom", {"points"}}};
    if (!d.is_object()) return add(at, "must be an object");
    if (!d.contains("type") || !d["type"].is_string()) return add(at + "/type", "is required and must be a string");
    auto it = params.find(d["type"].get<std::string>());
    if (it == params.end()) return add(at + "/type", "unknown distribution type");
    auto allowed = it->second;
    allowed.insert("type");
    keys(d, at, allowed, allowed);
    if (it->first == "custom") {
      if (!d.contains("points")) return;
      const auto& pts = d["points"];
      if (!pts.is_array() || pts.empty()) return add(at + "/points", "must be a non-empty array");
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::string p = at + "/points/" + std::to_string(i);
        keys(pts[i], p, {"value", "probability"}, {"value", "probability"});
        number_field(pts[i], p, "value");
        number_field(pts[i], p, "probability");
      }
    } else if (it->first == "discrete_uniform") {
      for (const char* k : {"lo", "hi"})
        if (d.contains(k) && !d[k].is_number_integer()) add(at + "/" + k, "must be an integer");
    } else {
      for (const auto& k : it->second) number_field(d, at, k.c_str());
    }
  }
};

}  // namespace detail

/// Returns every schema violation; empty when the document is well-formed.
inline std::vector<std::string> schema_problems(const Json& doc) {
  detail::SchemaChecker checker;
  checker.check_document(doc);
  return checker.problems;
}

/// Parses a distribution object (already schema-checked). Throws std::invalid_argument on bad parameters.
inline Distribution distribution_from_json(const Json& d) {
  const auto type = d.at("type").get<std::string>();
  if (type == "uniform") return Uniform{d.at("min").get<double>(), d.at("max").get<double>()};
  if (type == "triangular")
    return Triangular{d.at("min").get<double>(), d.at("mode").get<double>(), d.at("max").get<double>()};
  if (type == "normal") return Normal{d.at("mean").get<double>(), d.at("sd").get<double>()};
  if (type == "lognormal") return Lognormal{d.at("log_mean").get<double>(), d.at("log_sd").get<double>()};
  if (type == "discrete_uniform") return DiscreteUniform{d.at("lo").get<std::int64_t>(), d.at("hi").get<std::int64_t>()};
  if (type == "custom") {
    Custom c;
    for (const auto& p : d.at("points")) c.points.emplace_back(p.at("value").get<double>(), p.at("probability").get<double>());
    return c;
  }
  throw std::invalid_argument("unknown distribution type '" + type + "'");
}

inline Json distribution_to_json(const Distribution& dist) {
  return std::visit(
      [](const auto& d) -> Json {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Uniform>) return {{"type", "uniform"}, {"min", d.min}, {"max", d.max}};
        if constexpr (std::is_same_v<T, Triangular>)
          return {{"type", "triangular"}, {"min", d.min}, {"mode", d.mode}, {"max", d.max}};
        if constexpr (std::is_same_v<T, Normal>) return {{"type", "normal"}, {"mean", d.mean}, {"sd", d.sd}};
        if constexpr (std::is_same_v<T, Lognormal>)
          return {{"type", "lognormal"}, {"log_mean", d.log_mean}, {"log_sd", d.log_sd}};
        if constexpr (std::is_same_v<T, DiscreteUniform>) return {{"type", "discrete_uniform"}, {"lo", d.lo}, {"hi", d.hi}};
        if constexpr (std::is_same_v<T, Custom>) {
          Json pts = Json::array();
          for (const auto& [v, p] : d.points) pts.push_back({{"value", v}, {"probability", p}});
          return {{"type", "custom"}, {"points", pts}};
        }
      },
      dist.variant());
}

/// A loaded model document: the built model, the simulation spec it declares,
/// and the raw JSON (kept for paste-back copies).
struct ModelDocument {
  std::string name;
  Json raw;
  Model model;
  SimulationSpec spec;
};

/// Builds a document from parsed JSON. Throws SchemaError or ModelError with every problem found.
inline ModelDocument document_from_json(const Json& doc) {
  if (auto problems = schema_problems(doc); !problems.empty()) throw SchemaError(std::move(problems));

  std::vector<std::string> problems;
  std::vector<CellDefinition> defs;
  for (const auto& c : doc["cells"]) {
    auto ref = CellRef::parse(c["address"].get<std::string>());
    if (!ref) {
      problems.push_back("invalid cell address '" + c["address"].get<std::string>() + "'");
      continue;
    }
    CellDefinition def{*ref, std::nullopt, {}};
    if (c.contains("label")) def.label = c["label"].get<std::string>();
    def.formula = c["formula"].is_string() ? c["formula"].get<std::string>() : format_number(c["formula"].get<double>());
    defs.push_back(std::move(def));
  }
  if (!problems.empty()) throw ModelError(std::move(problems));
  auto built = build_model(defs);
  if (!built) {
    for (const auto& d : built.error()) problems.push_back(d.describe());
    throw ModelError(std::move(problems));
  }
  const Model& model = *built;

  auto cell_of = [&](const Json& name, const std::string& where) -> std::optional<CellRef> {
    auto i = model.resolve(name.get<std::string>());
    if (!i) {
      problems.push_back(where + ": '" + name.get<std::string>() + "' names no cell or label");
      return std::nullopt;
    }
    return model.cell(*i);
  };

  SimulationSpec spec;
  if (doc.contains("assumptions")) {
    for (std::size_t i = 0; i < doc["assumptions"].size(); ++i) {
      const auto& a = doc["assumptions"][i];
      const std::string where = "/assumptions/" + std::to_string(i);
      auto cell = cell_of(a["cell"], where);
      try {
        auto dist = distribution_from_json(a["distribution"]);
        if (cell) spec.assumptions.push_back({*cell, std::move(dist)});
      } catch (const std::exception& e) {
        problems.push_back(where + "/distribution: " + e.what());
      }
    }
  }
  spec.correlation = CorrelationSpec(spec.assumptions.size());
  if (doc.contains("correlations")) {
    for (std::size_t i = 0; i < doc["correlations"].size(); ++i) {
      const auto& c = doc["correlations"][i];
      const std::string where = "/correlations/" + std::to_string(i);
      auto a = cell_of(c["a"], where);
      auto b = cell_of(c["b"], where);
      if (!a || !b) continue;
      auto index = [&](const CellRef& ref) -> std::optional<std::size_t> {
        for (std::size_t j = 0; j < spec.assumptions.size(); ++j)
          if (spec.assumptions[j].cell == ref) return j;
        return std::nullopt;
      };
      auto ia = index(*a);
      auto ib = index(*b);
      if (!ia || !ib) {
        problems.push_back(where + ": correlations must name two assumptions");
      } else if (*ia == *ib) {
        problems.push_back(where + ": an assumption cannot be correlated with itself");
      } else {
        spec.correlation.set(*ia, *ib, c["rho"].get<double>());
      }
    }
  }
  if (doc.contains("forecasts")) {
    for (std::size_t i = 0; i < doc["forecasts"].size(); ++i) {
      const auto& f = doc["forecasts"][i];
      auto cell = cell_of(f["cell"], "/forecasts/" + std::to_string(i));
      if (!cell) continue;
      ForecastDef def{*cell, f.value("label", std::string()), std::nullopt};
      if (f.contains("target")) {
        def.target = Interval{f["target"].value("min", -INFINITY), f["target"].value("max", INFINITY)};
      }
      spec.forecasts.push_back(std::move(def));
    }
  }
  if (doc.contains("limits")) {
    for (std::size_t i = 0; i < doc["limits"].size(); ++i) {
      const auto& l = doc["limits"][i];
      auto cell = cell_of(l["cell"], "/limits/" + std::to_string(i));
      if (!cell) continue;
      LimitDef def{*cell, std::nullopt, std::nullopt};
      if (l.contains("min")) def.min = l["min"].get<double>();
      if (l.contains("max")) def.max = l["max"].get<double>();
      spec.limits.push_back(def);
    }
  }
  if (doc.contains("expectations")) {
    for (std::size_t i = 0; i < doc["expectations"].size(); ++i) {
      const auto& e = doc["expectations"][i];
      const std::string where = "/expectations/" + std::to_string(i);
      auto a = cell_of(e["assumption"], where);
      auto f = cell_of(e["forecast"], where);
      if (a && f) spec.expectations.push_back({*a, *f, e["sign"] == "+" ? Sign::Positive : Sign::Negative});
    }
  }
  if (doc.contains("expected_intervals")) {
    for (std::size_t i = 0; i < doc["expected_intervals"].size(); ++i) {
      const auto& e = doc["expected_intervals"][i];
      auto f = cell_of(e["forecast"], "/expected_intervals/" + std::to_string(i));
      if (f) spec.expected_intervals.push_back({*f, e["min"].get<double>(), e["max"].get<double>()});
    }
  }
  if (doc.contains("run")) {
    spec.trials = doc["run"].value("trials", spec.trials);
    spec.seed = doc["run"].value("seed", spec.seed);
  }
  if (problems.empty()) {
    for (auto& p : check_spec(model, spec)) problems.push_back(std::move(p));
  }
  if (!problems.empty()) throw ModelError(std::move(problems));
  return ModelDocument{doc["name"].get<std::string>(), doc, model, std::move(spec)};
}

/// Reads and builds a document from disk. Unreadable files and malformed JSON are SchemaErrors.
inline ModelDocument load_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError({"cannot open '" + path + "'"});
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError({path + ": " + e.what()});
  }
  return document_from_json(doc);
}

/// Copy of the document with the given assumption values written into their
/// cells as constants; assumptions and everything that refers to them are dropped.
inline Json bake_assumptions(const ModelDocument& doc, std::span<const double> values) {
  if (values.size() != doc.spec.assumptions.size()) throw std::invalid_argument("assumption vector length mismatch");
  Json out = doc.raw;
  for (std::size_t j = 0; j < values.size(); ++j) {
    const auto target = doc.spec.assumptions[j].cell.to_string();
    for (auto& c : out["cells"]) {
      auto ref = CellRef::parse(c["address"].get<std::string>());
      if (ref && ref->to_string() == target) c["formula"] = values[j];
    }
  }
  out.erase("assumptions");
  out.erase("correlations");
  out.erase("expectations");
  return out;
}

}  // namespace mcaudit
