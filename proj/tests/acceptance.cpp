// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "mcaudit/mcaudit.hpp"
#include "mcaudit/cli.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace mcaudit;
using testing_support::example;

namespace {

struct Check {
  bool ok = true;
  std::string why;
  void require(bool cond, const std::string& msg) {
    if (!cond && ok) {
      ok = false;
      why = msg;
    }
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mcaudit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in;
  std::ostringstream out, err;
  return cli::run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
}

fs::path scratch() {
  static const fs::path dir = fs::temp_directory_path() / ("mcaudit-acceptance-" + std::to_string(::getpid()));
  return dir;
}

std::string str(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

CellRef at(const std::string& a) { return CellRef::from_string(a); }

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

// 1
Check determinism() {
  Check c;
  const auto a = scratch() / "det-a", b = scratch() / "det-b";
  c.require(cli({"--seed", "42", "--out", a.string(), "run", example("project-npv.json")}) == 0, "run a failed");
  c.require(cli({"--seed", "42", "--out", b.string(), "run", example("project-npv.json")}) == 0, "run b failed");
  for (const char* f : {"report.json", "trials.csv"}) {
    const auto x = slurp(a / f);
    c.require(!x.empty() && x == slurp(b / f), std::string(f) + " differs between runs");
  }
  const auto t0 = std::chrono::steady_clock::now();
  c.require(cli({"--trials", "10000", "--out", (scratch() / "det-c").string(), "run", example("project-npv.json")}) == 0,
            "10^4 run failed");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.require(secs < 5.0, "10^4 trials took " + str(secs) + " s");
  if (c.ok) c.why = "10^4 trials in " + str(secs) + " s";
  return c;
}

// 2
Check sampling() {
  Check c;
  constexpr std::size_t n = 20000;
  const std::vector<Distribution> dists = {Uniform{2, 5},      Triangular{0, 2, 10},     Normal{10, 3},
                                           Lognormal{0, 0.5}, DiscreteUniform{1, 6}, Custom{{{5, 0.3}, {1, 0.2}, {2, 0.5}}}};
  std::vector<CellDefinition> cells;
  SimulationSpec spec;
  for (std::size_t k = 0; k < dists.size(); ++k) {
    const auto cell = "A" + std::to_string(k + 1);
    cells.push_back({at(cell), std::nullopt, "0"});
    spec.assumptions.push_back({at(cell), dists[k]});
  }
  cells.push_back({at("B1"), std::nullopt, "=A1"});
  spec.forecasts = {{at("B1"), "", std::nullopt}};
  spec.trials = n;
  spec.seed = 2024;
  const auto store = run(*build_model(cells), spec);
  double worst_ks = 0.0, worst_se = 0.0;
  for (std::size_t k = 0; k < dists.size(); ++k) {
    const auto xs = store.assumptions.column(k);
    const auto [mean, var] = oracle::moments(dists[k]);
    double m = 0;
    for (double x : xs) m += x;
    m /= n;
    const double se = std::abs(m - mean) / std::sqrt(var / n);
    const double ks = oracle::ks_statistic(xs, [&](double x) { return oracle::cdf(dists[k], x); }) * std::sqrt(double(n));
    worst_se = std::max(worst_se, se);
    worst_ks = std::max(worst_ks, ks);
    c.require(se <= 4.0, std::string(dists[k].type_name()) + " mean off by " + str(se) + " SE");
    c.require(ks < 1.63, std::string(dists[k].type_name()) + " KS*sqrt(n) = " + str(ks));
  }
  if (c.ok) c.why = "worst |mean err| " + str(worst_se) + " SE, worst KS*sqrt(n) " + str(worst_ks);
  return c;
}

// 3
Check correlation() {
  Check c;
  auto m = testing_support::model_of({{"A1", "0"}, {"A2", "0"}, {"A3", "=A1+A2"}});
  SimulationSpec spec;
  spec.assumptions = {{at("A1"), Uniform{0, 1}}, {at("A2"), Uniform{0, 1}}};
  spec.forecasts = {{at("A3"), "", std::nullopt}};
  spec.trials = 2000;
  spec.correlation = CorrelationSpec(2);
  spec.correlation.set(0, 1, 0.8);
  const auto store = run(m, spec);
  const double rho = oracle::spearman(store.assumptions.column(0), store.assumptions.column(1));
  c.require(rho >= 0.75 && rho <= 0.85, "achieved rho " + str(rho));
  const auto raw = detail::sample_independent(spec, 0, spec.trials);
  for (std::size_t j = 0; j < 2; ++j) {
    auto before = raw.column(j), after = store.assumptions.column(j);
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    c.require(before == after, "marginal " + std::to_string(j) + " changed");
  }
  if (c.ok) c.why = "rho " + str(rho) + ", marginals identical";
  return c;
}

// 4
Check tornado_exact() {
  Check c;
  const auto doc = load_document(example("linear-tornado.json"));
  const auto t = tornado(doc.model, doc.spec, "f");
  c.require(t.base && std::abs(*t.base - 0.5) <= 1e-9, "base");
  c.require(t.bars.size() == 2, "bar count");
  if (!c.ok) return c;
  c.require(t.bars[0].label == "a" && std::abs(t.bars[0].swing - 2.4) <= 1e-9 && t.bars[0].direction == 1, "bar a");
  c.require(t.bars[1].label == "b" && std::abs(t.bars[1].swing - 1.6) <= 1e-9 && t.bars[1].direction == -1, "bar b");
  if (c.ok) c.why = "a " + str(t.bars[0].swing) + " +, b " + str(t.bars[1].swing) + " -, base " + str(*t.base);
  return c;
}

// 5
Check scenario() {
  Check c;
  const auto dir = scratch() / "scn";
  const auto doc = load_document(example("project-npv.json"));
  auto spec = doc.spec;
  spec.trials = 2000;
  c.require(cli({"--trials", "2000", "--out", dir.string(), "run", example("project-npv.json")}) == 0, "run failed");
  const auto store = run(doc.model, spec);

  // brute force over the exported CSV: last column is the NPV forecast
  std::vector<std::pair<std::size_t, double>> rows;
  {
    std::istringstream in(slurp(dir / "trials.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
      rows.emplace_back(std::stoul(line.substr(0, line.find(','))), std::stod(line.substr(line.rfind(',') + 1)));
  }
  c.require(rows.size() == 2000, "CSV has " + std::to_string(rows.size()) + " rows");
  const auto [mn, mx] = std::minmax_element(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.second < b.second; });
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(mn->second, mx->second);
  std::size_t replays = 0;
  const auto npv = *doc.model.index_of(doc.spec.forecasts[0].cell);
  for (int k = 0; k < 10; ++k) {
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    const auto set = scenario_filter(store, "NPV", lo, hi);
    std::vector<std::size_t> expected;
    for (const auto& [trial, v] : rows)
      if (v >= lo && v <= hi) expected.push_back(trial);
    c.require(set.trials == expected, "range " + std::to_string(k) + " disagrees with the CSV filter");
    for (std::size_t i = 0; i < set.trials.size(); ++i) {
      const auto baked = document_from_json(bake_assumptions(doc, set.assumptions[i]));
      const auto ev = baked.model.evaluate_indexed({});
      c.require(!ev.error && bits(ev.values[npv]) == bits(set.values[i]),
                "trial " + std::to_string(set.trials[i]) + " paste-back differs");
      ++replays;
    }
    // and once through the command line
    if (!set.trials.empty()) {
      const auto pick = set.trials[set.trials.size() / 2];
      const auto sub = dir / ("apply" + std::to_string(k));
      c.require(cli({"--trials", "2000", "--out", sub.string(), "scenario", example("project-npv.json"), "--forecast",
                     "NPV", "--min", str(lo), "--max", str(hi), "--apply", std::to_string(pick)}) == 0,
                "--apply failed");
      const auto baked = sub / ("project-npv.scenario" + std::to_string(pick) + ".json");
      c.require(cli({"--out", (sub / "one").string(), "run", baked.string()}) == 0, "baked run failed");
      std::istringstream t(slurp(sub / "one" / "trials.csv"));
      std::string line;
      std::getline(t, line);
      std::getline(t, line);
      const double v = std::stod(line.substr(line.rfind(',') + 1));
      const auto row = store.row_of_trial(pick);
      c.require(row && bits(v) == bits(store.forecasts(*row, 0)), "CLI paste-back of trial " + std::to_string(pick));
    }
  }
  if (c.ok) c.why = std::to_string(replays) + " paste-backs bit-exact";
  return c;
}

// 6
Check dossier() {
  Check c;
  auto doc = load_document(example("sqrt-trap.json"));
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto spec = doc.spec;
    spec.seed = seed;
    const auto store = run(doc.model, spec);
    c.require(store.halted.has_value(), "seed " + std::to_string(seed) + " did not halt");
    if (!store.halted) continue;
    const auto ev = replay(doc.model, spec, store.halted->assumptions);
    c.require(ev.error && ev.error->kind == CalcErrorKind::DomainError && ev.error->cell == store.halted->error.cell,
              "seed " + std::to_string(seed) + " replay differs");
  }
  auto spec = doc.spec;
  spec.trials = 10000;
  spec.stop_on_error = false;
  const auto store = run(doc.model, spec);
  const double rate = static_cast<double>(store.errors.size()) / static_cast<double>(store.attempted());
  c.require(std::abs(rate - 0.5) <= 0.02, "census rate " + str(rate));
  if (c.ok) c.why = "20/20 replays, census rate " + str(rate);
  return c;
}

// 7
Check defects() {
  Check c;
  auto load = [](const char* f) { return load_document(example(f)); };
  const auto clean = load("project-npv.json"), hard = load("project-npv-hardcode.json"),
             flip = load("project-npv-signflip.json"), noclamp = load("project-npv-noclamp.json");
  int ok_clean = 0, ok_hard = 0, ok_flip = 0, ok_clamp = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto go = [&](const ModelDocument& d) {
      auto spec = d.spec;
      spec.trials = 5000;
      spec.seed = seed;
      return audit(d.model, spec);
    };
    ok_clean += go(clean).findings.empty();
    ok_hard += go(hard).count(FindingKind::Disconnected) >= 1;
    ok_flip += go(flip).count(FindingKind::SignMismatch) >= 1;
    const auto r = go(noclamp);
    bool witnessed = r.count(FindingKind::LimitViolation) >= 1;
    for (const auto& f : r.findings) {
      if (f.kind != FindingKind::LimitViolation) continue;
      const auto ev = replay(noclamp.model, noclamp.spec, *f.witness);
      const double v = ev.values[*noclamp.model.index_of(f.cells[0])];
      witnessed = witnessed && !ev.error && v < *f.evidence_value("limit_min");
    }
    ok_clamp += witnessed;
  }
  c.require(ok_clean == 20, "correct model clean " + std::to_string(ok_clean) + "/20");
  c.require(ok_hard == 20, "hard-code flagged " + std::to_string(ok_hard) + "/20");
  c.require(ok_flip == 20, "sign flip flagged " + std::to_string(ok_flip) + "/20");
  c.require(ok_clamp == 20, "clamp flagged with witness " + std::to_string(ok_clamp) + "/20");
  if (c.ok) c.why = "20/20 on every fixture";
  return c;
}

// 8
Check masking() {
  Check c;
  const auto doc = load_document(example("project-npv-masking.json"));
  const auto store = run(doc.model, doc.spec);
  const auto sens = sensitivity(store);
  const auto t = tornado(doc.model, doc.spec, "NPV");
  double rho = 0.0;
  int dir = 0;
  for (const auto& e : sens[0].entries)
    if (e.label == "COGSGrowth") rho = e.spearman;
  for (const auto& b : t.bars)
    if (b.label == "COGSGrowth") dir = b.direction;
  c.require(rho > 0, "Spearman " + str(rho));
  c.require(dir == -1, "tornado direction " + std::to_string(dir));
  const auto r = audit(doc.model, doc.spec);
  c.require(r.findings.size() == 1 && r.findings[0].kind == FindingKind::CorrelationMasking &&
                r.findings[0].severity == Severity::Warning,
            std::to_string(r.findings.size()) + " findings");
  if (c.ok) c.why = "Spearman " + str(rho) + ", direction -1, one CorrelationMasking warning";
  return c;
}

// 9
Check certainty_calibration() {
  Check c;
  auto m = testing_support::model_of({{"A1", "0.5"}, {"A2", "=A1"}});
  SimulationSpec spec;
  spec.assumptions = {{at("A1"), Uniform{0, 1}}};
  spec.forecasts = {{at("A2"), "f", std::nullopt}};
  spec.trials = 10000;
  const double p = certainty(run(m, spec), "f", 0.0, 0.75);
  c.require(std::abs(p - 0.75) <= 0.02, "certainty " + str(p));
  if (c.ok) c.why = "certainty " + str(p);
  return c;
}

// 10
Check irr_solver() {
  Check c;
  auto npv0 = [](long double r, const std::vector<double>& cf) {
    long double v = 0.0L, d = 1.0L;
    for (double x : cf) v += x * d, d /= 1.0L + r;
    return v;
  };
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> flow(50, 500), outlay(100, 1000), root(-0.6, 1.5), signed_flow(-300, 500);
  double worst = 0.0;
  int solved = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng() % 15;
    std::vector<double> cf(n);
    if (t % 2 == 0) {
      // conventional: one outlay, then inflows
      cf[0] = -outlay(rng);
      for (std::size_t i = 1; i < n; ++i) cf[i] = flow(rng);
    } else {
      // mixed-sign flows around a planted root
      const double r = root(rng);
      long double pv = 0.0L;
      for (std::size_t i = 1; i < n; ++i) pv += (cf[i] = signed_flow(rng)) / std::pow(1.0L + r, (long double)i);
      cf[0] = -static_cast<double>(pv);
      if (cf[0] == 0.0) cf[0] = -1.0;
    }
    double scale = 0.0;
    for (double x : cf) scale += std::abs(x);
    const auto r = irr(cf);
    c.require(r.has_value(), "vector " + std::to_string(t) + " did not solve");
    if (!r) continue;
    ++solved;
    const double rel = std::abs(static_cast<double>(npv0(*r, cf))) / scale;
    worst = std::max(worst, rel);
    c.require(rel <= 1e-9, "vector " + std::to_string(t) + " residual " + str(rel));
  }
  int nonconv = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> cf(2 + rng() % 15);
    for (auto& x : cf) x = flow(rng);
    const auto r = irr(cf);
    nonconv += !r && r.error().kind == CalcErrorKind::NonConvergent;
  }
  c.require(nonconv == 100, "all-positive NonConvergent " + std::to_string(nonconv) + "/100");
  if (c.ok) c.why = std::to_string(solved) + "/100 solved, worst residual " + str(worst) + ", 100/100 NonConvergent";
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Check()>>> criteria = {
      {"determinism", determinism},
      {"sampling fidelity", sampling},
      {"correlation induction", correlation},
      {"tornado exactness", tornado_exact},
      {"scenario oracle", scenario},
      {"error dossier", dossier},
      {"defect detection", defects},
      {"correlation masking", masking},
      {"certainty calibration", certainty_calibration},
      {"IRR solver", irr_solver},
  };
  fs::create_directories(scratch());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      c = criteria[i].second();
    } catch (const std::exception& e) {
      c.ok = false;
      c.why = std::string("exception: ") + e.what();
    }
    failed += !c.ok;
    std::cout << (c.ok ? "PASS " : "FAIL ") << i + 1 << ": " << criteria[i].first << " (" << c.why << ")\n";
  }
  fs::remove_all(scratch());
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
