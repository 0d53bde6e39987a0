#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mcaudit/functions.hpp"

using namespace mcaudit;

namespace {

// independent period-0 NPV in extended precision
long double npv0(long double r, const std::vector<double>& cf) {
  long double v = 0.0L, d = 1.0L;
  for (double x : cf) {
    v += x * d;
    d /= 1.0L + r;
  }
  return v;
}

double scale_of(const std::vector<double>& cf) {
  double s = 0.0;
  for (double x : cf) s += std::abs(x);
  return s;
}

}  // namespace

TEST(Npv, Examples) {
  const std::vector<double> a{10, 20, 30};
  EXPECT_EQ(*npv(0.0, a), 60.0);
  const std::vector<double> b{100, 100};
  EXPECT_NEAR(*npv(0.1, b), 100 / 1.1 + 100 / 1.21, 1e-12);
  EXPECT_NEAR(*npv(0.1, b), 173.55371900826447, 1e-9);
  auto bad = npv(-1.0, b);
  ASSERT_FALSE(bad);
  EXPECT_EQ(bad.error().kind, CalcErrorKind::DomainError);
  EXPECT_FALSE(npv(-1.5, b));
}

TEST(Npv, Linearity) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1000, 1000), rate(-0.5, 2.0), coef(-3, 3);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<double> x(n), y(n), z(n);
    const double a = coef(rng), b = coef(rng), r = rate(rng);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
      z[i] = a * x[i] + b * y[i];
    }
    const double lhs = *npv(r, z);
    const double rhs = a * *npv(r, x) + b * *npv(r, y);
    const double mag = std::abs(a * *npv(r, x)) + std::abs(b * *npv(r, y)) + 1e-300;
    EXPECT_LE(std::abs(lhs - rhs) / mag, 1e-12);
  }
}

TEST(Irr, Examples) {
  const std::vector<double> one{-100, 110};
  EXPECT_NEAR(*irr(one), 0.10, 1e-9);
  const std::vector<double> none{100, 110};
  auto r = irr(none);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().kind, CalcErrorKind::NonConvergent);
  // 60x^2 + 60x - 100 = 0 with x = 1/(1+r)
  const std::vector<double> two{-100, 60, 60};
  const double x = (-60 + std::sqrt(60.0 * 60 + 4 * 60 * 100)) / (2 * 60);
  EXPECT_NEAR(*irr(two), 1 / x - 1, 1e-9);
  EXPECT_NEAR(*irr(two), 0.130662, 1e-6);
}

TEST(Irr, TooShortOrAllZero) {
  EXPECT_FALSE(irr(std::vector<double>{-5}));
  EXPECT_FALSE(irr(std::vector<double>{0, 0, 0}));
  EXPECT_FALSE(irr(std::vector<double>{-1, -2, -3}));
}

TEST(Irr, BadGuessFallsBackToBracket) {
  // Newton from this guess overshoots below -1; the bracket scan still finds the root
  const std::vector<double> cf{-800, 101.30089342581979, 80.014233183579819, 56.227648957522945, 29.724990792282284,
                               0.27295879795954647};
  auto r = irr(cf, 0.1);
  ASSERT_TRUE(r) << r.error().detail;
  EXPECT_LE(std::abs(static_cast<double>(npv0(*r, cf))), 1e-9 * scale_of(cf));
  EXPECT_TRUE(irr(std::vector<double>{-100, 60, 60}, 50.0));
}

TEST(Irr, ResidualProperty) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> root(-0.6, 1.5), flow(0, 500), guess(-0.5, 1.0);
  int solved = 0;
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng() % 15;
    std::vector<double> cf(n);
    const double target = root(rng);
    long double pv = 0.0L;
    for (std::size_t i = 1; i < n; ++i) {
      cf[i] = flow(rng);
      pv += cf[i] / std::pow(1.0L + target, static_cast<long double>(i));
    }
    cf[0] = -static_cast<double>(pv);
    auto r = irr(cf, guess(rng));
    ASSERT_TRUE(r) << "vector " << t;
    ++solved;
    EXPECT_LE(std::abs(static_cast<double>(npv0(*r, cf))), 1e-9 * scale_of(cf));
  }
  EXPECT_EQ(solved, 300);
}

TEST(Lookup, Examples) {
  const std::vector<std::pair<double, double>> t{{1, 10}, {2, 20}};
  EXPECT_EQ(*lookup(t, 2, LookupMode::Exact), 20);
  EXPECT_EQ(*lookup(t, 1.5, LookupMode::Step), 10);
  EXPECT_EQ(*lookup(t, 9, LookupMode::Step), 20);
  auto below = lookup(t, 0.5, LookupMode::Step);
  ASSERT_FALSE(below);
  EXPECT_EQ(below.error().kind, CalcErrorKind::LookupMiss);
  EXPECT_EQ(lookup(t, 1.5, LookupMode::Exact).error().kind, CalcErrorKind::LookupMiss);
  const std::vector<std::pair<double, double>> unsorted{{2, 20}, {1, 10}};
  EXPECT_EQ(lookup(unsorted, 2, LookupMode::Step).error().kind, CalcErrorKind::LookupMiss);
  EXPECT_EQ(*lookup(unsorted, 1, LookupMode::Exact), 10);
  EXPECT_FALSE(lookup({}, 1, LookupMode::Exact));
}

TEST(CalcErrorKind, Names) {
  for (auto k : {CalcErrorKind::DivByZero, CalcErrorKind::DomainError, CalcErrorKind::LookupMiss,
                 CalcErrorKind::NonConvergent, CalcErrorKind::RefError})
    EXPECT_EQ(calc_error_kind_from(to_string(k)), k);
  EXPECT_FALSE(calc_error_kind_from("Nope"));
}
