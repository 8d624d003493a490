#include <gtest/gtest.h>

#include <cmath>
#include <optional>

#include "lprh/lp.hpp"
#include "support.hpp"

using namespace lprh::lp;
using lprh::testing::Gen;

namespace {

// Minimum over all vertices of a bounded polytope: every choice of n tight
// hyperplanes is solved by Gaussian elimination and kept when feasible.
std::optional<double> vertex_oracle(const Model& m) {
  const std::size_t n = m.variables();
  struct Plane {
    std::vector<double> a;
    double b;
  };
  std::vector<Plane> planes;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> e(n, 0.0);
    e[j] = 1.0;
    planes.push_back({e, m.lower(j)});
    planes.push_back({e, m.upper(j)});
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::vector<double> a(n, 0.0);
    for (const auto& t : m.row(i).terms) a[t.var] += t.coef;
    if (std::isfinite(m.row(i).lo)) planes.push_back({a, m.row(i).lo});
    if (std::isfinite(m.row(i).hi)) planes.push_back({a, m.row(i).hi});
  }
  auto feasible = [&](const std::vector<double>& x) {
    for (std::size_t j = 0; j < n; ++j)
      if (x[j] < m.lower(j) - 1e-7 || x[j] > m.upper(j) + 1e-7) return false;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double v = 0;
      for (const auto& t : m.row(i).terms) v += t.coef * x[t.var];
      if (v < m.row(i).lo - 1e-7 || v > m.row(i).hi + 1e-7) return false;
    }
    return true;
  };
  std::optional<double> best;
  std::vector<std::size_t> pick(n);
  auto solve_pick = [&]() -> std::optional<std::vector<double>> {
    std::vector<std::vector<double>> A(n, std::vector<double>(n + 1));
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) A[r][c] = planes[pick[r]].a[c];
      A[r][n] = planes[pick[r]].b;
    }
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t p = c;
      for (std::size_t r = c + 1; r < n; ++r)
        if (std::abs(A[r][c]) > std::abs(A[p][c])) p = r;
      if (std::abs(A[p][c]) < 1e-12) return std::nullopt;
      std::swap(A[p], A[c]);
      for (std::size_t r = 0; r < n; ++r) {
        if (r == c) continue;
        const double f = A[r][c] / A[c][c];
        for (std::size_t k = c; k <= n; ++k) A[r][k] -= f * A[c][k];
      }
    }
    std::vector<double> x(n);
    for (std::size_t c = 0; c < n; ++c) x[c] = A[c][n] / A[c][c];
    return x;
  };
  auto rec = [&](auto&& self, std::size_t depth, std::size_t from) -> void {
    if (depth == n) {
      auto x = solve_pick();
      if (!x || !feasible(*x)) return;
      double c = 0;
      for (std::size_t j = 0; j < n; ++j) c += m.cost(j) * (*x)[j];
      if (!best || c < *best) best = c;
      return;
    }
    for (std::size_t k = from; k < planes.size(); ++k) {
      pick[depth] = k;
      self(self, depth + 1, k + 1);
    }
  };
  rec(rec, 0, 0);
  return best;
}

void expect_feasible(const Model& m, const Solution& s, double tol = 1e-6) {
  for (std::size_t j = 0; j < m.variables(); ++j) {
    EXPECT_GE(s.x[j], m.lower(j) - tol);
    EXPECT_LE(s.x[j], m.upper(j) + tol);
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double v = 0;
    for (const auto& t : m.row(i).terms) v += t.coef * s.x[t.var];
    EXPECT_GE(v, m.row(i).lo - tol);
    EXPECT_LE(v, m.row(i).hi + tol);
  }
}

}  // namespace

TEST(Lp, TextbookMaximum) {
  // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  ->  x=2, y=6, value 36
  Model m;
  auto x = m.add_variable(0, kInf, -3), y = m.add_variable(0, kInf, -5);
  m.add_row({{x, 1}}, -kInf, 4);
  m.add_row({{y, 2}}, -kInf, 12);
  m.add_row({{x, 3}, {y, 2}}, -kInf, 18);
  auto s = solve(m);
  ASSERT_EQ(s.status, Status::Optimal);
  EXPECT_NEAR(s.objective, -36, 1e-9);
  EXPECT_NEAR(s.x[x], 2, 1e-9);
  EXPECT_NEAR(s.x[y], 6, 1e-9);
}

TEST(Lp, EqualityNeedsPhaseOne) {
  // min x + 2y subject to x + y = 10, x - y >= 2, x <= 5
  Model m;
  auto x = m.add_variable(0, 5, 1), y = m.add_variable(0, kInf, 2);
  m.add_row({{x, 1}, {y, 1}}, 10, 10);
  m.add_row({{x, 1}, {y, -1}}, 2, kInf);
  auto s = solve(m);
  EXPECT_EQ(s.status, Status::Infeasible);  // x <= 5 forces y >= 5 > x - 2

  Model ok;
  auto a = ok.add_variable(0, 8, 1), b = ok.add_variable(0, kInf, 2);
  ok.add_row({{a, 1}, {b, 1}}, 10, 10);
  ok.add_row({{a, 1}, {b, -1}}, 2, kInf);
  auto t = solve(ok);
  ASSERT_EQ(t.status, Status::Optimal);
  EXPECT_NEAR(t.x[a], 8, 1e-9);
  EXPECT_NEAR(t.x[b], 2, 1e-9);
  EXPECT_NEAR(t.objective, 12, 1e-9);
}

TEST(Lp, NegativeLowerBoundsAndRanges) {
  Model m;
  auto x = m.add_variable(-5, 5, 1), y = m.add_variable(-kInf, 3, -1);
  m.add_row({{x, 1}, {y, 1}}, -2, 1);
  auto s = solve(m);
  ASSERT_EQ(s.status, Status::Optimal);
  EXPECT_NEAR(s.x[x] + s.x[y], -2, 1e-9);
  EXPECT_NEAR(s.x[y], 3, 1e-9);
  EXPECT_NEAR(s.x[x], -5, 1e-9);
  EXPECT_NEAR(s.objective, -8, 1e-9);
}

TEST(Lp, Unbounded) {
  Model m;
  auto x = m.add_variable(0, kInf, -1), y = m.add_variable(0, kInf, 0);
  m.add_row({{x, 1}, {y, -1}}, -kInf, 1);
  EXPECT_EQ(solve(m).status, Status::Unbounded);
}

TEST(Lp, ModelValidation) {
  Model m;
  EXPECT_THROW(m.add_variable(1, 0), std::invalid_argument);
  EXPECT_THROW(m.add_variable(-kInf, kInf), std::invalid_argument);
  auto x = m.add_variable(0, 1);
  EXPECT_THROW(m.add_row({{x + 1, 1}}, 0, 1), std::out_of_range);
  EXPECT_THROW(m.add_row({{x, 1}}, 2, 1), std::invalid_argument);
}

TEST(Lp, DegenerateVertex) {
  Model m;
  auto x = m.add_variable(0, kInf, -1), y = m.add_variable(0, kInf, -1);
  m.add_row({{x, 1}, {y, 1}}, -kInf, 1);
  m.add_row({{x, 1}}, -kInf, 1);
  m.add_row({{y, 1}}, -kInf, 1);
  m.add_row({{x, 2}, {y, 2}}, -kInf, 2);
  auto s = solve(m);
  ASSERT_EQ(s.status, Status::Optimal);
  EXPECT_NEAR(s.objective, -1, 1e-9);
}

TEST(Lp, MatchesVertexEnumerationProperty) {
  Gen g(77);
  int optimal = 0, infeasible = 0;
  for (int trial = 0; trial < 400; ++trial) {
    Model m;
    const int n = g.integer(1, 3), rows = g.integer(0, 3);
    for (int j = 0; j < n; ++j) {
      const double lb = g.uniform(-10, 5);
      m.add_variable(lb, lb + g.uniform(0, 15), g.uniform(-5, 5));
    }
    for (int i = 0; i < rows; ++i) {
      std::vector<Term> terms;
      for (int j = 0; j < n; ++j)
        if (g.integer(0, 3) != 0) terms.push_back({static_cast<std::size_t>(j), g.uniform(-3, 3)});
      const int kind = g.integer(0, 3);
      const double c = g.uniform(-10, 10);
      if (kind == 0) m.add_row(terms, c, c);
      else if (kind == 1) m.add_row(terms, c, kInf);
      else if (kind == 2) m.add_row(terms, -kInf, c);
      else m.add_row(terms, c, c + g.uniform(0, 5));
    }
    auto s = solve(m);
    auto ref = vertex_oracle(m);
    if (ref) {
      ++optimal;
      ASSERT_EQ(s.status, Status::Optimal) << "trial " << trial;
      EXPECT_NEAR(s.objective, *ref, 1e-6 * (1 + std::abs(*ref))) << "trial " << trial;
      expect_feasible(m, s);
    } else {
      ++infeasible;
      EXPECT_EQ(s.status, Status::Infeasible) << "trial " << trial;
    }
  }
  EXPECT_GT(optimal, 100);
  EXPECT_GT(infeasible, 10);
}
