#pragma once

// Dense bounded-variable primal simplex for the small linear programs of the
// centralized baselines:
//
//   minimize    c'x
//   subject to  lo_i <= a_i'x <= hi_i     for every row i
//               lb_j <= x_j <= ub_j       for every variable j
//
// Each row gets a logical variable w_i = a_i'x carrying the row bounds, so
// constraints become A x - w = 0. Rows whose starting activity lies outside
// their bounds receive an artificial variable that phase one drives to zero.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace lprh::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::IterationLimit: return "iteration_limit";
  }
  return "unknown";
}

struct Term {
  std::size_t var;
  double coef;
};

class Model {
 public:
  std::size_t add_variable(double lb, double ub, double cost = 0.0) {
    if (lb > ub) throw std::invalid_argument("lp: variable lower bound above upper bound");
    if (std::isinf(lb) && std::isinf(ub)) throw std::invalid_argument("lp: free variables unsupported");
    lb_.push_back(lb);
    ub_.push_back(ub);
    cost_.push_back(cost);
    return lb_.size() - 1;
  }

  std::size_t add_row(std::vector<Term> terms, double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("lp: row lower bound above upper bound");
    for (const auto& t : terms)
      if (t.var >= lb_.size()) throw std::out_of_range("lp: row references unknown variable");
    rows_.push_back({std::move(terms), lo, hi});
    return rows_.size() - 1;
  }

  void set_bounds(std::size_t j, double lb, double ub) {
    if (lb > ub) throw std::invalid_argument("lp: variable lower bound above upper bound");
    lb_.at(j) = lb;
    ub_.at(j) = ub;
  }

  void set_cost(std::size_t j, double c) { cost_.at(j) = c; }

  std::size_t variables() const noexcept { return lb_.size(); }
  std::size_t rows() const noexcept { return rows_.size(); }
  double lower(std::size_t j) const { return lb_[j]; }
  double upper(std::size_t j) const { return ub_[j]; }
  double cost(std::size_t j) const { return cost_[j]; }

  struct Row {
    std::vector<Term> terms;
    double lo, hi;
  };
  const Row& row(std::size_t i) const { return rows_[i]; }

 private:
  std::vector<double> lb_, ub_, cost_;
  std::vector<Row> rows_;
};

struct Solution {
  Status status = Status::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::size_t pivots = 0;
};

struct Options {
  double feasibility_tol = 1e-7;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-9;
  std::size_t max_pivots = 0;  // 0 selects a size-based default
};

namespace detail {

class Tableau {
 public:
  Tableau(const Model& model, const Options& opt) : opt_(opt) {
    n_ = model.variables();
    m_ = model.rows();
    // columns: structural [0, n), logical [n, n+m), artificial after
    lb_.reserve(n_ + 2 * m_);
    for (std::size_t j = 0; j < n_; ++j) {
      lb_.push_back(model.lower(j));
      ub_.push_back(model.upper(j));
      cost_.push_back(model.cost(j));
      x_.push_back(std::isfinite(model.lower(j)) ? model.lower(j) : model.upper(j));
    }
    std::vector<double> activity(m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      const auto& r = model.row(i);
      for (const auto& t : r.terms) activity[i] += t.coef * x_[t.var];
      lb_.push_back(r.lo);
      ub_.push_back(r.hi);
      cost_.push_back(0.0);
      x_.push_back(std::clamp(activity[i], r.lo, r.hi));
    }
    std::vector<std::size_t> art_row;
    std::vector<double> art_sign;
    for (std::size_t i = 0; i < m_; ++i) {
      const double delta = activity[i] - x_[n_ + i];
      if (delta != 0.0) {
        art_row.push_back(i);
        art_sign.push_back(delta > 0.0 ? 1.0 : -1.0);
        lb_.push_back(0.0);
        ub_.push_back(kInf);
        cost_.push_back(0.0);
        x_.push_back(std::abs(delta));
      }
    }
    cols_ = x_.size();
    tab_.assign(m_ * cols_, 0.0);
    basis_.assign(m_, 0);
    position_.assign(cols_, kNonbasic);

    std::vector<std::ptrdiff_t> art_of_row(m_, -1);
    for (std::size_t k = 0; k < art_row.size(); ++k) art_of_row[art_row[k]] = static_cast<std::ptrdiff_t>(k);
    for (std::size_t i = 0; i < m_; ++i) {
      const auto& r = model.row(i);
      double* row = &tab_[i * cols_];
      if (art_of_row[i] < 0) {
        for (const auto& t : r.terms) row[t.var] -= t.coef;
        row[n_ + i] = 1.0;
        basis_[i] = n_ + i;
      } else {
        const std::size_t k = static_cast<std::size_t>(art_of_row[i]);
        const double s = art_sign[k];
        // art = s (a'x - w), so it starts at |delta|
        for (const auto& t : r.terms) row[t.var] -= s * t.coef;
        row[n_ + i] = s;
        row[n_ + m_ + k] = 1.0;
        basis_[i] = n_ + m_ + k;
      }
      position_[basis_[i]] = i;
    }
    first_art_ = n_ + m_;
    dead_.assign(cols_, false);
    d_.assign(cols_, 0.0);
  }

  Status run(std::size_t max_pivots) {
    max_pivots_ = max_pivots ? max_pivots : 50 * (m_ + cols_) + 1000;
    if (cols_ > first_art_) {
      std::vector<double> phase1(cols_, 0.0);
      for (std::size_t j = first_art_; j < cols_; ++j) phase1[j] = 1.0;
      Status s = optimize(phase1);
      if (s == Status::IterationLimit) return s;
      double infeas = 0.0;
      for (std::size_t j = first_art_; j < cols_; ++j) infeas += x_[j];
      if (infeas > opt_.feasibility_tol * static_cast<double>(1 + m_)) return Status::Infeasible;
      for (std::size_t j = first_art_; j < cols_; ++j) {
        ub_[j] = 0.0;
        if (position_[j] == kNonbasic) {
          x_[j] = 0.0;
          dead_[j] = true;
        }
      }
      refresh_basic_values();
    }
    return optimize(cost_);
  }

  std::vector<double> structural() const { return {x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n_)}; }
  std::size_t pivots() const noexcept { return pivots_; }

 private:
  static constexpr std::size_t kNonbasic = static_cast<std::size_t>(-1);

  double* row(std::size_t i) { return &tab_[i * cols_]; }

  void refresh_basic_values() {
    for (std::size_t i = 0; i < m_; ++i) {
      const double* r = row(i);
      double v = 0.0;
      for (std::size_t j = 0; j < cols_; ++j)
        if (position_[j] == kNonbasic && r[j] != 0.0) v -= r[j] * x_[j];
      x_[basis_[i]] = v;
    }
  }

  void price(const std::vector<double>& c) {
    for (std::size_t j = 0; j < cols_; ++j) d_[j] = position_[j] == kNonbasic ? c[j] : 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      const double cb = c[basis_[i]];
      if (cb == 0.0) continue;
      const double* r = row(i);
      for (std::size_t j = 0; j < cols_; ++j)
        if (r[j] != 0.0 && position_[j] == kNonbasic) d_[j] -= cb * r[j];
    }
  }

  // Entering column and direction, or cols_ when optimal.
  std::size_t choose_entering(bool bland, double& dir) const {
    std::size_t best = cols_;
    double best_score = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) {
      if (position_[j] != kNonbasic || dead_[j]) continue;
      if (lb_[j] == ub_[j]) continue;
      const double dj = d_[j];
      double s = 0.0;
      if (dj < -opt_.optimality_tol && x_[j] < ub_[j]) s = 1.0;
      else if (dj > opt_.optimality_tol && x_[j] > lb_[j]) s = -1.0;
      if (s == 0.0) continue;
      if (bland) {
        dir = s;
        return j;
      }
      if (std::abs(dj) > best_score) {
        best_score = std::abs(dj);
        best = j;
        dir = s;
      }
    }
    return best;
  }

  Status optimize(const std::vector<double>& c) {
    price(c);
    std::size_t degenerate_run = 0;
    std::vector<std::size_t> nz;
    nz.reserve(cols_);
    for (;;) {
      if (pivots_ >= max_pivots_) return Status::IterationLimit;
      const bool bland = degenerate_run > 50;
      double dir = 0.0;
      const std::size_t q = choose_entering(bland, dir);
      if (q == cols_) return Status::Optimal;

      // ratio test (two-pass, Harris style)
      const double tol = opt_.feasibility_tol;
      double theta_max = ub_[q] - lb_[q];
      for (std::size_t i = 0; i < m_; ++i) {
        const double g = -tab_[i * cols_ + q] * dir;
        if (std::abs(g) <= opt_.pivot_tol) continue;
        const std::size_t b = basis_[i];
        if (g < 0.0 && std::isfinite(lb_[b]))
          theta_max = std::min(theta_max, (x_[b] - lb_[b] + tol) / -g);
        else if (g > 0.0 && std::isfinite(ub_[b]))
          theta_max = std::min(theta_max, (ub_[b] - x_[b] + tol) / g);
      }
      if (std::isinf(theta_max)) return Status::Unbounded;
      std::size_t leave = m_;
      double best_g = 0.0, theta = ub_[q] - lb_[q];
      bool to_upper = false;
      for (std::size_t i = 0; i < m_; ++i) {
        const double g = -tab_[i * cols_ + q] * dir;
        if (std::abs(g) <= opt_.pivot_tol) continue;
        const std::size_t b = basis_[i];
        double ratio;
        bool upper;
        if (g < 0.0 && std::isfinite(lb_[b])) {
          ratio = (x_[b] - lb_[b]) / -g;
          upper = false;
        } else if (g > 0.0 && std::isfinite(ub_[b])) {
          ratio = (ub_[b] - x_[b]) / g;
          upper = true;
        } else {
          continue;
        }
        if (ratio > theta_max) continue;
        bool take = leave == m_;
        if (!take) {
          if (bland) take = basis_[i] < basis_[leave];
          else take = std::abs(g) > best_g;
        }
        if (take) {
          leave = i;
          best_g = std::abs(g);
          theta = std::max(ratio, 0.0);
          to_upper = upper;
        }
      }
      if (leave != m_ && theta > ub_[q] - lb_[q]) leave = m_;  // bound flip is shorter

      for (std::size_t i = 0; i < m_; ++i) {
        const double a = tab_[i * cols_ + q];
        if (a != 0.0) x_[basis_[i]] -= a * dir * theta;
      }
      x_[q] += dir * theta;
      degenerate_run = theta <= 1e-12 ? degenerate_run + 1 : 0;
      ++pivots_;

      if (leave == m_) {
        x_[q] = dir > 0.0 ? ub_[q] : lb_[q];
        continue;
      }

      const std::size_t out = basis_[leave];
      x_[out] = to_upper ? ub_[out] : lb_[out];
      pivot(leave, q, nz);
      position_[out] = kNonbasic;
      position_[q] = leave;
      basis_[leave] = q;
      if (out >= first_art_) dead_[out] = true;
    }
  }

  void pivot(std::size_t r, std::size_t q, std::vector<std::size_t>& nz) {
    double* pr = row(r);
    const double p = pr[q];
    nz.clear();
    for (std::size_t j = 0; j < cols_; ++j) {
      if (pr[j] == 0.0) continue;
      pr[j] /= p;
      nz.push_back(j);
    }
    pr[q] = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* ri = row(i);
      const double f = ri[q];
      if (f == 0.0) continue;
      for (std::size_t j : nz) {
        double v = ri[j] - f * pr[j];
        ri[j] = std::abs(v) < 1e-14 ? 0.0 : v;
      }
      ri[q] = 0.0;
    }
    const double f = d_[q];
    if (f != 0.0) {
      for (std::size_t j : nz) d_[j] -= f * pr[j];
      d_[q] = 0.0;
    }
  }

  Options opt_;
  std::size_t n_ = 0, m_ = 0, cols_ = 0, first_art_ = 0;
  std::vector<double> lb_, ub_, cost_, x_, d_, tab_;
  std::vector<std::size_t> basis_, position_;
  std::vector<bool> dead_;
  std::size_t pivots_ = 0, max_pivots_ = 0;
};

}  // namespace detail

inline Solution solve(const Model& model, const Options& options = {}) {
  detail::Tableau tab(model, options);
  Solution sol;
  sol.status = tab.run(options.max_pivots);
  sol.pivots = tab.pivots();
  if (sol.status != Status::Optimal) return sol;
  sol.x = tab.structural();
  for (std::size_t j = 0; j < model.variables(); ++j) {
    sol.x[j] = std::clamp(sol.x[j], model.lower(j), model.upper(j));
    sol.objective += model.cost(j) * sol.x[j];
  }
  return sol;
}

}  // namespace lprh::lp
