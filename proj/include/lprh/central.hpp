#pragma once

// Centralized baselines. The dispatch problem is written as a mixed integer
// linear program (one run/curtail binary per PV unit, charge and discharge
// split per storage slot) and solved by branch-and-bound over an exact
// simplex. The perfect-information solver runs it once on the true profiles;
// the receding-horizon solver runs it on every forecast window. A brute-force
// enumerator over discretized storage powers serves as an independent oracle
// on tiny instances.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lprh/agents.hpp"
#include "lprh/core.hpp"
#include "lprh/horizon.hpp"
#include "lprh/lp.hpp"

namespace lprh {

struct DispatchProblem {
  GridTree tree;  // device profiles are the forecasts, storage e0 the start energy
  PowerProfile theta;
  TimeGrid grid;
};

enum class SolveStatus { Optimal, Infeasible };

inline const char* to_string(SolveStatus s) { return s == SolveStatus::Optimal ? "optimal" : "infeasible"; }

struct CentralSolution {
  std::map<NodeId, PowerProfile> powers;  // every node; internal nodes hold aggregates
  double objective = 0.0;                 // total loss, Wh
  SolveStatus status = SolveStatus::Infeasible;
  double target_residual = 0.0;  // max |sum - theta| over slots
  bool certified = true;         // branch-and-bound closed
};

struct CentralOptions {
  double tolerance = 1e-6;
  std::size_t max_nodes = 2000;
  // Penalty per W (or Wh) of violation when solving the elastic fallback.
  double elastic_penalty = 1e4;
  std::size_t elastic_max_nodes = 200;  // the fallback is best effort
};

namespace detail {

struct StorageCols {
  std::vector<std::ptrdiff_t> charge, discharge;  // -1 when the direction is unavailable
  std::vector<std::size_t> energy;
};

struct MilpLayout {
  lp::Model model;
  double constant = 0.0;
  std::map<std::size_t, std::size_t> pv_var;  // device index -> run variable
  std::map<std::size_t, StorageCols> storage;
};

inline void add_power_terms(const MilpLayout& L, const GridTree& tree, std::size_t dev,
                            std::size_t t, std::vector<lp::Term>& terms, double& fixed) {
  const DeviceSpec& spec = tree.device(dev);
  if (const auto* l = std::get_if<Load>(&spec)) {
    fixed += l->actual[t];
  } else if (const auto* pv = std::get_if<Pv>(&spec)) {
    if (auto it = L.pv_var.find(dev); it != L.pv_var.end() && pv->actual[t] != 0.0)
      terms.push_back({it->second, pv->actual[t]});
  } else {
    const auto& cols = L.storage.at(dev);
    if (cols.charge[t] >= 0) terms.push_back({static_cast<std::size_t>(cols.charge[t]), 1.0});
    if (cols.discharge[t] >= 0) terms.push_back({static_cast<std::size_t>(cols.discharge[t]), -1.0});
  }
}

inline void collect_devices(const GridTree& tree, std::size_t node, std::vector<std::size_t>& out) {
  const Node& n = tree.node(node);
  if (n.is_device()) {
    out.push_back(node);
    return;
  }
  for (std::size_t c : n.children) collect_devices(tree, c, out);
}

inline MilpLayout build_milp(const DispatchProblem& p, bool elastic, double penalty) {
  MilpLayout L;
  const std::size_t T = p.grid.slots;
  const double tau = p.grid.tau;
  require_same_length(p.theta.size(), T, "dispatch problem target");
  auto& m = L.model;

  for (std::size_t dev : p.tree.devices()) {
    const DeviceSpec& spec = p.tree.device(dev);
    if (const auto* pv = std::get_if<Pv>(&spec)) {
      require_same_length(pv->actual.size(), T, "pv forecast");
      double energy = 0.0;
      for (double x : pv->actual) energy -= x;
      if (energy > 0.0) {
        L.pv_var[dev] = m.add_variable(0.0, 1.0, -tau * energy);
        L.constant += tau * energy;
      }
    } else if (const auto* s = std::get_if<Storage>(&spec)) {
      StorageCols cols;
      for (std::size_t t = 0; t < T; ++t) {
        cols.charge.push_back(s->x_max > 0.0
                                  ? static_cast<std::ptrdiff_t>(m.add_variable(0.0, s->x_max, tau * (1.0 - s->eta)))
                                  : -1);
        cols.discharge.push_back(
            s->x_min < 0.0
                ? static_cast<std::ptrdiff_t>(m.add_variable(0.0, -s->x_min, tau * (1.0 / s->eta - 1.0)))
                : -1);
        cols.energy.push_back(m.add_variable(s->e_min, s->e_max, 0.0));
      }
      for (std::size_t t = 0; t < T; ++t) {
        // e_t - e_{t-1} - tau*eta*c_t + tau*d_t/eta = -tau*lambda
        std::vector<lp::Term> terms{{cols.energy[t], 1.0}};
        double rhs = -tau * s->lambda;
        if (t > 0)
          terms.push_back({cols.energy[t - 1], -1.0});
        else
          rhs += s->e0;
        if (cols.charge[t] >= 0) terms.push_back({static_cast<std::size_t>(cols.charge[t]), -tau * s->eta});
        if (cols.discharge[t] >= 0)
          terms.push_back({static_cast<std::size_t>(cols.discharge[t]), tau / s->eta});
        if (elastic) {
          terms.push_back({m.add_variable(0.0, lp::kInf, penalty), 1.0});
          terms.push_back({m.add_variable(0.0, lp::kInf, penalty), -1.0});
        }
        m.add_row(std::move(terms), rhs, rhs);
        // convex hull of "charge or discharge": c/x_max + d/|x_min| <= 1
        if (s->eta < 1.0 && cols.charge[t] >= 0 && cols.discharge[t] >= 0)
          m.add_row({{static_cast<std::size_t>(cols.charge[t]), 1.0 / s->x_max},
                     {static_cast<std::size_t>(cols.discharge[t]), -1.0 / s->x_min}},
                    -lp::kInf, 1.0);
      }
      L.storage.emplace(dev, std::move(cols));
    } else {
      require_same_length(std::get<Load>(spec).actual.size(), T, "load forecast");
    }
  }

  std::vector<std::size_t> all;
  collect_devices(p.tree, p.tree.root(), all);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<lp::Term> terms;
    double fixed = 0.0;
    for (std::size_t dev : all) add_power_terms(L, p.tree, dev, t, terms, fixed);
    if (elastic) {
      terms.push_back({m.add_variable(0.0, lp::kInf, penalty), 1.0});
      terms.push_back({m.add_variable(0.0, lp::kInf, penalty), -1.0});
    }
    const double rhs = p.theta[t] - fixed;
    m.add_row(std::move(terms), rhs, rhs);
  }

  for (std::size_t i = 0; i < p.tree.size(); ++i) {
    const auto* c = std::get_if<Congestion>(&p.tree.node(i).kind);
    if (!c) continue;
    std::vector<std::size_t> under;
    collect_devices(p.tree, i, under);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<lp::Term> terms;
      double fixed = 0.0;
      for (std::size_t dev : under) add_power_terms(L, p.tree, dev, t, terms, fixed);
      if (elastic) {
        terms.push_back({m.add_variable(0.0, lp::kInf, penalty), 1.0});
        terms.push_back({m.add_variable(0.0, lp::kInf, penalty), -1.0});
      }
      m.add_row(std::move(terms), -c->beta - fixed, c->beta - fixed);
    }
  }
  return L;
}

// Fills node powers from a device-power assignment and evaluates losses.
inline CentralSolution assemble(const DispatchProblem& p, const std::map<std::size_t, PowerProfile>& device_power) {
  CentralSolution sol;
  const std::size_t T = p.grid.slots;
  std::vector<PowerProfile> flow(p.tree.size(), PowerProfile(T));
  double loss = 0.0;
  for (const auto& [dev, x] : device_power) {
    flow[dev] = x;
    const DeviceSpec& spec = p.tree.device(dev);
    if (const auto* s = std::get_if<Storage>(&spec)) {
      for (double l : storage_loss(*s, x)) loss += l;
    } else if (const auto* pv = std::get_if<Pv>(&spec)) {
      for (std::size_t t = 0; t < T; ++t) loss += x[t] - pv->actual[t];
    }
  }
  // children are declared after parents only by convention, so aggregate recursively
  struct Agg {
    const GridTree& tree;
    std::vector<PowerProfile>& flow;
    void run(std::size_t i) {
      const Node& n = tree.node(i);
      if (n.is_device()) return;
      PowerProfile s(flow[i].size());
      for (std::size_t c : n.children) {
        run(c);
        for (std::size_t t = 0; t < s.size(); ++t) s[t] += flow[c][t];
      }
      flow[i] = std::move(s);
    }
  } agg{p.tree, flow};
  agg.run(p.tree.root());
  for (std::size_t i = 0; i < p.tree.size(); ++i) sol.powers[p.tree.node(i).id] = flow[i];
  sol.objective = p.grid.tau * loss;
  const auto& root = flow[p.tree.root()];
  for (std::size_t t = 0; t < T; ++t) sol.target_residual = std::max(sol.target_residual, std::abs(root[t] - p.theta[t]));
  return sol;
}

inline std::optional<CentralSolution> branch_and_bound(const DispatchProblem& p, MilpLayout& L,
                                                       const CentralOptions& opt, bool& certified) {
  struct Fix {
    std::size_t var;
    double lb, ub;
  };
  std::vector<std::vector<Fix>> stack{{}};
  std::vector<std::pair<double, double>> base(L.model.variables());
  for (std::size_t j = 0; j < base.size(); ++j) base[j] = {L.model.lower(j), L.model.upper(j)};

  double incumbent = lp::kInf;
  std::optional<std::vector<double>> best_x;
  std::size_t explored = 0;
  certified = true;
  const double tol = opt.tolerance;

  while (!stack.empty()) {
    if (++explored > opt.max_nodes) {
      certified = false;
      break;
    }
    std::vector<Fix> fixes = std::move(stack.back());
    stack.pop_back();
    for (std::size_t j = 0; j < base.size(); ++j) L.model.set_bounds(j, base[j].first, base[j].second);
    for (const auto& f : fixes) L.model.set_bounds(f.var, f.lb, f.ub);
    lp::Solution s = lp::solve(L.model);
    if (s.status != lp::Status::Optimal) {
      if (s.status == lp::Status::IterationLimit) certified = false;
      continue;
    }
    if (s.objective >= incumbent - 1e-9) continue;

    std::optional<Fix> down, up;
    for (const auto& [dev, v] : L.pv_var) {
      const double u = s.x[v];
      if (u > tol && u < 1.0 - tol) {
        down = Fix{v, 0.0, 0.0};
        up = Fix{v, 1.0, 1.0};
        break;
      }
    }
    if (!down) {
      for (const auto& [dev, cols] : L.storage) {
        const auto& st = std::get<Storage>(p.tree.device(dev));
        if (st.eta >= 1.0) continue;  // lossless: charge and discharge net out
        for (std::size_t t = 0; t < cols.charge.size() && !down; ++t) {
          if (cols.charge[t] < 0 || cols.discharge[t] < 0) continue;
          const auto c = static_cast<std::size_t>(cols.charge[t]);
          const auto d = static_cast<std::size_t>(cols.discharge[t]);
          if (s.x[c] > tol && s.x[d] > tol) {
            down = Fix{c, 0.0, 0.0};
            up = Fix{d, 0.0, 0.0};
          }
        }
        if (down) break;
      }
    }
    if (!down) {
      incumbent = s.objective;
      best_x = s.x;
      continue;
    }
    auto a = fixes, b = fixes;
    a.push_back(*down);
    b.push_back(*up);
    stack.push_back(std::move(a));
    stack.push_back(std::move(b));  // explored first
  }
  for (std::size_t j = 0; j < base.size(); ++j) L.model.set_bounds(j, base[j].first, base[j].second);
  if (!best_x) return std::nullopt;

  const std::size_t T = p.grid.slots;
  std::map<std::size_t, PowerProfile> power;
  for (std::size_t dev : p.tree.devices()) {
    const DeviceSpec& spec = p.tree.device(dev);
    PowerProfile x(T);
    if (const auto* l = std::get_if<Load>(&spec)) {
      x = l->actual;
    } else if (const auto* pv = std::get_if<Pv>(&spec)) {
      auto it = L.pv_var.find(dev);
      const bool run = it == L.pv_var.end() || (*best_x)[it->second] > 0.5;
      if (run) x = pv->actual;
    } else {
      const auto& cols = L.storage.at(dev);
      for (std::size_t t = 0; t < T; ++t) {
        double v = 0.0;
        if (cols.charge[t] >= 0) v += (*best_x)[static_cast<std::size_t>(cols.charge[t])];
        if (cols.discharge[t] >= 0) v -= (*best_x)[static_cast<std::size_t>(cols.discharge[t])];
        x[t] = v;
      }
    }
    power.emplace(dev, std::move(x));
  }
  return assemble(p, power);
}

}  // namespace detail

// Direct constraint evaluation, independent of the solver. Returns a list of
// human-readable problems; empty means feasible.
inline std::vector<std::string> check_solution(const DispatchProblem& p, const CentralSolution& sol,
                                               double tol = 1e-6) {
  std::vector<std::string> issues;
  const std::size_t T = p.grid.slots;
  auto power_of = [&](std::size_t i) -> const PowerProfile& { return sol.powers.at(p.tree.node(i).id); };
  PowerProfile total(T);
  for (std::size_t dev : p.tree.devices()) {
    const PowerProfile& x = power_of(dev);
    for (std::size_t t = 0; t < T; ++t) total[t] += x[t];
    const DeviceSpec& spec = p.tree.device(dev);
    const std::string& id = p.tree.node(dev).id;
    if (const auto* l = std::get_if<Load>(&spec)) {
      for (std::size_t t = 0; t < T; ++t)
        if (std::abs(x[t] - l->actual[t]) > tol) issues.push_back(id + ": load deviates from its profile");
    } else if (const auto* pv = std::get_if<Pv>(&spec)) {
      bool run = true, off = true;
      for (std::size_t t = 0; t < T; ++t) {
        run = run && std::abs(x[t] - pv->actual[t]) <= tol;
        off = off && std::abs(x[t]) <= tol;
      }
      if (!run && !off) issues.push_back(id + ": pv neither runs nor is curtailed");
    } else {
      const auto& s = std::get<Storage>(spec);
      for (std::size_t t = 0; t < T; ++t)
        if (x[t] < s.x_min - tol || x[t] > s.x_max + tol) issues.push_back(id + ": power bound violated");
      for (double e : storage_energy_trajectory(s, x, p.grid))
        if (e < s.e_min - tol || e > s.e_max + tol) issues.push_back(id + ": energy bound violated");
    }
  }
  for (std::size_t t = 0; t < T; ++t)
    if (std::abs(total[t] - p.theta[t]) > tol) issues.push_back("target missed at slot " + std::to_string(t));
  for (std::size_t i = 0; i < p.tree.size(); ++i) {
    const auto* c = std::get_if<Congestion>(&p.tree.node(i).kind);
    if (!c) continue;
    std::vector<std::size_t> under;
    detail::collect_devices(p.tree, i, under);
    for (std::size_t t = 0; t < T; ++t) {
      double f = 0.0;
      for (std::size_t dev : under) f += power_of(dev)[t];
      if (std::abs(f) > c->beta + tol)
        issues.push_back(p.tree.node(i).id + ": limit exceeded at slot " + std::to_string(t));
    }
  }
  return issues;
}

// Globally optimal dispatch of the whole problem, or Infeasible.
inline CentralSolution solve_pics(const DispatchProblem& p, const CentralOptions& opt = {}) {
  auto layout = detail::build_milp(p, false, opt.elastic_penalty);
  bool certified = true;
  auto sol = detail::branch_and_bound(p, layout, opt, certified);
  if (!sol) {
    CentralSolution none;
    none.status = SolveStatus::Infeasible;
    none.certified = certified;
    return none;
  }
  sol->status = SolveStatus::Optimal;
  sol->certified = certified;
  return *sol;
}

// Least-violation dispatch with soft target, congestion and energy
// constraints. Always reports Infeasible; used as the best-effort program
// when the strict problem has no solution.
inline CentralSolution solve_elastic(const DispatchProblem& p, const CentralOptions& opt = {}) {
  auto layout = detail::build_milp(p, true, opt.elastic_penalty);
  bool certified = true;
  CentralOptions budget = opt;
  budget.max_nodes = opt.elastic_max_nodes;
  auto sol = detail::branch_and_bound(p, layout, budget, certified);
  CentralSolution out = sol ? *sol : CentralSolution{};
  out.status = SolveStatus::Infeasible;
  out.certified = certified;
  return out;
}

// Whole-window problem with true profiles over wall-clock slots [0, steps).
inline DispatchProblem full_horizon_problem(const Scenario& sc, std::size_t steps) {
  Scenario full = sc;
  full.grid = TimeGrid(steps, sc.grid.tau);
  DispatchProblem p{window_tree(full, 0, initial_energies(sc.tree), true),
                    window_slice(sc.theta, sc.theta, 0, steps), full.grid};
  return p;
}

inline DispatchProblem window_problem(const Scenario& sc, std::size_t start,
                                      const std::map<std::size_t, double>& energies, bool perfect_forecast) {
  return {window_tree(sc, start, energies, perfect_forecast), window_theta(sc, start), sc.grid};
}

struct RhcsRun {
  DispatchResult result;
  std::vector<bool> strict_feasible;  // per step
  bool all_steps_feasible() const {
    return std::all_of(strict_feasible.begin(), strict_feasible.end(), [](bool b) { return b; });
  }
};

// Receding-horizon centralized rollout on the same windows as the price
// negotiation.
inline RhcsRun solve_rhcs(const Scenario& sc, std::size_t steps, const SimulationOptions& options = {},
                          const CentralOptions& opt = {}) {
  if (steps == 0) throw ConfigError("simulation needs at least one step");
  ContractLedger ledger(sc, steps);
  RhcsRun run;
  const GridTree& tree = sc.tree;
  for (std::size_t k = 0; k < steps; ++k) {
    DispatchProblem prob = window_problem(sc, k, ledger.energies(), options.perfect_forecast);
    CentralSolution sol = solve_pics(prob, opt);
    const bool strict = sol.status == SolveStatus::Optimal;
    if (!strict) sol = solve_elastic(prob, opt);
    run.strict_feasible.push_back(strict);

    std::vector<double> power(tree.size(), 0.0);
    double loss = 0.0;
    for (std::size_t i : tree.devices()) {
      const std::string& id = tree.node(i).id;
      auto it = sol.powers.find(id);
      const double x = it == sol.powers.end() ? 0.0 : it->second[0];
      power[i] = x;
      const DeviceSpec& spec = prob.tree.device(i);
      if (const auto* s = std::get_if<Storage>(&spec))
        loss += x >= 0.0 ? x * (1.0 - s->eta) : x * (1.0 - 1.0 / s->eta);
      else if (const auto* pv = std::get_if<Pv>(&spec))
        loss += x - pv->actual[0];
    }
    ledger.commit(k, power, loss);
    auto& res = ledger.result();
    res.iterations_per_step.push_back(1);
    res.converged_per_step.push_back(strict);
  }
  run.result = ledger.finish();
  return run;
}

// Exhaustive search over PV run/curtail combinations and storage powers on a
// uniform grid of `power_grid_points` values between x_min and x_max. The
// target is relaxed to the best the grid can achieve: candidates are ranked
// by their largest target residual first (ties within tol) and by loss second.
inline CentralSolution brute_force_oracle(const DispatchProblem& p, int power_grid_points, double tol = 1e-6) {
  const std::size_t T = p.grid.slots;
  std::vector<std::size_t> pvs, stores, loads;
  for (std::size_t dev : p.tree.devices()) {
    const DeviceSpec& spec = p.tree.device(dev);
    if (std::holds_alternative<Pv>(spec)) pvs.push_back(dev);
    else if (std::holds_alternative<Storage>(spec)) stores.push_back(dev);
    else loads.push_back(dev);
  }
  if (pvs.size() > 2 || stores.size() > 2 || T > 4 || power_grid_points < 1 || power_grid_points > 21)
    throw DomainError("brute_force_oracle: instance too large to enumerate");

  std::vector<std::vector<double>> levels;
  for (std::size_t dev : stores) {
    const auto& s = std::get<Storage>(p.tree.device(dev));
    std::vector<double> v;
    if (power_grid_points == 1 || s.x_max == s.x_min) {
      v.push_back(s.x_min);
    } else {
      const double step = (s.x_max - s.x_min) / (power_grid_points - 1);
      for (int g = 0; g < power_grid_points; ++g) v.push_back(s.x_min + g * step);
    }
    levels.push_back(std::move(v));
  }

  std::vector<std::pair<double, std::vector<std::size_t>>> limits;
  for (std::size_t i = 0; i < p.tree.size(); ++i)
    if (const auto* c = std::get_if<Congestion>(&p.tree.node(i).kind)) {
      std::vector<std::size_t> under;
      detail::collect_devices(p.tree, i, under);
      limits.emplace_back(c->beta, std::move(under));
    }

  std::map<std::size_t, PowerProfile> current;
  for (std::size_t dev : loads) current[dev] = std::get<Load>(p.tree.device(dev)).actual;
  for (std::size_t dev : stores) current[dev] = PowerProfile(T);

  struct Best {
    double residual = lp::kInf, loss = lp::kInf;
    std::optional<std::map<std::size_t, PowerProfile>> power;
  } best;
  std::vector<double> energy(stores.size());

  // Residual of slot t, or infinity when a congestion limit is exceeded.
  auto slot_residual = [&](std::size_t t) {
    double total = 0.0;
    for (const auto& [dev, x] : current) total += x[t];
    for (const auto& [beta, under] : limits) {
      double f = 0.0;
      for (std::size_t dev : under) f += current[dev][t];
      if (std::abs(f) > beta + tol) return lp::kInf;
    }
    return std::abs(total - p.theta[t]);
  };

  // depth-first over (slot, storage) pairs, slot-major; a branch dies once
  // its residual is clearly worse than the best complete candidate
  auto go = [&](auto&& self, std::size_t t, std::size_t k, double loss, double residual) -> void {
    if (k == stores.size()) {
      residual = std::max(residual, slot_residual(t));
      if (std::isinf(residual) || residual > best.residual + tol) return;
      if (t + 1 < T) {
        self(self, t + 1, 0, loss, residual);
        return;
      }
      const bool closer = residual < best.residual - tol;
      if (closer || loss < best.loss) {
        best.residual = closer ? residual : std::min(best.residual, residual);
        best.loss = loss;
        best.power = current;
      }
      return;
    }
    const auto& s = std::get<Storage>(p.tree.device(stores[k]));
    const double e_prev = energy[k];
    for (double x : levels[k]) {
      const double e = storage_energy_step(s, e_prev, x, p.grid.tau);
      if (e < s.e_min - tol || e > s.e_max + tol) continue;
      energy[k] = e;
      current[stores[k]][t] = x;
      self(self, t, k + 1, loss + (x >= 0.0 ? x * (1.0 - s.eta) : x * (1.0 - 1.0 / s.eta)), residual);
    }
    energy[k] = e_prev;
    current[stores[k]][t] = 0.0;
  };

  for (std::size_t mask = 0; mask < (std::size_t{1} << pvs.size()); ++mask) {
    double base_loss = 0.0;
    for (std::size_t k = 0; k < pvs.size(); ++k) {
      const auto& pv = std::get<Pv>(p.tree.device(pvs[k]));
      const bool run = mask & (std::size_t{1} << k);
      current[pvs[k]] = run ? pv.actual : PowerProfile(T);
      if (!run)
        for (double x : pv.actual) base_loss -= x;
    }
    for (std::size_t k = 0; k < stores.size(); ++k) energy[k] = std::get<Storage>(p.tree.device(stores[k])).e0;
    go(go, 0, 0, base_loss, 0.0);
  }

  if (!best.power) return CentralSolution{};
  CentralSolution sol = detail::assemble(p, *best.power);
  sol.status = SolveStatus::Optimal;
  return sol;
}

}  // namespace lprh
