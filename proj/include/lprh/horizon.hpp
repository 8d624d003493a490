#pragma once

// Receding-horizon simulation. Each step builds the T-slot window that starts
// at the current wall-clock PTU, negotiates a program for it, commits the
// first slot as a contract and rolls storage energies forward.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lprh/agents.hpp"
#include "lprh/coordination.hpp"
#include "lprh/core.hpp"

namespace lprh {

// A complete experiment: the tree holds full-length wall-clock profiles, the
// target covers the same wall-clock slots.
struct Scenario {
  TimeGrid grid;  // horizon window
  GridTree tree;
  PowerProfile theta;
  NegotiationSettings solver;
  std::uint64_t seed = 0;
  std::size_t steps = 1;
};

struct SimulationOptions {
  bool perfect_forecast = false;
  bool keep_traces = false;
};

inline PowerProfile forecast_blend(const PowerProfile& actual, const PowerProfile& historical_avg,
                                   const TimeGrid& grid) {
  require_same_length(actual.size(), grid.slots, "forecast_blend");
  require_same_length(historical_avg.size(), grid.slots, "forecast_blend");
  if (grid.slots == 1) return actual;
  PowerProfile out(grid.slots);
  const double denom = static_cast<double>(grid.slots - 1);
  for (std::size_t t = 0; t < grid.slots; ++t) {
    const double alpha = std::sqrt(static_cast<double>(t) / denom);
    out[t] = (1.0 - alpha) * actual[t] + alpha * historical_avg[t];
  }
  return out;
}

// Reads wall-clock slot s. Past the end of the recorded profile the historical
// average is tiled.
inline double wall_clock_value(const PowerProfile& actual, const PowerProfile& historical_avg,
                               std::size_t s) {
  if (s < actual.size()) return actual[s];
  if (historical_avg.empty()) throw StructuralError("profile too short and no average to tile");
  return historical_avg[s % historical_avg.size()];
}

inline PowerProfile window_slice(const PowerProfile& actual, const PowerProfile& historical_avg,
                                 std::size_t start, std::size_t slots) {
  PowerProfile out(slots);
  for (std::size_t t = 0; t < slots; ++t) out[t] = wall_clock_value(actual, historical_avg, start + t);
  return out;
}

inline PowerProfile window_average(const PowerProfile& historical_avg, std::size_t start,
                                   std::size_t slots) {
  return window_slice(PowerProfile{}, historical_avg, start, slots);
}

inline PowerProfile window_theta(const Scenario& sc, std::size_t start) {
  return window_slice(sc.theta, sc.theta, start, sc.grid.slots);
}

// Device view for the window starting at `start`: slot 1 holds the true
// value, later slots the blended forecast (or the truth under a perfect
// forecast); storages start from their live energy.
inline GridTree window_tree(const Scenario& sc, std::size_t start,
                            const std::map<std::size_t, double>& energies, bool perfect_forecast) {
  const TimeGrid& g = sc.grid;
  auto view = [&](const PowerProfile& actual, const PowerProfile& avg) {
    PowerProfile a = window_slice(actual, avg, start, g.slots);
    if (perfect_forecast) return a;
    return forecast_blend(a, window_average(avg, start, g.slots), g);
  };
  return sc.tree.map_devices([&](std::size_t i, const DeviceSpec& spec) -> DeviceSpec {
    return std::visit(
        [&](const auto& d) -> DeviceSpec {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Load>) {
            return Load{view(d.actual, d.historical_avg),
                        window_average(d.historical_avg, start, g.slots)};
          } else if constexpr (std::is_same_v<T, Pv>) {
            return Pv{view(d.actual, d.historical_avg),
                      window_average(d.historical_avg, start, g.slots), d.gamma};
          } else {
            Storage s = d;
            if (auto it = energies.find(i); it != energies.end()) s.e0 = it->second;
            return s;
          }
        },
        spec);
  });
}

inline std::map<std::size_t, double> initial_energies(const GridTree& tree) {
  std::map<std::size_t, double> e;
  for (std::size_t i : tree.devices())
    if (const auto* s = std::get_if<Storage>(&tree.device(i))) e[i] = s->e0;
  return e;
}

// Contract bookkeeping shared by the distributed and the centralized rollout.
class ContractLedger {
 public:
  ContractLedger(const Scenario& sc, std::size_t steps)
      : sc_(sc), energies_(initial_energies(sc.tree)) {
    for (std::size_t i = 0; i < sc.tree.size(); ++i) {
      result_.contracted[sc.tree.node(i).id].reserve(steps);
    }
    for (const auto& [i, e] : energies_) result_.energies[sc.tree.node(i).id].push_back(e);
  }

  const std::map<std::size_t, double>& energies() const noexcept { return energies_; }

  // Commits slot-1 device powers for wall-clock PTU k; aggregates are derived
  // bottom-up from them. Violations are judged on these committed flows only.
  void commit(std::size_t k, const std::vector<double>& device_power, double loss_watts) {
    const GridTree& tree = sc_.tree;
    const double tol = sc_.solver.epsilon_max;
    std::vector<double> flow(tree.size(), 0.0);
    for (std::size_t i : tree.devices()) flow[i] = device_power[i];
    accumulate(tree.root(), flow);
    for (std::size_t i = 0; i < tree.size(); ++i)
      result_.contracted[tree.node(i).id].push_back(flow[i]);

    const double target = wall_clock_value(sc_.theta, sc_.theta, k);
    if (double dev = std::abs(flow[tree.root()] - target); dev > tol)
      result_.violations.push_back({tree.node(tree.root()).id, k, dev});
    for (std::size_t i = 0; i < tree.size(); ++i)
      if (const auto* c = std::get_if<Congestion>(&tree.node(i).kind))
        if (double over = std::abs(flow[i]) - c->beta; over > tol)
          result_.violations.push_back({tree.node(i).id, k, over});

    for (auto& [i, e] : energies_) {
      const auto& s = std::get<Storage>(tree.device(i));
      e = storage_energy_step(s, e, device_power[i], sc_.grid.tau);
      result_.energies[tree.node(i).id].push_back(e);
      if (e < s.e_min - 1e-9 || e > s.e_max + 1e-9)
        result_.violations.push_back({tree.node(i).id, k, e < s.e_min ? s.e_min - e : e - s.e_max});
    }
    result_.losses.push_back(loss_watts);
  }

  DispatchResult& result() noexcept { return result_; }

  DispatchResult finish() {
    double sum = 0.0;
    for (double l : result_.losses) sum += l;
    result_.total_loss_energy = sc_.grid.tau * sum;
    result_.feasible = result_.violations.empty();
    return std::move(result_);
  }

 private:
  double accumulate(std::size_t i, std::vector<double>& flow) const {
    const Node& n = sc_.tree.node(i);
    if (n.is_device()) return flow[i];
    double s = 0.0;
    for (std::size_t c : n.children) s += accumulate(c, flow);
    flow[i] = s;
    return s;
  }

  const Scenario& sc_;
  std::map<std::size_t, double> energies_;
  DispatchResult result_;
};

struct SimulationRun {
  DispatchResult result;
  std::vector<NegotiationTrace> traces;  // per step, when requested
};

inline SimulationRun run_simulation_traced(const Scenario& sc, std::size_t steps,
                                           const SimulationOptions& options = {}) {
  if (steps == 0) throw ConfigError("simulation needs at least one step");
  ContractLedger ledger(sc, steps);
  SimulationRun run;
  const GridTree& tree = sc.tree;
  for (std::size_t k = 0; k < steps; ++k) {
    GridTree window = window_tree(sc, k, ledger.energies(), options.perfect_forecast);
    Negotiator negotiator(window, window_theta(sc, k), sc.grid, sc.solver);
    NegotiationTrace trace;
    NegotiationOutcome outcome = negotiator.negotiate(&trace);

    std::vector<double> power(tree.size(), 0.0);
    double loss = 0.0;
    for (std::size_t i : tree.devices()) {
      power[i] = trace.nodes[i].program[0];
      loss += trace.nodes[i].loss[0];
    }
    ledger.commit(k, power, loss);
    auto& res = ledger.result();
    for (std::size_t i = 0; i < tree.size(); ++i)
      res.prices[tree.node(i).id].push_back(trace.nodes[i].local_prices[0]);
    res.iterations_per_step.push_back(outcome.iterations);
    res.converged_per_step.push_back(outcome.converged);
    res.final_prices.push_back(outcome.local_prices);
    if (options.keep_traces) run.traces.push_back(std::move(trace));
  }
  run.result = ledger.finish();
  return run;
}

inline DispatchResult run_simulation(const Scenario& sc, std::size_t steps,
                                     const SimulationOptions& options = {}) {
  return run_simulation_traced(sc, steps, options).result;
}

}  // namespace lprh
