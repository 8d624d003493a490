#pragma once

// Device agents: the price response, cost and local constraint of loads,
// PV installations and storage devices.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lprh/core.hpp"

namespace lprh {

struct DeviceResponse {
  PowerProfile program;
  PowerProfile loss;  // per-slot watts, each >= 0
  bool constraint_ok = true;
};

// Static loads ignore prices and pass their profile through.
inline DeviceResponse load_response(const Load& spec, const PriceProfile& /*prices*/) {
  return {spec.actual, PowerProfile(spec.actual.size()), true};
}

// Binary curtailment over the whole horizon: the unit runs only if the
// revenue of its expected production covers its operation cost.
inline DeviceResponse pv_decide(const Pv& spec, const PowerProfile& expected,
                                const PriceProfile& prices, const TimeGrid& grid) {
  require_same_length(expected.size(), prices.size(), "pv_decide");
  double revenue = 0.0;
  for (std::size_t t = 0; t < expected.size(); ++t) {
    if (expected[t] > 0.0)
      throw DomainError("pv expected production must be nonpositive (slot " + std::to_string(t) +
                        ")");
    revenue -= grid.tau * expected[t] * prices[t];
  }
  DeviceResponse r{expected, PowerProfile(expected.size()), true};
  if (revenue < spec.gamma) {
    for (std::size_t t = 0; t < expected.size(); ++t) {
      r.loss[t] = -expected[t];
      r.program[t] = 0.0;
    }
  }
  return r;
}

inline DeviceResponse pv_decide(const Pv& spec, const PriceProfile& prices, const TimeGrid& grid) {
  return pv_decide(spec, spec.actual, prices, grid);
}

// Efficiency seen from the grid side: charging stores eta of the drawn power,
// discharging drains 1/eta of the delivered power.
inline double effective_efficiency(const Storage& s, double power) {
  return power >= 0.0 ? s.eta : 1.0 / s.eta;
}

// Piecewise-linear bid curve: full charge at low prices, a zero plateau on
// [eta/2, 0.5/eta], full discharge at high prices.
inline double storage_response_curve(const Storage& s, double price) {
  if (!(price >= 0.0 && price <= 1.0))
    throw DomainError("price " + std::to_string(price) + " outside [0, 1]");
  const double lo = s.eta / 2.0;
  const double hi = 0.5 / s.eta;
  const double w = s.ramp_width;
  if (price <= lo - w) return s.x_max;
  if (price < lo) return s.x_max * (lo - price) / w;
  if (price <= hi) return 0.0;
  if (price < hi + w) return s.x_min * (price - hi) / w;
  return s.x_min;
}

inline double storage_energy_step(const Storage& s, double energy, double power, double tau) {
  return energy + tau * (effective_efficiency(s, power) * power - s.lambda);
}

// Energy after each slot, starting from s.e0.
inline std::vector<double> storage_energy_trajectory(const Storage& s, const PowerProfile& program,
                                                     const TimeGrid& grid) {
  std::vector<double> e(program.size());
  double acc = s.e0;
  for (std::size_t t = 0; t < program.size(); ++t) {
    acc = storage_energy_step(s, acc, program[t], grid.tau);
    e[t] = acc;
  }
  return e;
}

inline PowerProfile storage_loss(const Storage& s, const PowerProfile& program) {
  PowerProfile loss(program.size());
  for (std::size_t t = 0; t < program.size(); ++t) {
    const double x = program[t];
    loss[t] = x >= 0.0 ? x * (1.0 - s.eta) : x * (1.0 - 1.0 / s.eta);
  }
  return loss;
}

namespace detail {

// Grid-side power that changes the stored energy by `delta` Wh over one slot.
inline double power_for_energy_change(const Storage& s, double delta, double tau) {
  const double internal = delta / tau + s.lambda;
  return internal >= 0.0 ? internal / s.eta : internal * s.eta;
}

}  // namespace detail

// Follows the bid curve slot by slot and clips each slot to the range that
// keeps the stored energy inside [e_min, e_max] after that slot.
inline DeviceResponse storage_response(const Storage& s, const PriceProfile& prices,
                                       const TimeGrid& grid) {
  const std::size_t n = prices.size();
  DeviceResponse r{PowerProfile(n), PowerProfile(n), true};
  double energy = s.e0;
  for (std::size_t t = 0; t < n; ++t) {
    const double wanted = storage_response_curve(s, prices[t]);
    const double lo = std::max(s.x_min, detail::power_for_energy_change(s, s.e_min - energy, grid.tau));
    const double hi = std::min(s.x_max, detail::power_for_energy_change(s, s.e_max - energy, grid.tau));
    double x;
    if (lo > hi) {
      // leakage outruns the charge rate (or the state is already outside bounds)
      x = lo > s.x_max ? s.x_max : lo;
      r.constraint_ok = false;
    } else {
      x = std::clamp(wanted, lo, hi);
    }
    r.program[t] = x;
    energy = storage_energy_step(s, energy, x, grid.tau);
  }
  r.loss = storage_loss(s, r.program);
  return r;
}

// Dispatches on the device kind. `grid` supplies tau for the energy-aware
// devices.
inline DeviceResponse device_response(const DeviceSpec& spec, const PriceProfile& prices,
                                      const TimeGrid& grid) {
  return std::visit(
      [&](const auto& d) -> DeviceResponse {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Load>)
          return load_response(d, prices);
        else if constexpr (std::is_same_v<T, Pv>)
          return pv_decide(d, prices, grid);
        else
          return storage_response(d, prices, grid);
      },
      spec);
}

}  // namespace lprh
