#pragma once

// Small builders and generators shared by the test binaries.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lprh/core.hpp"
#include "lprh/horizon.hpp"

namespace lprh::testing {

inline PowerProfile constant(std::size_t n, double v) { return PowerProfile(n, v); }

inline Load load_of(PowerProfile p) { return Load{p, p}; }

inline Pv pv_of(PowerProfile p, double gamma = 0.2) { return Pv{p, p, gamma}; }

inline Storage battery(double x_max, double x_min, double e_max, double e0, double eta = 1.0,
                       double lambda = 0.0, double ramp = 0.075) {
  Storage s;
  s.x_max = x_max;
  s.x_min = x_min;
  s.e_min = 0.0;
  s.e_max = e_max;
  s.e0 = e0;
  s.eta = eta;
  s.lambda = lambda;
  s.ramp_width = ramp;
  return s;
}

inline Scenario scenario_of(GridTree tree, PowerProfile theta, std::size_t slots, std::size_t steps,
                            double tau = 1.0) {
  Scenario sc;
  sc.grid = TimeGrid(slots, tau);
  sc.tree = std::move(tree);
  sc.theta = std::move(theta);
  sc.steps = steps;
  return sc;
}

// Reference curve written from the breakpoint description: x_max up to
// eta/2 - w, linear down to 0 at eta/2, flat to 0.5/eta, linear to x_min at
// 0.5/eta + w.
inline double reference_curve(const Storage& s, double p) {
  struct Pt {
    double price, power;
  };
  const Pt pts[] = {{s.eta / 2 - s.ramp_width, s.x_max},
                    {s.eta / 2, 0.0},
                    {0.5 / s.eta, 0.0},
                    {0.5 / s.eta + s.ramp_width, s.x_min}};
  if (p <= pts[0].price) return s.x_max;
  if (p >= pts[3].price) return s.x_min;
  for (int i = 0; i < 3; ++i)
    if (p <= pts[i + 1].price) {
      const double f = (p - pts[i].price) / (pts[i + 1].price - pts[i].price);
      return pts[i].power + f * (pts[i + 1].power - pts[i].power);
    }
  return s.x_min;
}

// Energy recursion evaluated directly from the charge/discharge split.
inline std::vector<double> reference_energy(const Storage& s, const PowerProfile& x, double tau) {
  std::vector<double> e;
  double acc = s.e0;
  for (double v : x) {
    const double charge = std::max(v, 0.0), discharge = std::max(-v, 0.0);
    acc += tau * (s.eta * charge - discharge / s.eta - s.lambda);
    e.push_back(acc);
  }
  return e;
}

// Uniform doubles from a fixed engine, independent of the library
// distributions so results match everywhere.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : e_(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * (static_cast<double>(e_() >> 11) * 0x1.0p-53); }
  int integer(int lo, int hi) { return lo + static_cast<int>(e_() % static_cast<std::uint64_t>(hi - lo + 1)); }
  bool coin() { return (e_() >> 63) != 0; }

  Storage storage() {
    Storage s;
    s.x_max = uniform(0.0, 5000.0);
    s.x_min = -uniform(0.0, 5000.0);
    s.e_min = uniform(0.0, 1000.0);
    s.e_max = s.e_min + uniform(0.0, 20000.0);
    s.e0 = uniform(s.e_min, s.e_max);
    s.eta = uniform(0.5, 1.0);
    s.lambda = coin() ? 0.0 : uniform(0.0, 500.0);
    s.ramp_width = uniform(0.01, 0.2);
    return s;
  }

  PriceProfile prices(std::size_t n) {
    PriceProfile p(n);
    for (auto& v : p) v = uniform(0.0, 1.0);
    return p;
  }

  PowerProfile powers(std::size_t n, double lo, double hi) {
    PowerProfile p(n);
    for (auto& v : p) v = uniform(lo, hi);
    return p;
  }

 private:
  std::mt19937_64 e_;
};

// Tiny instance for the enumeration oracle: one load, up to two PV units and
// one or two storages with symmetric power bounds on a common grid step.
// Profiles are multiples of the step and the target is the flow of a random
// grid-point dispatch. Each storage is either lossless with energy bounds on
// the step lattice (so its energy limits can bind) or lossy with limits too
// wide to bind. Either way the exact optimum lies on the oracle grid.
struct TinyInstance {
  Scenario scenario;
  int grid_points = 11;
};

inline TinyInstance tiny_instance(Gen& g, bool with_congestion = false) {
  const std::size_t T = static_cast<std::size_t>(g.integer(2, 4));
  const int stores = g.integer(1, 2), pvs = g.integer(0, 2);
  const int G = (T == 4 && stores == 2) ? 7 : 11;
  const double step = 100.0 * g.integer(1, 5);
  const double rate = step * (G - 1) / 2;
  auto quantized = [&](double lo, double hi) {
    PowerProfile x(T);
    for (auto& v : x) v = step * std::round(g.uniform(lo, hi) / step);
    return x;
  };

  GridTree::Builder b;
  b.market_operator("MO");
  const std::string parent = with_congestion ? "C1" : "MO";
  if (with_congestion) b.congestion("C1", "MO", 1e7);
  PowerProfile theta = quantized(0, 1500);
  b.device("L1", parent, Load{theta, theta});
  for (int k = 0; k < pvs; ++k) {
    PowerProfile x = quantized(-1200, 0);
    b.device("P" + std::to_string(k + 1), parent, Pv{x, x, 0.2});
    if (g.coin())
      for (std::size_t t = 0; t < T; ++t) theta[t] += x[t];
  }
  for (int k = 0; k < stores; ++k) {
    Storage s;
    if (g.coin()) {
      const int cells = g.integer(2, 12);
      s = battery(rate, -rate, step * cells, step * g.integer(0, cells));
    } else {
      const double e_max = 4.0 * static_cast<double>(T) * rate;
      s = battery(rate, -rate, e_max, e_max / 2, g.uniform(0.8, 0.95));
    }
    double e = s.e0;
    for (std::size_t t = 0; t < T; ++t) {
      double x = 0.0;
      for (int attempt = 0; attempt < 8; ++attempt) {
        const double c = -rate + step * g.integer(0, G - 1);
        const double next = storage_energy_step(s, e, c, 1.0);
        if (next >= s.e_min && next <= s.e_max) {
          x = c;
          break;
        }
      }
      e = storage_energy_step(s, e, x, 1.0);
      theta[t] += x;
    }
    b.device("S" + std::to_string(k + 1), parent, s);
  }
  return {scenario_of(b.build(), theta, T, T), G};
}

// Objective change from moving every storage by one grid step in every slot.
inline double oracle_cell(const GridTree& tree, std::size_t T, double tau, int grid_points) {
  double cell = 0.0;
  for (std::size_t i : tree.devices())
    if (const auto* s = std::get_if<Storage>(&tree.device(i))) {
      const double h = (s->x_max - s->x_min) / (grid_points - 1);
      cell += static_cast<double>(T) * tau * h * std::max(1.0 - s->eta, 1.0 / s->eta - 1.0);
    }
  return cell;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lprh_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace lprh::testing
