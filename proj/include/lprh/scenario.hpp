#pragma once

// Scenario construction and persistence: the profile CSV library, the JSON
// scenario document, the seeded synthetic generator, target computation and
// congestion relaxation.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lprh/core.hpp"
#include "lprh/horizon.hpp"

namespace lprh {

// Shortest decimal text that parses back to the same double.
inline std::string format_number(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Deterministic randomness: mt19937_64 is bit-exact across standard
// libraries; the distributions below are written out so results do not depend
// on the library's distribution implementations.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Profile library

enum class ProfileKind { Load, Pv };

struct NamedProfile {
  std::string id;
  ProfileKind kind;
  PowerProfile watts;
};

struct ProfileLibrary {
  std::vector<NamedProfile> loads;
  std::vector<NamedProfile> pvs;
  PowerProfile load_avg;
  PowerProfile pv_avg;

  std::size_t length() const { return load_avg.size(); }

  // Recomputes the per-slot arithmetic means.
  void compute_averages() {
    std::size_t n = 0;
    if (!loads.empty()) n = loads.front().watts.size();
    else if (!pvs.empty()) n = pvs.front().watts.size();
    auto mean = [n](const std::vector<NamedProfile>& ps) {
      PowerProfile avg(n);
      if (ps.empty()) return avg;
      for (const auto& p : ps) {
        require_same_length(p.watts.size(), n, "profile library");
        for (std::size_t t = 0; t < n; ++t) avg[t] += p.watts[t];
      }
      for (std::size_t t = 0; t < n; ++t) avg[t] /= static_cast<double>(ps.size());
      return avg;
    };
    load_avg = mean(loads);
    pv_avg = mean(pvs);
  }
};

inline constexpr std::string_view kProfileCsvHeader = "profile_id,kind,slot,watts";

inline ProfileLibrary parse_profile_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("no profiles");
  if (line != kProfileCsvHeader)
    throw ParseError("line 1: expected header '" + std::string(kProfileCsvHeader) + "'");

  ProfileLibrary lib;
  std::set<std::string> seen;
  NamedProfile* current = nullptr;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) throw ParseError(where + ": expected 4 columns, found " + std::to_string(cells.size()));

    const std::string& id = cells[0];
    if (id.empty()) throw ParseError(where + ", column profile_id: empty id");
    ProfileKind kind;
    if (cells[1] == "load") kind = ProfileKind::Load;
    else if (cells[1] == "pv") kind = ProfileKind::Pv;
    else throw ParseError(where + ", column kind: unknown kind '" + cells[1] + "'");

    std::size_t slot = 0;
    {
      const auto& s = cells[2];
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), slot);
      if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError(where + ", column slot: not a nonnegative integer '" + s + "'");
    }
    double watts = 0.0;
    {
      const auto& s = cells[3];
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), watts);
      if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError(where + ", column watts: not a number '" + s + "'");
      if (!std::isfinite(watts)) throw ParseError(where + ", column watts: value is not finite");
    }

    if (!current || current->id != id) {
      if (!seen.insert(id).second) throw ParseError(where + ": rows of profile '" + id + "' are not contiguous");
      auto& bucket = kind == ProfileKind::Load ? lib.loads : lib.pvs;
      bucket.push_back({id, kind, PowerProfile{}});
      current = &bucket.back();
    }
    if (current->kind != kind) throw ParseError(where + ": profile '" + id + "' changes kind");
    if (slot != current->watts.size())
      throw ParseError(where + ": profile '" + id + "' expected slot " + std::to_string(current->watts.size()) +
                       ", found " + std::to_string(slot));
    if (kind == ProfileKind::Pv && watts > 0.0)
      throw ParseError(where + ", column watts: pv profile '" + id + "' has positive value");
    current->watts.values().push_back(watts);
  }
  if (lib.loads.empty() && lib.pvs.empty()) throw ParseError("no profiles");

  const std::size_t n = !lib.loads.empty() ? lib.loads.front().watts.size() : lib.pvs.front().watts.size();
  for (const auto* bucket : {&lib.loads, &lib.pvs})
    for (const auto& p : *bucket)
      if (p.watts.size() != n)
        throw ParseError("profile '" + p.id + "' has " + std::to_string(p.watts.size()) + " slots, expected " +
                         std::to_string(n));
  lib.compute_averages();
  return lib;
}

inline ProfileLibrary load_profile_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open profile file '" + path + "'");
  return parse_profile_csv(in);
}

inline void write_profile_csv(std::ostream& out, const ProfileLibrary& lib) {
  out << kProfileCsvHeader << '\n';
  for (const auto* bucket : {&lib.loads, &lib.pvs})
    for (const auto& p : *bucket)
      for (std::size_t t = 0; t < p.watts.size(); ++t)
        out << p.id << ',' << (p.kind == ProfileKind::Load ? "load" : "pv") << ',' << t << ','
            << format_number(p.watts[t]) << '\n';
}

// Target for n households that draw their profiles from the library: n times
// the mean household net consumption (load plus PV).
inline PowerProfile compute_theta(const ProfileLibrary& lib, std::size_t households) {
  const std::size_t n = lib.length();
  PowerProfile theta(n);
  for (std::size_t t = 0; t < n; ++t) {
    double per_house = lib.load_avg[t];
    if (lib.pv_avg.size() == n) per_house += lib.pv_avg[t];
    theta[t] = static_cast<double>(households) * per_house;
  }
  return theta;
}

// Target when none is given: the sum of every load's and PV's historical
// average.
inline PowerProfile theta_from_averages(const GridTree& tree, std::size_t length) {
  PowerProfile theta(length);
  for (std::size_t i : tree.devices()) {
    const PowerProfile* avg = nullptr;
    if (const auto* l = std::get_if<Load>(&tree.device(i))) avg = &l->historical_avg;
    if (const auto* pv = std::get_if<Pv>(&tree.device(i))) avg = &pv->historical_avg;
    if (!avg) continue;
    for (std::size_t t = 0; t < length; ++t) theta[t] += (*avg)[t % avg->size()];
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Scenario JSON

namespace detail {

using nlohmann::json;

inline void require_keys(const json& j, std::initializer_list<std::string_view> allowed,
                         std::initializer_list<std::string_view> required, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ParseError(where + ": unknown key '" + it.key() + "'");
  for (auto k : required)
    if (!j.contains(std::string(k))) throw ParseError(where + ": missing key '" + std::string(k) + "'");
}

inline double number(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ParseError(where + ": '" + key + "' must be a number");
  return v.get<double>();
}

inline PowerProfile profile(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_array()) throw ParseError(where + ": '" + key + "' must be an array");
  PowerProfile p;
  for (const auto& x : v) {
    if (!x.is_number()) throw ParseError(where + ": '" + key + "' must contain numbers");
    p.values().push_back(x.get<double>());
  }
  return p;
}

inline json to_json(const PowerProfile& p) { return json(p.values()); }

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& doc) {
  using detail::json;
  detail::require_keys(doc, {"time_grid", "nodes", "devices", "theta", "solver", "seed", "steps"},
                       {"time_grid", "nodes", "devices", "solver", "seed", "steps"}, "scenario");
  Scenario sc;
  const auto& tg = doc.at("time_grid");
  detail::require_keys(tg, {"slots", "tau"}, {"slots", "tau"}, "time_grid");
  if (!tg.at("slots").is_number_integer() || tg.at("slots").get<long long>() < 1)
    throw ParseError("time_grid: 'slots' must be a positive integer");
  sc.grid = TimeGrid(tg.at("slots").get<std::size_t>(), detail::number(tg, "tau", "time_grid"));

  GridTree::Builder builder;
  const auto& nodes = doc.at("nodes");
  if (!nodes.is_array()) throw ParseError("nodes: expected an array");
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto& n = nodes[k];
    const std::string where = "nodes[" + std::to_string(k) + "]";
    detail::require_keys(n, {"id", "kind", "parent", "beta"}, {"id", "kind"}, where);
    const std::string id = n.at("id").get<std::string>();
    const std::string kind = n.at("kind").get<std::string>();
    if (kind == "market_operator") {
      if (n.contains("parent") || n.contains("beta")) throw ParseError(where + ": market operator takes no parent or beta");
      builder.market_operator(id);
    } else if (kind == "congestion") {
      if (!n.contains("parent") || !n.contains("beta")) throw ParseError(where + ": congestion node needs parent and beta");
      builder.congestion(id, n.at("parent").get<std::string>(), detail::number(n, "beta", where));
    } else {
      throw ParseError(where + ": unknown kind '" + kind + "'");
    }
  }

  const auto& devices = doc.at("devices");
  if (!devices.is_array()) throw ParseError("devices: expected an array");
  std::size_t length = 0;
  for (std::size_t k = 0; k < devices.size(); ++k) {
    const auto& d = devices[k];
    const std::string where = "devices[" + std::to_string(k) + "]";
    if (!d.is_object() || !d.contains("type")) throw ParseError(where + ": missing key 'type'");
    const std::string type = d.at("type").get<std::string>();
    DeviceSpec spec;
    if (type == "load") {
      detail::require_keys(d, {"id", "parent", "type", "actual", "historical_avg"},
                           {"id", "parent", "type", "actual", "historical_avg"}, where);
      spec = Load{detail::profile(d, "actual", where), detail::profile(d, "historical_avg", where)};
    } else if (type == "pv") {
      detail::require_keys(d, {"id", "parent", "type", "actual", "historical_avg", "gamma"},
                           {"id", "parent", "type", "actual", "historical_avg", "gamma"}, where);
      spec = Pv{detail::profile(d, "actual", where), detail::profile(d, "historical_avg", where),
                detail::number(d, "gamma", where)};
    } else if (type == "storage") {
      detail::require_keys(d,
                           {"id", "parent", "type", "x_min", "x_max", "e_min", "e_max", "eta", "lambda", "e0",
                            "ramp_width"},
                           {"id", "parent", "type", "x_min", "x_max", "e_min", "e_max", "eta", "lambda", "e0",
                            "ramp_width"},
                           where);
      Storage s;
      s.x_min = detail::number(d, "x_min", where);
      s.x_max = detail::number(d, "x_max", where);
      s.e_min = detail::number(d, "e_min", where);
      s.e_max = detail::number(d, "e_max", where);
      s.eta = detail::number(d, "eta", where);
      s.lambda = detail::number(d, "lambda", where);
      s.e0 = detail::number(d, "e0", where);
      s.ramp_width = detail::number(d, "ramp_width", where);
      spec = s;
    } else {
      throw ParseError(where + ": unknown device type '" + type + "'");
    }
    if (const auto* l = std::get_if<Load>(&spec)) length = std::max(length, l->actual.size());
    if (const auto* pv = std::get_if<Pv>(&spec)) length = std::max(length, pv->actual.size());
    try {
      builder.device(d.at("id").get<std::string>(), d.at("parent").get<std::string>(), std::move(spec));
    } catch (const std::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  try {
    sc.tree = builder.build();
  } catch (const std::exception& e) {
    throw ParseError(std::string("scenario tree: ") + e.what());
  }

  const auto& solver = doc.at("solver");
  detail::require_keys(solver, {"epsilon_max", "max_iters", "probe_step"}, {"epsilon_max", "max_iters", "probe_step"},
                       "solver");
  sc.solver.epsilon_max = detail::number(solver, "epsilon_max", "solver");
  if (!solver.at("max_iters").is_number_integer() || solver.at("max_iters").get<long long>() < 1)
    throw ParseError("solver: 'max_iters' must be a positive integer");
  sc.solver.max_iters = solver.at("max_iters").get<int>();
  sc.solver.probe_step = detail::number(solver, "probe_step", "solver");
  if (!(sc.solver.epsilon_max > 0.0)) throw ParseError("solver: 'epsilon_max' must be positive");
  if (!(sc.solver.probe_step > 0.0)) throw ParseError("solver: 'probe_step' must be positive");

  if (!doc.at("seed").is_number_unsigned()) throw ParseError("scenario: 'seed' must be a nonnegative integer");
  sc.seed = doc.at("seed").get<std::uint64_t>();
  if (!doc.at("steps").is_number_integer() || doc.at("steps").get<long long>() < 1)
    throw ParseError("scenario: 'steps' must be a positive integer");
  sc.steps = doc.at("steps").get<std::size_t>();

  if (doc.contains("theta")) {
    sc.theta = detail::profile(doc, "theta", "scenario");
    if (sc.theta.empty()) throw ParseError("scenario: 'theta' must not be empty");
  } else {
    sc.theta = theta_from_averages(sc.tree, std::max(length, sc.grid.slots));
  }
  return sc;
}

inline nlohmann::json scenario_to_json(const Scenario& sc) {
  using detail::json;
  json doc = json::object();
  doc["time_grid"] = {{"slots", sc.grid.slots}, {"tau", sc.grid.tau}};
  json nodes = json::array(), devices = json::array();
  for (const auto& n : sc.tree.nodes()) {
    const std::string parent = n.parent ? sc.tree.node(*n.parent).id : std::string{};
    if (n.is_market_operator()) {
      nodes.push_back({{"id", n.id}, {"kind", "market_operator"}});
    } else if (const auto* c = std::get_if<Congestion>(&n.kind)) {
      nodes.push_back({{"id", n.id}, {"kind", "congestion"}, {"parent", parent}, {"beta", c->beta}});
    } else {
      const auto& spec = std::get<Device>(n.kind).spec;
      json d = {{"id", n.id}, {"parent", parent}};
      if (const auto* l = std::get_if<Load>(&spec)) {
        d["type"] = "load";
        d["actual"] = detail::to_json(l->actual);
        d["historical_avg"] = detail::to_json(l->historical_avg);
      } else if (const auto* pv = std::get_if<Pv>(&spec)) {
        d["type"] = "pv";
        d["actual"] = detail::to_json(pv->actual);
        d["historical_avg"] = detail::to_json(pv->historical_avg);
        d["gamma"] = pv->gamma;
      } else {
        const auto& s = std::get<Storage>(spec);
        d["type"] = "storage";
        d["x_min"] = s.x_min;
        d["x_max"] = s.x_max;
        d["e_min"] = s.e_min;
        d["e_max"] = s.e_max;
        d["eta"] = s.eta;
        d["lambda"] = s.lambda;
        d["e0"] = s.e0;
        d["ramp_width"] = s.ramp_width;
      }
      devices.push_back(std::move(d));
    }
  }
  doc["nodes"] = std::move(nodes);
  doc["devices"] = std::move(devices);
  doc["theta"] = detail::to_json(sc.theta);
  doc["solver"] = {{"epsilon_max", sc.solver.epsilon_max},
                   {"max_iters", sc.solver.max_iters},
                   {"probe_step", sc.solver.probe_step}};
  doc["seed"] = sc.seed;
  doc["steps"] = sc.steps;
  return doc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open scenario file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario is not valid JSON: ") + e.what());
  }
  try {
    return scenario_from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
}

inline std::string dump_scenario(const Scenario& sc) { return scenario_to_json(sc).dump(1) + "\n"; }

// ---------------------------------------------------------------------------
// Generator

struct GenerateParams {
  std::size_t households = 54;
  std::size_t batteries = 16;
  std::size_t heat_pumps = 16;
  std::size_t congestion = 6;
  double beta = 30000.0;
  std::size_t library_size = 92;
  std::size_t slots = 24;
  double tau = 1.0;
  std::size_t steps = 24;
  std::optional<ProfileLibrary> library;  // synthetic profiles when absent
};

inline Storage default_battery() {
  Storage s;
  s.x_min = -4000.0;
  s.x_max = 4000.0;
  s.e_min = 0.0;
  s.e_max = 10800.0;
  s.eta = 0.9;
  s.lambda = 0.0;
  s.e0 = 5400.0;
  return s;
}

inline Storage default_heat_pump() {
  Storage s;
  s.x_min = 0.0;
  s.x_max = 1600.0;
  s.e_min = 0.0;
  s.e_max = 2000.0;
  s.eta = 1.0;
  s.lambda = 360.0;
  s.e0 = 1000.0;
  return s;
}

// Daily shapes: a night base with morning and evening gaussian bumps for
// loads, a clear-sky half sine between 06:00 and 20:00 for PV. Daily
// energies are drawn from the observed household ranges.
inline ProfileLibrary synthetic_library(std::size_t count, std::size_t length, double tau, Rng& rng) {
  ProfileLibrary lib;
  const std::size_t per_day = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(24.0 / tau)));
  const std::size_t days = (length + per_day - 1) / per_day;
  auto bump = [](double h, double mu, double sigma) { return std::exp(-(h - mu) * (h - mu) / (2.0 * sigma * sigma)); };

  for (std::size_t k = 0; k < count; ++k) {
    NamedProfile load{"load" + std::to_string(k + 1), ProfileKind::Load, PowerProfile(length)};
    NamedProfile pv{"pv" + std::to_string(k + 1), ProfileKind::Pv, PowerProfile(length)};
    const double morning = rng.uniform(6.5, 8.5), evening = rng.uniform(17.5, 20.0);
    for (std::size_t d = 0; d < days; ++d) {
      const double load_kwh = rng.uniform(4.98, 29.39);
      const double pv_kwh = rng.uniform(0.826, 18.8);
      std::vector<double> ls(per_day), ps(per_day);
      double lsum = 0.0, psum = 0.0;
      for (std::size_t s = 0; s < per_day; ++s) {
        const double h = (static_cast<double>(s) + 0.5) * tau;
        ls[s] = (1.0 + 2.0 * bump(h, morning, 1.2) + 4.0 * bump(h, evening, 1.8)) * rng.uniform(0.8, 1.2);
        ps[s] = h > 6.0 && h < 20.0 ? std::sin(std::numbers::pi * (h - 6.0) / 14.0) * rng.uniform(0.7, 1.0) : 0.0;
        lsum += ls[s] * tau;
        psum += ps[s] * tau;
      }
      for (std::size_t s = 0; s < per_day; ++s) {
        const std::size_t t = d * per_day + s;
        if (t >= length) break;
        load.watts[t] = ls[s] * load_kwh * 1000.0 / lsum;
        pv.watts[t] = psum > 0.0 ? -ps[s] * pv_kwh * 1000.0 / psum : 0.0;
      }
    }
    lib.loads.push_back(std::move(load));
    lib.pvs.push_back(std::move(pv));
  }
  lib.compute_averages();
  return lib;
}

struct GeneratedScenario {
  Scenario scenario;
  ProfileLibrary library;
};

inline GeneratedScenario generate_scenario(const GenerateParams& params, std::uint64_t seed) {
  if (params.batteries > params.households || params.heat_pumps > params.households)
    throw ConfigError("more batteries or heat pumps than households");
  if (params.steps == 0) throw ConfigError("steps must be positive");
  if (!(params.beta > 0.0)) throw ConfigError("congestion limit must be positive");
  Rng rng(seed);
  Scenario sc;
  sc.grid = TimeGrid(params.slots, params.tau);
  sc.seed = seed;
  sc.steps = params.steps;
  const std::size_t length = params.steps + params.slots - 1;

  ProfileLibrary lib;
  if (params.library) {
    lib = *params.library;
    if (lib.loads.empty() || lib.pvs.empty()) throw ConfigError("profile library needs load and pv profiles");
    if (lib.length() < params.steps) throw ConfigError("profile library shorter than the simulated steps");
  } else {
    lib = synthetic_library(std::max<std::size_t>(1, params.library_size), length, params.tau, rng);
  }

  GridTree::Builder b;
  b.market_operator("MO");
  std::vector<std::string> feeders;
  for (std::size_t c = 0; c < params.congestion; ++c) {
    std::string id = "C" + std::to_string(c + 1);
    std::string parent = c < 3 ? "MO" : "C" + std::to_string(1 + (c - 3) % 2);
    b.congestion(id, parent, params.beta);
    feeders.push_back(std::move(id));
  }

  const std::size_t n = params.households;
  std::vector<std::size_t> order(n);
  for (std::size_t h = 0; h < n; ++h) order[h] = h;
  rng.shuffle(order);
  std::vector<std::string> parent_of(n, "MO");
  if (!feeders.empty())
    for (std::size_t k = 0; k < n; ++k) parent_of[order[k]] = feeders[k % feeders.size()];

  auto pick = [&](std::size_t count) {
    std::vector<std::size_t> idx(n);
    for (std::size_t h = 0; h < n; ++h) idx[h] = h;
    rng.shuffle(idx);
    std::vector<bool> chosen(n, false);
    for (std::size_t k = 0; k < count; ++k) chosen[idx[k]] = true;
    return chosen;
  };
  const std::vector<bool> has_battery = pick(params.batteries);
  const std::vector<bool> has_heat_pump = pick(params.heat_pumps);

  auto slice = [&](const PowerProfile& p) { return window_slice(p, p, 0, length); };
  const int width = n >= 100 ? 3 : 2;
  for (std::size_t h = 0; h < n; ++h) {
    std::string name = std::to_string(h + 1);
    name = "H" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(name.size()))), '0') + name;
    const auto& load = lib.loads[rng.index(lib.loads.size())];
    const auto& pv = lib.pvs[rng.index(lib.pvs.size())];
    b.device(name + ".load", parent_of[h], Load{slice(load.watts), slice(lib.load_avg)});
    b.device(name + ".pv", parent_of[h], Pv{slice(pv.watts), slice(lib.pv_avg), 0.2});
    if (has_battery[h]) b.device(name + ".battery", parent_of[h], default_battery());
    if (has_heat_pump[h]) b.device(name + ".heatpump", parent_of[h], default_heat_pump());
  }
  if (n == 0 && feeders.empty()) {
    // a tree needs at least one leaf; an idle load stands in for the empty feeder
    b.device("idle.load", "MO", Load{PowerProfile(length), PowerProfile(length)});
  }
  for (const auto& f : feeders) {
    bool has_child = false;
    for (std::size_t h = 0; h < n; ++h) has_child = has_child || parent_of[h] == f;
    for (std::size_t c = 3; c < params.congestion; ++c)
      has_child = has_child || f == "C" + std::to_string(1 + (c - 3) % 2);
    if (!has_child) b.device(f + ".idle", f, Load{PowerProfile(length), PowerProfile(length)});
  }
  sc.tree = b.build();

  // Heat pumps must on average replace their leakage, so their mean draw is
  // part of the contracted neighbourhood consumption.
  PowerProfile theta = slice(compute_theta(lib, n));
  const double heat_pump_draw = static_cast<double>(params.heat_pumps) * default_heat_pump().lambda;
  for (double& v : theta) v += heat_pump_draw;
  sc.theta = std::move(theta);
  return {std::move(sc), std::move(lib)};
}

inline Scenario relax_scenario(const Scenario& sc, double factor) {
  if (!(factor >= 1.0)) throw ConfigError("relaxation factor must be at least 1");
  Scenario out = sc;
  out.tree = sc.tree.scale_limits(factor);
  return out;
}

}  // namespace lprh
