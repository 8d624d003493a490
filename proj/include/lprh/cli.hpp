#pragma once

// Command implementations behind the lprh executable. Each command returns
// its exit code: 0 feasible, 2 infeasible, 1 usage or input error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lprh/central.hpp"
#include "lprh/core.hpp"
#include "lprh/horizon.hpp"
#include "lprh/scenario.hpp"

namespace lprh::cli {

enum ExitCode : int { kFeasible = 0, kError = 1, kInfeasible = 2 };

// Writes through a temporary sibling and renames, so readers never see a
// half-written file.
inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string series_csv(const std::map<NodeId, std::vector<double>>& series, const char* value_column) {
  std::string out = std::string("node_id,ptu,") + value_column + "\n";
  for (const auto& [id, values] : series)
    for (std::size_t k = 0; k < values.size(); ++k)
      out += id + "," + std::to_string(k) + "," + format_number(values[k]) + "\n";
  return out;
}

inline nlohmann::json violations_json(const std::vector<Violation>& vs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : vs) arr.push_back({{"node", v.node}, {"ptu", v.ptu}, {"magnitude_w", v.magnitude}});
  return arr;
}

// ---------------------------------------------------------------------------
// run

struct RunOptions {
  std::string scenario;
  std::string out;
  bool perfect_forecast = false;
};

inline int cmd_run(const RunOptions& o, std::ostream& err) {
  Scenario sc;
  try {
    sc = load_scenario(o.scenario);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
  SimulationOptions sim;
  sim.perfect_forecast = o.perfect_forecast;
  const DispatchResult r = run_simulation(sc, sc.steps, sim);

  int iterations = 0, converged = 0;
  for (int it : r.iterations_per_step) iterations += it;
  for (bool c : r.converged_per_step) converged += c ? 1 : 0;
  nlohmann::json summary = {{"objective_wh", r.total_loss_energy},
                            {"feasible", r.feasible},
                            {"steps", sc.steps},
                            {"converged_steps", converged},
                            {"iterations_total", iterations},
                            {"iterations_per_step", r.iterations_per_step},
                            {"violations", violations_json(r.violations)}};
  const std::filesystem::path dir(o.out);
  write_file(dir / "contracts.csv", series_csv(r.contracted, "watts"));
  write_file(dir / "prices.csv", series_csv(r.prices, "price"));
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  if (!r.feasible) {
    err << "infeasible: " << r.violations.size() << " violation(s)\n";
    for (const auto& v : r.violations)
      err << "  " << v.node << " ptu " << v.ptu << " by " << format_number(v.magnitude) << " W\n";
    return kInfeasible;
  }
  return kFeasible;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  GenerateParams params;
  std::uint64_t seed = 0;
  std::optional<std::string> profiles;  // profile CSV replacing the synthetic library
  std::string out;
};

inline int cmd_generate(const GenerateOptions& o, std::ostream& err) {
  try {
    GenerateParams params = o.params;
    if (o.profiles) params.library = load_profile_csv(*o.profiles);
    const Scenario sc = generate_scenario(params, o.seed).scenario;
    write_file(o.out, dump_scenario(sc));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
  return kFeasible;
}

// ---------------------------------------------------------------------------
// compare

enum class InstanceClass { Feasible, LprhFailed, Overconstrained };

inline const char* to_string(InstanceClass c) {
  switch (c) {
    case InstanceClass::Feasible: return "feasible";
    case InstanceClass::LprhFailed: return "lprh_failed";
    case InstanceClass::Overconstrained: return "overconstrained";
  }
  return "?";
}

struct InstanceReport {
  std::uint64_t seed = 0;
  InstanceClass cls = InstanceClass::Feasible;
  double lprh_wh = 0.0;
  double rhcs_wh = 0.0;
  std::optional<double> pics_wh;  // empty when the full-horizon problem is infeasible
  bool identical = false;
  int lprh_iterations = 0;
  std::size_t lprh_converged_steps = 0;
  std::size_t lprh_violations = 0;
  std::size_t rhcs_infeasible_steps = 0;  // windows without a strict solution
  std::size_t rhcs_violations = 0;
  bool pics_certified = true;
};

inline constexpr double kIdenticalTolWh = 1e-6;

// RHCS decides first: when even the centralized rollout has to break a
// contracted limit (it found no strict solution at that step and its elastic
// fallback could not avoid the violation) the instance is overconstrained,
// whatever LP-RH did. Otherwise LP-RH either kept every contract within its
// limits or failed. Strict window failures that only concern forecast slots
// do not make an instance overconstrained.
inline InstanceReport compare_instance(const Scenario& sc, bool perfect_forecast, const CentralOptions& copt = {}) {
  InstanceReport r;
  r.seed = sc.seed;
  SimulationOptions sim;
  sim.perfect_forecast = perfect_forecast;

  const DispatchResult lprh = run_simulation(sc, sc.steps, sim);
  r.lprh_wh = lprh.total_loss_energy;
  for (int it : lprh.iterations_per_step) r.lprh_iterations += it;
  for (bool c : lprh.converged_per_step) r.lprh_converged_steps += c ? 1 : 0;
  r.lprh_violations = lprh.violations.size();

  const RhcsRun rhcs = solve_rhcs(sc, sc.steps, sim, copt);
  r.rhcs_wh = rhcs.result.total_loss_energy;
  for (bool ok : rhcs.strict_feasible) r.rhcs_infeasible_steps += ok ? 0 : 1;
  r.rhcs_violations = rhcs.result.violations.size();

  const CentralSolution pics = solve_pics(full_horizon_problem(sc, sc.steps), copt);
  if (pics.status == SolveStatus::Optimal) r.pics_wh = pics.objective;
  r.pics_certified = pics.certified;

  if (!rhcs.result.feasible) r.cls = InstanceClass::Overconstrained;
  else if (!lprh.feasible) r.cls = InstanceClass::LprhFailed;
  else r.cls = InstanceClass::Feasible;
  r.identical = r.pics_wh && std::abs(r.lprh_wh - *r.pics_wh) <= kIdenticalTolWh;
  return r;
}

struct BatchSummary {
  std::size_t feasible = 0, lprh_failed = 0, overconstrained = 0;
  std::optional<double> median_ratio;        // LP-RH / PICS loss over the feasible subset
  std::optional<double> identical_fraction;  // over the feasible subset
  std::size_t ratio_samples = 0;
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Ratios need a positive PICS loss; a zero-loss optimum matched exactly by
// LP-RH counts as ratio 1 and an unmatched one is left out.
inline BatchSummary summarize(const std::vector<InstanceReport>& rows) {
  BatchSummary s;
  std::vector<double> ratios;
  std::size_t identical = 0;
  for (const auto& r : rows) {
    switch (r.cls) {
      case InstanceClass::Feasible: ++s.feasible; break;
      case InstanceClass::LprhFailed: ++s.lprh_failed; continue;
      case InstanceClass::Overconstrained: ++s.overconstrained; continue;
    }
    if (r.identical) ++identical;
    if (!r.pics_wh) continue;
    if (*r.pics_wh > kIdenticalTolWh) ratios.push_back(r.lprh_wh / *r.pics_wh);
    else if (r.identical) ratios.push_back(1.0);
  }
  s.ratio_samples = ratios.size();
  if (!ratios.empty()) s.median_ratio = median(ratios);
  if (s.feasible > 0) s.identical_fraction = static_cast<double>(identical) / static_cast<double>(s.feasible);
  return s;
}

inline std::string report_csv(const std::vector<InstanceReport>& rows) {
  std::string out =
      "instance,seed,class,lprh_wh,rhcs_wh,pics_wh,identical,lprh_iterations,lprh_converged_steps,"
      "lprh_violations,rhcs_infeasible_steps,rhcs_violations,pics_certified\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out += std::to_string(i) + "," + std::to_string(r.seed) + "," + to_string(r.cls) + "," + format_number(r.lprh_wh) +
           "," + format_number(r.rhcs_wh) + "," + (r.pics_wh ? format_number(*r.pics_wh) : std::string{}) + "," +
           (r.identical ? "true" : "false") + "," + std::to_string(r.lprh_iterations) + "," +
           std::to_string(r.lprh_converged_steps) + "," + std::to_string(r.lprh_violations) + "," +
           std::to_string(r.rhcs_infeasible_steps) + "," + std::to_string(r.rhcs_violations) + "," +
           (r.pics_certified ? "true" : "false") + "\n";
  }
  return out;
}

inline std::string boxplot_csv(const std::vector<InstanceReport>& rows) {
  std::string out = "solver,instance,loss_kWh\n";
  auto kwh = [](double wh) { return format_number(wh / 1000.0); };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out += "lprh," + std::to_string(i) + "," + kwh(r.lprh_wh) + "\n";
    out += "rhcs," + std::to_string(i) + "," + kwh(r.rhcs_wh) + "\n";
    out += "pics," + std::to_string(i) + "," + (r.pics_wh ? kwh(*r.pics_wh) : std::string{}) + "\n";
  }
  return out;
}

inline nlohmann::json report_json(const std::vector<InstanceReport>& rows, double relax, bool perfect_forecast) {
  const BatchSummary s = summarize(rows);
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json inst = nlohmann::json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    inst.push_back({{"instance", i},
                    {"seed", r.seed},
                    {"class", to_string(r.cls)},
                    {"lprh_wh", r.lprh_wh},
                    {"rhcs_wh", r.rhcs_wh},
                    {"pics_wh", opt(r.pics_wh)},
                    {"identical", r.identical},
                    {"lprh_iterations", r.lprh_iterations},
                    {"lprh_converged_steps", r.lprh_converged_steps},
                    {"lprh_violations", r.lprh_violations},
                    {"rhcs_infeasible_steps", r.rhcs_infeasible_steps},
                    {"rhcs_violations", r.rhcs_violations},
                    {"pics_certified", r.pics_certified}});
  }
  return {{"instances", rows.size()},
          {"relax", relax},
          {"perfect_forecast", perfect_forecast},
          {"counts", {{"feasible", s.feasible}, {"lprh_failed", s.lprh_failed}, {"overconstrained", s.overconstrained}}},
          {"median_lprh_over_pics", opt(s.median_ratio)},
          {"ratio_samples", s.ratio_samples},
          {"identical_fraction", opt(s.identical_fraction)},
          {"rows", std::move(inst)}};
}

// Parameters for generated batch instances. The defaults are desk-sized so a
// 50-instance batch with two exact centralized solvers stays interactive.
inline GenerateParams default_batch_params() {
  GenerateParams p;
  p.households = 6;
  p.batteries = 4;
  p.heat_pumps = 3;
  p.congestion = 2;
  p.beta = 6000.0;
  p.library_size = 12;
  p.slots = 8;
  p.steps = 24;
  return p;
}

struct CompareOptions {
  std::optional<std::string> scenario;
  std::optional<std::size_t> batch;
  std::uint64_t seed = 0;
  GenerateParams params = default_batch_params();
  std::string out;
  double relax = 1.0;
  bool perfect_forecast = false;
};

inline std::vector<Scenario> compare_instances(const CompareOptions& o) {
  std::vector<Scenario> out;
  if (o.scenario) {
    out.push_back(load_scenario(*o.scenario));
  } else {
    for (std::size_t i = 0; i < *o.batch; ++i) out.push_back(generate_scenario(o.params, o.seed + i).scenario);
  }
  if (o.relax != 1.0)
    for (auto& sc : out) sc = relax_scenario(sc, o.relax);
  return out;
}

inline int cmd_compare(const CompareOptions& o, std::ostream& err) {
  if (o.scenario.has_value() == o.batch.has_value()) {
    err << "error: give either a scenario file or --batch\n";
    return kError;
  }
  std::vector<Scenario> instances;
  try {
    instances = compare_instances(o);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
  std::vector<InstanceReport> rows;
  rows.reserve(instances.size());
  for (const auto& sc : instances) rows.push_back(compare_instance(sc, o.perfect_forecast));

  const std::filesystem::path dir(o.out);
  write_file(dir / "report.csv", report_csv(rows));
  write_file(dir / "report.json", report_json(rows, o.relax, o.perfect_forecast).dump(2) + "\n");
  write_file(dir / "boxplot.csv", boxplot_csv(rows));
  return kFeasible;
}

// ---------------------------------------------------------------------------
// argument parsing

inline void add_generate_flags(CLI::App& app, GenerateParams& p) {
  app.add_option("--households", p.households, "number of households")->capture_default_str();
  app.add_option("--batteries", p.batteries, "households with a battery")->capture_default_str();
  app.add_option("--heatpumps", p.heat_pumps, "households with a heat pump")->capture_default_str();
  app.add_option("--congestion", p.congestion, "number of congestion nodes")->capture_default_str();
  app.add_option("--beta", p.beta, "congestion limit in W")->capture_default_str();
  app.add_option("--library-size", p.library_size, "synthetic profiles to draw from")->capture_default_str();
  app.add_option("--slots", p.slots, "horizon length T")->capture_default_str();
  app.add_option("--tau", p.tau, "PTU length in hours")->capture_default_str();
  app.add_option("--steps", p.steps, "receding-horizon steps")->capture_default_str();
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Receding-horizon market-based dispatch"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "simulate a scenario with price negotiation");
  run_cmd->add_option("scenario", run.scenario, "scenario JSON")->required();
  run_cmd->add_option("--out", run.out, "output directory")->required();
  run_cmd->add_flag("--perfect-forecast", run.perfect_forecast, "use true profiles for the whole window");

  CompareOptions cmp;
  std::size_t batch = 0;
  std::string scenario;
  auto* cmp_cmd = app.add_subcommand("compare", "compare LP-RH, RHCS and PICS");
  auto* scen_opt = cmp_cmd->add_option("scenario", scenario, "scenario JSON");
  auto* batch_opt = cmp_cmd->add_option("--batch", batch, "number of generated instances");
  scen_opt->excludes(batch_opt);
  cmp_cmd->add_option("--seed", cmp.seed, "first seed of the batch");
  cmp_cmd->add_option("--out", cmp.out, "output directory")->required();
  cmp_cmd->add_option("--relax", cmp.relax, "multiply every congestion limit")->check(CLI::Range(1.0, 1e12));
  cmp_cmd->add_flag("--perfect-forecast", cmp.perfect_forecast, "use true profiles for the whole window");
  add_generate_flags(*cmp_cmd, cmp.params);

  GenerateOptions gen;
  std::string profiles;
  auto* gen_cmd = app.add_subcommand("generate", "write a seeded synthetic scenario");
  add_generate_flags(*gen_cmd, gen.params);
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  auto* prof_opt = gen_cmd->add_option("--profiles", profiles, "profile CSV library");
  gen_cmd->add_option("--out", gen.out, "scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : kError;
  }
  try {
    if (run_cmd->parsed()) return cmd_run(run, err);
    if (cmp_cmd->parsed()) {
      if (!scen_opt->empty()) cmp.scenario = scenario;
      if (!batch_opt->empty()) cmp.batch = batch;
      return cmd_compare(cmp, err);
    }
    if (!prof_opt->empty()) gen.profiles = profiles;
    return cmd_generate(gen, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
}

}  // namespace lprh::cli
