// Command-line front end: solve, low-complexity, benchmarks, sweeps,
// beam-pattern maps and scenario validation. Artifacts go to --out.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "isac/harness.hpp"

namespace {

using namespace isac;
namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kOther = 1, kParse = 2, kInfeasible = 3, kNonConvergence = 4 };

struct Options {
  std::string scenario;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> eta0;
  std::optional<double> scale_z;
  std::optional<double> xi;
  std::optional<int> restarts;
  std::optional<int> pathloss_exp;
  std::string planner = "solve";
  std::vector<std::string> sweep_planners;
  std::string bench_kind;
  std::string sweep_kind;
  std::vector<double> values;
  int workers = 0;
  int slot = -1;
  int grid = 101;
};

const std::map<std::string, Planner> kPlanners = {{"solve", Planner::Proposed},
                                                  {"lowc", Planner::LowComplexity},
                                                  {"sf", Planner::StraightFlight},
                                                  {"fhf", Planner::FlyHoverFly}};

const std::map<std::string, SweepKind> kSweeps = {{"gamma", SweepKind::Gamma},
                                                  {"frequency", SweepKind::Frequency},
                                                  {"horizon", SweepKind::Horizon},
                                                  {"antennas", SweepKind::Antennas}};

void configure_logging() {
  auto logger = spdlog::stderr_logger_mt("isac");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("ISAC_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(lvl));
  }
}

Scenario load(const Options& o) {
  Scenario s = o.scenario.empty() ? reference_scenario() : load_scenario(o.scenario);
  if (o.seed) s.seed = *o.seed;
  if (o.eta0) s.penalty.eta0 = *o.eta0;
  if (o.scale_z) s.penalty.scale_z = *o.scale_z;
  if (o.xi) s.penalty.xi = *o.xi;
  if (o.restarts) s.penalty.restarts = *o.restarts;
  if (o.pathloss_exp) s.radio.pathloss_exponent_sensing = *o.pathloss_exp;
  s.validate();
  return s;
}

void write_file(const fs::path& p, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  body(os);
  spdlog::info("wrote {}", p.string());
}

nlohmann::json report_json(const SolveReport& r) {
  nlohmann::json frames = nlohmann::json::array();
  for (int k = 0; k < r.per_frame_rates.rows(); ++k) {
    std::vector<double> row(r.per_frame_rates.cols());
    for (int l = 0; l < r.per_frame_rates.cols(); ++l) row[l] = r.per_frame_rates(k, l);
    frames.push_back(row);
  }
  return {{"status", r.status},
          {"converged", r.converged},
          {"mean_rate", r.mean_rate},
          {"lower_bound_rate", r.lower_bound_rate},
          {"outer_iterations", r.outer_iterations},
          {"inner_iterations", r.inner_iterations},
          {"restart", r.restart},
          {"violation_history", r.violation_history},
          {"per_frame_rates", frames}};
}

int finish_report(const std::string& command, const SolveReport& r, const Scenario& s,
                  const Options& o, double elapsed) {
  const fs::path out(o.out);
  write_file(out / "trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, r, s); });
  nlohmann::json summary = report_json(r);
  summary["command"] = command;
  summary["elapsed_s"] = elapsed;
  write_file(out / "summary.json", [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
  std::cout << command << ": " << r.status << ", mean rate " << r.mean_rate
            << " bps/Hz (lower bound " << r.lower_bound_rate << ")\n";
  return r.converged ? kOk : kNonConvergence;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run(const std::string& command, const Options& o) {
  const Scenario s = load(o);
  const auto t0 = std::chrono::steady_clock::now();
  if (command != "validate") fs::create_directories(o.out);
  if (command == "validate") {
    std::mt19937_64 rng(s.seed);
    initial_trajectory(s, 0, rng);  // throws Infeasible when sensing reach fails
    std::cout << "valid: " << s.user_count() << " users, " << s.target_count() << " targets, "
              << s.frames.n_total << " slots in " << s.frames.frames() << " frames\n";
    return kOk;
  }
  if (command == "solve" || command == "lowc" || command == "bench") {
    const Planner p = command == "solve"  ? Planner::Proposed
                      : command == "lowc" ? Planner::LowComplexity
                                          : kPlanners.at(o.bench_kind);
    spdlog::info("{}: {} slots, {} frames", command, s.frames.n_total, s.frames.frames());
    const SolveReport r = run_planner(p, s, s.penalty);
    return finish_report(command == "bench" ? "bench " + o.bench_kind : command, r, s, o,
                         seconds_since(t0));
  }
  if (command == "beampattern") {
    if (o.slot < 0 || o.slot >= s.frames.n_total) {
      throw ValidationError("--slot must lie in [0, " + std::to_string(s.frames.n_total) + ")");
    }
    const SolveReport r = run_planner(kPlanners.at(o.planner), s, s.penalty);
    write_file(fs::path(o.out) / "beampattern.csv",
               [&](std::ostream& os) { write_beampattern_csv(os, r, s, o.slot, o.grid); });
    return finish_report("beampattern", r, s, o, seconds_since(t0));
  }
  if (command == "sweep") {
    const SweepKind kind = kSweeps.at(o.sweep_kind);
    const auto values = o.values.empty() ? default_sweep_values(kind) : o.values;
    std::vector<std::string> planners = o.sweep_planners;
    if (planners.empty()) planners = {"solve"};
    for (const auto& name : planners) {
      spdlog::info("sweep {} with {} over {} values", o.sweep_kind, name, values.size());
      const auto pts = run_sweep(kind, s, values, kPlanners.at(name), s.penalty,
                                 o.workers, [&](const SweepPoint& p) {
                                   spdlog::info("  {} = {}: {} {}", o.sweep_kind, p.param,
                                                p.status, p.message);
                                 });
      const std::string file = planners.size() == 1 ? "sweep.csv" : "sweep_" + name + ".csv";
      write_file(fs::path(o.out) / file, [&](std::ostream& os) { write_sweep_csv(os, pts); });
      for (const auto& p : pts) {
        std::cout << name << ' ' << p.param << ": " << p.status;
        if (p.report) std::cout << ", mean rate " << p.mean_rate;
        std::cout << '\n';
      }
    }
    return kOk;
  }
  throw std::logic_error("unknown command " + command);
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Periodic sensing and communication planner for a multi-antenna UAV"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--scenario", o.scenario, "scenario JSON (default: built-in reference mission)");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--seed", o.seed, "random seed for restarts");
  app.add_option("--eta0", o.eta0, "initial penalty coefficient");
  app.add_option("--scale-z", o.scale_z, "penalty shrink factor per outer iteration");
  app.add_option("--xi", o.xi, "outer stop on the binary residual");
  app.add_option("--restarts", o.restarts, "random restarts");
  app.add_option("--pathloss-exp", o.pathloss_exp, "sensing path-loss exponent")
      ->check(CLI::IsMember({2, 4}));

  app.add_subcommand("solve", "joint trajectory, association and sensing plan");
  app.add_subcommand("lowc", "low-complexity plan from one mirrored frame");
  auto* bench = app.add_subcommand("bench", "straight-flight or fly-hover-fly benchmark");
  bench->add_option("kind", o.bench_kind, "sf or fhf")
      ->required()
      ->check(CLI::IsMember({"sf", "fhf"}));
  auto* sweep = app.add_subcommand("sweep", "solve over a list of parameter values");
  sweep->add_option("kind", o.sweep_kind, "gamma, frequency, horizon or antennas")
      ->required()
      ->check(CLI::IsMember({"gamma", "frequency", "horizon", "antennas"}));
  sweep->add_option("--values", o.values, "parameter values (default per kind)")->delimiter(',');
  sweep->add_option("--planner", o.sweep_planners, "solve, lowc, sf or fhf (repeatable)")
      ->delimiter(',')
      ->check(CLI::IsMember({"solve", "lowc", "sf", "fhf"}));
  sweep->add_option("--workers", o.workers, "worker threads (default: hardware threads)");
  auto* beam = app.add_subcommand("beampattern", "beam-pattern gain map of one slot");
  beam->add_option("--slot", o.slot, "0-based slot index")->required();
  beam->add_option("--grid", o.grid, "points per direction-cosine axis")->check(CLI::Range(2, 2001));
  beam->add_option("--planner", o.planner, "solve, lowc, sf or fhf")
      ->check(CLI::IsMember({"solve", "lowc", "sf", "fhf"}));
  app.add_subcommand("validate", "check a scenario file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kParse;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, o);
  } catch (const ParseError& e) {
    spdlog::error("parse error: {}", e.what());
    return kParse;
  } catch (const ValidationError& e) {
    spdlog::error("invalid scenario: {}", e.what());
    return kParse;
  } catch (const Infeasible& e) {
    spdlog::error("infeasible: {}", e.what());
    return kInfeasible;
  } catch (const NonConvergence& e) {
    spdlog::error("no convergence: {}", e.what());
    return kNonConvergence;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kOther;
  }
}
