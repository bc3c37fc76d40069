// mvsim: run, compare and replay Multiverse workloads.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "multiverse/errors.hpp"
#include "multiverse/sim/compare.hpp"
#include "multiverse/sim/replay.hpp"
#include "multiverse/sim/simulator.hpp"
#include "multiverse/sim/workload.hpp"
#include "multiverse/toolchain/override_config.hpp"

namespace {

namespace ms = multiverse::sim;

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitFailure = 3;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw multiverse::UsageError("cannot open `" + path + "`");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Common {
  std::string cost_file;
  std::string overrides_file;
  bool symbol_cache = false;
  bool no_wp = false;
  unsigned cores = 8;
  unsigned ros_cores = 4;
  unsigned socket_size = 4;
  bool metrics = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--cost", c.cost_file, "cost model file (key = value)");
  cmd->add_option("--overrides", c.overrides_file, "function override config");
  cmd->add_flag("--symbol-cache", c.symbol_cache, "enable the AeroKernel symbol cache");
  cmd->add_flag("--no-cr0-wp", c.no_wp, "boot the HRT with CR0.WP clear");
  cmd->add_option("--cores", c.cores, "total cores")->check(CLI::PositiveNumber);
  cmd->add_option("--ros-cores", c.ros_cores, "cores in the ROS partition")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--socket-size", c.socket_size, "cores per socket")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--metrics", c.metrics, "also print metric=<name> value=<n> lines");
}

ms::RunOptions make_options(const Common& c) {
  ms::RunOptions o;
  if (!c.cost_file.empty()) o.cost = ms::load_cost_model(slurp(c.cost_file));
  if (!c.overrides_file.empty()) {
    o.overrides = multiverse::toolchain::parse_override_config(slurp(c.overrides_file));
    for (const auto& w : o.overrides.warnings) std::cerr << "warning: " << w << '\n';
  }
  o.symbol_cache = c.symbol_cache;
  o.hrt.cr0_wp = !c.no_wp;
  o.machine.cores = c.cores;
  o.machine.ros_cores = c.ros_cores;
  o.machine.socket_size = c.socket_size;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiverse hybrid-runtime simulator"};
  app.require_subcommand(1);

  Common common;
  std::string workload;
  std::string mode = "multiverse";
  std::string log_file;
  CLI::App* run_cmd = app.add_subcommand("run", "run a workload in one mode");
  run_cmd->add_option("workload", workload, "workload file")->required();
  run_cmd->add_option("--mode", mode, "native, virtual or multiverse")
      ->check(CLI::IsMember({"native", "virtual", "multiverse"}));
  run_cmd->add_option("--log", log_file, "write the event log here");
  add_common(run_cmd, common);

  CLI::App* cmp_cmd = app.add_subcommand("compare", "virtual vs multiverse deltas");
  cmp_cmd->add_option("workload", workload, "workload file")->required();
  add_common(cmp_cmd, common);

  std::string profiles;
  CLI::App* rep_cmd = app.add_subcommand("replay", "forwarding overhead of profiles");
  rep_cmd->add_option("--profiles", profiles, "benchmark profile CSV")->required();
  rep_cmd->add_option("--cost", common.cost_file, "cost model file (key = value)");
  rep_cmd->add_flag("--metrics", common.metrics, "also print metric lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitParse;
  }

  try {
    if (rep_cmd->parsed()) {
      multiverse::sim::CostModel cost;
      if (!common.cost_file.empty()) cost = ms::load_cost_model(slurp(common.cost_file));
      std::vector<ms::ReplayResult> results;
      for (const auto& p : ms::load_profiles(slurp(profiles))) {
        results.push_back(ms::replay_benchmark(p, cost));
      }
      std::cout << ms::format_replay(results);
      if (common.metrics) std::cout << ms::format_replay_metrics(results);
      return kExitOk;
    }

    const ms::WorkloadProgram program = ms::parse_workload(slurp(workload));
    ms::RunOptions options = make_options(common);

    if (cmp_cmd->parsed()) {
      const ms::Comparison c = ms::compare(program, options);
      std::cout << ms::format_comparison(c);
      if (common.metrics) std::cout << ms::format_comparison_metrics(c);
      if (!c.virt.ok || !c.multiverse.ok) {
        std::cerr << "error: " << (c.virt.ok ? c.multiverse.failure : c.virt.failure)
                  << '\n';
        return kExitFailure;
      }
      return kExitOk;
    }

    options.mode = ms::parse_mode(mode);
    const ms::RunResult r = ms::run(program, options);
    if (!log_file.empty()) {
      std::ofstream out(log_file, std::ios::binary);
      if (!out) throw multiverse::UsageError("cannot write `" + log_file + "`");
      out << r.log_text();
    }
    std::cout << ms::format_table(r.report);
    if (common.metrics) std::cout << ms::format_metrics(r.report);
    if (!r.output.empty()) std::cerr << r.output;
    if (!r.ok) {
      std::cerr << "error: " << r.failure << '\n';
      return kExitFailure;
    }
    return kExitOk;
  } catch (const multiverse::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitParse;
  } catch (const multiverse::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitParse;
  } catch (const multiverse::SimError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
