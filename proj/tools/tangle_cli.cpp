// tangle: command-line front end for the tip-count model.
//
//   tangle solve    --lambda 2 --mu 1 --alpha 0.5 --capacity 5
//   tangle sojourn  ... [--initial pasta|fixed:I0,J0] [--cdf-grid T_MAX:POINTS]
//   tangle sweep    --preset fig4 | --vary lambda:20:40:2 --series mu:3.5,4,5 --fixed alpha=0.45 --fixed M=100
//   tangle simulate ... --horizon 1e5 --reps 20 --seed 7 [--compare]
//   tangle check
//
// Exit status: 0 ok, 1 failed check, 2 invalid input, 3 numerical failure.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using namespace tangle;

struct ModelFlags {
  double lambda = 0.0, mu = 0.0, alpha = 0.0;
  int capacity = 0;
  double tol = 1e-10;
  int max_level = 1 << 14;

  ModelParams params() const { return {lambda, mu, alpha, capacity}; }
  StationaryOptions stationary() const {
    StationaryOptions o;
    o.tol = tol;
    o.max_level = max_level;
    return o;
  }
};

void add_model_flags(CLI::App* cmd, ModelFlags& f, bool required = true) {
  auto* a = cmd->add_option("--lambda", f.lambda, "transaction arrival rate");
  auto* b = cmd->add_option("--mu", f.mu, "connection rate per internal tip and boundary pair");
  auto* c = cmd->add_option("--alpha", f.alpha, "impatience rate per internal tip");
  auto* d = cmd->add_option("--capacity,-M", f.capacity, "maximum number of boundary tips (M >= 2)");
  if (required) {
    for (auto* o : {a, b, c, d}) o->required();
  }
  cmd->add_option("--tol", f.tol, "tail-mass tolerance of the truncated solve")->capture_default_str();
  cmd->add_option("--max-level", f.max_level, "largest truncation level tried")->capture_default_str();
}

std::unique_ptr<std::ofstream> open_output(const std::string& path) {
  auto f = std::make_unique<std::ofstream>(path);
  if (!*f) throw Error(Errc::kInvalidArgument, "cannot open " + path + " for writing");
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tip-count model of a DAG ledger: stationary measures, sojourn times, simulation"};
  app.require_subcommand(1);
  int threads = default_threads();
  app.add_option("--threads", threads, "worker threads (default: TANGLE_THREADS or hardware concurrency)");

  // solve
  ModelFlags solve_flags;
  std::string solve_csv;
  auto* solve = app.add_subcommand("solve", "stationary measures at one parameter point");
  add_model_flags(solve, solve_flags);
  solve->add_option("--csv", solve_csv, "also write the measures as a one-row CSV");

  // sojourn
  ModelFlags soj_flags;
  std::string initial = "pasta", method = "linear", tag_role = "internal", cdf_csv;
  std::optional<std::string> cdf_grid;
  auto* soj = app.add_subcommand("sojourn", "mean and distribution of the time a tip stays a tip");
  add_model_flags(soj, soj_flags);
  soj->add_option("--initial", initial, "pasta or fixed:I0,J0")->capture_default_str();
  soj->add_option("--tag-role", tag_role, "role of the tagged tip for a fixed start")
      ->check(CLI::IsMember({"internal", "boundary"}))
      ->capture_default_str();
  soj->add_option("--method", method, "linear, rg or both")
      ->check(CLI::IsMember({"linear", "rg", "both"}))
      ->capture_default_str();
  soj->add_option("--cdf-grid", cdf_grid, "evaluate F(t) on POINTS equally spaced times in [0, T_MAX]");
  soj->add_option("--csv", cdf_csv, "write the t,F table here instead of stdout");

  // sweep
  std::string preset_name, vary, series, out_path;
  std::vector<std::string> fixed;
  bool with_sojourn = false;
  double sweep_tol = 1e-10;
  int sweep_max_level = 1 << 14;
  auto* sweep = app.add_subcommand("sweep", "parameter grid as CSV");
  auto* preset_opt = sweep->add_option("--preset", preset_name, "fig4, fig5, fig6, fig7, fig8 or fig9");
  auto* vary_opt = sweep->add_option("--vary", vary, "NAME:START:STOP:STEP (inclusive)");
  sweep->add_option("--series", series, "NAME:V1,V2,... outer series");
  sweep->add_option("--fixed", fixed, "NAME=VALUE, repeatable");
  sweep->add_flag("--with-sojourn", with_sojourn, "fill the E_WA column");
  sweep->add_option("--out", out_path, "output file (default stdout)");
  sweep->add_option("--tol", sweep_tol, "tail-mass tolerance")->capture_default_str();
  sweep->add_option("--max-level", sweep_max_level, "largest truncation level tried")->capture_default_str();
  preset_opt->excludes(vary_opt);

  // simulate
  ModelFlags sim_flags;
  SimConfig sim;
  sim.replications = 20;
  long tagged_total = 0;
  std::string trace_path, selection = "random";
  bool compare = false;
  auto* simc = app.add_subcommand("simulate", "Monte Carlo estimates with standard errors");
  add_model_flags(simc, sim_flags);
  simc->add_option("--horizon", sim.horizon, "simulated time per replication")->capture_default_str();
  simc->add_option("--warmup", sim.warmup, "time discarded before averaging")->capture_default_str();
  simc->add_option("--reps", sim.replications, "independent replications")->capture_default_str();
  simc->add_option("--seed", sim.master_seed, "master seed")->capture_default_str();
  simc->add_option("--tagged", tagged_total, "total tagged arrivals, split evenly over replications");
  simc->add_option("--tag-selection", selection, "random or spaced")
      ->check(CLI::IsMember({"random", "spaced"}))
      ->capture_default_str();
  simc->add_option("--trace", trace_path, "write the event trace of replication 0 as CSV");
  simc->add_flag("--compare", compare, "also solve the model and print z-scores");

  // check
  ModelFlags check_flags;
  check_flags.lambda = 2.0;
  check_flags.mu = 1.0;
  check_flags.alpha = 0.5;
  check_flags.capacity = 5;
  auto* check = app.add_subcommand("check", "run the cross-validation checks");
  add_model_flags(check, check_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*solve) {
      std::unique_ptr<std::ofstream> csv;
      if (!solve_csv.empty()) csv = open_output(solve_csv);
      cli::run_solve(solve_flags.params(), solve_flags.stationary(), std::cout, csv.get());
      return 0;
    }
    if (*soj) {
      const cli::MethodChoice m = method == "rg"     ? cli::MethodChoice::kRg
                                  : method == "both" ? cli::MethodChoice::kBoth
                                                     : cli::MethodChoice::kLinear;
      const TagRole role = tag_role == "boundary" ? TagRole::kBoundary : TagRole::kInternal;
      std::unique_ptr<std::ofstream> csv;
      if (!cdf_csv.empty()) {
        if (!cdf_grid) throw Error(Errc::kInvalidArgument, "--csv needs --cdf-grid");
        csv = open_output(cdf_csv);
      }
      cli::run_sojourn(soj_flags.params(), soj_flags.stationary(), initial, role, m, cdf_grid, std::cout,
                       csv.get());
      return 0;
    }
    if (*sweep) {
      cli::SweepSpec spec;
      if (!preset_name.empty()) {
        spec = cli::preset(preset_name);
        if (!series.empty() || !fixed.empty()) {
          throw Error(Errc::kInvalidArgument, "--preset cannot be combined with --series or --fixed");
        }
      } else {
        if (vary.empty()) throw Error(Errc::kInvalidArgument, "sweep needs --preset or --vary");
        cli::parse_vary(spec, vary);
        if (!series.empty()) cli::parse_series(spec, series);
        for (const std::string& f : fixed) cli::parse_fixed(spec, f);
      }
      spec.with_sojourn = spec.with_sojourn || with_sojourn;
      spec.tol = sweep_tol;
      spec.max_level = sweep_max_level;
      cli::validate(spec);
      std::unique_ptr<std::ofstream> file;
      if (!out_path.empty()) file = open_output(out_path);
      const int failed = cli::run_sweep(spec, file ? *file : std::cout, threads);
      if (failed > 0) std::cerr << "tangle: " << failed << " grid point(s) failed, see the error column\n";
      return 0;
    }
    if (*simc) {
      sim.params = sim_flags.params();
      sim.tag_selection = selection == "spaced" ? TagSelection::kSpaced : TagSelection::kRandom;
      if (tagged_total < 0) throw Error(Errc::kInvalidArgument, "--tagged must be >= 0");
      if (sim.replications < 1) throw Error(Errc::kInvalidArgument, "replications must be >= 1");
      sim.tagged_count = static_cast<int>((tagged_total + sim.replications - 1) / sim.replications);
      std::unique_ptr<std::ofstream> trace;
      if (!trace_path.empty()) trace = open_output(trace_path);
      cli::run_simulate(sim, compare, threads, std::cout, trace.get());
      return 0;
    }
    if (*check) {
      cli::CheckOptions o;
      o.tol = check_flags.tol;
      const bool overridden = check->count("--lambda") + check->count("--mu") + check->count("--alpha") +
                                  check->count("--capacity") >
                              0;
      if (overridden) o.params = check_flags.params();
      const int failed = cli::run_check(o, std::cout);
      std::cout << (failed == 0 ? "all checks passed" : std::to_string(failed) + " check(s) failed") << '\n';
      return failed == 0 ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "tangle: " << e.what() << '\n';
    return cli::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "tangle: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
