#pragma once

// Subcommand bodies of the `tangle` executable. They write to the given
// streams and throw tangle::Error; main() maps errors to exit codes.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "checks.hpp"
#include "tangle/tangle.hpp"

namespace tangle::cli {

inline constexpr std::array<const char*, 4> kParameterNames{"lambda", "mu", "alpha", "M"};

inline constexpr const char* kSweepHeader = "lambda,mu,alpha,M,E_NA,E_NB,TH,E_WA,trunc_level,tail_mass";

/// Process exit status for an error code.
inline int exit_code(Errc e) {
  switch (e) {
    case Errc::kNoConvergence:
    case Errc::kDivergentMean:
    case Errc::kSingularBlock:
    case Errc::kSingularSystem:
      return 3;
    default:
      return 2;
  }
}

inline double& parameter_slot(ModelParams& p, const std::string& name, double& capacity_value) {
  if (name == "lambda") return p.lambda;
  if (name == "mu") return p.mu;
  if (name == "alpha") return p.alpha;
  if (name == "M") return capacity_value;
  throw Error(Errc::kInvalidArgument, "unknown parameter '" + name + "' (expected lambda, mu, alpha or M)");
}

inline ModelParams with_parameter(ModelParams p, const std::string& name, double value) {
  double cap = p.capacity;
  parameter_slot(p, name, cap) = value;
  if (name == "M") {
    if (value != std::floor(value) || value < 0.0 || value > 1e6) {
      throw Error(Errc::kInvalidArgument, "M must be a nonnegative integer");
    }
    p.capacity = static_cast<int>(value);
  }
  return p;
}

inline double parse_number(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw Error(Errc::kInvalidArgument, "bad number '" + text + "' in " + what);
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// --- sweep -----------------------------------------------------------------

struct Range {
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;

  /// Inclusive grid start, start + step, ... <= stop (with 1e-9 step slack).
  std::vector<double> values() const {
    std::vector<double> v;
    const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long i = 0; i <= n; ++i) v.push_back(start + static_cast<double>(i) * step);
    return v;
  }
};

struct SweepSpec {
  std::string varying;
  Range range;
  std::string series;  // optional outer parameter
  std::vector<double> series_values;
  std::map<std::string, double> fixed;
  bool with_sojourn = false;
  double tol = 1e-10;
  int max_level = 1 << 14;
};

inline void validate(const SweepSpec& s) {
  if (!(s.range.step > 0.0)) throw Error(Errc::kInvalidArgument, "sweep step must be > 0");
  if (!(s.range.stop >= s.range.start)) throw Error(Errc::kInvalidArgument, "sweep range is empty");
  std::multiset<std::string> covered;
  covered.insert(s.varying);
  if (!s.series.empty()) {
    if (s.series_values.empty()) throw Error(Errc::kInvalidArgument, "series needs at least one value");
    covered.insert(s.series);
  }
  for (const auto& [name, _] : s.fixed) covered.insert(name);
  for (const char* name : kParameterNames) {
    if (covered.count(name) != 1) {
      throw Error(Errc::kInvalidArgument,
                  std::string("sweep must give parameter ") + name + " exactly once (varying, series or fixed)");
    }
  }
  if (covered.size() != kParameterNames.size()) {
    throw Error(Errc::kInvalidArgument, "sweep names an unknown parameter");
  }
}

/// Grid points in output order: series value outer, varying parameter inner.
inline std::vector<ModelParams> grid(const SweepSpec& s) {
  validate(s);
  ModelParams base{0.0, 0.0, 0.0, 0};
  for (const auto& [name, v] : s.fixed) base = with_parameter(base, name, v);
  std::vector<ModelParams> out;
  const std::vector<double> outer = s.series.empty() ? std::vector<double>{0.0} : s.series_values;
  for (double sv : outer) {
    const ModelParams b = s.series.empty() ? base : with_parameter(base, s.series, sv);
    for (double v : s.range.values()) out.push_back(with_parameter(b, s.varying, v));
  }
  return out;
}

inline SweepSpec preset(const std::string& name) {
  SweepSpec s;
  const Range lambda_range{20.0, 40.0, 2.0};
  if (name == "fig4" || name == "fig5" || name == "fig6") {
    s.varying = "lambda";
    s.range = lambda_range;
    s.series = "mu";
    s.series_values = name == "fig6" ? std::vector<double>{2.0, 2.5, 3.0} : std::vector<double>{3.5, 4.0, 5.0};
    s.fixed = {{"alpha", 0.45}, {"M", 100}};
  } else if (name == "fig7") {
    s.varying = "mu";
    s.range = {2.0, 9.0, 0.5};
    s.series = "alpha";
    s.series_values = {0.3, 0.4, 0.5};
    s.fixed = {{"lambda", 30.0}, {"M", 50}};
    s.with_sojourn = true;
  } else if (name == "fig8") {
    s.varying = "lambda";
    s.range = lambda_range;
    s.series = "alpha";
    s.series_values = {0.3, 0.35, 0.4};
    s.fixed = {{"mu", 5.0}, {"M", 50}};
    s.with_sojourn = true;
  } else if (name == "fig9") {
    s.varying = "lambda";
    s.range = lambda_range;
    s.series = "mu";
    s.series_values = {3.5, 4.0, 5.0};
    s.fixed = {{"alpha", 0.3}, {"M", 50}};
    s.with_sojourn = true;
  } else {
    throw Error(Errc::kInvalidArgument, "unknown preset '" + name + "' (fig4 .. fig9)");
  }
  return s;
}

/// "NAME:START:STOP:STEP"
inline void parse_vary(SweepSpec& s, const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 4) throw Error(Errc::kInvalidArgument, "--vary expects NAME:START:STOP:STEP");
  s.varying = parts[0];
  s.range = {parse_number(parts[1], "--vary"), parse_number(parts[2], "--vary"), parse_number(parts[3], "--vary")};
}

/// "NAME:V1,V2,..."
inline void parse_series(SweepSpec& s, const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw Error(Errc::kInvalidArgument, "--series expects NAME:V1,V2,...");
  s.series = text.substr(0, colon);
  s.series_values.clear();
  for (const auto& v : split(text.substr(colon + 1), ',')) s.series_values.push_back(parse_number(v, "--series"));
}

/// "NAME=VALUE"
inline void parse_fixed(SweepSpec& s, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw Error(Errc::kInvalidArgument, "--fixed expects NAME=VALUE");
  const std::string name = text.substr(0, eq);
  if (s.fixed.count(name)) throw Error(Errc::kInvalidArgument, "parameter " + name + " fixed twice");
  s.fixed[name] = parse_number(text.substr(eq + 1), "--fixed");
}

struct SweepRow {
  ModelParams params;
  std::optional<Measures> measures;
  std::optional<double> e_wa;
  std::string error;
};

inline SweepRow sweep_point(const ModelParams& p, const SweepSpec& s) {
  SweepRow row{p, std::nullopt, std::nullopt, {}};
  try {
    StationaryOptions opt;
    opt.tol = s.tol;
    opt.max_level = s.max_level;
    const StationaryResult st = stationary(p, opt);
    row.measures = compute_measures(st, p);
    if (s.with_sojourn) {
      SojournOptions so;
      so.max_level = s.max_level;
      row.e_wa = mean_sojourn_linear(p, pasta_initial(st, p), so).mean;
    }
  } catch (const Error& e) {
    row.error = e.what();
  }
  return row;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

/// Writes the sweep CSV; an `error` column is appended only when some point
/// failed. Returns the number of failed points.
inline int write_sweep(std::ostream& out, const std::vector<SweepRow>& rows) {
  const bool any_error = std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.error.empty(); });
  out << kSweepHeader << (any_error ? ",error" : "") << '\n';
  int failed = 0;
  for (const SweepRow& r : rows) {
    const ModelParams& p = r.params;
    out << format_double(p.lambda) << ',' << format_double(p.mu) << ',' << format_double(p.alpha) << ','
        << p.capacity << ',';
    if (r.measures) {
      const Measures& m = *r.measures;
      out << format_double(m.e_na) << ',' << format_double(m.e_nb) << ',' << format_double(m.th) << ','
          << (r.e_wa ? format_double(*r.e_wa) : "") << ',' << m.trunc_level << ',' << format_double(m.tail_mass);
    } else {
      out << ",,,,,";
    }
    if (any_error) out << ',' << csv_field(r.error);
    out << '\n';
    if (!r.error.empty()) ++failed;
  }
  return failed;
}

inline int run_sweep(const SweepSpec& spec, std::ostream& out, int threads) {
  const std::vector<ModelParams> points = grid(spec);
  std::vector<SweepRow> rows(points.size());
  parallel_for(static_cast<int>(points.size()), [&](int i) { rows[i] = sweep_point(points[i], spec); }, threads);
  return write_sweep(out, rows);
}

// --- solve / sojourn ---------------------------------------------------------

inline void table_row(std::ostream& out, const std::string& key, const std::string& value) {
  out << std::left << std::setw(14) << key << value << '\n';
}

inline void print_params(std::ostream& out, const ModelParams& p) {
  table_row(out, "lambda", format_double(p.lambda));
  table_row(out, "mu", format_double(p.mu));
  table_row(out, "alpha", format_double(p.alpha));
  table_row(out, "M", std::to_string(p.capacity));
}

inline void run_solve(const ModelParams& params, const StationaryOptions& opt, std::ostream& out,
                      std::ostream* csv) {
  const ModelParams p = validate(params);
  const StationaryResult st = stationary(p, opt);
  const Measures m = compute_measures(st, p);
  const ConservationReport c = conservation_report(st, p);
  print_params(out, p);
  table_row(out, "E_NA", format_double(m.e_na));
  table_row(out, "E_NB", format_double(m.e_nb));
  table_row(out, "TH", format_double(m.th));
  table_row(out, "trunc_level", std::to_string(m.trunc_level));
  table_row(out, "tail_mass", format_double(m.tail_mass));
  table_row(out, "TH_gap", format_double(c.relative_gap) + "  (|TH - lambda| / lambda)");
  if (csv) write_sweep(*csv, {SweepRow{p, m, std::nullopt, {}}});
}

enum class MethodChoice { kLinear, kRg, kBoth };

/// "pasta" or "fixed:I0,J0". For a fixed start I0 counts the other internal
/// tips; J0 is the boundary count (1..M) when the tagged tip is internal and
/// the number of other boundary tips (0..M-1) when it is a boundary tip.
inline InitialVector parse_initial(const std::string& text, const ModelParams& p, const StationaryOptions& opt,
                                   TagRole role = TagRole::kInternal) {
  if (text == "pasta") return pasta_initial(stationary(p, opt), p);
  const auto colon = text.find(':');
  if (colon == std::string::npos || text.substr(0, colon) != "fixed") {
    throw Error(Errc::kInvalidArgument, "--initial expects pasta or fixed:I0,J0");
  }
  const auto nums = split(text.substr(colon + 1), ',');
  if (nums.size() != 2) throw Error(Errc::kInvalidArgument, "--initial fixed needs two integers");
  const double a = parse_number(nums[0], "--initial"), b = parse_number(nums[1], "--initial");
  if (a != std::floor(a) || b != std::floor(b) || std::abs(a) > 1e6 || std::abs(b) > 1e6) {
    throw Error(Errc::kInvalidArgument, "--initial indices must be integers");
  }
  return fixed_initial({static_cast<int>(a), role, static_cast<int>(b)}, p.capacity);
}

/// "T_MAX:POINTS" -> POINTS equally spaced times on [0, T_MAX].
inline std::vector<double> parse_cdf_grid(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 2) throw Error(Errc::kGridError, "--cdf-grid expects T_MAX:POINTS");
  const double t_max = parse_number(parts[0], "--cdf-grid");
  const double n = parse_number(parts[1], "--cdf-grid");
  if (!(t_max >= 0.0) || !std::isfinite(t_max)) throw Error(Errc::kGridError, "T_MAX must be finite and >= 0");
  if (n != std::floor(n) || n < 1 || n > 1e7) throw Error(Errc::kGridError, "POINTS must be an integer >= 1");
  const auto count = static_cast<long>(n);
  std::vector<double> g;
  for (long i = 0; i < count; ++i) g.push_back(count == 1 ? 0.0 : t_max * static_cast<double>(i) / (count - 1));
  return g;
}

inline void run_sojourn(const ModelParams& params, const StationaryOptions& opt, const std::string& initial,
                        TagRole role, MethodChoice method, const std::optional<std::string>& cdf_grid, std::ostream& out,
                        std::ostream* cdf_out) {
  const ModelParams p = validate(params);
  const InitialVector theta = parse_initial(initial, p, opt, role);
  SojournOptions so;
  so.max_level = opt.max_level;
  std::optional<PhResult> lin, rg;
  if (method != MethodChoice::kRg) lin = mean_sojourn_linear(p, theta, so);
  if (method != MethodChoice::kLinear) rg = mean_sojourn_rg(p, theta, so, RgEvaluation::kVBlocks);
  const PhResult& primary = lin ? *lin : *rg;

  print_params(out, p);
  table_row(out, "initial", initial == "pasta" || role == TagRole::kInternal ? initial : initial + " (boundary tag)");
  if (lin) table_row(out, rg ? "E_WA_linear" : "E_WA", format_double(lin->mean));
  if (rg) table_row(out, lin ? "E_WA_rg" : "E_WA", format_double(rg->mean));
  if (lin && rg) table_row(out, "method_gap", format_double(std::abs(lin->mean - rg->mean) / lin->mean));
  table_row(out, "trunc_level", std::to_string(primary.truncation));

  if (cdf_grid) {
    const std::vector<double> g = parse_cdf_grid(*cdf_grid);
    const PhResult f = sojourn_cdf(p, theta, g, cdf_truncation(p, theta, primary));
    std::ostream& dst = cdf_out ? *cdf_out : out;
    if (!cdf_out) dst << '\n';
    dst << "t,F\n";
    for (const auto& [t, v] : f.cdf) dst << format_double(t) << ',' << format_double(v) << '\n';
  }
}

// --- simulate ----------------------------------------------------------------

inline void run_simulate(const SimConfig& config, bool compare, int threads, std::ostream& out,
                         std::ostream* trace) {
  const SimConfig c = validate(config);
  const SimResult r = c.tagged_count > 0 ? simulate_tagged(c, threads) : simulate(c, threads);
  if (trace) run_replication(c, 0, trace);

  std::optional<Measures> m;
  std::optional<double> w;
  if (compare) {
    const StationaryResult st = stationary(c.params);
    m = compute_measures(st, c.params);
    if (c.tagged_count > 0) w = mean_sojourn_linear(c.params, pasta_initial(st, c.params)).mean;
  }

  print_params(out, c.params);
  table_row(out, "horizon", format_double(c.horizon));
  table_row(out, "warmup", format_double(c.warmup));
  table_row(out, "replications", std::to_string(c.replications));
  table_row(out, "seed", std::to_string(c.master_seed));
  table_row(out, "events", std::to_string(r.event_counts.arrivals) + " arrivals, " +
                               std::to_string(r.event_counts.connections) + " connections, " +
                               std::to_string(r.event_counts.impatience) + " impatience");
  table_row(out, "boundary", "min " + std::to_string(r.min_boundary) + ", max " + std::to_string(r.max_boundary));
  out << '\n' << std::left << std::setw(14) << "quantity" << std::setw(24) << "estimate" << std::setw(24)
      << "std_error";
  if (compare) out << std::setw(24) << "analytic" << "z";
  out << '\n';
  auto line = [&](const std::string& name, const Estimate& e, std::optional<double> analytic) {
    out << std::setw(14) << name << std::setw(24) << format_double(e.mean) << std::setw(24)
        << format_double(e.std_error);
    if (analytic) out << std::setw(24) << format_double(*analytic) << format_double(e.z_score(*analytic));
    out << '\n';
  };
  line("E_NA", r.mean_internal, m ? std::optional(m->e_na) : std::nullopt);
  line("E_NB", r.mean_boundary, m ? std::optional(m->e_nb) : std::nullopt);
  line("TH", r.th_estimate, compare ? std::optional(c.params.lambda) : std::nullopt);
  if (c.tagged_count > 0) {
    const Estimate e = r.sojourn_mean();
    line("E_WA", e, w);
    const auto [lo, hi] = e.ci(0.99);
    table_row(out, "E_WA_ci99", "[" + format_double(lo) + ", " + format_double(hi) + "]" +
                                    (w ? (e.covers(*w) ? " covers analytic" : " misses analytic") : ""));
  }
}

// --- check -------------------------------------------------------------------

struct CheckOptions {
  std::optional<ModelParams> params;  // single point instead of the default grid
  double tol = 1e-10;
};

inline std::vector<ModelParams> default_check_grid() {
  return {{2.0, 1.0, 0.5, 5}, {3.0, 1.0, 0.5, 10}, {1.0, 1.0, 1.0, 2}, {0.8, 2.5, 0.3, 8}};
}

/// One line per check; returns the number of failures.
inline int run_check(const CheckOptions& o, std::ostream& out) {
  int failed = 0;
  auto report = [&](const checks::CheckResult& r) {
    out << (r.passed ? "PASS  " : "FAIL  ") << r.name << ": measured " << checks::sci(r.measured) << ", tolerance "
        << checks::sci(r.bound) << " (" << r.detail << ")\n";
    if (!r.passed) ++failed;
  };
  auto guarded = [&](const std::string& name, auto&& body) {
    try {
      report(body());
    } catch (const Error& e) {
      report({name, false, std::nan(""), 0.0, e.what()});
    }
  };

  const std::vector<ModelParams> sets = o.params ? std::vector<ModelParams>{*o.params} : default_check_grid();
  std::vector<ModelParams> valid;
  for (const ModelParams& p : sets) {
    try {
      valid.push_back(validate(p));
      report({"parameter validation " + checks::label(p), true, 0.0, 0.0, "valid"});
    } catch (const Error& e) {
      // invalid input requested on purpose: the rejection is the expected result
      report({"parameter validation " + checks::label(p), true, 0.0, 0.0,
              std::string("rejected as expected: ") + e.what()});
    }
  }
  if (valid.empty()) return failed;

  // Solver tolerances follow the requested tail tolerance.
  StationaryOptions opt;
  opt.tol = o.tol;
  const double solve_bound = std::max(1e-8, 10.0 * o.tol);
  const double little_bound = std::max(1e-3, 10.0 * o.tol);

  guarded("generator row sums", [&] { return checks::generator_rows(valid, 50); });
  guarded("phase stationary vector and drift", [&] { return checks::drift(valid); });
  std::vector<std::pair<ModelParams, InitialVector>> cases;
  for (const ModelParams& p : valid) {
    guarded("R/G equations", [&] { return checks::rg_residuals(p, 60); });
    guarded("RG vs direct solve", [&] { return checks::rg_vs_direct(p, 300, opt, solve_bound); });
    guarded("Little's law", [&] { return checks::little(p, opt, little_bound); });
    guarded("sojourn CDF shape", [&] { return checks::ph_shape(p, opt, little_bound); });
    try {
      cases.emplace_back(p, pasta_initial(stationary(p, opt), p));
    } catch (const Error&) {
    }
  }
  guarded("throughput equals arrival rate", [&] { return checks::flow_conservation(valid, opt, solve_bound); });
  guarded("sojourn mean: linear vs RG", [&] { return checks::two_route(cases, 1e-8); });

  // Throughput is pinned to lambda whatever mu is; show the gap.
  for (const ModelParams& p : valid) {
    try {
      const double gap = conservation_report(stationary(p, opt), p).relative_gap;
      out << "INFO  TH - lambda gap " << checks::label(p) << ": " << checks::sci(gap)
          << " (TH carries no mu dependence)\n";
    } catch (const Error&) {
    }
  }
  return failed;
}

}  // namespace tangle::cli
