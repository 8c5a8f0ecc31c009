#pragma once

// Cross-validation checks shared by `tangle check` and the acceptance runner.
// Each check returns the measured quantity next to the bound it is held to.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tangle/tangle.hpp"

namespace tangle::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double bound = 0.0;
  std::string detail;
  double seconds = 0.0;
};

inline std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

inline std::string label(const ModelParams& p) {
  std::ostringstream os;
  os << "(lambda=" << p.lambda << ", mu=" << p.mu << ", alpha=" << p.alpha << ", M=" << p.capacity << ")";
  return os.str();
}

/// Runs `body` and stamps the wall time on its result.
inline CheckResult timed(const std::function<CheckResult()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = body();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Uniform rates in [0.1, 5], capacity in [2, max_capacity].
inline ModelParams random_params(std::mt19937_64& rng, int max_capacity) {
  std::uniform_real_distribution<double> rate(0.1, 5.0);
  std::uniform_int_distribution<int> cap(2, max_capacity);
  return {rate(rng), rate(rng), rate(rng), cap(rng)};
}

// --- generator ---------------------------------------------------------------

inline double level_row_residual(const ModelParams& p, int k) {
  const LevelBlocks b = build_level_blocks(p, k);
  Vector rows = b.diag.rowwise().sum() + b.up.rowwise().sum();
  if (k > 0) rows += b.down.rowwise().sum();
  return rows.cwiseAbs().maxCoeff();
}

inline double sojourn_row_residual(const ModelParams& p, int i) {
  const SojournLevelBlocks b = build_sojourn_blocks(p, i);
  Vector rows = b.diag.rowwise().sum() + b.up.rowwise().sum() + b.absorb;
  if (i > 0) rows += b.down.rowwise().sum();
  return rows.cwiseAbs().maxCoeff();
}

inline CheckResult generator_rows(const std::vector<ModelParams>& sets, int k_max, double bound = 1e-12) {
  double worst = 0.0;
  for (const ModelParams& p : sets) {
    for (int k = 0; k <= k_max; ++k) {
      worst = std::max({worst, level_row_residual(p, k), sojourn_row_residual(p, k)});
    }
  }
  return {"generator row sums", worst <= bound, worst, bound,
          std::to_string(sets.size()) + " parameter sets, levels 0.." + std::to_string(k_max)};
}

// --- drift -------------------------------------------------------------------

inline CheckResult drift(const std::vector<ModelParams>& sets, double bound = 1e-12) {
  double worst = 0.0;
  bool ok = true;
  std::string failures;
  for (const ModelParams& p : sets) {
    const DriftDiagnostics d = drift_diagnostics(p);
    worst = std::max(worst, d.residual);
    const int ms = d.minimal_stable_level;
    const int cap = static_cast<int>(std::ceil(p.lambda / d.down_rate_per_level)) + 1;
    bool gaps = d.down_rate_per_level > 0.0;
    for (int k = ms; k <= ms + 200; ++k) gaps = gaps && d.drift_gap(k) > 0.0;
    if (!gaps || ms > cap) {
      ok = false;
      failures += " " + label(p);
    }
  }
  return {"phase stationary vector and drift", ok && worst <= bound, worst, bound,
          failures.empty() ? std::to_string(sets.size()) + " parameter sets" : "drift failed for" + failures};
}

// --- stationary distribution ----------------------------------------------------

inline CheckResult rg_residuals(const ModelParams& p, int truncation, double bound = 1e-8) {
  const RgFactors f = rg_factorize(p, truncation);
  const auto blocks = [&](int k) { return build_level_blocks(p, k); };
  const int k_max = std::max(1, truncation * 2 / 3);
  const double r = r_equation_residual(blocks, f, k_max);
  const double g = g_equation_residual(blocks, f, k_max);
  const double scale = p.lambda + truncation * (p.alpha + p.mu * pairs(p.capacity));
  const double fr = factorization_residual(blocks, f) / scale;
  const double worst = std::max({r, g, fr});
  return {"R/G equations and factorization " + label(p), worst <= bound, worst, bound,
          "R " + sci(r) + ", G " + sci(g) + ", (I-R)U(I-G) relative " + sci(fr)};
}

inline CheckResult rg_vs_direct(const ModelParams& p, int level_cap, const StationaryOptions& opt,
                                double bound = 1e-8) {
  const StationaryResult rg = stationary(p, opt);
  const int cap = std::max(level_cap, rg.truncation);
  const StationaryResult brute = direct_solve_oracle(p, cap);
  double gap = 0.0;
  for (int k = 0; k <= cap; ++k) {
    const RowVector a = k <= rg.truncation ? rg.pi[k] : RowVector::Zero(p.capacity);
    gap = std::max(gap, (a - brute.pi[k]).cwiseAbs().maxCoeff());
  }
  const Measures a = compute_measures(rg, p), b = compute_measures(brute, p);
  const double na = std::abs(a.e_na - b.e_na) / b.e_na;
  const double nb = std::abs(a.e_nb - b.e_nb) / b.e_nb;
  const double th = std::abs(a.th - b.th) / b.th;
  const double worst = std::max({gap, na, nb, th});
  return {"RG stationary vector vs direct solve " + label(p), worst <= bound, worst, bound,
          "pi " + sci(gap) + ", E_NA " + sci(na) + ", E_NB " + sci(nb) + ", TH " + sci(th) +
              " (direct cap " + std::to_string(cap) + ", RG level " + std::to_string(rg.truncation) + ")"};
}

inline CheckResult flow_conservation(const std::vector<ModelParams>& grid, const StationaryOptions& opt,
                                     double bound = 1e-4) {
  double worst = 0.0;
  ModelParams worst_at{};
  for (const ModelParams& p : grid) {
    const double gap = conservation_report(stationary(p, opt), p).relative_gap;
    if (gap >= worst) {
      worst = gap;
      worst_at = p;
    }
  }
  return {"throughput equals arrival rate", worst <= bound, worst, bound,
          std::to_string(grid.size()) + " points, worst at " + label(worst_at)};
}

// --- sojourn -----------------------------------------------------------------

inline double pasta_mean(const ModelParams& p, const StationaryOptions& opt = {}) {
  const StationaryResult st = stationary(p, opt);
  return mean_sojourn_linear(p, pasta_initial(st, p)).mean;
}

inline CheckResult little(const ModelParams& p, const StationaryOptions& opt, double bound = 1e-3) {
  const StationaryResult st = stationary(p, opt);
  const double w = mean_sojourn_linear(p, pasta_initial(st, p)).mean;
  const ConservationReport r = conservation_report(st, p, w);
  return {"Little's law under PASTA " + label(p), *r.little_gap <= bound, *r.little_gap, bound,
          "lambda E_WA " + format_double(*r.little_lhs) + ", E_NA + E_NB " + format_double(r.little_rhs)};
}

/// Linear solve vs the V-block and the sweep evaluation of the RG route.
inline CheckResult two_route(const std::vector<std::pair<ModelParams, InitialVector>>& cases,
                             double bound = 1e-8) {
  double worst = 0.0;
  for (const auto& [p, theta] : cases) {
    const double lin = mean_sojourn_linear(p, theta).mean;
    const double vb = mean_sojourn_rg(p, theta, {}, RgEvaluation::kVBlocks).mean;
    const double sw = mean_sojourn_rg(p, theta, {}, RgEvaluation::kProductSweep).mean;
    worst = std::max({worst, std::abs(vb - lin) / lin, std::abs(sw - lin) / lin});
  }
  return {"sojourn mean: linear solve vs RG products", worst <= bound, worst, bound,
          std::to_string(cases.size()) + " parameter/initial-vector combinations"};
}

/// Random cases with capacity <= max_capacity; even cases use PASTA, odd
/// cases a random mixture over tagged-internal states of levels 0..5.
inline std::vector<std::pair<ModelParams, InitialVector>> random_sojourn_cases(std::uint64_t seed, int count,
                                                                               int max_capacity) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<ModelParams, InitialVector>> out;
  for (int c = 0; c < count; ++c) {
    const ModelParams p = random_params(rng, max_capacity);
    if (c % 2 == 0) {
      out.emplace_back(p, pasta_initial(stationary(p), p));
      continue;
    }
    InitialVector th;
    th.capacity = p.capacity;
    th.weights = Vector::Zero(2 * p.capacity * 6);
    for (int k = 0; k <= 5; ++k)
      for (int j = 1; j <= p.capacity; ++j)
        th.weights(2 * p.capacity * k + within_level_offset(TagRole::kInternal, j)) = u(rng);
    th.weights /= th.weights.sum();
    out.emplace_back(p, std::move(th));
  }
  return out;
}

inline CheckResult ph_shape(const ModelParams& p, const StationaryOptions& opt, double bound = 1e-3) {
  const StationaryResult st = stationary(p, opt);
  const InitialVector theta = pasta_initial(st, p);
  const PhResult mean = mean_sojourn_linear(p, theta);
  const int level = cdf_truncation(p, theta, mean);

  std::vector<double> coarse;
  for (int i = 0; i < 200; ++i) coarse.push_back(i * 20.0 * mean.mean / 199.0);
  const PhResult c = sojourn_cdf(p, theta, coarse, level);
  bool monotone = true;
  for (std::size_t i = 1; i < c.cdf.size(); ++i) monotone = monotone && c.cdf[i].second >= c.cdf[i - 1].second;
  const bool zero = c.cdf.front().second == 0.0;

  std::vector<double> fine;
  const int n = 4000;
  for (int i = 0; i <= n; ++i) fine.push_back(i * 40.0 * mean.mean / n);
  const PhResult f = sojourn_cdf(p, theta, fine, level);
  double integral = 0.0;
  for (std::size_t i = 1; i < f.cdf.size(); ++i) {
    const double h = f.cdf[i].first - f.cdf[i - 1].first;
    integral += 0.5 * h * ((1.0 - f.cdf[i].second) + (1.0 - f.cdf[i - 1].second));
  }
  const double gap = std::abs(integral - mean.mean) / mean.mean;
  return {"sojourn CDF shape " + label(p), zero && monotone && gap <= bound, gap, bound,
          std::string("F(0)=") + format_double(c.cdf.front().second) +
              (monotone ? ", nondecreasing on 200 points" : ", NOT monotone") + ", integral of 1-F " +
              format_double(integral) + " vs mean " + format_double(mean.mean)};
}

// --- simulation ----------------------------------------------------------------

struct SimulationOracle {
  CheckResult counts;
  CheckResult sojourn_mean;
  CheckResult sojourn_ks;
};

inline SimulationOracle simulation_oracle(const SimConfig& config, double level = 0.99, double ks_level = 0.01) {
  SimulationOracle out;
  const ModelParams& p = config.params;
  const StationaryResult st = stationary(p);
  const Measures m = compute_measures(st, p);
  const InitialVector theta = pasta_initial(st, p);
  const SimResult r = config.tagged_count > 0 ? simulate_tagged(config) : simulate(config);

  const bool na = r.mean_internal.covers(m.e_na, level);
  const bool nb = r.mean_boundary.covers(m.e_nb, level);
  const bool th = r.th_estimate.covers(p.lambda, level);
  const double worst_z = std::max({std::abs(r.mean_internal.z_score(m.e_na)), std::abs(r.mean_boundary.z_score(m.e_nb)),
                                   std::abs(r.th_estimate.z_score(p.lambda))});
  out.counts = {"simulated E_NA, E_NB, TH cover analytic values", na && nb && th, worst_z,
                r.mean_internal.t_quantile(level),
                "E_NA " + format_double(r.mean_internal.mean) + " vs " + format_double(m.e_na) + ", E_NB " +
                    format_double(r.mean_boundary.mean) + " vs " + format_double(m.e_nb) + ", TH " +
                    format_double(r.th_estimate.mean) + " vs " + format_double(p.lambda) + " (max |t|)"};
  if (config.tagged_count == 0) return out;

  const PhResult mean = mean_sojourn_linear(p, theta);
  const Estimate e = r.sojourn_mean();
  out.sojourn_mean = {"tagged sojourn mean covers analytic E_WA", e.covers(mean.mean, level),
                      std::abs(e.z_score(mean.mean)), e.t_quantile(level),
                      format_double(e.mean) + " +- " + format_double(e.std_error) + " over " +
                          std::to_string(e.samples) + " tags vs " + format_double(mean.mean) + " (|t|)"};

  std::vector<double> xs = r.sojourn_samples;
  std::sort(xs.begin(), xs.end());
  const PhResult cdf = sojourn_cdf(p, theta, xs, cdf_truncation(p, theta, mean));
  std::vector<double> fv;
  fv.reserve(cdf.cdf.size());
  for (const auto& pt : cdf.cdf) fv.push_back(pt.second);
  const double d = ks_statistic(fv);
  const double crit = ks_critical(static_cast<long>(xs.size()), ks_level);
  out.sojourn_ks = {"tagged sojourn empirical CDF vs analytic (KS)", d <= crit, d, crit,
                    std::to_string(xs.size()) + " samples"};
  return out;
}

// --- parameter sweeps ----------------------------------------------------------

/// Strictly monotone in the given direction (+1 increasing, -1 decreasing).
inline int monotonicity_violations(const std::vector<double>& v, int direction) {
  int bad = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(direction * (v[i] - v[i - 1]) > 0.0)) ++bad;
  }
  return bad;
}

/// Evaluates f on every point concurrently, results in input order.
template <class F>
std::vector<double> evaluate_grid(const std::vector<ModelParams>& grid, F&& f, int threads = default_threads()) {
  std::vector<double> out(grid.size());
  parallel_for(static_cast<int>(grid.size()), [&](int i) { out[i] = f(grid[i]); }, threads);
  return out;
}

}  // namespace tangle::checks
