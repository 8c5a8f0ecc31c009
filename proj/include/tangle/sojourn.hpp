#pragma once

// Sojourn time W_A of a tagged arriving transaction: absorption time of the
// block-tridiagonal sub-generator T with initial vector theta.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "tangle/error.hpp"
#include "tangle/model.hpp"
#include "tangle/qbd.hpp"

namespace tangle {

enum class InitialMode { kFixed, kPasta };

/// Initial distribution over sojourn states, flat zero-based in the
/// interleaved order, covering levels 0..top_level().
struct InitialVector {
  InitialMode mode = InitialMode::kFixed;
  int capacity = 0;
  Vector weights;

  int width() const { return 2 * capacity; }
  int top_level() const { return static_cast<int>(weights.size() / width()) - 1; }
};

/// Unit mass on one state. The usual choice is a tagged-internal state
/// (1,i0;j0); tagged-boundary states are accepted as well.
inline InitialVector fixed_initial(const SojournState& s, int capacity) {
  const std::size_t idx = state_index(s, capacity);
  InitialVector th;
  th.mode = InitialMode::kFixed;
  th.capacity = capacity;
  th.weights = Vector::Zero(2 * capacity * (s.level + 1));
  th.weights(static_cast<Eigen::Index>(idx - 1)) = 1.0;
  return th;
}

/// Poisson arrivals see the stationary state (k, m) and enter as (1,k;m).
/// Tail mass beyond the truncation is spread over level N like pi_N.
inline InitialVector pasta_initial(const StationaryResult& st, const ModelParams& params) {
  const int M = params.capacity;
  if (st.capacity() != M) throw Error(Errc::kInvalidArgument, "stationary result has wrong capacity");
  const int N = st.truncation;
  InitialVector th;
  th.mode = InitialMode::kPasta;
  th.capacity = M;
  th.weights = Vector::Zero(2 * M * (N + 1));
  for (int k = 0; k <= N; ++k) {
    RowVector level = st.pi[k];
    if (k == N && st.tail_mass > 0.0 && level.sum() > 0.0) {
      level += st.tail_mass * level / level.sum();
    }
    for (int m = 1; m <= M; ++m) {
      th.weights(2 * M * k + within_level_offset(TagRole::kInternal, m)) = level(m - 1);
    }
  }
  th.weights /= th.weights.sum();
  return th;
}

enum class SojournMethod { kLinearSolve, kRgProducts };

struct PhResult {
  double mean = 0.0;
  std::vector<std::pair<double, double>> cdf;  // (t, F(t))
  int truncation = 0;
  SojournMethod method = SojournMethod::kLinearSolve;
};

struct SojournOptions {
  double rel_tol = 1e-8;
  int max_level = 1 << 14;
  int initial_level = 0;  // 0 picks max(top level of theta, 20)
  bool adaptive = true;   // false: solve once at the starting level
};

/// T truncated at level N; the up-block of level N is dropped.
inline Eigen::SparseMatrix<double, Eigen::RowMajor> assemble_sojourn_generator(const ModelParams& params,
                                                                                int truncation) {
  const ModelParams p = validate(params);
  const int S = 2 * p.capacity;
  const int n = S * (truncation + 1);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 7);
  auto add_block = [&](const Matrix& b, int row0, int col0) {
    for (int i = 0; i < b.rows(); ++i)
      for (int j = 0; j < b.cols(); ++j)
        if (b(i, j) != 0.0) trip.emplace_back(row0 + i, col0 + j, b(i, j));
  };
  for (int i = 0; i <= truncation; ++i) {
    const SojournLevelBlocks b = build_sojourn_blocks(p, i);
    add_block(b.diag, i * S, i * S);
    if (i > 0) add_block(b.down, i * S, (i - 1) * S);
    if (i < truncation) add_block(b.up, i * S, (i + 1) * S);
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> t(n, n);
  t.setFromTriplets(trip.begin(), trip.end());
  t.makeCompressed();
  return t;
}

/// Expected time to absorption from every state: y = -T^{-1} e.
inline Vector absorption_times(const ModelParams& params, int truncation) {
  const Eigen::SparseMatrix<double> t = assemble_sojourn_generator(params, truncation);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(t);
  if (lu.info() != Eigen::Success) {
    throw Error(Errc::kSingularSystem, "sojourn generator could not be factorized");
  }
  Vector y = lu.solve(Vector::Constant(t.rows(), -1.0));
  if (lu.info() != Eigen::Success) throw Error(Errc::kSingularSystem, "sojourn solve failed");
  return y;
}

namespace detail {

inline double weighted(const InitialVector& theta, const Vector& y) {
  const Eigen::Index n = std::min<Eigen::Index>(theta.weights.size(), y.size());
  return theta.weights.head(n).dot(y.head(n));
}

template <class MeanAt>
PhResult adaptive_mean(const InitialVector& theta, const SojournOptions& opt, SojournMethod method,
                       MeanAt&& mean_at) {
  int n = opt.initial_level > 0 ? opt.initial_level : std::max(theta.top_level(), 20);
  n = std::max(n, std::max(theta.top_level(), 1));
  double prev = -1.0;
  while (true) {
    const double mean = mean_at(n);
    if (!std::isfinite(mean) || mean <= 0.0) {
      throw Error(Errc::kDivergentMean, "mean sojourn time is not finite and positive");
    }
    const bool done = !opt.adaptive || (prev > 0.0 && std::abs(mean - prev) <= opt.rel_tol * mean);
    if (done) return {mean, {}, n, method};
    prev = mean;
    if (n > opt.max_level / 2) break;
    n *= 2;
  }
  throw Error(Errc::kNoConvergence,
              "mean sojourn time did not converge below level " + std::to_string(opt.max_level));
}

inline void check_theta(const ModelParams& p, const InitialVector& theta) {
  if (theta.capacity != p.capacity) {
    throw Error(Errc::kInvalidArgument, "initial vector built for a different capacity");
  }
}

}  // namespace detail

/// E[W_A] = -theta T^{-1} e by a sparse direct solve, doubling the level cap
/// until the relative change drops below rel_tol.
inline PhResult mean_sojourn_linear(const ModelParams& params, const InitialVector& theta,
                                    const SojournOptions& opt = {}) {
  const ModelParams p = validate(params);
  detail::check_theta(p, theta);
  return detail::adaptive_mean(theta, opt, SojournMethod::kLinearSolve, [&](int n) {
    return detail::weighted(theta, absorption_times(p, n));
  });
}

/// R/U/G measures of the sojourn chain with the product families
///   X_k^(l) = R_l R_{l+1} ... R_{l+k-1},   Y_k^(l) = G_l G_{l-1} ... G_{l-k+1}
/// and the blocks V_{m,n} of T^{-1} = (I - G_L)^{-1} U_D^{-1} (I - R_U)^{-1}.
class SojournRg {
 public:
  SojournRg(const ModelParams& params, int truncation)
      : params_(validate(params)),
        factors_(ul_factorize([this](int i) { return build_sojourn_blocks(params_, i); }, truncation)) {
    lu_.reserve(truncation + 1);
    for (int i = 0; i <= truncation; ++i) lu_.push_back(detail::checked_lu(factors_.u[i], i));
  }

  int truncation() const { return factors_.truncation; }
  int width() const { return 2 * params_.capacity; }
  const RgFactors& factors() const { return factors_; }
  Matrix u_inverse(int i) const { return lu_[i].inverse(); }

  Matrix x_product(int k, int l) const {
    Matrix out = Matrix::Identity(width(), width());
    for (int t = l; t < l + k; ++t) out = out * factors_.r[t];
    return out;
  }

  Matrix y_product(int k, int l) const {
    Matrix out = Matrix::Identity(width(), width());
    for (int t = l; t > l - k; --t) out = out * factors_.g[t];
    return out;
  }

  /// V_{m,n} = sum_{i=0}^{min(m,n)} Y_{m-i}^(m) U_i^{-1} X_{n-i}^(i)
  Matrix v_block(int m, int n) const {
    Matrix v = Matrix::Zero(width(), width());
    for (int i = 0; i <= std::min(m, n); ++i) {
      v += y_product(m - i, m) * lu_[i].solve(x_product(n - i, i));
    }
    return v;
  }

  /// -theta (I - G_L)^{-1} U_D^{-1} (I - R_U)^{-1} e by one backward and one
  /// forward block sweep.
  double mean_by_sweep(const InitialVector& theta) const {
    const int N = truncation();
    std::vector<Vector> x(N + 1);
    x[N] = Vector::Ones(width());
    for (int k = N - 1; k >= 0; --k) x[k] = Vector::Ones(width()) + factors_.r[k] * x[k + 1];
    double mean = 0.0;
    Vector z;
    for (int k = 0; k <= N; ++k) {
      Vector w = lu_[k].solve(x[k]);
      z = k == 0 ? w : Vector(w + factors_.g[k] * z);
      if (k <= theta.top_level()) mean -= theta.weights.segment(k * width(), width()).dot(z);
    }
    return mean;
  }

  /// -sum_m sum_n theta_m V_{m,n} e with the products X e and Y tabulated.
  double mean_by_v_blocks(const InitialVector& theta) const {
    const int N = truncation();
    const int S = width();
    const Vector ones = Vector::Ones(S);
    // xe[i][k] = X_k^(i) e
    std::vector<std::vector<Vector>> xe(N + 1);
    for (int i = N; i >= 0; --i) {
      xe[i].resize(N - i + 1);
      xe[i][0] = ones;
      for (int k = 1; k <= N - i; ++k) xe[i][k] = factors_.r[i] * xe[i + 1][k - 1];
    }
    // h[i][k] = U_i^{-1} X_k^(i) e
    std::vector<std::vector<Vector>> h(N + 1);
    for (int i = 0; i <= N; ++i) {
      h[i].reserve(xe[i].size());
      for (const Vector& v : xe[i]) h[i].push_back(lu_[i].solve(v));
    }
    double mean = 0.0;
    for (int m = 0; m <= std::min(N, theta.top_level()); ++m) {
      const auto th = theta.weights.segment(m * S, S);
      if (th.cwiseAbs().maxCoeff() == 0.0) continue;
      // ys[i] = Y_{m-i}^(m), built downward from Y_0 = I
      std::vector<Matrix> ys(m + 1);
      ys[m] = Matrix::Identity(S, S);
      for (int i = m - 1; i >= 0; --i) ys[i] = ys[i + 1] * factors_.g[i + 1];
      Vector row_sum = Vector::Zero(S);
      for (int n = 0; n <= N; ++n) {
        for (int i = 0; i <= std::min(m, n); ++i) row_sum += ys[i] * h[i][n - i];
      }
      mean -= th.dot(row_sum);
    }
    return mean;
  }

 private:
  ModelParams params_;
  RgFactors factors_;
  std::vector<Eigen::PartialPivLU<Matrix>> lu_;
};

enum class RgEvaluation { kProductSweep, kVBlocks };

inline PhResult mean_sojourn_rg(const ModelParams& params, const InitialVector& theta,
                                const SojournOptions& opt = {},
                                RgEvaluation eval = RgEvaluation::kProductSweep) {
  const ModelParams p = validate(params);
  detail::check_theta(p, theta);
  return detail::adaptive_mean(theta, opt, SojournMethod::kRgProducts, [&](int n) {
    const SojournRg rg(p, n);
    return eval == RgEvaluation::kVBlocks ? rg.mean_by_v_blocks(theta) : rg.mean_by_sweep(theta);
  });
}

/// F(t) = 1 - theta exp(T t) e on a nondecreasing grid, by uniformization.
/// Poisson tails beyond 1e-12 relative mass are dropped per point. Mass of
/// theta above the level cap is dropped and the remainder renormalized.
inline PhResult sojourn_cdf(const ModelParams& params, const InitialVector& theta,
                            std::span<const double> t_grid, int truncation) {
  const ModelParams p = validate(params);
  detail::check_theta(p, theta);
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!(t_grid[i] >= 0.0) || !std::isfinite(t_grid[i]) || (i > 0 && t_grid[i] < t_grid[i - 1])) {
      throw Error(Errc::kGridError, "time grid must be finite, nonnegative and sorted");
    }
  }
  if (truncation < 1) throw Error(Errc::kInvalidArgument, "truncation level must be >= 1");
  const int N = truncation;
  const auto t = assemble_sojourn_generator(p, N);
  double q = 0.0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) q = std::max(q, -t.coeff(i, i));

  Vector th = Vector::Zero(t.rows());
  const Eigen::Index used = std::min<Eigen::Index>(theta.weights.size(), th.size());
  th.head(used) = theta.weights.head(used);
  const double mass = th.sum();

  // survival[n] = theta P^n e with P = I + T/q; stops once negligible.
  const double t_max = t_grid.empty() ? 0.0 : t_grid.back();
  const double qt_max = q * t_max;
  const auto n_cap = static_cast<std::size_t>(qt_max + 12.0 * std::sqrt(qt_max) + 50.0);
  std::vector<double> survival;
  survival.reserve(std::min<std::size_t>(n_cap + 1, 1u << 22));
  Vector w = Vector::Ones(t.rows());
  survival.push_back(th.dot(w));
  while (survival.size() <= n_cap && survival.back() > 1e-17 * mass) {
    const Vector tw = t * w;
    w += tw / q;
    survival.push_back(th.dot(w));
  }
  auto surv = [&](std::size_t n) { return n < survival.size() ? survival[n] : 0.0; };

  PhResult out;
  out.truncation = N;
  out.cdf.reserve(t_grid.size());
  for (const double time : t_grid) {
    if (time == 0.0) {
      out.cdf.emplace_back(0.0, 0.0);
      continue;
    }
    const double rate = q * time;
    const auto mode = static_cast<std::size_t>(std::floor(rate));
    // relative Poisson weights around the mode, normalized by their sum
    double total = 1.0;
    double acc = surv(mode);
    double wgt = 1.0;
    for (std::size_t n = mode; n > 0; --n) {
      wgt *= static_cast<double>(n) / rate;
      if (wgt < 1e-20) break;
      total += wgt;
      acc += wgt * surv(n - 1);
    }
    wgt = 1.0;
    for (std::size_t n = mode + 1;; ++n) {
      wgt *= rate / static_cast<double>(n);
      if (wgt < 1e-20) break;
      total += wgt;
      acc += wgt * surv(n);
    }
    const double f = 1.0 - acc / (total * mass);
    out.cdf.emplace_back(time, std::clamp(f, 0.0, 1.0));
  }
  return out;
}

/// Lowest level above which theta carries at most `eps` of its mass.
inline int effective_top_level(const InitialVector& theta, double eps = 1e-16) {
  const double total = theta.weights.sum();
  double tail = 0.0;
  for (int k = theta.top_level(); k > 0; --k) {
    tail += theta.weights.segment(k * theta.width(), theta.width()).sum();
    if (tail > eps * total) return k;
  }
  return 0;
}

/// Smallest level cap (doubling from theta's effective support, at most
/// `converged.truncation`) whose mean matches the converged one within rel_tol.
/// The uniformization rate grows linearly with the cap, so the CDF is
/// evaluated there.
inline int cdf_truncation(const ModelParams& params, const InitialVector& theta, const PhResult& converged,
                          double rel_tol = 1e-12) {
  int n = std::max(effective_top_level(theta) + 2, 8);
  while (n < converged.truncation) {
    const double m = detail::weighted(theta, absorption_times(params, n));
    if (std::abs(m - converged.mean) <= rel_tol * converged.mean) return n;
    n *= 2;
  }
  return converged.truncation;
}

/// Mean by linear solve at a converged level, then the CDF at the level
/// picked by cdf_truncation().
inline PhResult sojourn_distribution(const ModelParams& params, const InitialVector& theta,
                                     std::span<const double> t_grid, const SojournOptions& opt = {}) {
  const PhResult mean = mean_sojourn_linear(params, theta, opt);
  PhResult out = sojourn_cdf(params, theta, t_grid, cdf_truncation(params, theta, mean));
  out.mean = mean.mean;
  return out;
}

}  // namespace tangle
