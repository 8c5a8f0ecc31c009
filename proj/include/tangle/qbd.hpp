#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "tangle/error.hpp"
#include "tangle/model.hpp"

namespace tangle {

template <class B>
concept TridiagonalLevel = requires(const B& b) {
  { b.down } -> std::convertible_to<const Matrix&>;
  { b.diag } -> std::convertible_to<const Matrix&>;
  { b.up } -> std::convertible_to<const Matrix&>;
};

/// R/U/G measures of a level-truncated block-tridiagonal generator.
///   U_k = A_{k,k} + A_{k,k+1} (-U_{k+1}^{-1}) A_{k+1,k}
///   R_k = A_{k,k+1} (-U_{k+1}^{-1})
///   G_k = (-U_k^{-1}) A_{k,k-1}
/// seeded with U_N = A_{N,N} (equivalently R_N = 0).
struct RgFactors {
  int truncation = 0;
  std::vector<Matrix> u;  // U_0 .. U_N
  std::vector<Matrix> r;  // R_0 .. R_{N-1}
  std::vector<Matrix> g;  // g[k] = G_k for k = 1 .. N; g[0] is empty
};

namespace detail {

inline Eigen::PartialPivLU<Matrix> checked_lu(const Matrix& m, int level) {
  Eigen::PartialPivLU<Matrix> lu(m);
  const double rc = lu.rcond();
  if (!(rc >= std::numeric_limits<double>::epsilon())) {
    throw Error(Errc::kSingularBlock, "U_" + std::to_string(level) +
                                          " is numerically singular (rcond " +
                                          std::to_string(rc) + ")");
  }
  return lu;
}

}  // namespace detail

/// Backward UL-type RG recursion for levels 0..N. `blocks(k)` returns the
/// level-k blocks. U_0 is not inverted: it is singular for a recurrent chain.
template <class BlockFn>
  requires TridiagonalLevel<std::invoke_result_t<BlockFn, int>>
RgFactors ul_factorize(BlockFn&& blocks, int truncation) {
  if (truncation < 1) throw Error(Errc::kInvalidArgument, "truncation level must be >= 1");
  const int N = truncation;
  RgFactors f;
  f.truncation = N;
  f.u.resize(N + 1);
  f.r.resize(N);
  f.g.resize(N + 1);

  auto upper = blocks(N);
  f.u[N] = upper.diag;
  for (int k = N - 1; k >= 0; --k) {
    auto cur = blocks(k);
    const auto lu = detail::checked_lu(f.u[k + 1], k + 1);
    const Matrix inv = lu.inverse();
    f.r[k].noalias() = -cur.up * inv;
    f.g[k + 1].noalias() = -inv * upper.down;
    f.u[k] = cur.diag;
    f.u[k].noalias() += f.r[k] * upper.down;
    upper = std::move(cur);
  }
  return f;
}

inline RgFactors rg_factorize(const ModelParams& params, int truncation) {
  const ModelParams p = validate(params);
  return ul_factorize([&](int k) { return build_level_blocks(p, k); }, truncation);
}

/// max_k ||A_{k,k+1} + R_k A_{k+1,k+1} + R_k R_{k+1} A_{k+2,k+1}||_max over
/// 0 <= k <= min(k_max, N-2).
template <class BlockFn>
double r_equation_residual(BlockFn&& blocks, const RgFactors& f, int k_max) {
  double worst = 0.0;
  const int last = std::min(k_max, f.truncation - 2);
  for (int k = 0; k <= last; ++k) {
    const auto b0 = blocks(k);
    const auto b1 = blocks(k + 1);
    const auto b2 = blocks(k + 2);
    Matrix res = b0.up + f.r[k] * b1.diag + f.r[k] * f.r[k + 1] * b2.down;
    worst = std::max(worst, res.cwiseAbs().maxCoeff());
  }
  return worst;
}

/// max_k ||A_{k,k+1} G_{k+1} G_k + A_{k,k} G_k + A_{k,k-1}||_max over
/// 1 <= k <= min(k_max, N-1).
template <class BlockFn>
double g_equation_residual(BlockFn&& blocks, const RgFactors& f, int k_max) {
  double worst = 0.0;
  const int last = std::min(k_max, f.truncation - 1);
  for (int k = 1; k <= last; ++k) {
    const auto b = blocks(k);
    Matrix res = b.up * f.g[k + 1] * f.g[k] + b.diag * f.g[k] + b.down;
    worst = std::max(worst, res.cwiseAbs().maxCoeff());
  }
  return worst;
}

/// Max-norm gap between (I - R_U) U_D (I - G_L) and the truncated generator
/// (up-block of level N dropped), evaluated block by block.
template <class BlockFn>
double factorization_residual(BlockFn&& blocks, const RgFactors& f) {
  const int N = f.truncation;
  double worst = 0.0;
  auto track = [&](const Matrix& m) { worst = std::max(worst, m.cwiseAbs().maxCoeff()); };
  for (int k = 0; k <= N; ++k) {
    const auto b = blocks(k);
    if (k < N) {
      track(f.u[k] + f.r[k] * f.u[k + 1] * f.g[k + 1] - b.diag);
      track(-f.r[k] * f.u[k + 1] - b.up);
    } else {
      track(f.u[k] - b.diag);
    }
    if (k >= 1) track(-f.u[k] * f.g[k] - b.down);
  }
  return worst;
}

// --- drift -----------------------------------------------------------------

struct DriftDiagnostics {
  RowVector beta;         // closed form
  RowVector beta_direct;  // null vector of A_k solved directly
  double closed_form_gap = 0.0;
  double residual = 0.0;  // ||beta A_1||_inf
  double down_rate_per_level = 0.0;
  double up_rate = 0.0;
  int minimal_stable_level = 1;

  /// Downward minus upward mean drift on level k.
  double drift_gap(int k) const { return k * down_rate_per_level - up_rate; }
};

/// Stationary vector of the phase process A_k = A_{k,k-1}+A_{k,k}+A_{k,k+1},
/// which does not depend on k.
inline RowVector phase_stationary_closed_form(const ModelParams& p) {
  const int M = p.capacity;
  RowVector beta(M);
  const double ratio = p.alpha / p.mu;
  double term = 1.0;
  beta(0) = 1.0;
  for (int s = 2; s <= M; ++s) {
    term *= ratio / pairs(s);
    beta(s - 1) = term;
  }
  return beta / beta.sum();
}

/// Solves x A = 0, x e = 1 for an irreducible generator-like matrix by
/// replacing the last column with the normalization.
inline RowVector null_vector_normalized(const Matrix& a) {
  Matrix sys = a;
  sys.col(sys.cols() - 1).setOnes();
  Vector rhs = Vector::Zero(sys.rows());
  rhs(rhs.size() - 1) = 1.0;
  Vector x = sys.transpose().partialPivLu().solve(rhs);
  return x.transpose();
}

inline DriftDiagnostics drift_diagnostics(const ModelParams& params) {
  const ModelParams p = validate(params);
  const int M = p.capacity;
  DriftDiagnostics d;
  d.beta = phase_stationary_closed_form(p);

  const LevelBlocks b = build_level_blocks(p, 1);
  const Matrix a1 = b.down + b.diag + b.up;
  d.beta_direct = null_vector_normalized(a1);
  d.closed_form_gap = (d.beta - d.beta_direct).cwiseAbs().maxCoeff();
  d.residual = (d.beta * a1).cwiseAbs().maxCoeff();

  double conn = 0.0;
  for (int j = 2; j <= M; ++j) conn += pairs(j) * d.beta(j - 1);
  d.down_rate_per_level = p.alpha * (1.0 - d.beta(M - 1)) + p.mu * conn;
  d.up_rate = p.lambda;

  int k = std::max(1, static_cast<int>(std::floor(d.up_rate / d.down_rate_per_level)) - 1);
  while (k > 1 && d.drift_gap(k - 1) > 0.0) --k;
  while (!(d.drift_gap(k) > 0.0)) ++k;
  d.minimal_stable_level = k;
  return d;
}

// --- stationary distribution -----------------------------------------------

struct StationaryResult {
  int truncation = 0;
  std::vector<RowVector> pi;        // pi_0 .. pi_N, normalized
  std::vector<RowVector> pi_tilde;  // unnormalized pi~_k (empty for the oracle)
  double c = 1.0;
  double tail_mass = 0.0;

  int capacity() const { return pi.empty() ? 0 : static_cast<int>(pi.front().size()); }
  double level_mass(int k) const { return pi[k].sum(); }
  double total_mass() const {
    double s = 0.0;
    for (const auto& v : pi) s += v.sum();
    return s;
  }
};

struct StationaryOptions {
  double tol = 1e-10;
  int max_level = 1 << 14;
  int initial_level = 0;  // 0 picks max(2 * minimal stable level, 20)
};

namespace detail {

inline double geometric_tail(const std::vector<RowVector>& pi) {
  const std::size_t n = pi.size();
  if (n < 2) return 0.0;
  const double last = pi[n - 1].sum();
  const double prev = pi[n - 2].sum();
  if (last <= 0.0 || prev <= 0.0) return 0.0;
  const double ratio = last / prev;
  if (ratio >= 1.0) return last * static_cast<double>(n);
  return last * ratio / (1.0 - ratio);
}

inline double mean_level(const std::vector<RowVector>& pi) {
  double s = 0.0;
  for (std::size_t k = 1; k < pi.size(); ++k) s += static_cast<double>(k) * pi[k].sum();
  return s;
}

}  // namespace detail

/// Stationary vector at a fixed truncation level:
///   pi~_0 (A_{0,0} + R_0 A_{1,0}) = 0, pi~_0 e = 1,
///   pi~_k = pi~_0 R_0 ... R_{k-1},  pi_k = c pi~_k.
inline StationaryResult stationary_at(const ModelParams& params, int truncation) {
  const ModelParams p = validate(params);
  const RgFactors f = rg_factorize(p, truncation);
  const LevelBlocks b0 = build_level_blocks(p, 0);
  const LevelBlocks b1 = build_level_blocks(p, 1);

  StationaryResult st;
  st.truncation = truncation;
  st.pi_tilde.resize(truncation + 1);
  RowVector x = null_vector_normalized(b0.diag + f.r[0] * b1.down);
  x = x.cwiseMax(0.0);
  x /= x.sum();
  st.pi_tilde[0] = x;
  for (int k = 1; k <= truncation; ++k) st.pi_tilde[k] = st.pi_tilde[k - 1] * f.r[k - 1];

  double total = 0.0;
  for (const auto& v : st.pi_tilde) total += v.sum();
  st.c = 1.0 / total;
  st.pi.reserve(st.pi_tilde.size());
  for (const auto& v : st.pi_tilde) st.pi.push_back(st.c * v);
  st.tail_mass = detail::geometric_tail(st.pi);
  return st;
}

/// Adaptive truncation: doubles N until the level-N mass and the change in
/// the mean level both fall below `tol`.
inline StationaryResult stationary(const ModelParams& params, const StationaryOptions& opt = {}) {
  const ModelParams p = validate(params);
  if (!(opt.tol > 0.0 && opt.tol < 1.0)) {
    throw Error(Errc::kInvalidArgument, "tail tolerance must lie in (0, 1)");
  }
  int n = opt.initial_level;
  if (n <= 0) n = std::max(2 * drift_diagnostics(p).minimal_stable_level, 20);

  double prev_mean = -1.0;
  while (n <= opt.max_level) {
    StationaryResult st = stationary_at(p, n);
    const double top = st.pi.back().sum() / st.total_mass();
    const double mean = detail::mean_level(st.pi);
    const bool stable_mean =
        prev_mean >= 0.0 && std::abs(mean - prev_mean) <= opt.tol * std::max(mean, 1e-300);
    if (top < opt.tol && stable_mean) return st;
    prev_mean = mean;
    if (n > opt.max_level / 2) break;
    n *= 2;
  }
  throw Error(Errc::kNoConvergence,
              "stationary distribution did not converge below level " + std::to_string(opt.max_level));
}

/// Brute-force oracle: the generator truncated at level L with the level-L
/// arrival mass folded onto the diagonal, solved directly with x e = 1.
inline StationaryResult direct_solve_oracle(const ModelParams& params, int level_cap) {
  const ModelParams p = validate(params);
  const int M = p.capacity;
  if (level_cap < 1) throw Error(Errc::kInvalidArgument, "level cap must be >= 1");
  if (static_cast<long long>(level_cap + 1) * M > 200000) {
    throw Error(Errc::kInvalidArgument, "direct solve limited to 200000 states");
  }
  const int n = (level_cap + 1) * M;
  const int last = n - 1;

  // Assemble Q^T with its last row replaced by ones.
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 4);
  auto put = [&](int row, int col, double v) {
    if (v == 0.0 || col == last) return;  // col of Q == row of Q^T
    trip.emplace_back(col, row, v);
  };
  for (int k = 0; k <= level_cap; ++k) {
    const LevelBlocks b = build_level_blocks(p, k);
    for (int i = 0; i < M; ++i) {
      const int row = k * M + i;
      double diag = b.diag(i, i);
      if (k == level_cap) diag += b.up(i, i);
      put(row, row, diag);
      if (k < level_cap) put(row, row + M, b.up(i, i));
      if (k > 0) {
        for (int j = 0; j < M; ++j) put(row, (k - 1) * M + j, b.down(i, j));
      }
    }
  }
  for (int col = 0; col < n; ++col) trip.emplace_back(last, col, 1.0);

  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) {
    throw Error(Errc::kSingularSystem, "truncated generator could not be factorized");
  }
  Vector rhs = Vector::Zero(n);
  rhs(last) = 1.0;
  const Vector x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) {
    throw Error(Errc::kSingularSystem, "truncated generator solve failed");
  }

  StationaryResult st;
  st.truncation = level_cap;
  st.pi.reserve(level_cap + 1);
  double total = 0.0;
  for (int k = 0; k <= level_cap; ++k) {
    RowVector v = x.segment(k * M, M).transpose().cwiseMax(0.0);
    total += v.sum();
    st.pi.push_back(std::move(v));
  }
  for (auto& v : st.pi) v /= total;
  st.c = 1.0;
  st.tail_mass = 0.0;
  return st;
}

}  // namespace tangle
