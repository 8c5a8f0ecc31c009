#pragma once

// Tip dynamics of a DAG ledger as two block-tridiagonal Markov chains.
//
// Main chain: level k = number of internal tips, phase m = number of
// boundary tips (1 <= m <= M). Sojourn chain: the same dynamics seen by one
// tagged arriving transaction, with an absorbing state reached when the
// tagged tip (by then a boundary tip) is approved.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tangle/error.hpp"

namespace tangle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct ModelParams {
  double lambda = 0.0;  // transaction arrival rate
  double mu = 0.0;      // connection rate per (internal tip, boundary pair)
  double alpha = 0.0;   // impatience rate per internal tip
  int capacity = 0;     // M, maximum number of boundary tips
};

/// Number of unordered boundary-tip pairs among m tips.
inline double pairs(int m) { return 0.5 * m * (m - 1); }

inline ModelParams validate(const ModelParams& p) {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(p.lambda) || !positive(p.mu) || !positive(p.alpha)) {
    throw Error(Errc::kNonPositiveRate,
                "lambda, mu and alpha must be positive finite numbers");
  }
  if (p.capacity < 2) {
    throw Error(Errc::kCapacityTooSmall,
                "capacity M must be at least 2, got " + std::to_string(p.capacity));
  }
  return p;
}

/// Generator blocks of one level of the main chain. Row/column m-1 is the
/// phase with m boundary tips. `down` is empty at level 0.
struct LevelBlocks {
  int level = 0;
  Matrix down;
  Matrix diag;
  Matrix up;

  bool has_down() const { return down.size() != 0; }
};

namespace detail {

/// Rounds the outflow rates of one row to a common power-of-two grid fine
/// enough for their total, and returns minus the total. Every partial sum of
/// the snapped entries is then exact, so the row sums to zero exactly in
/// floating point whatever the summation order. Each rate moves by at most
/// 2^-51 of the row total.
template <class Range>
double snap_row(const Range& rates) {
  double total = 0.0;
  for (double* r : rates) total += *r;
  if (total == 0.0) return 0.0;
  const double quantum = std::ldexp(1.0, std::ilogb(total) - 50);
  double snapped = 0.0;
  for (double* r : rates) {
    *r = std::nearbyint(*r / quantum) * quantum;
    snapped += *r;
  }
  return -snapped;
}

}  // namespace detail

inline LevelBlocks build_level_blocks(const ModelParams& p, int k) {
  if (k < 0) throw Error(Errc::kIndexOutOfRange, "level must be nonnegative");
  const int M = p.capacity;
  LevelBlocks b;
  b.level = k;
  b.up = p.lambda * Matrix::Identity(M, M);
  b.diag = Matrix::Zero(M, M);
  if (k == 0) {
    b.diag.diagonal().setConstant(-p.lambda);
    return b;
  }
  b.down = Matrix::Zero(M, M);
  std::vector<double*> rates;
  for (int m = 1; m <= M; ++m) {
    const int r = m - 1;
    rates.assign({&b.up(r, r)});
    // impatience: one internal tip turns boundary; disabled at m = M
    if (m < M) {
      b.down(r, r + 1) = k * p.alpha;
      rates.push_back(&b.down(r, r + 1));
    }
    // connection: two boundary tips confirmed, the connector turns boundary
    if (m >= 2) {
      b.down(r, r - 1) = k * pairs(m) * p.mu;
      rates.push_back(&b.down(r, r - 1));
    }
    b.diag(r, r) = detail::snap_row(rates);
  }
  return b;
}

// --- sojourn chain ---------------------------------------------------------

enum class TagRole {
  kInternal,  // state (1,i;j): tagged tip internal, j boundary tips
  kBoundary,  // state (i;1,n): tagged tip boundary, n other boundary tips
};

struct SojournState {
  int level = 0;  // i, untagged internal tips
  TagRole role = TagRole::kInternal;
  int count = 1;  // j (1..M) for kInternal, n (0..M-1) for kBoundary
};

/// Zero-based position of a state inside its level. Levels interleave
/// (1,i;1),(i;1,0);(1,i;2),(i;1,1);...;(1,i;M),(i;1,M-1).
inline int within_level_offset(TagRole role, int count) {
  return role == TagRole::kInternal ? 2 * (count - 1) : 2 * count + 1;
}

/// One-based flat index: 2Mi + 2j - 1 for (1,i;j), 2Mi + 2n + 2 for (i;1,n).
inline std::size_t state_index(const SojournState& s, int capacity) {
  const bool internal = s.role == TagRole::kInternal;
  const int lo = internal ? 1 : 0;
  const int hi = internal ? capacity : capacity - 1;
  if (s.level < 0 || s.count < lo || s.count > hi) {
    throw Error(Errc::kIndexOutOfRange,
                "sojourn state (level " + std::to_string(s.level) + ", count " +
                    std::to_string(s.count) + ") outside the state space");
  }
  return 2 * static_cast<std::size_t>(capacity) * s.level +
         within_level_offset(s.role, s.count) + 1;
}

/// Inverse of state_index.
inline SojournState state_at(std::size_t index, int capacity) {
  if (index == 0) throw Error(Errc::kIndexOutOfRange, "flat indices start at 1");
  const std::size_t width = 2 * static_cast<std::size_t>(capacity);
  const std::size_t z = index - 1;
  const int level = static_cast<int>(z / width);
  const int pos = static_cast<int>(z % width);
  if (pos % 2 == 0) return {level, TagRole::kInternal, pos / 2 + 1};
  return {level, TagRole::kBoundary, (pos - 1) / 2};
}

/// Blocks of level i of the sojourn chain: T_{i,i-1}, T_{i,i}, T_{i,i+1} and
/// the absorption column T_i^Delta, each over 2M interleaved states.
struct SojournLevelBlocks {
  int level = 0;
  Matrix down;
  Matrix diag;
  Matrix up;
  Vector absorb;

  bool has_down() const { return down.size() != 0; }
};

inline SojournLevelBlocks build_sojourn_blocks(const ModelParams& p, int i) {
  if (i < 0) throw Error(Errc::kIndexOutOfRange, "level must be nonnegative");
  const int M = p.capacity;
  const int S = 2 * M;
  const double lam = p.lambda, mu = p.mu, alpha = p.alpha;
  auto tin = [](int j) { return within_level_offset(TagRole::kInternal, j); };
  auto tbd = [](int n) { return within_level_offset(TagRole::kBoundary, n); };

  SojournLevelBlocks b;
  b.level = i;
  b.up = lam * Matrix::Identity(S, S);
  b.diag = Matrix::Zero(S, S);
  b.absorb = Vector::Zero(S);
  if (i > 0) b.down = Matrix::Zero(S, S);

  for (int j = 1; j <= M; ++j) {
    const int r = tin(j);
    // tagged tip turns boundary by impatience, then n = j others
    if (j < M) b.diag(r, tbd(j)) = alpha;
    // tagged tip approves a pair, then n = j - 2 others
    if (j >= 2) b.diag(r, tbd(j - 2)) = pairs(j) * mu;
    if (i > 0) {
      if (j < M) b.down(r, tin(j + 1)) = i * alpha;
      if (j >= 2) b.down(r, tin(j - 1)) = i * pairs(j) * mu;
    }
  }
  for (int n = 0; n <= M - 1; ++n) {
    const int r = tbd(n);
    if (i > 0) {
      if (n + 1 < M) b.down(r, tbd(n + 1)) = i * alpha;
      // pair drawn among the n untagged boundary tips
      if (n >= 2) b.down(r, tbd(n - 1)) = i * pairs(n) * mu;
      // pair containing the tagged tip: absorption
      b.absorb(r) = i * n * mu;
    }
  }
  std::vector<double*> rates;
  for (int r = 0; r < S; ++r) {
    rates.assign({&b.up(r, r)});
    if (b.absorb(r) != 0.0) rates.push_back(&b.absorb(r));
    for (int c = 0; c < S; ++c) {
      if (b.diag(r, c) != 0.0) rates.push_back(&b.diag(r, c));
      if (i > 0 && b.down(r, c) != 0.0) rates.push_back(&b.down(r, c));
    }
    b.diag(r, r) = detail::snap_row(rates);
  }
  return b;
}

}  // namespace tangle
