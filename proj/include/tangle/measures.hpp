#pragma once

#include <cmath>
#include <optional>

#include "tangle/model.hpp"
#include "tangle/qbd.hpp"

namespace tangle {

struct Measures {
  double e_na = 0.0;  // mean number of internal tips
  double e_nb = 0.0;  // mean number of boundary tips
  double th = 0.0;    // network nodes created per unit time
  int trunc_level = 0;
  double tail_mass = 0.0;
};

/// f_A = (1, 2, ..., M)^T
inline Vector boundary_weights(int capacity) {
  return Vector::LinSpaced(capacity, 1.0, static_cast<double>(capacity));
}

/// f = (0, 1, C_3^2, ..., C_M^2)^T: pairs available in each phase.
inline Vector throughput_weights(int capacity) {
  Vector f = Vector::Zero(capacity);
  if (capacity >= 2) f(1) = 1.0;
  for (int m = 3; m <= capacity; ++m) f(m - 1) = pairs(m);
  return f;
}

inline double expected_internal(const StationaryResult& st) {
  double s = 0.0;
  for (std::size_t k = 1; k < st.pi.size(); ++k) s += static_cast<double>(k) * st.pi[k].sum();
  return s;
}

inline double expected_boundary(const StationaryResult& st) {
  const Vector fa = boundary_weights(st.capacity());
  double s = 0.0;
  for (const auto& v : st.pi) s += v.dot(fa);
  return s;
}

/// TH = 2 mu sum_k k pi_k f
inline double throughput(const StationaryResult& st, const ModelParams& params) {
  const Vector f = throughput_weights(st.capacity());
  double s = 0.0;
  for (std::size_t k = 1; k < st.pi.size(); ++k) s += static_cast<double>(k) * st.pi[k].dot(f);
  return 2.0 * params.mu * s;
}

inline Measures compute_measures(const StationaryResult& st, const ModelParams& params) {
  return {expected_internal(st), expected_boundary(st), throughput(st, params), st.truncation,
          st.tail_mass};
}

struct ConservationReport {
  double th = 0.0;
  double lambda = 0.0;
  double relative_gap = 0.0;     // |TH - lambda| / lambda
  double impatience_rate = 0.0;  // sum_{k, m<M} k alpha pi_{k,m}
  double connection_rate = 0.0;  // mu sum_k k pi_k f
  double rate_gap = 0.0;         // |impatience - connection| / connection
  std::optional<double> little_lhs;  // lambda E[W_A]
  double little_rhs = 0.0;           // E[N_A] + E[N_B]
  std::optional<double> little_gap;  // |lhs - rhs| / rhs
};

inline ConservationReport conservation_report(const StationaryResult& st, const ModelParams& params,
                                              std::optional<double> mean_sojourn = std::nullopt) {
  const int M = st.capacity();
  ConservationReport r;
  r.th = throughput(st, params);
  r.lambda = params.lambda;
  r.relative_gap = std::abs(r.th - r.lambda) / r.lambda;
  for (std::size_t k = 1; k < st.pi.size(); ++k) {
    r.impatience_rate += static_cast<double>(k) * params.alpha * st.pi[k].head(M - 1).sum();
  }
  r.connection_rate = 0.5 * r.th;
  r.rate_gap = std::abs(r.impatience_rate - r.connection_rate) / r.connection_rate;
  r.little_rhs = expected_internal(st) + expected_boundary(st);
  if (mean_sojourn) {
    r.little_lhs = params.lambda * *mean_sojourn;
    r.little_gap = std::abs(*r.little_lhs - r.little_rhs) / r.little_rhs;
  }
  return r;
}

}  // namespace tangle
