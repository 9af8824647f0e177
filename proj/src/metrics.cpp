#include "visma/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace visma {

LinearizedQuantities linearized_quantities(const VismaTuning& tuning, double k_P1, double omega_nom) {
  LinearizedQuantities q;
  q.c = 1.0 / (k_P1 * omega_nom);
  const double jt = tuning.J * tuning.T_d / q.c;
  q.D = ((tuning.k_d + tuning.J) / q.c + tuning.T_d) / (2.0 * std::sqrt(jt));
  q.Omega = 1.0 / std::sqrt(jt);
  const double root = std::sqrt(std::max(0.0, q.D * q.D - 1.0));
  q.s_pole1 = -q.Omega * (q.D + root);
  // D - sqrt(D^2 - 1) == 1 / (D + sqrt(D^2 - 1)); the product form avoids cancellation.
  q.s_pole2 = -q.Omega / (q.D + root);
  q.tau1 = -1.0 / q.s_pole1;
  q.tau2 = -1.0 / q.s_pole2;
  return q;
}

const char* to_string(ConstraintViolation v) {
  switch (v) {
    case ConstraintViolation::kNone: return "none";
    case ConstraintViolation::kNonPositive: return "non-positive parameter";
    case ConstraintViolation::kTimeConstant: return "machine faster than inverters (max T > tau1)";
    case ConstraintViolation::kIntegralGain: return "integral gain above bound";
  }
  return "unknown";
}

ConstraintCheck check_constraints(const VismaTuning& tuning, double maxT_regular, double k_P1, double omega_nom) {
  ConstraintCheck check;
  if (!tuning.positive() || !std::isfinite(tuning.J + tuning.k_d + tuning.T_d + tuning.K_I)) {
    check.violation = ConstraintViolation::kNonPositive;
    return check;
  }
  const auto q = linearized_quantities(tuning, k_P1, omega_nom);
  check.tau1 = q.tau1;
  check.K_I_bound = tuning.J * omega_nom * q.Omega / (q.D + std::sqrt(std::max(0.0, q.D * q.D - 1.0))) / 3.0;
  if (maxT_regular > q.tau1) {
    check.violation = ConstraintViolation::kTimeConstant;
  } else if (tuning.K_I > check.K_I_bound) {
    check.violation = ConstraintViolation::kIntegralGain;
  }
  return check;
}

CostBreakdown cost_breakdown(const TransientMetrics& metrics, const CostWeights& weights, const VismaTuning& tuning) {
  CostBreakdown b;
  b.t_final = metrics.t_final;
  b.inertia = tuning.J + tuning.k_d;
  b.sigma = metrics.delta_f_peak / weights.delta_f + metrics.delta_V_peak / weights.delta_V;
  b.inertia_term = weights.alpha * b.inertia;
  b.sigma_term = b.sigma / weights.beta;
  return b;
}

Energy cost(const TransientMetrics& metrics, const CostWeights& weights, const VismaTuning& tuning) {
  if (metrics.violated || metrics.timed_out || !metrics.accepted()) return Energy::rejected();
  const auto b = cost_breakdown(metrics, weights, tuning);
  return Energy::finite(b.t_final + b.inertia_term + b.sigma_term);
}

PeakDeviations peak_deviations(const Trajectory& traj, double t0) {
  PeakDeviations peaks;
  if (traj.size() == 0) return peaks;
  // Reference: last sample at or before t0 (pre-step values).
  std::size_t ref = 0;
  while (ref + 1 < traj.size() && traj.t[ref + 1] <= t0) ++ref;
  const int m = traj.n_devices();
  for (std::size_t s = ref + 1; s < traj.size(); ++s) {
    for (int i = 0; i < m; ++i) {
      peaks.delta_f = std::max(peaks.delta_f, std::abs(traj.frequency(s, i) - traj.frequency(ref, i)));
      peaks.delta_V = std::max(peaks.delta_V, std::abs(traj.V_grid[s](i) - traj.V_grid[ref](i)));
    }
    peaks.delta_V = std::max(peaks.delta_V, std::abs(traj.V_load[s] - traj.V_load[ref]));
  }
  return peaks;
}

double visma_energy(const Trajectory& traj, const VismaTuning& tuning, double t1, double t2) {
  struct Point {
    double w;
    double m_d;
  };
  const double gain = tuning.k_d / tuning.T_d;
  auto at = [&](std::size_t s) {
    const auto& y = traj.state[s];
    return Point{y(StateLayout::kOmega1), gain * (y(StateLayout::kDamping) + y(StateLayout::kOmega1))};
  };
  auto interpolate = [&](double t) {
    auto it = std::lower_bound(traj.t.begin(), traj.t.end(), t);
    if (it == traj.t.begin()) return at(0);
    if (it == traj.t.end()) return at(traj.size() - 1);
    const auto hi = static_cast<std::size_t>(it - traj.t.begin());
    const auto lo = hi - 1;
    const double a = (t - traj.t[lo]) / (traj.t[hi] - traj.t[lo]);
    const Point p = at(lo);
    const Point q = at(hi);
    return Point{p.w + a * (q.w - p.w), p.m_d + a * (q.m_d - p.m_d)};
  };

  std::vector<Point> pts{interpolate(t1)};
  for (std::size_t s = 0; s < traj.size(); ++s) {
    if (traj.t[s] > t1 && traj.t[s] < t2) pts.push_back(at(s));
  }
  pts.push_back(interpolate(t2));

  double integral = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    integral += 0.5 * (pts[k].w + pts[k - 1].w) * (pts[k].m_d - pts[k - 1].m_d);
  }
  const double w1 = pts.front().w;
  const double w2 = pts.back().w;
  return -0.5 * (tuning.J + tuning.k_d) * (w2 * w2 - w1 * w1) + tuning.T_d * integral;
}

}  // namespace visma
