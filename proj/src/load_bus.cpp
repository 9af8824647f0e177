#include "visma/load_bus.hpp"

#include <cmath>

#include "visma/devices.hpp"

namespace visma {

namespace {

struct LoadBusEval {
  double rP;
  double rQ;
  double dP_dV;
  double dP_dth;
  double dQ_dV;
  double dQ_dth;
};

LoadBusEval evaluate(const AdmittanceMatrix& adm, const Eigen::Ref<const Eigen::VectorXd>& V,
                     const Eigen::Ref<const Eigen::VectorXd>& dtheta, int k, double v, double th, double P_load,
                     double Q_load) {
  double sum_pc = 0.0;  // sum V_m (G cos + B sin)
  double sum_qs = 0.0;  // sum V_m (G sin - B cos)
  for (int m : adm.neighbors[static_cast<std::size_t>(k)]) {
    const double angle = th - dtheta(m);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double g = adm.G(k, m);
    const double b = adm.B(k, m);
    sum_pc += V(m) * (g * c + b * s);
    sum_qs += V(m) * (g * s - b * c);
  }
  const double gkk = adm.G(k, k);
  const double bkk = adm.B(k, k);
  LoadBusEval e{};
  e.rP = 3.0 * (gkk * v * v - v * sum_pc) + P_load;
  e.rQ = 3.0 * (-bkk * v * v - v * sum_qs) + Q_load;
  // d/dth of (G cos + B sin) is -(G sin - B cos); d/dth of (G sin - B cos) is (G cos + B sin).
  e.dP_dV = 3.0 * (2.0 * gkk * v - sum_pc);
  e.dP_dth = 3.0 * v * sum_qs;
  e.dQ_dV = 3.0 * (-2.0 * bkk * v - sum_qs);
  e.dQ_dth = -3.0 * v * sum_pc;
  return e;
}

}  // namespace

LoadBusState solve_load_bus(const AdmittanceMatrix& adm, const Eigen::Ref<const Eigen::VectorXd>& V,
                            const Eigen::Ref<const Eigen::VectorXd>& dtheta, int load_node, double P_load,
                            double Q_load, LoadBusState guess, const LoadBusOptions& options) {
  const double scale = std::max({1.0, std::abs(P_load), std::abs(Q_load)});
  const double tol = options.rel_tol * scale;
  double v = guess.V > 0.0 ? guess.V : kVoltageNom;
  double th = guess.dtheta;

  LoadBusEval e = evaluate(adm, V, dtheta, load_node, v, th, P_load, Q_load);
  double norm = std::hypot(e.rP, e.rQ);
  // At least one Newton step is taken so the result varies smoothly with the
  // device states even when the warm start is already within tolerance.
  for (int it = 0; it < options.max_iterations; ++it) {
    if (it > 0 && std::abs(e.rP) < tol && std::abs(e.rQ) < tol) return {v, th};
    const double det = e.dP_dV * e.dQ_dth - e.dP_dth * e.dQ_dV;
    if (!std::isfinite(det) || det == 0.0) break;
    const double dv = -(e.rP * e.dQ_dth - e.dP_dth * e.rQ) / det;
    const double dth = -(e.dP_dV * e.rQ - e.rP * e.dQ_dV) / det;

    double lambda = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 30; ++ls) {
      const double v_try = v + lambda * dv;
      const double th_try = th + lambda * dth;
      if (v_try > 0.0) {
        const LoadBusEval trial = evaluate(adm, V, dtheta, load_node, v_try, th_try, P_load, Q_load);
        const double trial_norm = std::hypot(trial.rP, trial.rQ);
        if (trial_norm <= (1.0 - 1e-4 * lambda) * norm || trial_norm < tol) {
          v = v_try;
          th = th_try;
          e = trial;
          norm = trial_norm;
          improved = true;
          break;
        }
      }
      lambda *= 0.5;
    }
    if (!improved) {
      if (std::abs(e.rP) < tol && std::abs(e.rQ) < tol) return {v, th};
      break;
    }
  }
  if (std::abs(e.rP) < tol && std::abs(e.rQ) < tol) return {v, th};
  throw InstabilityError("load bus voltage solve failed (voltage collapse)");
}

}  // namespace visma
