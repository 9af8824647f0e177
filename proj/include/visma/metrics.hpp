// Linearised machine model, tuning constraints, transient peak extraction,
// the cost functional and the VISMA energy diagnostic.
#pragma once

#include <compare>
#include <limits>
#include <optional>

#include "visma/devices.hpp"
#include "visma/trajectory.hpp"

namespace visma {

// Second-order linearisation of the machine model around w = w_nom, d = -w_nom:
//   G(s) = -k_P (T_d s + 1) / (s^2 / Omega^2 + D s / (2 Omega) + 1).
struct LinearizedQuantities {
  double c = 0.0;      // 1 / (k_P1 w_nom)
  double D = 0.0;      // > 1 for positive tunings
  double Omega = 0.0;  // rad/s
  double s_pole1 = 0.0;
  double s_pole2 = 0.0;
  double tau1 = 0.0;  // s, fast mode
  double tau2 = 0.0;  // s, slow mode
};

LinearizedQuantities linearized_quantities(const VismaTuning& tuning, double k_P1, double omega_nom = kOmegaNom);

enum class ConstraintViolation { kNone, kNonPositive, kTimeConstant, kIntegralGain };

const char* to_string(ConstraintViolation v);

struct ConstraintCheck {
  ConstraintViolation violation = ConstraintViolation::kNone;
  double tau1 = 0.0;
  double K_I_bound = 0.0;  // J w_nom Omega (D - sqrt(D^2 - 1)) / 3

  bool accepted() const { return violation == ConstraintViolation::kNone; }
};

// The machine must not be faster than the slowest regular inverter
// (max T <= tau1) and the integral action must stay slower than the droop
// transient (K_I <= J w_nom / (3 tau2)).
ConstraintCheck check_constraints(const VismaTuning& tuning, double maxT_regular, double k_P1,
                                  double omega_nom = kOmegaNom);

struct CostWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double delta_f = 0.05;  // Hz
  double delta_V = 1e40;  // V
};

// Cost value or the rejection marker. Rejected energies order above every
// finite value and carry no number.
class Energy {
 public:
  Energy() = default;
  static Energy finite(double value) { return Energy(value); }
  static Energy rejected() { return Energy(); }

  bool is_rejected() const { return !value_.has_value(); }
  double value() const { return value_.value(); }

  friend bool operator==(const Energy& a, const Energy& b) { return a.value_ == b.value_; }
  friend std::partial_ordering operator<=>(const Energy& a, const Energy& b) {
    if (a.is_rejected() || b.is_rejected()) {
      if (a.is_rejected() && b.is_rejected()) return std::partial_ordering::equivalent;
      return a.is_rejected() ? std::partial_ordering::greater : std::partial_ordering::less;
    }
    return *a.value_ <=> *b.value_;
  }

 private:
  explicit Energy(double v) : value_(v) {}
  std::optional<double> value_;
};

// Split of a finite cost into its three terms (last three table columns).
struct CostBreakdown {
  double t_final = 0.0;
  double inertia = 0.0;  // J + k_d
  double sigma = 0.0;    // delta_f/delta_f_ref + delta_V/delta_V_ref
  double inertia_term = 0.0;
  double sigma_term = 0.0;
};

CostBreakdown cost_breakdown(const TransientMetrics& metrics, const CostWeights& weights, const VismaTuning& tuning);

Energy cost(const TransientMetrics& metrics, const CostWeights& weights, const VismaTuning& tuning);

struct PeakDeviations {
  double delta_f = 0.0;  // Hz, over device frequencies
  double delta_V = 0.0;  // V, over device grid-side voltages and the load bus
};

PeakDeviations peak_deviations(const Trajectory& traj, double t0);

// Energy exchanged by the machine between t1 and t2 with the mechanical
// torque removed: -(J + k_d)(w(t2)^2 - w(t1)^2)/2 + T_d * int w dM_d, where
// M_d = (k_d / T_d)(d + w). Trapezoidal quadrature over the samples.
double visma_energy(const Trajectory& traj, const VismaTuning& tuning, double t1, double t2);

}  // namespace visma
