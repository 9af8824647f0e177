// Dynamic device models (droop inverters, virtual synchronous machine with
// secondary frequency control) and the reduced state derivative of the
// whole microgrid with the VISMA node as angle reference.
#pragma once

#include <array>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "visma/load_bus.hpp"
#include "visma/network.hpp"

namespace visma {

// Raised when a trajectory leaves the region where the model is defined
// (non-positive VISMA speed, voltage collapse at the load bus, ...).
class InstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InverterParams {
  double T = 0.5;         // power filter time constant, s
  double k_P = 0.0;       // rad/(s VA)
  double k_Q = 0.0;       // V/VA
  double P_nom = 0.0;     // W
  double Q_nom = 0.0;     // var
  double S_rated = 0.0;   // VA
};

// The four tuned quantities of the machine model.
struct VismaTuning {
  static constexpr int kSize = 4;

  double J = 0.0;    // virtual inertia
  double k_d = 0.0;  // mechanical damping factor
  double T_d = 0.0;  // damping time constant, s
  double K_I = 0.0;  // secondary integral gain

  double& operator[](int i) { return i == 0 ? J : i == 1 ? k_d : i == 2 ? T_d : K_I; }
  double operator[](int i) const { return i == 0 ? J : i == 1 ? k_d : i == 2 ? T_d : K_I; }
  bool positive() const { return J > 0.0 && k_d > 0.0 && T_d > 0.0 && K_I > 0.0; }
  friend bool operator==(const VismaTuning&, const VismaTuning&) = default;
  friend auto operator<=>(const VismaTuning&, const VismaTuning&) = default;
};

struct VismaParams {
  VismaTuning tuning;
  double k_V = 10.0;     // V/V
  double T_inv = 0.01;   // s
  double K_awu = 1.0;    // 1/s
  double k_P = 0.0;      // rad/(s VA)
  double P_nom = 0.0;    // W
  double S_rated = 0.0;  // VA, also the secondary power limit
};

template <typename Scalar>
struct InverterState {
  Scalar dtheta;
  Scalar omega;
  Scalar V;
};

template <typename Scalar>
struct InverterDerivative {
  Scalar ddtheta;
  Scalar domega;
  Scalar dV;
};

template <typename Scalar>
InverterDerivative<Scalar> inverter_rhs(const InverterState<Scalar>& s, const InverterParams& p, const Scalar& P,
                                        const Scalar& Q, const Scalar& omega_1) {
  return {s.omega - omega_1, (-s.omega + kOmegaNom + p.k_P * (p.P_nom - P)) / p.T,
          (-s.V + kVoltageNom + p.k_Q * (p.Q_nom - Q)) / p.T};
}

template <typename Scalar>
struct VismaState {
  Scalar omega;
  Scalar d;
  Scalar x;
  Scalar V;
};

template <typename Scalar>
struct VismaDerivative {
  Scalar domega;
  Scalar dd;
  Scalar dx;
  Scalar dV;
};

template <typename Scalar>
Scalar secondary_power(const Scalar& x, double limit) {
  if (x > limit) return Scalar(limit);
  if (x < -limit) return Scalar(-limit);
  return x;
}

template <typename Scalar>
Scalar injected_power(const VismaState<Scalar>& s, const VismaParams& p) {
  return p.P_nom + (kOmegaNom - s.omega) / p.k_P + secondary_power(s.x, p.S_rated);
}

template <typename Scalar>
VismaDerivative<Scalar> visma_rhs(const VismaState<Scalar>& s, const VismaParams& p, const Scalar& P,
                                  const Scalar& V_grid) {
  if (!(s.omega > 0.0)) throw InstabilityError("VISMA angular speed is not positive");
  const auto& t = p.tuning;
  const Scalar sat = secondary_power(s.x, p.S_rated);
  const Scalar p_inject = p.P_nom + (kOmegaNom - s.omega) / p.k_P + sat;
  const Scalar slip = s.omega + s.d;
  return {(-(t.k_d / t.T_d) * slip + (p_inject - P) / s.omega) / t.J, -slip / t.T_d,
          t.K_I * (kOmegaNom - s.omega) + p.K_awu * (sat - s.x),
          (-s.V + kVoltageNom + p.k_V * (kVoltageNom - V_grid)) / p.T_inv};
}

// Differential state ordering:
//   [w_1, d, x, V_1, dtheta_2, w_2, V_2, dtheta_3, w_3, V_3, ...]
// Network nodes: 0 is the VISMA, 1..m the regular inverters, m+1 the load bus.
struct StateLayout {
  int n_inverters = 2;

  static constexpr int kOmega1 = 0;
  static constexpr int kDamping = 1;
  static constexpr int kSecondary = 2;
  static constexpr int kV1 = 3;

  int size() const { return 4 + 3 * n_inverters; }
  int n_nodes() const { return n_inverters + 2; }
  int load_node() const { return n_inverters + 1; }
  static int dtheta(int j) { return 4 + 3 * j; }
  static int omega(int j) { return 5 + 3 * j; }
  static int voltage(int j) { return 6 + 3 * j; }
};

struct SystemState {
  Eigen::VectorXd diff;
  LoadBusState load;
};

// Quantities derived from one state evaluation.
struct NetworkSnapshot {
  Eigen::VectorXd V;       // per node
  Eigen::VectorXd dtheta;  // per node
  Eigen::VectorXd P;       // per node
  Eigen::VectorXd Q;       // per node
  Eigen::VectorXd V_grid;  // per device
};

class MicrogridModel {
 public:
  MicrogridModel(const NetworkConfig& network, VismaParams visma, std::vector<InverterParams> inverters);

  const StateLayout& layout() const { return layout_; }
  const AdmittanceMatrix& admittance() const { return adm_; }
  const VismaParams& visma() const { return visma_; }
  const std::vector<InverterParams>& inverters() const { return inverters_; }
  std::complex<double> device_coupling(int device) const { return y_coupl_[static_cast<std::size_t>(device)]; }
  double power_base() const { return power_base_; }

  void set_tuning(const VismaTuning& tuning) { visma_.tuning = tuning; }

  // Fills node voltages/angles from the differential state and the load bus.
  template <typename DerivedY, typename DerivedV, typename DerivedA>
  void node_vectors(const Eigen::MatrixBase<DerivedY>& y, const typename DerivedY::Scalar& V_load,
                    const typename DerivedY::Scalar& dtheta_load, Eigen::MatrixBase<DerivedV>& V,
                    Eigen::MatrixBase<DerivedA>& dtheta) const {
    V(0) = y(StateLayout::kV1);
    dtheta(0) = 0.0;
    for (int j = 0; j < layout_.n_inverters; ++j) {
      V(j + 1) = y(StateLayout::voltage(j));
      dtheta(j + 1) = y(StateLayout::dtheta(j));
    }
    V(layout_.load_node()) = V_load;
    dtheta(layout_.load_node()) = dtheta_load;
  }

  // Device derivatives given already computed injections; dydt must be sized.
  template <typename DerivedY, typename DerivedV, typename DerivedA, typename DerivedP, typename DerivedQ,
            typename DerivedD>
  void device_derivatives(const Eigen::MatrixBase<DerivedY>& y, const Eigen::MatrixBase<DerivedV>& V,
                          const Eigen::MatrixBase<DerivedA>& dtheta, const Eigen::MatrixBase<DerivedP>& P,
                          const Eigen::MatrixBase<DerivedQ>& Q, Eigen::MatrixBase<DerivedD>& dydt) const {
    using Scalar = typename DerivedY::Scalar;
    const VismaState<Scalar> vs{y(StateLayout::kOmega1), y(StateLayout::kDamping), y(StateLayout::kSecondary),
                                y(StateLayout::kV1)};
    const Scalar v_grid = grid_voltage<Scalar>(V(0), dtheta(0), P(0), Q(0), y_coupl_[0]).abs();
    const auto dv = visma_rhs(vs, visma_, Scalar(P(0)), v_grid);
    dydt(StateLayout::kOmega1) = dv.domega;
    dydt(StateLayout::kDamping) = dv.dd;
    dydt(StateLayout::kSecondary) = dv.dx;
    dydt(StateLayout::kV1) = dv.dV;
    for (int j = 0; j < layout_.n_inverters; ++j) {
      const InverterState<Scalar> is{y(StateLayout::dtheta(j)), y(StateLayout::omega(j)), y(StateLayout::voltage(j))};
      const auto di = inverter_rhs(is, inverters_[static_cast<std::size_t>(j)], Scalar(P(j + 1)), Scalar(Q(j + 1)),
                                   vs.omega);
      dydt(StateLayout::dtheta(j)) = di.ddtheta;
      dydt(StateLayout::omega(j)) = di.domega;
      dydt(StateLayout::voltage(j)) = di.dV;
    }
  }

  // Steady-state residual over z = [differential state, V_load, dtheta_load].
  // Each row is the corresponding derivative multiplied by its time scale and
  // normalised (rad/s, V/V_nom, W/power_base) so that all rows are O(1).
  template <typename DerivedZ, typename DerivedR>
  void steady_residual(const Eigen::MatrixBase<DerivedZ>& z, double P_load, double Q_load,
                       Eigen::MatrixBase<DerivedR>& r) const {
    using Scalar = typename DerivedZ::Scalar;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const int n = layout_.size();
    const int nodes = layout_.n_nodes();
    Vec V(nodes), th(nodes), P(nodes), Q(nodes), dydt(n);
    const auto y = z.head(n);
    node_vectors(y, z(n), z(n + 1), V, th);
    power_injections(adm_, V, th, P, Q);
    device_derivatives(y, V, th, P, Q, dydt);

    const auto& t = visma_.tuning;
    r(StateLayout::kOmega1) = dydt(StateLayout::kOmega1) * t.J * y(StateLayout::kOmega1) / power_base_;
    r(StateLayout::kDamping) = dydt(StateLayout::kDamping) * t.T_d;
    r(StateLayout::kSecondary) = dydt(StateLayout::kSecondary) / t.K_I;
    r(StateLayout::kV1) = dydt(StateLayout::kV1) * visma_.T_inv / kVoltageNom;
    for (int j = 0; j < layout_.n_inverters; ++j) {
      const double T = inverters_[static_cast<std::size_t>(j)].T;
      r(StateLayout::dtheta(j)) = dydt(StateLayout::dtheta(j));
      r(StateLayout::omega(j)) = dydt(StateLayout::omega(j)) * T;
      r(StateLayout::voltage(j)) = dydt(StateLayout::voltage(j)) * T / kVoltageNom;
    }
    const int load = layout_.load_node();
    r(n) = (P(load) + P_load) / power_base_;
    r(n + 1) = (Q(load) + Q_load) / power_base_;
  }

 private:
  StateLayout layout_;
  AdmittanceMatrix adm_;
  VismaParams visma_;
  std::vector<InverterParams> inverters_;
  std::vector<std::complex<double>> y_coupl_;
  double power_base_ = 1.0;
};

// Hot-path evaluator: owns the workspace and the warm start for the load-bus
// solve. One instance per simulation.
class DerivativeEvaluator {
 public:
  explicit DerivativeEvaluator(const MicrogridModel& model, LoadBusState guess = {kVoltageNom, 0.0});

  void set_load(double P_load, double Q_load) {
    P_load_ = P_load;
    Q_load_ = Q_load;
  }
  double P_load() const { return P_load_; }
  const LoadBusState& load_bus() const { return load_; }
  void set_load_bus(const LoadBusState& s) { load_ = s; }

  void operator()(const Eigen::VectorXd& y, Eigen::VectorXd& dydt);

  // Algebraic quantities at y (solves the load bus, no derivative).
  const NetworkSnapshot& observe(const Eigen::VectorXd& y);
  const NetworkSnapshot& last() const { return snap_; }

 private:
  void solve_network(const Eigen::VectorXd& y);

  const MicrogridModel* model_;
  LoadBusState load_;
  double P_load_ = 0.0;
  double Q_load_ = 0.0;
  NetworkSnapshot snap_;
};

// One-shot derivative at a state. The state's load-bus values serve as the
// starting guess of the algebraic solve.
Eigen::VectorXd assemble_derivative(const MicrogridModel& model, const SystemState& state, double P_load,
                                    double Q_load);

}  // namespace visma
