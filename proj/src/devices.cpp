#include "visma/devices.hpp"

#include <string>

namespace visma {

MicrogridModel::MicrogridModel(const NetworkConfig& network, VismaParams visma, std::vector<InverterParams> inverters)
    : adm_(build_admittance(network)), visma_(visma), inverters_(std::move(inverters)) {
  layout_.n_inverters = static_cast<int>(inverters_.size());
  if (layout_.n_inverters < 1) throw ConfigError("at least one regular inverter is required");
  if (network.n_nodes != layout_.n_nodes()) {
    throw ConfigError("network must have " + std::to_string(layout_.n_nodes()) +
                      " nodes (VISMA, inverters, load bus)");
  }
  y_coupl_.resize(static_cast<std::size_t>(layout_.n_inverters + 1));
  std::vector<bool> seen(y_coupl_.size(), false);
  for (const auto& c : network.couplings) {
    if (c.node < 0 || c.node > layout_.n_inverters) throw ConfigError("coupling attached to a non-device node");
    const auto expected = c.node == 0 ? CouplingKind::kStator : CouplingKind::kInverter;
    if (c.kind != expected) throw ConfigError("node " + std::to_string(c.node) + " has the wrong coupling kind");
    y_coupl_[static_cast<std::size_t>(c.node)] = coupling_admittance(c, network.omega_eval);
    seen[static_cast<std::size_t>(c.node)] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw ConfigError("device node " + std::to_string(i) + " has no coupling element");
  }
  power_base_ = visma_.S_rated;
  for (const auto& inv : inverters_) power_base_ += inv.S_rated;
  if (!(power_base_ > 0.0)) throw ConfigError("device ratings must be positive");
}

DerivativeEvaluator::DerivativeEvaluator(const MicrogridModel& model, LoadBusState guess)
    : model_(&model), load_(guess) {
  const int nodes = model.layout().n_nodes();
  snap_.V.resize(nodes);
  snap_.dtheta.resize(nodes);
  snap_.P.resize(nodes);
  snap_.Q.resize(nodes);
  snap_.V_grid.resize(model.layout().n_inverters + 1);
}

void DerivativeEvaluator::solve_network(const Eigen::VectorXd& y) {
  const auto& layout = model_->layout();
  model_->node_vectors(y, load_.V, load_.dtheta, snap_.V, snap_.dtheta);
  load_ = solve_load_bus(model_->admittance(), snap_.V, snap_.dtheta, layout.load_node(), P_load_, Q_load_, load_);
  snap_.V(layout.load_node()) = load_.V;
  snap_.dtheta(layout.load_node()) = load_.dtheta;
  power_injections(model_->admittance(), snap_.V, snap_.dtheta, snap_.P, snap_.Q);
}

void DerivativeEvaluator::operator()(const Eigen::VectorXd& y, Eigen::VectorXd& dydt) {
  solve_network(y);
  if (dydt.size() != y.size()) dydt.resize(y.size());
  model_->device_derivatives(y, snap_.V, snap_.dtheta, snap_.P, snap_.Q, dydt);
}

const NetworkSnapshot& DerivativeEvaluator::observe(const Eigen::VectorXd& y) {
  solve_network(y);
  for (int i = 0; i < snap_.V_grid.size(); ++i) {
    snap_.V_grid(i) =
        grid_voltage<double>(snap_.V(i), snap_.dtheta(i), snap_.P(i), snap_.Q(i), model_->device_coupling(i)).abs();
  }
  return snap_;
}

Eigen::VectorXd assemble_derivative(const MicrogridModel& model, const SystemState& state, double P_load,
                                    double Q_load) {
  DerivativeEvaluator eval(model, state.load);
  eval.set_load(P_load, Q_load);
  Eigen::VectorXd dydt(state.diff.size());
  eval(state.diff, dydt);
  return dydt;
}

}  // namespace visma
