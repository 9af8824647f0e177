// Algebraic constraint at the load node: the network must deliver
// (P_load, Q_load) there, i.e. P_k(V, dtheta) = -P_load, Q_k(V, dtheta) = -Q_load.
#pragma once

#include <Eigen/Dense>

#include "visma/network.hpp"

namespace visma {

struct LoadBusState {
  double V = kVoltageNom;  // V
  double dtheta = 0.0;     // rad, relative to the reference node
};

struct LoadBusOptions {
  double rel_tol = 1e-9;  // residual bound relative to max(1, |P_load|, |Q_load|)
  int max_iterations = 50;
};

// Newton's method on (V_load, dtheta_load) with backtracking, starting from
// `guess`. V and dtheta hold all node values; entries at `load_node` are
// ignored. Throws InstabilityError (devices.hpp) on divergence.
LoadBusState solve_load_bus(const AdmittanceMatrix& adm, const Eigen::Ref<const Eigen::VectorXd>& V,
                            const Eigen::Ref<const Eigen::VectorXd>& dtheta, int load_node, double P_load,
                            double Q_load, LoadBusState guess, const LoadBusOptions& options = {});

}  // namespace visma
