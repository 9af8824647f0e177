#include "visma/network.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace visma {

std::complex<double> coupling_admittance(const DeviceCoupling& coupling, double omega) {
  const std::complex<double> z(coupling.resistance, omega * coupling.inductance);
  if (std::abs(z) == 0.0) {
    throw SingularCouplingError("coupling impedance of node " + std::to_string(coupling.node) + " is zero");
  }
  return 1.0 / z;
}

namespace {

void check_connected(const NetworkConfig& config) {
  std::vector<int> parent(static_cast<std::size_t>(config.n_nodes));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[static_cast<std::size_t>(v)] != v) {
      parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
      v = parent[static_cast<std::size_t>(v)];
    }
    return v;
  };
  for (const auto& br : config.branches) parent[static_cast<std::size_t>(find(br.from))] = find(br.to);
  const int root = find(0);
  for (int v = 1; v < config.n_nodes; ++v) {
    if (find(v) != root) throw ConfigError("node " + std::to_string(v) + " is disconnected");
  }
}

}  // namespace

AdmittanceMatrix build_admittance(const NetworkConfig& config) {
  if (config.n_nodes < 2) throw ConfigError("network needs at least two nodes");
  if (!(config.omega_eval > 0.0)) throw ConfigError("omega_eval must be positive");
  if (!config.shunts.empty() && static_cast<int>(config.shunts.size()) != config.n_nodes) {
    throw ConfigError("shunt list must have one entry per node");
  }
  for (const auto& br : config.branches) {
    if (br.from < 0 || br.from >= config.n_nodes || br.to < 0 || br.to >= config.n_nodes) {
      throw ConfigError("branch endpoint out of range");
    }
    if (br.from == br.to) throw ConfigError("branch endpoints must differ");
    if (br.resistance < 0.0) throw ConfigError("branch resistance must be non-negative");
    if (!(br.inductance > 0.0)) throw ConfigError("branch inductance must be positive");
  }
  for (const auto& c : config.couplings) {
    if (c.node < 0 || c.node >= config.n_nodes) throw ConfigError("coupling node out of range");
    if (c.kind == CouplingKind::kStator && !(c.resistance > 0.0 && c.inductance > 0.0)) {
      throw ConfigError("stator coupling needs R_S > 0 and L_S > 0");
    }
    if (c.kind == CouplingKind::kInverter && !(c.inductance > 0.0)) {
      throw ConfigError("inverter coupling needs L_C > 0");
    }
  }
  check_connected(config);

  const int n = config.n_nodes;
  AdmittanceMatrix adm;
  adm.G = Eigen::MatrixXd::Zero(n, n);
  adm.B = Eigen::MatrixXd::Zero(n, n);
  adm.neighbors.assign(static_cast<std::size_t>(n), {});

  const double w = config.omega_eval;
  for (const auto& br : config.branches) {
    std::complex<double> z(br.resistance, w * br.inductance);
    for (const auto& c : config.couplings) {
      if (c.node == br.from || c.node == br.to) z += std::complex<double>(c.resistance, w * c.inductance);
    }
    const std::complex<double> y = 1.0 / z;
    const int i = std::min(br.from, br.to);
    const int k = std::max(br.from, br.to);
    if (adm.G(i, k) != 0.0 || adm.B(i, k) != 0.0) throw ConfigError("parallel branches are not supported");
    adm.G(i, k) = adm.G(k, i) = y.real();
    adm.B(i, k) = adm.B(k, i) = y.imag();
    adm.edges.push_back({i, k, y.real(), y.imag()});
    adm.neighbors[static_cast<std::size_t>(i)].push_back(k);
    adm.neighbors[static_cast<std::size_t>(k)].push_back(i);
  }
  for (int i = 0; i < n; ++i) {
    const std::complex<double> shunt = config.shunts.empty() ? 0.0 : config.shunts[static_cast<std::size_t>(i)];
    double g = shunt.real();
    double b = shunt.imag();
    for (int k : adm.neighbors[static_cast<std::size_t>(i)]) {
      g += adm.G(i, k);
      b += adm.B(i, k);
    }
    adm.G(i, i) = g;
    adm.B(i, i) = b;
  }
  return adm;
}

std::complex<double> grid_voltage(double V, double dtheta, std::complex<double> S, std::complex<double> Y_coupl) {
  if (Y_coupl == 0.0) throw SingularCouplingError("coupling admittance is zero");
  const auto v = grid_voltage<double>(V, dtheta, S.real(), S.imag(), Y_coupl);
  return {v.re, v.im};
}

DroopCoefficients droop_coefficients(double S_rated) {
  if (!(S_rated > 0.0)) throw DomainError("device rating must be positive");
  return {0.4 * std::numbers::pi / S_rated, 23.0 / S_rated};
}

}  // namespace visma
