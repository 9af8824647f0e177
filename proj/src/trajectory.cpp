#include "visma/trajectory.hpp"

#include <fmt/format.h>
#include <ostream>

namespace visma {

double Trajectory::frequency(std::size_t sample, int device) const {
  const auto& y = state[sample];
  const double w = device == 0 ? y(StateLayout::kOmega1) : y(StateLayout::omega(device - 1));
  return w / (2.0 * std::numbers::pi);
}

double Trajectory::voltage(std::size_t sample, int device) const {
  const auto& y = state[sample];
  return device == 0 ? y(StateLayout::kV1) : y(StateLayout::voltage(device - 1));
}

void Trajectory::push(double time, const Eigen::VectorXd& y, const NetworkSnapshot& snap) {
  t.push_back(time);
  state.push_back(y);
  V_grid.push_back(snap.V_grid);
  P.push_back(snap.P);
  Q.push_back(snap.Q);
  V_load.push_back(snap.V(layout.load_node()));
}

std::string trajectory_csv_header(int n_devices) {
  std::string h = "t";
  for (const char* prefix : {"f", "V", "Vgrid"}) {
    for (int i = 1; i <= n_devices; ++i) h += fmt::format(",{}{}", prefix, i);
  }
  h += ",Vload";
  for (int i = 1; i <= n_devices; ++i) h += fmt::format(",P{}", i);
  h += ",x,d";
  return h;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const int m = traj.n_devices();
  out << trajectory_csv_header(m) << '\n';
  for (std::size_t s = 0; s < traj.size(); ++s) {
    std::string row = fmt::format("{:.17g}", traj.t[s]);
    for (int i = 0; i < m; ++i) row += fmt::format(",{:.17g}", traj.frequency(s, i));
    for (int i = 0; i < m; ++i) row += fmt::format(",{:.17g}", traj.voltage(s, i));
    for (int i = 0; i < m; ++i) row += fmt::format(",{:.17g}", traj.V_grid[s](i));
    row += fmt::format(",{:.17g}", traj.V_load[s]);
    for (int i = 0; i < m; ++i) row += fmt::format(",{:.17g}", traj.P[s](i));
    row += fmt::format(",{:.17g},{:.17g}", traj.state[s](StateLayout::kSecondary),
                       traj.state[s](StateLayout::kDamping));
    out << row << '\n';
  }
}

const char* to_string(RunStatus status) {
  switch (status) {
    case RunStatus::kOk: return "OK";
    case RunStatus::kBandViolation: return "VIOLATED";
    case RunStatus::kTimeout: return "TIMEOUT";
    case RunStatus::kConstraintViolation: return "CONSTRAINT";
    case RunStatus::kNoSteadyState: return "NO_STEADY_STATE";
    case RunStatus::kSimulationFailure: return "SIMULATION_FAILURE";
  }
  return "UNKNOWN";
}

}  // namespace visma
