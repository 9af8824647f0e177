// Sampled simulation output and the per-run transient summary.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "visma/devices.hpp"

namespace visma {

// Fixed-cadence samples of a run. Times are strictly increasing; the sample
// at t_jump carries the pre-step values.
struct Trajectory {
  StateLayout layout;
  double t_jump = 0.0;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> state;   // differential state
  std::vector<Eigen::VectorXd> V_grid;  // per device
  std::vector<Eigen::VectorXd> P;       // per node
  std::vector<Eigen::VectorXd> Q;       // per node
  std::vector<double> V_load;

  std::size_t size() const { return t.size(); }
  int n_devices() const { return layout.n_inverters + 1; }

  // Frequency in Hz and internal voltage of device i (0 = VISMA).
  double frequency(std::size_t sample, int device) const;
  double voltage(std::size_t sample, int device) const;

  void push(double time, const Eigen::VectorXd& y, const NetworkSnapshot& snap);
};

// Columns: t, f1..fm, V1..Vm, Vgrid1..Vgridm, Vload, P1..Pm, x, d.
std::string trajectory_csv_header(int n_devices);
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

enum class RunStatus {
  kOk,
  kBandViolation,
  kTimeout,
  kConstraintViolation,
  kNoSteadyState,
  kSimulationFailure,
};

const char* to_string(RunStatus status);

struct TransientMetrics {
  double t_final = 0.0;       // s
  double delta_f_peak = 0.0;  // Hz
  double delta_V_peak = 0.0;  // V
  bool violated = false;
  bool timed_out = false;
  RunStatus status = RunStatus::kOk;
  std::string detail;

  bool accepted() const { return status == RunStatus::kOk; }
};

}  // namespace visma
