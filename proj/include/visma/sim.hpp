// Steady states, time integration of the reduced model across a load step,
// transient monitoring and single-run evaluation of a tuning.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>

#include "visma/devices.hpp"
#include "visma/metrics.hpp"
#include "visma/rkf45.hpp"
#include "visma/scenario.hpp"
#include "visma/trajectory.hpp"

namespace visma {

class NoSteadyStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SteadyStateOptions {
  double tolerance = 1e-10;  // max-norm of the scaled residual
  int max_polish_iterations = 20;
};

// Equilibrium of the full model (all derivatives zero, load constraint met),
// found with a Powell hybrid (Newton/dogleg) solve followed by Newton polish.
SystemState solve_steady_state(const MicrogridModel& model, double P_load, double Q_load,
                               const SteadyStateOptions& options = {});

// Scaled residual max-norm of a candidate steady state.
double steady_residual_norm(const MicrogridModel& model, const SystemState& state, double P_load, double Q_load);

// Integrates from `initial` at t = 0 to t_max (or `t_end` if given) with the
// load switched from P_load_before to P_load_after at t0. Samples every
// sample_dt.
Trajectory integrate(const MicrogridModel& model, const SystemState& initial, const ScenarioConfig& scenario,
                     double rtol, double atol, std::optional<double> t_end = std::nullopt);

// First-return relaxation bookkeeping for device frequencies after the step.
class RelaxationTracker {
 public:
  RelaxationTracker(int n_devices, double t0, double band_hz, double settle_window);

  void observe(double t, const double* f_hz);

  bool relaxed(double t) const;
  // Largest first re-entry time minus t0; nullopt while a device that left
  // the band has not come back.
  std::optional<double> t_final() const;

 private:
  struct Device {
    bool seen = false;
    bool departed = false;
    bool returned = false;
    double t_return = 0.0;
    double t_prev = 0.0;
    double dev_prev = 0.0;  // |f - f_nom|
  };

  std::vector<Device> devices_;
  double t0_;
  double band_;
  double settle_;
};

// t_final from a recorded trajectory; nullopt if some frequency never
// re-enters the band.
std::optional<double> relaxation_time(const Trajectory& traj, double t0, double relax_band,
                                      double settle_window = 1.0);

struct RunOptions {
  bool record = false;             // keep the sampled trajectory
  bool stop_on_violation = true;   // abort at the first band violation
  bool stop_on_relaxation = true;  // stop once every frequency has returned
};

struct RunResult {
  TransientMetrics metrics;
  std::optional<Trajectory> trajectory;
  SystemState initial;  // perturbed start state
};

// Constraint check, pre-step steady state, seeded multiplicative Gaussian
// noise on the initial state, then integration through the step until
// relaxation or the horizon, with continuous band monitoring.
RunResult run_perturbation(const VismaTuning& phi, const ScenarioConfig& scenario, std::uint64_t ic_noise_seed,
                           const RunOptions& options = {});

// Energy of one run under the scenario's weights.
Evaluation evaluate_tuning(const VismaTuning& phi, const ScenarioConfig& scenario, std::uint64_t seed);

// Objective bundle for the optimizer (constraint pre-check + simulation).
Objective make_objective(const ScenarioConfig& scenario);

struct ScanPoint {
  double value = 0.0;
  VismaTuning phi;
  TransientMetrics metrics;
  Energy energy;
};

// Energy along one tuning coordinate with the others held at `base`. Every
// point uses the same noise seed so that the scan is a smooth slice.
std::vector<ScanPoint> scan_parameter(const ScenarioConfig& scenario, const VismaTuning& base, int index,
                                      const std::vector<double>& values, std::uint64_t seed, int workers = 1);

}  // namespace visma
