#include "visma/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <unsupported/Eigen/AutoDiff>
#include <unsupported/Eigen/NonLinearOptimization>

#include "visma/parallel.hpp"

namespace visma {

namespace {

using AutoDiff = Eigen::AutoDiffScalar<Eigen::VectorXd>;

struct SteadyFunctor {
  const MicrogridModel* model;
  double P_load;
  double Q_load;

  int operator()(const Eigen::VectorXd& z, Eigen::VectorXd& r) const {
    try {
      model->steady_residual(z, P_load, Q_load, r);
    } catch (const InstabilityError&) {
      return -1;
    }
    return 0;
  }

  int df(const Eigen::VectorXd& z, Eigen::MatrixXd& jac) const {
    const auto n = z.size();
    Eigen::Matrix<AutoDiff, Eigen::Dynamic, 1> za(n), ra(n);
    for (Eigen::Index i = 0; i < n; ++i) za(i) = AutoDiff(z(i), n, i);
    try {
      model->steady_residual(za, P_load, Q_load, ra);
    } catch (const InstabilityError&) {
      return -1;
    }
    jac.setZero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (ra(i).derivatives().size() == n) jac.row(i) = ra(i).derivatives().transpose();
    }
    return 0;
  }
};

Eigen::VectorXd initial_guess(const MicrogridModel& model, double P_load) {
  const auto& layout = model.layout();
  const int n = layout.size();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n + 2);
  double p_nom = model.visma().P_nom;
  for (const auto& inv : model.inverters()) p_nom += inv.P_nom;
  z(StateLayout::kOmega1) = kOmegaNom;
  z(StateLayout::kDamping) = -kOmegaNom;
  z(StateLayout::kSecondary) = P_load - p_nom;
  z(StateLayout::kV1) = kVoltageNom;
  for (int j = 0; j < layout.n_inverters; ++j) {
    z(StateLayout::omega(j)) = kOmegaNom;
    z(StateLayout::voltage(j)) = kVoltageNom;
  }
  z(n) = kVoltageNom;

  // Lossless estimate of the angles when every device feeds the load bus
  // directly: sin(dtheta) ~ P / (3 V^2 |B|).
  const auto& adm = model.admittance();
  const int load = layout.load_node();
  auto angle_to_load = [&](int node, double p) {
    const double b = std::abs(adm.B(node, load));
    return b > 0.0 ? p / (3.0 * kVoltageNom * kVoltageNom * b) : 0.0;
  };
  const double p1 = P_load - (p_nom - model.visma().P_nom);
  z(n + 1) = -angle_to_load(0, p1);
  for (int j = 0; j < layout.n_inverters; ++j) {
    z(StateLayout::dtheta(j)) = z(n + 1) + angle_to_load(j + 1, model.inverters()[static_cast<std::size_t>(j)].P_nom);
  }
  return z;
}

double max_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

double steady_residual_norm(const MicrogridModel& model, const SystemState& state, double P_load, double Q_load) {
  const int n = model.layout().size();
  Eigen::VectorXd z(n + 2), r(n + 2);
  z.head(n) = state.diff;
  z(n) = state.load.V;
  z(n + 1) = state.load.dtheta;
  model.steady_residual(z, P_load, Q_load, r);
  return max_norm(r);
}

SystemState solve_steady_state(const MicrogridModel& model, double P_load, double Q_load,
                               const SteadyStateOptions& options) {
  const int n = model.layout().size();
  SteadyFunctor functor{&model, P_load, Q_load};
  Eigen::VectorXd z = initial_guess(model, P_load);

  Eigen::HybridNonLinearSolver<SteadyFunctor> solver(functor);
  solver.parameters.xtol = 1e-15;
  solver.parameters.maxfev = 2000;
  solver.solve(z);

  // Newton polish to the requested residual.
  Eigen::VectorXd r(n + 2);
  Eigen::MatrixXd jac(n + 2, n + 2);
  bool ok = functor(z, r) == 0;
  double norm = ok ? max_norm(r) : INFINITY;
  for (int it = 0; ok && it < options.max_polish_iterations && norm > 1e-3 * options.tolerance; ++it) {
    if (functor.df(z, jac) != 0) break;
    const Eigen::VectorXd step = jac.fullPivLu().solve(r);
    if (!step.allFinite()) break;
    Eigen::VectorXd trial = z - step;
    Eigen::VectorXd r_trial(n + 2);
    if (functor(trial, r_trial) != 0) break;
    const double trial_norm = max_norm(r_trial);
    if (!(trial_norm < norm)) break;
    z = trial;
    r = r_trial;
    norm = trial_norm;
  }
  if (!(norm < options.tolerance) || !(z(n) > 0.0)) {
    throw NoSteadyStateError("steady-state solve did not converge (residual " + std::to_string(norm) + ")");
  }
  SystemState s;
  s.diff = z.head(n);
  s.load = {z(n), z(n + 1)};
  return s;
}

namespace {

constexpr double kSampleEps = 1e-9;

// Drives the integrator over [0, t_end] with the load step at t0 and calls
// on_sample(t, y, snapshot) on the sample grid; a false return stops.
template <typename OnSample>
void run_segments(const MicrogridModel& model, const SystemState& start, const ScenarioConfig& sc, double rtol,
                  double atol, double t_end, OnSample&& on_sample) {
  DerivativeEvaluator eval(model, start.load);
  eval.set_load(sc.P_load_before, sc.Q_load);
  Rkf45Options opt;
  opt.rtol = rtol;
  opt.atol = atol;
  opt.h_max = 0.1;
  Rkf45<DerivativeEvaluator> rk(eval, opt);

  const double dt = sc.sim.sample_dt;
  const double t0 = std::min(sc.sim.t0, t_end);
  long k = 0;
  Eigen::VectorXd buf(start.diff.size());

  auto emit_until = [&](double t_limit) {
    for (double ts = static_cast<double>(k) * dt; ts <= t_limit + kSampleEps * dt; ts = static_cast<double>(k) * dt) {
      rk.dense(ts, buf);
      const auto& snap = eval.observe(buf);
      ++k;
      if (!on_sample(ts, buf, snap)) return false;
    }
    return true;
  };

  rk.reset(0.0, start.diff);
  if (!emit_until(0.0)) return;
  while (rk.t() < t0) {
    rk.step(t0);
    if (!emit_until(rk.t())) return;
  }
  eval.set_load(sc.P_load_after, sc.Q_load);
  rk.reset(rk.t(), rk.y());
  while (rk.t() < t_end) {
    rk.step(t_end);
    if (!emit_until(rk.t())) return;
  }
}

}  // namespace

Trajectory integrate(const MicrogridModel& model, const SystemState& initial, const ScenarioConfig& scenario,
                     double rtol, double atol, std::optional<double> t_end) {
  Trajectory traj;
  traj.layout = model.layout();
  traj.t_jump = scenario.sim.t0;
  run_segments(model, initial, scenario, rtol, atol, t_end.value_or(scenario.sim.t_max),
               [&](double t, const Eigen::VectorXd& y, const NetworkSnapshot& snap) {
                 traj.push(t, y, snap);
                 return true;
               });
  return traj;
}

RelaxationTracker::RelaxationTracker(int n_devices, double t0, double band_hz, double settle_window)
    : devices_(static_cast<std::size_t>(n_devices)), t0_(t0), band_(band_hz), settle_(settle_window) {}

void RelaxationTracker::observe(double t, const double* f_hz) {
  if (t <= t0_) return;
  for (std::size_t i = 0; i < devices_.size(); ++i) {
    auto& d = devices_[i];
    const double dev = std::abs(f_hz[i] - kFrequencyNom);
    const bool inside = dev <= band_;
    if (!d.departed) {
      if (!inside) d.departed = true;
    } else if (!d.returned && inside) {
      d.returned = true;
      const double span = d.dev_prev - dev;
      d.t_return = span > 0.0 ? d.t_prev + (t - d.t_prev) * (d.dev_prev - band_) / span : t;
    }
    d.seen = true;
    d.t_prev = t;
    d.dev_prev = dev;
  }
}

bool RelaxationTracker::relaxed(double t) const {
  bool all_departed = true;
  for (const auto& d : devices_) {
    if (!d.seen) return false;
    if (d.departed && !d.returned) return false;
    all_departed = all_departed && d.departed;
  }
  return all_departed || t - t0_ >= settle_;
}

std::optional<double> RelaxationTracker::t_final() const {
  double t_relax = t0_;
  for (const auto& d : devices_) {
    if (d.departed && !d.returned) return std::nullopt;
    if (d.returned) t_relax = std::max(t_relax, d.t_return);
  }
  return t_relax - t0_;
}

std::optional<double> relaxation_time(const Trajectory& traj, double t0, double relax_band, double settle_window) {
  const int m = traj.n_devices();
  RelaxationTracker tracker(m, t0, relax_band, settle_window);
  std::vector<double> f(static_cast<std::size_t>(m));
  for (std::size_t s = 0; s < traj.size(); ++s) {
    for (int i = 0; i < m; ++i) f[static_cast<std::size_t>(i)] = traj.frequency(s, i);
    tracker.observe(traj.t[s], f.data());
  }
  return tracker.t_final();
}

RunResult run_perturbation(const VismaTuning& phi, const ScenarioConfig& scenario, std::uint64_t ic_noise_seed,
                           const RunOptions& options) {
  RunResult result;
  auto& metrics = result.metrics;

  const auto check = check_constraints(phi, scenario.max_inverter_T(), scenario.visma.k_P);
  if (!check.accepted()) {
    metrics.status = RunStatus::kConstraintViolation;
    metrics.detail = to_string(check.violation);
    return result;
  }

  MicrogridModel model = scenario.model();
  model.set_tuning(phi);
  try {
    result.initial = solve_steady_state(model, scenario.P_load_before, scenario.Q_load);
  } catch (const NoSteadyStateError& e) {
    metrics.status = RunStatus::kNoSteadyState;
    metrics.detail = e.what();
    return result;
  }

  if (scenario.sim.ic_noise > 0.0) {
    Rng rng(ic_noise_seed);
    std::normal_distribution<double> normal(0.0, scenario.sim.ic_noise);
    for (Eigen::Index i = 0; i < result.initial.diff.size(); ++i) result.initial.diff(i) *= 1.0 + normal(rng);
  }

  const int m = model.layout().n_inverters + 1;
  const double t0 = scenario.sim.t0;
  const auto& bands = scenario.bands;
  RelaxationTracker tracker(m, t0, scenario.sim.relax_band, scenario.sim.settle_window);
  std::vector<double> f(static_cast<std::size_t>(m)), f_ref(static_cast<std::size_t>(m));
  Eigen::VectorXd v_ref(m + 1);
  bool relaxed = false;
  if (options.record) {
    result.trajectory.emplace();
    result.trajectory->layout = model.layout();
    result.trajectory->t_jump = t0;
  }

  auto on_sample = [&](double t, const Eigen::VectorXd& y, const NetworkSnapshot& snap) {
    if (options.record) result.trajectory->push(t, y, snap);
    bool in_band = true;
    for (int i = 0; i < m; ++i) {
      const double w = i == 0 ? y(StateLayout::kOmega1) : y(StateLayout::omega(i - 1));
      f[static_cast<std::size_t>(i)] = w / (2.0 * std::numbers::pi);
      const double fi = f[static_cast<std::size_t>(i)];
      const double vg = snap.V_grid(i);
      in_band = in_band && fi >= bands.f_low && fi <= bands.f_high && vg >= bands.V_low && vg <= bands.V_high;
    }
    const double v_load = snap.V(model.layout().load_node());
    in_band = in_band && v_load >= bands.V_low && v_load <= bands.V_high;
    if (!in_band && !metrics.violated) {
      metrics.violated = true;
      metrics.detail = "left the allowed band at t = " + std::to_string(t) + " s";
    }
    if (metrics.violated && options.stop_on_violation) return false;

    if (t <= t0 + kSampleEps * scenario.sim.sample_dt) {
      f_ref = f;
      v_ref.head(m) = snap.V_grid;
      v_ref(m) = v_load;
      return true;
    }
    for (int i = 0; i < m; ++i) {
      metrics.delta_f_peak =
          std::max(metrics.delta_f_peak, std::abs(f[static_cast<std::size_t>(i)] - f_ref[static_cast<std::size_t>(i)]));
      metrics.delta_V_peak = std::max(metrics.delta_V_peak, std::abs(snap.V_grid(i) - v_ref(i)));
    }
    metrics.delta_V_peak = std::max(metrics.delta_V_peak, std::abs(v_load - v_ref(m)));
    tracker.observe(t, f.data());
    if (tracker.relaxed(t)) {
      relaxed = true;
      if (options.stop_on_relaxation) return false;
    }
    return true;
  };

  try {
    run_segments(model, result.initial, scenario, scenario.sim.rtol, scenario.sim.atol, scenario.sim.t_max, on_sample);
  } catch (const std::runtime_error& e) {
    metrics.status = RunStatus::kSimulationFailure;
    metrics.detail = e.what();
    return result;
  }

  if (metrics.violated) {
    metrics.status = RunStatus::kBandViolation;
  } else if (!relaxed || !tracker.t_final()) {
    metrics.timed_out = true;
    metrics.status = RunStatus::kTimeout;
  } else {
    metrics.t_final = *tracker.t_final();
  }
  return result;
}

Evaluation evaluate_tuning(const VismaTuning& phi, const ScenarioConfig& scenario, std::uint64_t seed) {
  const auto run = run_perturbation(phi, scenario, seed);
  Evaluation e;
  e.energy = cost(run.metrics, scenario.weights, phi);
  if (!e.energy.is_rejected()) e.breakdown = cost_breakdown(run.metrics, scenario.weights, phi);
  return e;
}

Objective make_objective(const ScenarioConfig& scenario) {
  const double max_T = scenario.max_inverter_T();
  const double k_P1 = scenario.visma.k_P;
  return {[max_T, k_P1](const VismaTuning& phi) { return check_constraints(phi, max_T, k_P1).accepted(); },
          [scenario](const VismaTuning& phi, std::uint64_t seed) { return evaluate_tuning(phi, scenario, seed); }};
}

std::vector<ScanPoint> scan_parameter(const ScenarioConfig& scenario, const VismaTuning& base, int index,
                                      const std::vector<double>& values, std::uint64_t seed, int workers) {
  if (index < 0 || index >= VismaTuning::kSize) throw std::out_of_range("tuning index");
  std::vector<ScanPoint> points(values.size());
  parallel_for(static_cast<int>(values.size()), resolve_workers(workers), [&](int i) {
    auto& p = points[static_cast<std::size_t>(i)];
    p.value = values[static_cast<std::size_t>(i)];
    p.phi = base;
    p.phi[index] = p.value;
    p.metrics = run_perturbation(p.phi, scenario, seed).metrics;
    p.energy = cost(p.metrics, scenario.weights, p.phi);
  });
  return points;
}

}  // namespace visma
