// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "visma/report.hpp"
#include "visma/scenario.hpp"
#include "visma/sim.hpp"
#include "visma/tempering.hpp"

using namespace visma;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  bool full = false;
  bool all_seeds = false;
  int seeds = 5;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

double hz(double w) { return w / (2.0 * std::numbers::pi); }

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// Reference optima: tuning, weights and the tabulated cost columns, rounded
// as listed.
struct TableRow {
  int scenario;
  int index;
  VismaTuning phi;
  double alpha;
  double beta;
  double E;
  double E_unit;  // unit of the last listed digit of E
  double t_final;
  double inertia_term;
  double sigma_term;
  double terms_unit;  // largest last-digit unit among the three terms
};

const std::vector<TableRow>& table_rows() {
  static const std::vector<TableRow> rows{
      {1, 1, {5.0895, 1.1857e-4, 0.5029, 1054.56}, 7.0, 0.027, 108.93, 0.01, 36.483, 35.627, 36.820, 1e-3},
      {1, 2, {91.479, 2.5800e-4, 0.5917, 1060.97}, 0.07, 2.7, 35.12, 0.01, 28.415, 6.4036, 0.3026, 1e-3},
      {1, 3, {5.0692, 1.0071e-4, 0.5163, 975.67}, 700.0, 0.027, 3624.89, 0.01, 39.379, 3548.494, 37.026, 1e-3},
      {1, 4, {50.894, 10.1498e-4, 1.2539, 1053.54}, 7.0, 2.7e-4, 3425.0, 1.0, 32.913, 356.265, 3036.54, 1e-2},
      {2, 1, {11.4986, 1.1595e-4, 0.5035, 2379.26}, 1.7, 0.045, 59.26, 0.01, 19.671, 19.548, 20.046, 1e-3},
      {2, 2, {59.3043, 4.2760e-4, 0.9356, 2387.04}, 0.017, 4.5, 14.99, 0.01, 13.781, 1.0082, 0.1971, 1e-3},
      {2, 3, {11.4076, 1.0139e-4, 0.5064, 2348.85}, 170.0, 0.045, 1979.32, 0.01, 19.967, 1939.309, 20.040, 1e-3},
      {2, 4, {16.8974, 13.2759e-4, 0.6524, 2382.76}, 1.7, 4.5e-4, 2039.5, 0.1, 19.076, 28.728, 1991.7, 0.1},
  };
  return rows;
}

ScenarioConfig scenario_for(const TableRow& r) {
  auto sc = load_builtin_scenario(r.scenario);
  sc.weights.alpha = r.alpha;
  sc.weights.beta = r.beta;
  return sc;
}

double stator_loss(const ScenarioConfig& sc, double P, double Q, double V) {
  return sc.network.couplings[0].resistance * (P * P + Q * Q) / (3.0 * V * V);
}

Outcome criterion1(const Options&) {
  Stopwatch clock;
  bool ok = true;
  std::string detail;
  for (int id : {1, 2}) {
    const auto sc = load_builtin_scenario(id);
    const auto model = sc.model();
    const auto ss = solve_steady_state(model, sc.P_load_after, sc.Q_load);
    DerivativeEvaluator eval(model, ss.load);
    eval.set_load(sc.P_load_after, sc.Q_load);
    const auto snap = eval.observe(ss.diff);

    double df = std::abs(hz(ss.diff(StateLayout::kOmega1)) - kFrequencyNom);
    double dP = 0.0;
    double P_regular = 0.0;
    for (int j = 0; j < model.layout().n_inverters; ++j) {
      df = std::max(df, std::abs(hz(ss.diff(StateLayout::omega(j))) - kFrequencyNom));
      const double P_nom = sc.inverters[static_cast<std::size_t>(j)].P_nom;
      dP = std::max(dP, std::abs(snap.P(j + 1) - P_nom));
      P_regular += P_nom;
    }
    // Power delivered to the grid behind the stator; the machine's internal
    // power additionally covers the stator loss.
    const double loss = stator_loss(sc, snap.P(0), snap.Q(0), ss.diff(StateLayout::kV1));
    const double delivered = snap.P(0) - loss;
    const double expected = sc.P_load_after - P_regular;
    ok = ok && df < 1e-6 && dP < 1e-3 && std::abs(delivered - expected) < 1.0;
    detail += fmt::format("s{}: max|f-50| {:.1e} Hz, max|P-P_nom| {:.1e} W, VISMA delivers {:.4f} W (expect {:.0f}; "
                          "internal {:.2f} incl. stator loss {:.2f}); ",
                          id, df, dP, delivered, expected, snap.P(0), loss);
  }
  const double t = clock.seconds();
  ok = ok && t < 1.0;
  return {ok, detail + fmt::format("{:.3f} s", t)};
}

Outcome criterion2(const Options&) {
  Stopwatch clock;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) { return lo * std::pow(hi / lo, u(rng)); };
  const std::array<double, 3> k_P{droop_coefficients(4000.0).k_P, droop_coefficients(9000.0).k_P,
                                  droop_coefficients(1000.0).k_P};
  long bad_D = 0;
  long bad_poles = 0;
  double min_margin = INFINITY;
  const long n = 1000000;
  for (long i = 0; i < n; ++i) {
    const VismaTuning phi{log_uniform(1e-2, 1e4), log_uniform(1e-8, 1.0), log_uniform(1e-3, 1e2),
                          log_uniform(1.0, 1e5)};
    const auto q = linearized_quantities(phi, k_P[static_cast<std::size_t>(i % 3)]);
    if (!(q.D > 1.0)) ++bad_D;
    min_margin = std::min(min_margin, q.D - 1.0);
    if (!(std::isfinite(q.s_pole1) && std::isfinite(q.s_pole2) && q.s_pole1 < 0.0 && q.s_pole2 < 0.0)) ++bad_poles;
  }
  return {bad_D == 0 && bad_poles == 0,
          fmt::format("{} draws: D <= 1 in {}, non-real or non-negative poles in {}; min D-1 = {:.3e}; {:.2f} s", n,
                      bad_D, bad_poles, min_margin, clock.seconds())};
}

// Machine subsystem (w, d) with the electrical power held at P_nom and x = 0:
// central-difference Jacobian of the nonlinear right-hand side.
Eigen::Matrix2d machine_jacobian(const VismaParams& p) {
  auto f = [&](double w, double d) {
    const auto r = visma_rhs<double>({w, d, 0.0, kVoltageNom}, p, p.P_nom, kVoltageNom);
    return Eigen::Vector2d(r.domega, r.dd);
  };
  const double w0 = kOmegaNom;
  const double d0 = -kOmegaNom;
  const double h = 1e-5 * w0;
  Eigen::Matrix2d jac;
  jac.col(0) = (f(w0 + h, d0) - f(w0 - h, d0)) / (2.0 * h);
  jac.col(1) = (f(w0, d0 + h) - f(w0, d0 - h)) / (2.0 * h);
  return jac;
}

Outcome criterion3(const Options&) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) { return lo * std::pow(hi / lo, u(rng)); };
  int tested = 0;
  double worst = 0.0;
  while (tested < 100) {
    auto sc = load_builtin_scenario(1 + tested % 2);
    VismaTuning phi{log_uniform(1.0, 500.0), log_uniform(1e-6, 1e-1), log_uniform(0.3, 5.0), 1.0};
    const auto check = check_constraints(phi, sc.max_inverter_T(), sc.visma.k_P);
    if (!check.accepted()) continue;
    phi.K_I = u(rng) * check.K_I_bound;
    if (!check_constraints(phi, sc.max_inverter_T(), sc.visma.k_P).accepted()) continue;
    sc.visma.tuning = phi;

    Eigen::EigenSolver<Eigen::Matrix2d> es(machine_jacobian(sc.visma));
    const auto ev = es.eigenvalues();
    std::array<double, 2> fd{ev(0).real(), ev(1).real()};
    const double imag = std::max(std::abs(ev(0).imag()), std::abs(ev(1).imag()));
    std::sort(fd.begin(), fd.end());
    const auto q = linearized_quantities(phi, sc.visma.k_P);
    const std::array<double, 2> lin{std::min(q.s_pole1, q.s_pole2), std::max(q.s_pole1, q.s_pole2)};
    worst = std::max({worst, rel(fd[0], lin[0]), rel(fd[1], lin[1]), imag / std::abs(lin[1])});
    ++tested;
  }
  return {worst < 1e-4, fmt::format("100 feasible tunings, worst relative pole error {:.2e}", worst)};
}

Outcome criterion4(const Options&) {
  bool ok = true;
  std::string detail;
  for (const auto& r : table_rows()) {
    if (r.index > 2) continue;
    const auto sc = load_builtin_scenario(r.scenario);
    const auto c = check_constraints(r.phi, sc.max_inverter_T(), sc.visma.k_P);
    const double simple = 1.0 / (3.0 * sc.visma.k_P);
    const double err = rel(c.K_I_bound, r.phi.K_I);
    ok = ok && c.accepted() && err < 0.01;
    detail += fmt::format("s{}#{}: {} bound {:.2f} vs K_I {:.2f} ({:.3f}%), 1/(3k_P) {:.2f}; ", r.scenario, r.index,
                          c.accepted() ? "accepted" : to_string(c.violation), c.K_I_bound, r.phi.K_I, 100.0 * err,
                          simple);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome criterion5(const Options&) {
  bool ok = true;
  double worst_listed = 0.0;
  double worst_emitted = 0.0;
  std::string sims;
  for (const auto& r : table_rows()) {
    // Listed columns: the sum must agree with E up to the rounding of the
    // listed digits (one unit of E plus half a unit per term).
    const double sum = r.t_final + r.inertia_term + r.sigma_term;
    const double tol = r.E_unit + 1.5 * r.terms_unit;
    ok = ok && std::abs(sum - r.E) <= tol;
    worst_listed = std::max(worst_listed, std::abs(sum - r.E) / tol);

    // Rows emitted by this implementation for the same tunings and weights.
    const auto sc = scenario_for(r);
    const auto ev = evaluate_tuning(r.phi, sc, 1);
    if (ev.energy.is_rejected()) {
      ok = false;
      sims += fmt::format("s{}#{} REJECTED; ", r.scenario, r.index);
      continue;
    }
    const auto& b = ev.breakdown;
    const double emitted = std::abs(b.t_final + b.inertia_term + b.sigma_term - ev.energy.value());
    worst_emitted = std::max(worst_emitted, emitted / ev.energy.value());
    ok = ok && emitted <= 1e-12 * ev.energy.value();
    sims += fmt::format("s{}#{} E {:.2f} (listed {}); ", r.scenario, r.index, ev.energy.value(), r.E);
  }
  sims.resize(sims.size() - 2);
  return {ok, fmt::format("listed rows: worst |sum-E|/tolerance {:.2f}; emitted rows: worst relative mismatch {:.1e}; {}",
                          worst_listed, worst_emitted, sims)};
}

Outcome criterion6(const Options&) {
  struct Case {
    int row;
    double lo;
    double hi;
  };
  bool ok = true;
  std::string detail;
  for (const auto& [row, lo, hi] : {Case{0, 33.0, 40.0}, Case{5, 11.5, 16.0}}) {
    const auto& r = table_rows()[static_cast<std::size_t>(row)];
    const auto sc = scenario_for(r);
    Stopwatch clock;
    const auto run = run_perturbation(r.phi, sc, 1);
    const double t = clock.seconds();
    const auto& m = run.metrics;
    const bool pass = m.accepted() && m.t_final >= lo && m.t_final <= hi && t < 10.0;
    ok = ok && pass;
    detail += fmt::format("s{}#{}: {} t_final {:.3f} s in [{}, {}], df {:.4f} Hz, {:.2f} s wall; ", r.scenario, r.index,
                          to_string(m.status), m.t_final, lo, hi, m.delta_f_peak, t);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome criterion7(const Options& opt) {
  const int rounds = opt.full ? 200 : 20;
  const double widen = opt.full ? 1.0 : 2.0;
  const int needed = opt.seeds / 2 + 1;

  struct Setting {
    const char* name;
    double alpha;
    double beta;
    std::function<bool(const VismaTuning&, std::string&)> judge;
  };
  const std::vector<Setting> settings{
      {"alpha=7 beta=0.027", 7.0, 0.027,
       [&](const VismaTuning& p, std::string& why) {
         const double e_inertia = rel(p.J + p.k_d, 5.09);
         const double e_Td = rel(p.T_d, 0.5);
         why = fmt::format("J+k_d {:.4f} ({:.1f}%), T_d {:.4f} ({:.1f}%), k_d {:.2e}", p.J + p.k_d, 100 * e_inertia,
                           p.T_d, 100 * e_Td, p.k_d);
         return e_inertia <= 0.2 * widen && e_Td <= 0.1 * widen && p.k_d < 1e-3 * widen;
       }},
      {"alpha=0.07 beta=2.7", 0.07, 2.7,
       [&](const VismaTuning& p, std::string& why) {
         const double e = rel(p.K_I, 1061.0);
         why = fmt::format("K_I {:.2f} ({:.2f}%), T_d {:.4f}", p.K_I, 100 * e, p.T_d);
         return e <= 0.02 * widen;
       }},
  };

  bool ok = true;
  std::string detail = fmt::format("{}+{} rounds, tolerances x{:g}, need {}/{} seeds", rounds, rounds, widen, needed,
                                   opt.seeds);
  for (const auto& s : settings) {
    auto sc = load_builtin_scenario(1);
    sc.weights.alpha = s.alpha;
    sc.weights.beta = s.beta;
    auto cfg = sc.tempering;
    cfg.rounds_coarse = rounds;
    cfg.rounds_fine = rounds;
    cfg.workers = 0;
    const auto objective = make_objective(sc);
    int passed = 0;
    int failed = 0;
    for (int seed = 1; seed <= opt.seeds; ++seed) {
      if (!opt.all_seeds && (passed >= needed || failed > opt.seeds - needed)) break;
      cfg.seed = static_cast<std::uint64_t>(seed);
      Stopwatch clock;
      const auto res = run_tempering(objective, cfg);
      // The returned optimum must be feasible and re-evaluate to a finite,
      // row-sum-consistent energy.
      const auto again = evaluate_tuning(res.phi_min, sc, 1);
      const bool consistent =
          !again.energy.is_rejected() &&
          std::abs(again.breakdown.t_final + again.breakdown.inertia_term + again.breakdown.sigma_term -
                   again.energy.value()) <= 1e-12 * again.energy.value();
      std::string why;
      const bool pass = s.judge(res.phi_min, why) && consistent;
      pass ? ++passed : ++failed;
      std::printf("  criterion 7 [%s] seed %d: %s E %.3f t_final %.3f, %s, %.0f s\n", s.name, seed,
                  pass ? "ok" : "miss", res.best.energy.value(), res.best.breakdown.t_final, why.c_str(),
                  clock.seconds());
      std::fflush(stdout);
    }
    ok = ok && passed >= needed;
    detail += fmt::format("; {}: {} passed, {} missed", s.name, passed, failed);
  }
  return {ok, detail};
}

// Quadratic bowl in log-parameter space, cheap enough for full-length runs.
Objective toy_objective() {
  const VismaTuning target{20.0, 3e-4, 0.7, 900.0};
  return {[](const VismaTuning& phi) { return phi.positive(); },
          [target](const VismaTuning& phi, std::uint64_t seed) {
            double e = 0.0;
            for (int i = 0; i < VismaTuning::kSize; ++i) {
              const double d = std::log(phi[i] / target[i]);
              e += 10.0 * d * d;
            }
            std::mt19937_64 noise(seed);
            Evaluation ev;
            ev.energy = Energy::finite(e + 1e-3 * std::uniform_real_distribution<double>(0.0, 1.0)(noise));
            return ev;
          }};
}

Outcome criterion8(const Options&) {
  // Fixed-temperature Metropolis chain on three states.
  const std::array<double, 3> E{0.0, 0.4, 1.1};
  const double theta = 0.5;
  Rng rng(8);
  std::uniform_int_distribution<int> step(1, 2);
  std::array<long, 3> visits{};
  int state = 0;
  const long n = 2000000;
  const long thin = 10;  // keep every 10th state to weaken autocorrelation
  long kept = 0;
  for (long k = 0; k < n * thin; ++k) {
    const int cand = (state + step(rng)) % 3;
    if (metropolis_accept(Energy::finite(E[state]), Energy::finite(E[cand]), theta, rng)) state = cand;
    if (k % thin == 0) {
      ++visits[static_cast<std::size_t>(state)];
      ++kept;
    }
  }
  double z = 0.0;
  for (double e : E) z += std::exp(-e / theta);
  double worst_sigma = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double p = std::exp(-E[i] / theta) / z;
    const double sd = std::sqrt(p * (1.0 - p) / static_cast<double>(kept));
    worst_sigma = std::max(worst_sigma, std::abs(static_cast<double>(visits[i]) / kept - p) / sd);
  }

  // Configuration multiset across a full-length ladder run.
  LadderConfig cfg;
  cfg.initial = VismaTuning{5.0, 1e-3, 0.3, 300.0};
  cfg.seed = 8;
  cfg.workers = 1;
  int rounds = 0;
  int broken = 0;
  const auto observer = [&](int, int, const std::vector<Replica>& before, const std::vector<Replica>& after) {
    ++rounds;
    auto key = [](const std::vector<Replica>& l) {
      std::multiset<std::pair<VismaTuning, double>> m;
      for (const auto& r : l) m.emplace(r.phi, r.eval.energy.is_rejected() ? INFINITY : r.eval.energy.value());
      return m;
    };
    bool same = key(before) == key(after);
    for (std::size_t i = 0; i < after.size(); ++i) same = same && after[i].theta == before[i].theta;
    if (!same) ++broken;
  };
  run_tempering(toy_objective(), cfg, observer);
  return {worst_sigma < 3.0 && broken == 0 && rounds == cfg.rounds_coarse + cfg.rounds_fine,
          fmt::format("3-state visits within {:.2f} sigma of Boltzmann; multiset preserved in {}/{} rounds",
                      worst_sigma, rounds - broken, rounds)};
}

Outcome criterion9(const Options&) {
  const auto& r = table_rows()[0];
  const auto sc = scenario_for(r);

  auto simulate_csv = [&] {
    RunOptions o;
    o.record = true;
    o.stop_on_relaxation = false;
    const auto run = run_perturbation(r.phi, sc, 9, o);
    std::ostringstream out;
    write_manifest(out, make_manifest("simulate", "builtin:1", 9, sc));
    write_trajectory_csv(out, *run.trajectory);
    return out.str();
  };
  auto ladder_csv = [&](int workers) {
    LadderConfig cfg;
    cfg.initial = VismaTuning{5.0, 1e-3, 0.3, 300.0};
    cfg.rounds_coarse = cfg.rounds_fine = 30;
    cfg.seed = 9;
    cfg.workers = workers;
    std::ostringstream out;
    write_ladder_trace_csv(out, run_tempering(toy_objective(), cfg).trace);
    return out.str();
  };
  auto landscape_csv = [&] {
    std::ostringstream out;
    write_landscape_csv(out, "J", scan_parameter(sc, r.phi, 0, {4.0, 5.0, 6.0, 50.0}, 9));
    return out.str();
  };

  const auto a = simulate_csv();
  const bool sim_same = a == simulate_csv();
  const auto l = ladder_csv(1);
  const bool ladder_same = l == ladder_csv(1) && l == ladder_csv(4);
  const bool scan_same = landscape_csv() == landscape_csv();
  return {sim_same && ladder_same && scan_same,
          fmt::format("trajectory CSV ({} bytes) {}, ladder trace ({} bytes, 1 and 4 workers) {}, landscape {}",
                      a.size(), sim_same ? "identical" : "DIFFERS", l.size(), ladder_same ? "identical" : "DIFFERS",
                      scan_same ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Options opt;
  std::vector<int> only;
  std::vector<int> skip;
  app.add_option("--only", only, "criteria to run (default all)")->check(CLI::Range(1, 9));
  app.add_option("--skip", skip, "criteria to leave out")->check(CLI::Range(1, 9));
  app.add_flag("--full", opt.full, "optimizer check with 200+200 rounds and the unwidened tolerances");
  app.add_flag("--all-seeds", opt.all_seeds, "run every optimizer seed even once the majority is decided");
  app.add_option("--seeds", opt.seeds, "optimizer master seeds")->check(CLI::Range(1, 99));
  CLI11_PARSE(app, argc, argv);

  const std::array<Outcome (*)(const Options&), 9> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                             criterion6, criterion7, criterion8, criterion9};
  bool all = true;
  for (int c = 1; c <= 9; ++c) {
    if (!only.empty() && std::find(only.begin(), only.end(), c) == only.end()) continue;
    if (std::find(skip.begin(), skip.end(), c) != skip.end()) continue;
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(c - 1)](opt);
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    all = all && o.pass;
    std::printf("criterion %d: %s  %s\n", c, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
