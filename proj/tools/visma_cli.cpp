// Command-line front end: steady, simulate, optimize, landscape, errors and
// dump-scenario.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "visma/parallel.hpp"
#include "visma/report.hpp"
#include "visma/scenario.hpp"
#include "visma/sim.hpp"
#include "visma/tempering.hpp"

using namespace visma;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitSolver = 4;

struct Shared {
  std::string config;
  int scenario = 1;
  std::uint64_t seed = 1;
  std::string out = ".";
  int workers = 0;

  std::vector<double> alpha;
  std::vector<double> beta;
  std::optional<double> delta_f;
  std::optional<double> delta_V;
  std::optional<int> swaps;
  std::vector<double> rperc;
  std::optional<double> rtol;
  std::optional<double> atol;
  std::optional<double> ic_noise;
  std::vector<double> phi;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  ScenarioConfig scenario;
  Manifest manifest;
  std::filesystem::path out;
};

std::string source_name(const Shared& s) {
  return s.config.empty() ? fmt::format("builtin:{}", s.scenario) : s.config;
}

// Loads the scenario, applies the overrides and validates the result.
Context prepare(const std::string& command, const Shared& s) {
  Context c;
  c.scenario = s.config.empty() ? load_builtin_scenario(s.scenario) : load_scenario_file(s.config);
  auto& sc = c.scenario;
  if (!s.alpha.empty()) sc.weights.alpha = s.alpha.front();
  if (!s.beta.empty()) sc.weights.beta = s.beta.front();
  if (s.delta_f) sc.weights.delta_f = *s.delta_f;
  if (s.delta_V) sc.weights.delta_V = *s.delta_V;
  if (s.swaps) sc.tempering.rounds_coarse = sc.tempering.rounds_fine = *s.swaps;
  if (!s.rperc.empty()) {
    sc.tempering.r_perc_coarse = s.rperc.front();
    sc.tempering.r_perc_fine = s.rperc.back();
  }
  if (s.rtol) sc.sim.rtol = *s.rtol;
  if (s.atol) sc.sim.atol = *s.atol;
  if (s.ic_noise) sc.sim.ic_noise = *s.ic_noise;
  if (!s.phi.empty()) sc.visma.tuning = {s.phi[0], s.phi[1], s.phi[2], s.phi[3]};
  sc.tempering.seed = s.seed;

  const auto problems = validate(sc);
  if (!problems.empty()) {
    std::string list;
    for (const auto& p : problems) list += "\n  " + p;
    throw ConfigError("invalid configuration:" + list);
  }

  c.manifest = make_manifest(command, source_name(s), s.seed, sc);
  const auto& t = sc.visma.tuning;
  c.manifest.fields.emplace_back("phi", fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}", t.J, t.k_d, t.T_d, t.K_I));
  c.manifest.fields.emplace_back("weights", fmt::format("alpha={:.17g} beta={:.17g} delta_f={:.17g} delta_V={:.17g}",
                                                        sc.weights.alpha, sc.weights.beta, sc.weights.delta_f,
                                                        sc.weights.delta_V));
  sc.tempering.workers = s.workers;
  c.out = s.out;
  std::filesystem::create_directories(c.out);
  return c;
}

std::ofstream open_output(const Context& c, const std::string& name) {
  const auto path = c.out / name;
  std::ofstream f(path);
  if (!f) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  write_manifest(f, c.manifest);
  return f;
}

int cmd_steady(const Shared& s) {
  auto c = prepare("steady", s);
  const auto& sc = c.scenario;
  const auto model = sc.model();
  auto csv = open_output(c, "steady.csv");
  csv << "phase,node,f,V,P,Q,x,d\n";
  const int m = model.layout().n_inverters + 1;
  for (const auto& [phase, P_load] : {std::pair{"before", sc.P_load_before}, std::pair{"after", sc.P_load_after}}) {
    const auto ss = solve_steady_state(model, P_load, sc.Q_load);
    DerivativeEvaluator eval(model, ss.load);
    eval.set_load(P_load, sc.Q_load);
    const auto snap = eval.observe(ss.diff);
    std::printf("%s the step (load %.1f W, %.1f var)\n", phase, P_load, sc.Q_load);
    std::printf("  %-6s %12s %12s %12s %12s\n", "node", "f [Hz]", "V [V]", "P [W]", "Q [var]");
    for (int i = 0; i <= m; ++i) {
      const bool device = i < m;
      const double w = i == 0 ? ss.diff(StateLayout::kOmega1) : device ? ss.diff(StateLayout::omega(i - 1)) : NAN;
      const double f = w / (2.0 * std::numbers::pi);
      const double V = i == 0 ? ss.diff(StateLayout::kV1) : device ? ss.diff(StateLayout::voltage(i - 1)) : ss.load.V;
      const std::string label = device ? std::to_string(i + 1) : "load";
      std::printf("  %-6s %12s %12.4f %12.4f %12.4f\n", label.c_str(), device ? fmt::format("{:.6f}", f).c_str() : "-",
                  V, snap.P(i), snap.Q(i));
      csv << fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},,\n", phase, label, device ? fmt::format("{:.17g}", f) : "",
                         V, snap.P(i), snap.Q(i));
    }
    const double x = ss.diff(StateLayout::kSecondary);
    const double d = ss.diff(StateLayout::kDamping);
    std::printf("  VISMA x = %.6f W, d = %.9f rad/s\n", x, d);
    csv << fmt::format("{},visma,,,,,{:.17g},{:.17g}\n", phase, x, d);
  }
  return kExitOk;
}

std::string metrics_line(const TransientMetrics& m, const Energy& e) {
  if (!m.accepted()) {
    return fmt::format("status={} t_final={:.6g} delta_f={:.6g} delta_V={:.6g} E=REJECTED{}", to_string(m.status),
                       m.t_final, m.delta_f_peak, m.delta_V_peak, m.detail.empty() ? "" : " (" + m.detail + ")");
  }
  return fmt::format("status=OK t_final={:.6g} delta_f={:.6g} delta_V={:.6g} E={:.6g}", m.t_final, m.delta_f_peak,
                     m.delta_V_peak, e.value());
}

int cmd_simulate(const Shared& s, bool horizon) {
  auto c = prepare("simulate", s);
  const auto& sc = c.scenario;
  RunOptions o;
  o.record = true;
  o.stop_on_relaxation = !horizon;
  const auto run = run_perturbation(sc.visma.tuning, sc, s.seed, o);
  if (run.metrics.status == RunStatus::kConstraintViolation) {
    std::fprintf(stderr, "tuning violates the constraints: %s\n", run.metrics.detail.c_str());
    return kExitConfig;
  }
  if (run.metrics.status == RunStatus::kNoSteadyState || run.metrics.status == RunStatus::kSimulationFailure) {
    std::fprintf(stderr, "simulation failed: %s\n", run.metrics.detail.c_str());
    return kExitSolver;
  }
  auto csv = open_output(c, "trajectory.csv");
  write_trajectory_csv(csv, *run.trajectory);
  const auto e = cost(run.metrics, sc.weights, sc.visma.tuning);
  const auto line = metrics_line(run.metrics, e);
  std::puts(line.c_str());
  auto summary = open_output(c, "metrics.txt");
  summary << line << '\n';
  return kExitOk;
}

int cmd_optimize(const Shared& s) {
  auto c = prepare("optimize", s);
  if (s.alpha.size() != s.beta.size() && !(s.alpha.size() <= 1 && s.beta.size() <= 1)) {
    throw UsageError("--alpha and --beta need the same number of values");
  }
  const std::size_t n = std::max<std::size_t>(1, std::max(s.alpha.size(), s.beta.size()));
  std::vector<ResultRow> rows;
  for (std::size_t k = 0; k < n; ++k) {
    auto sc = c.scenario;
    if (!s.phi.empty()) sc.tempering.initial = sc.visma.tuning;
    if (k < s.alpha.size()) sc.weights.alpha = s.alpha[k];
    if (k < s.beta.size()) sc.weights.beta = s.beta[k];
    auto res = run_tempering(make_objective(sc), sc.tempering);
    auto trace = open_output(c, fmt::format("ladder_trace_{}.csv", k + 1));
    trace << fmt::format("# alpha: {:.17g}\n# beta: {:.17g}\n", sc.weights.alpha, sc.weights.beta);
    write_ladder_trace_csv(trace, res.trace);
    rows.push_back({static_cast<int>(k + 1), res.phi_min, res.best, sc.weights});
    std::fprintf(stderr, "row %zu: %ld evaluations, %ld/%ld swaps accepted\n", k + 1, res.evaluations,
                 res.swaps_accepted, res.swaps_attempted);
  }
  auto csv = open_output(c, "results.csv");
  write_results_csv(csv, rows);
  const auto table = results_table(rows);
  std::fputs(table.c_str(), stdout);
  auto txt = open_output(c, "results.txt");
  txt << table;
  return kExitOk;
}

// "lo:hi:n" with n >= 2 points, inclusive.
std::vector<double> parse_range(const std::string& text) {
  double lo = 0.0;
  double hi = 0.0;
  int n = 0;
  char extra = 0;
  if (std::sscanf(text.c_str(), "%lf:%lf:%d%c", &lo, &hi, &n, &extra) != 3 || n < 2 || !(hi > lo)) {
    throw UsageError(fmt::format("bad range '{}', expected lo:hi:n with lo < hi and n >= 2", text));
  }
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

int cmd_landscape(Shared s, const std::string& param, const std::string& range) {
  const auto index = tuning_index(param);
  if (!index) throw UsageError(fmt::format("unknown parameter '{}', expected J, k_d, T_d or K_I", param));
  // Default slice on the built-in first scenario: T_d = 0.6, k_d = 2.6e-4,
  // K_I = 1060 under the weights alpha = 0.07, beta = 2.7.
  if (s.phi.empty() && s.config.empty() && s.scenario == 1) {
    s.phi = {90.0, 2.6e-4, 0.6, 1060.0};
    if (s.alpha.empty()) s.alpha = {0.07};
    if (s.beta.empty()) s.beta = {2.7};
  }
  auto c = prepare("landscape", s);
  c.manifest.fields.emplace_back("scan", fmt::format("{} {}", param, range));
  const auto values = parse_range(range);
  const auto points = scan_parameter(c.scenario, c.scenario.visma.tuning, *index, values, s.seed, s.workers);
  auto csv = open_output(c, "landscape.csv");
  write_landscape_csv(csv, param, points);
  int rejected = 0;
  for (const auto& p : points) rejected += p.energy.is_rejected();
  std::printf("%zu points, %d rejected\n", points.size(), rejected);
  return kExitOk;
}

int cmd_errors(const Shared& s, int runs) {
  if (runs < 1) throw UsageError("--runs must be at least 1");
  auto c = prepare("errors", s);
  c.manifest.fields.emplace_back("runs", std::to_string(runs));
  const auto& sc = c.scenario;
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(runs));
  std::seed_seq seq{s.seed};
  std::vector<std::uint32_t> raw(seeds.size() * 2);
  seq.generate(raw.begin(), raw.end());
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = (std::uint64_t{raw[2 * i]} << 32) | raw[2 * i + 1];

  std::vector<TransientMetrics> metrics(seeds.size());
  std::vector<Energy> energies(seeds.size());
  parallel_for(runs, resolve_workers(s.workers), [&](int i) {
    const auto k = static_cast<std::size_t>(i);
    metrics[k] = run_perturbation(sc.visma.tuning, sc, seeds[k]).metrics;
    energies[k] = cost(metrics[k], sc.weights, sc.visma.tuning);
  });
  if (metrics.front().status == RunStatus::kConstraintViolation) {
    std::fprintf(stderr, "tuning violates the constraints: %s\n", metrics.front().detail.c_str());
    return kExitConfig;
  }

  auto csv = open_output(c, "errors.csv");
  csv << "run,seed,status,E,t_final,delta_f,delta_V\n";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto& m = metrics[i];
    csv << fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g}\n", i + 1, seeds[i], to_string(m.status),
                       energies[i].is_rejected() ? "REJECTED" : fmt::format("{:.17g}", energies[i].value()),
                       m.t_final, m.delta_f_peak, m.delta_V_peak);
  }
  const auto st = summarize_energies(energies);
  const int finite = st.n_runs - st.n_rejected;
  std::string line = fmt::format("runs={} rejected={}", st.n_runs, st.n_rejected);
  if (finite > 0) {
    line += fmt::format(" mean={:.6g} stderr={} min={:.6g} max={:.6g}", st.mean,
                        st.std_error ? fmt::format("{:.3g}", *st.std_error) : "undefined", st.min, st.max);
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (energies[i].is_rejected()) line += fmt::format("\n  run {} rejected: {}", i + 1, to_string(metrics[i].status));
  }
  std::puts(line.c_str());
  auto summary = open_output(c, "errors.txt");
  summary << line << '\n';
  return kExitOk;
}

int cmd_dump(const Shared& s) {
  const auto sc = s.config.empty() ? load_builtin_scenario(s.scenario) : load_scenario_file(s.config);
  if (s.out == "-" || s.out == ".") {
    std::fputs(serialize(sc).c_str(), stdout);
  } else {
    std::ofstream f(s.out);
    if (!f) throw ConfigError(fmt::format("cannot write '{}'", s.out));
    f << serialize(sc);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VISMA microgrid simulator and Parallel Tempering tuner"};
  app.require_subcommand(1);
  app.fallthrough();
  Shared s;
  app.add_option("--config", s.config, "JSON configuration file (overrides --scenario)");
  app.add_option("--scenario", s.scenario, "built-in scenario")->check(CLI::IsMember({1, 2}));
  app.add_option("--seed", s.seed, "master seed");
  app.add_option("--out", s.out, "output directory (dump-scenario: output file)");
  app.add_option("--workers", s.workers, "worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
  app.add_option("--alpha", s.alpha, "inertia weight; optimize accepts a list")->delimiter(',');
  app.add_option("--beta", s.beta, "peak weight; optimize accepts a list")->delimiter(',');
  app.add_option("--delta-f", s.delta_f, "reference frequency deviation [Hz]");
  app.add_option("--delta-v", s.delta_V, "reference voltage deviation [V]");
  app.add_option("--swaps", s.swaps, "rounds per optimisation phase")->check(CLI::NonNegativeNumber);
  app.add_option("--rperc", s.rperc, "proposal width: one value, or coarse,fine")->delimiter(',')->expected(1, 2);
  app.add_option("--rtol", s.rtol, "integrator relative tolerance");
  app.add_option("--atol", s.atol, "integrator absolute tolerance");
  app.add_option("--ic-noise", s.ic_noise, "relative standard deviation of the initial-state noise");
  app.add_option("--phi", s.phi, "machine tuning J,k_d,T_d,K_I")->delimiter(',')->expected(4);

  auto* steady = app.add_subcommand("steady", "steady states before and after the load step");
  bool horizon = false;
  auto* simulate = app.add_subcommand("simulate", "one transient: trajectory CSV and metrics");
  simulate->add_flag("--horizon", horizon, "keep integrating to t_max after relaxation");
  auto* optimize = app.add_subcommand("optimize", "two-phase Parallel Tempering, one row per (alpha, beta)");
  std::string param = "J";
  std::string range = "5:150:146";
  auto* landscape = app.add_subcommand("landscape", "energy along one tuning parameter");
  landscape->add_option("--param", param, "J, k_d, T_d or K_I");
  landscape->add_option("--range", range, "lo:hi:n");
  int runs = 50;
  auto* errors = app.add_subcommand("errors", "spread of E over initial-condition noise seeds");
  errors->add_option("--runs", runs, "number of runs");
  auto* dump = app.add_subcommand("dump-scenario", "print a configuration as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*steady) return cmd_steady(s);
    if (*simulate) return cmd_simulate(s, horizon);
    if (*optimize) return cmd_optimize(s);
    if (*landscape) return cmd_landscape(s, param, range);
    if (*errors) return cmd_errors(s, runs);
    if (*dump) return cmd_dump(s);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitConfig;
  } catch (const InfeasibleStartError& e) {
    std::fprintf(stderr, "infeasible optimisation: %s\n", e.what());
    return kExitInfeasible;
  } catch (const NoSteadyStateError& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return kExitSolver;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return kExitSolver;
  }
  return kExitOk;
}
