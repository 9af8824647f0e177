#include "visma/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace visma {

namespace {

constexpr double kLineInductance = 1.514e-3;    // H
constexpr double kStatorInductance = 42.0e-3;   // H
constexpr double kStatorResistance = 0.3;       // ohm
constexpr double kFilterInductance = 1.8e-3;    // H
constexpr double kVismaVoltageDelay = 0.01;     // s
constexpr double kInverterFilterT = 0.5;        // s
constexpr double kVoltageGain = 10.0;           // V/V
constexpr double kAntiWindup = 1.0;             // 1/s

// Radial star: every device feeds the load bus through its coupling element
// and one line.
NetworkConfig star_network(int n_devices) {
  NetworkConfig net;
  net.n_nodes = n_devices + 1;
  const int load = n_devices;
  for (int i = 0; i < n_devices; ++i) {
    net.branches.push_back({i, load, 0.0, kLineInductance});
    if (i == 0) {
      net.couplings.push_back({0, CouplingKind::kStator, kStatorResistance, kStatorInductance});
    } else {
      net.couplings.push_back({i, CouplingKind::kInverter, 0.0, kFilterInductance});
    }
  }
  return net;
}

InverterParams droop_inverter(double S, double P_nom) {
  const auto k = droop_coefficients(S);
  return {kInverterFilterT, k.k_P, k.k_Q, P_nom, 0.0, S};
}

VismaParams machine(double S, double P_nom, VismaTuning tuning) {
  VismaParams p;
  p.tuning = tuning;
  p.k_V = kVoltageGain;
  p.T_inv = kVismaVoltageDelay;
  p.K_awu = kAntiWindup;
  p.k_P = droop_coefficients(S).k_P;
  p.P_nom = P_nom;
  p.S_rated = S;
  return p;
}

bool close_rel(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)); }

}  // namespace

double ScenarioConfig::max_inverter_T() const {
  double t = 0.0;
  for (const auto& inv : inverters) t = std::max(t, inv.T);
  return t;
}

ScenarioConfig load_builtin_scenario(int id) {
  ScenarioConfig s;
  s.id = id;
  s.network = star_network(3);
  s.tempering.initial = VismaTuning{15.0, 1e-4, 0.6, 500.0};
  if (id == 1) {
    s.name = "symmetric nominal power, 1.5 kW -> 4.5 kW load step";
    s.visma = machine(4000.0, 500.0, {5.0895, 1.1857e-4, 0.5029, 1054.56});
    s.inverters = {droop_inverter(4000.0, 500.0), droop_inverter(4000.0, 500.0)};
    s.P_load_before = 1500.0;
    s.P_load_after = 4500.0;
    s.weights = {7.0, 0.027, 0.05, 1e40};
  } else if (id == 2) {
    s.name = "different nominal powers, 3 kW -> 10 kW load step";
    s.visma = machine(9000.0, 1000.0, {11.4986, 1.1595e-4, 0.5035, 2379.26});
    s.inverters = {droop_inverter(3000.0, 1500.0), droop_inverter(1000.0, 500.0)};
    s.P_load_before = 3000.0;
    s.P_load_after = 10000.0;
    s.weights = {1.7, 0.045, 0.2, 1e40};
  } else {
    throw ConfigError(fmt::format("unknown scenario id {}", id));
  }
  return s;
}

std::vector<std::string> validate(const ScenarioConfig& s) {
  std::vector<std::string> v;
  auto require = [&](bool ok, std::string what) {
    if (!ok) v.push_back(std::move(what));
  };

  try {
    (void)s.model();
  } catch (const std::exception& e) {
    v.push_back(fmt::format("network: {}", e.what()));
  }

  const auto& m = s.visma;
  require(m.S_rated > 0.0, "visma: S_rated must be positive");
  require(m.T_inv > 0.0, "visma: T_inv must be positive");
  require(m.k_V >= 0.0, "visma: k_V must be non-negative");
  require(m.K_awu >= 0.0, "visma: K_awu must be non-negative");
  require(m.tuning.J > 0.0, "visma: J must be positive");
  require(m.tuning.k_d > 0.0, "visma: k_d must be positive");
  require(m.tuning.T_d > 0.0, "visma: T_d must be positive");
  require(m.tuning.K_I > 0.0, "visma: K_I must be positive");
  if (m.S_rated > 0.0) {
    require(close_rel(m.k_P, droop_coefficients(m.S_rated).k_P, 1e-9),
            fmt::format("visma: droop-coefficient mismatch, k_P = {} but 0.4*pi/S = {}", m.k_P,
                        droop_coefficients(m.S_rated).k_P));
  }
  for (std::size_t i = 0; i < s.inverters.size(); ++i) {
    const auto& inv = s.inverters[i];
    const auto tag = fmt::format("inverter {}", i + 2);
    require(inv.T > 0.0, tag + ": T must be positive");
    require(inv.k_P > 0.0 && inv.k_Q > 0.0, tag + ": droop gains must be positive");
    require(inv.S_rated > 0.0, tag + ": S_rated must be positive");
    if (inv.S_rated > 0.0) {
      const auto k = droop_coefficients(inv.S_rated);
      require(close_rel(inv.k_P, k.k_P, 1e-9) && close_rel(inv.k_Q, k.k_Q, 1e-9),
              fmt::format("{}: droop-coefficient mismatch (k_P = {}, k_Q = {}; expected {}, {})", tag, inv.k_P,
                          inv.k_Q, k.k_P, k.k_Q));
    }
  }

  require(std::isfinite(s.P_load_before) && std::isfinite(s.P_load_after) && std::isfinite(s.Q_load),
          "scenario: loads must be finite");
  require(s.bands.f_low < kFrequencyNom && kFrequencyNom < s.bands.f_high, "bands: need f_low < 50 Hz < f_high");
  require(s.bands.V_low < kVoltageNom && kVoltageNom < s.bands.V_high, "bands: need V_low < 230 V < V_high");
  require(s.sim.t0 >= 0.0 && s.sim.t0 < s.sim.t_max, "scenario: need 0 <= t0 < t_max");
  require(s.sim.relax_band > 0.0, "scenario: relax_band must be positive");
  require(s.sim.settle_window >= 0.0, "scenario: settle_window must be non-negative");
  require(s.sim.ic_noise >= 0.0, "scenario: ic_noise must be non-negative");
  require(s.sim.rtol > 0.0 && s.sim.atol > 0.0, "scenario: tolerances must be positive");
  require(s.sim.sample_dt > 0.0, "scenario: sample_dt must be positive");

  const auto& w = s.weights;
  require(w.alpha > 0.0 && w.beta > 0.0 && w.delta_f > 0.0 && w.delta_V > 0.0, "weights: all must be positive");

  const auto& t = s.tempering;
  require(!t.temperatures.empty(), "tempering: empty temperature ladder");
  require(std::all_of(t.temperatures.begin(), t.temperatures.end(), [](double x) { return x > 0.0; }),
          "tempering: temperatures must be positive");
  require(std::adjacent_find(t.temperatures.begin(), t.temperatures.end(), std::greater_equal<>()) ==
              t.temperatures.end(),
          "tempering: temperatures must be strictly increasing");
  require(t.rounds_coarse >= 0 && t.rounds_fine >= 0 && t.sweeps_per_round >= 1 && t.iterations_per_sweep >= 1,
          "tempering: round and sweep counts must be positive");
  require(t.r_perc_coarse > 0.0 && t.r_perc_fine > 0.0, "tempering: r_perc must be positive");
  if (t.initial) require(t.initial->positive(), "tempering: initial tuning must be positive");
  return v;
}

namespace {

nlohmann::json tuning_json(const VismaTuning& t) {
  return {{"J", t.J}, {"k_d", t.k_d}, {"T_d", t.T_d}, {"K_I", t.K_I}};
}

VismaTuning tuning_from(const nlohmann::json& j) {
  return {j.at("J").get<double>(), j.at("k_d").get<double>(), j.at("T_d").get<double>(), j.at("K_I").get<double>()};
}

const DeviceCoupling* find_coupling(const NetworkConfig& net, int node) {
  for (const auto& c : net.couplings) {
    if (c.node == node) return &c;
  }
  return nullptr;
}

}  // namespace

nlohmann::json to_json(const ScenarioConfig& s) {
  using nlohmann::json;
  json lines = json::array();
  for (const auto& b : s.network.branches) {
    lines.push_back({{"from", b.from + 1}, {"to", b.to + 1}, {"R", b.resistance}, {"L", b.inductance}});
  }
  json net = {{"nodes", s.network.n_nodes}, {"omega_eval", s.network.omega_eval}, {"lines", lines}};
  if (!s.network.shunts.empty()) {
    json shunts = json::array();
    for (const auto& y : s.network.shunts) shunts.push_back({y.real(), y.imag()});
    net["shunts"] = shunts;
  }

  const auto* stator = find_coupling(s.network, 0);
  json visma = {{"S_rated", s.visma.S_rated}, {"P_nom", s.visma.P_nom}, {"k_P", s.visma.k_P},
                {"T_inv", s.visma.T_inv},     {"k_V", s.visma.k_V},     {"K_awu", s.visma.K_awu},
                {"R_S", stator ? stator->resistance : 0.0},
                {"L_S", stator ? stator->inductance : 0.0},
                {"tuning", tuning_json(s.visma.tuning)}};
  json inverters = json::array();
  for (std::size_t i = 0; i < s.inverters.size(); ++i) {
    const auto& inv = s.inverters[i];
    const auto* c = find_coupling(s.network, static_cast<int>(i) + 1);
    inverters.push_back({{"S_rated", inv.S_rated},
                         {"P_nom", inv.P_nom},
                         {"Q_nom", inv.Q_nom},
                         {"k_P", inv.k_P},
                         {"k_Q", inv.k_Q},
                         {"T", inv.T},
                         {"L_C", c ? c->inductance : 0.0}});
  }

  json scenario = {{"P_load_before", s.P_load_before},
                   {"P_load_after", s.P_load_after},
                   {"Q_load", s.Q_load},
                   {"t0", s.sim.t0},
                   {"t_max", s.sim.t_max},
                   {"relax_band", s.sim.relax_band},
                   {"settle_window", s.sim.settle_window},
                   {"ic_noise", s.sim.ic_noise},
                   {"rtol", s.sim.rtol},
                   {"atol", s.sim.atol},
                   {"sample_dt", s.sim.sample_dt},
                   {"bands",
                    {{"f_low", s.bands.f_low},
                     {"f_high", s.bands.f_high},
                     {"V_low", s.bands.V_low},
                     {"V_high", s.bands.V_high}}}};

  const auto& t = s.tempering;
  json tempering = {{"temperatures", t.temperatures},
                    {"rounds_coarse", t.rounds_coarse},
                    {"rounds_fine", t.rounds_fine},
                    {"sweeps_per_round", t.sweeps_per_round},
                    {"iterations_per_sweep", t.iterations_per_sweep},
                    {"swap_attempts", t.swap_attempts},
                    {"r_perc_coarse", t.r_perc_coarse},
                    {"r_perc_fine", t.r_perc_fine},
                    {"seed", t.seed},
                    {"workers", t.workers}};
  if (t.initial) tempering["initial"] = tuning_json(*t.initial);

  return {{"id", s.id},
          {"name", s.name},
          {"network", net},
          {"devices", {{"visma", visma}, {"inverters", inverters}}},
          {"scenario", scenario},
          {"weights",
           {{"alpha", s.weights.alpha},
            {"beta", s.weights.beta},
            {"delta_f", s.weights.delta_f},
            {"delta_V", s.weights.delta_V}}},
          {"tempering", tempering}};
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  try {
    ScenarioConfig s;
    s.id = j.value("id", 0);
    s.name = j.value("name", std::string());

    const auto& net = j.at("network");
    s.network.n_nodes = net.at("nodes").get<int>();
    s.network.omega_eval = net.value("omega_eval", kOmegaNom);
    for (const auto& l : net.at("lines")) {
      s.network.branches.push_back(
          {l.at("from").get<int>() - 1, l.at("to").get<int>() - 1, l.value("R", 0.0), l.at("L").get<double>()});
    }
    if (net.contains("shunts")) {
      for (const auto& y : net.at("shunts")) s.network.shunts.emplace_back(y.at(0).get<double>(), y.at(1).get<double>());
    }

    const auto& dev = j.at("devices");
    const auto& vj = dev.at("visma");
    s.visma.S_rated = vj.at("S_rated").get<double>();
    s.visma.P_nom = vj.at("P_nom").get<double>();
    s.visma.k_P = vj.contains("k_P") ? vj.at("k_P").get<double>() : droop_coefficients(s.visma.S_rated).k_P;
    s.visma.T_inv = vj.value("T_inv", kVismaVoltageDelay);
    s.visma.k_V = vj.value("k_V", kVoltageGain);
    s.visma.K_awu = vj.value("K_awu", kAntiWindup);
    s.visma.tuning = tuning_from(vj.at("tuning"));
    s.network.couplings.push_back(
        {0, CouplingKind::kStator, vj.value("R_S", kStatorResistance), vj.value("L_S", kStatorInductance)});

    int node = 1;
    for (const auto& ij : dev.at("inverters")) {
      InverterParams inv;
      inv.S_rated = ij.at("S_rated").get<double>();
      const auto k = inv.S_rated > 0.0 ? droop_coefficients(inv.S_rated) : DroopCoefficients{0.0, 0.0};
      inv.P_nom = ij.at("P_nom").get<double>();
      inv.Q_nom = ij.value("Q_nom", 0.0);
      inv.k_P = ij.value("k_P", k.k_P);
      inv.k_Q = ij.value("k_Q", k.k_Q);
      inv.T = ij.value("T", kInverterFilterT);
      s.inverters.push_back(inv);
      s.network.couplings.push_back({node++, CouplingKind::kInverter, 0.0, ij.value("L_C", kFilterInductance)});
    }

    const auto& sc = j.at("scenario");
    s.P_load_before = sc.at("P_load_before").get<double>();
    s.P_load_after = sc.at("P_load_after").get<double>();
    s.Q_load = sc.value("Q_load", 0.0);
    const SimulationSettings d;
    s.sim.t0 = sc.value("t0", d.t0);
    s.sim.t_max = sc.value("t_max", d.t_max);
    s.sim.relax_band = sc.value("relax_band", d.relax_band);
    s.sim.settle_window = sc.value("settle_window", d.settle_window);
    s.sim.ic_noise = sc.value("ic_noise", d.ic_noise);
    s.sim.rtol = sc.value("rtol", d.rtol);
    s.sim.atol = sc.value("atol", d.atol);
    s.sim.sample_dt = sc.value("sample_dt", d.sample_dt);
    if (sc.contains("bands")) {
      const auto& b = sc.at("bands");
      s.bands.f_low = b.value("f_low", s.bands.f_low);
      s.bands.f_high = b.value("f_high", s.bands.f_high);
      s.bands.V_low = b.value("V_low", s.bands.V_low);
      s.bands.V_high = b.value("V_high", s.bands.V_high);
    }

    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      s.weights.alpha = w.value("alpha", s.weights.alpha);
      s.weights.beta = w.value("beta", s.weights.beta);
      s.weights.delta_f = w.value("delta_f", s.weights.delta_f);
      s.weights.delta_V = w.value("delta_V", s.weights.delta_V);
    }

    if (j.contains("tempering")) {
      const auto& t = j.at("tempering");
      auto& lc = s.tempering;
      lc.temperatures = t.value("temperatures", lc.temperatures);
      lc.rounds_coarse = t.value("rounds_coarse", lc.rounds_coarse);
      lc.rounds_fine = t.value("rounds_fine", lc.rounds_fine);
      lc.sweeps_per_round = t.value("sweeps_per_round", lc.sweeps_per_round);
      lc.iterations_per_sweep = t.value("iterations_per_sweep", lc.iterations_per_sweep);
      lc.swap_attempts = t.value("swap_attempts", lc.swap_attempts);
      lc.r_perc_coarse = t.value("r_perc_coarse", lc.r_perc_coarse);
      lc.r_perc_fine = t.value("r_perc_fine", lc.r_perc_fine);
      lc.seed = t.value("seed", lc.seed);
      lc.workers = t.value("workers", lc.workers);
      if (t.contains("initial")) lc.initial = tuning_from(t.at("initial"));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed configuration: {}", e.what()));
  }
}

std::string serialize(const ScenarioConfig& scenario) { return to_json(scenario).dump(2) + "\n"; }

ScenarioConfig parse_scenario(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("configuration is not valid JSON: {}", e.what()));
  }
  return scenario_from_json(j);
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open configuration file '{}'", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string config_hash(const ScenarioConfig& scenario) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize(scenario)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace visma
