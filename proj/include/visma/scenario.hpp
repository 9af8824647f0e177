// Perturbation scenarios: the full configuration of one load-step study,
// the two built-in scenarios, validation and the JSON configuration format.
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "visma/devices.hpp"
#include "visma/metrics.hpp"
#include "visma/network.hpp"
#include "visma/tempering.hpp"

namespace visma {

struct Bands {
  double f_low = 49.8;   // Hz
  double f_high = 50.2;  // Hz
  double V_low = 207.0;  // V
  double V_high = 253.0; // V
};

struct SimulationSettings {
  double t0 = 1.0;            // s, time of the load step
  double t_max = 120.0;       // s, horizon
  double relax_band = 1e-3;   // Hz
  double settle_window = 1.0; // s after t0; devices that never leave the band count as relaxed after it
  double ic_noise = 1e-5;     // relative standard deviation of the initial-condition noise
  double rtol = 1e-7;
  double atol = 1e-9;
  double sample_dt = 1e-3;    // s
};

struct ScenarioConfig {
  int id = 0;  // 1 or 2 for the built-ins, 0 otherwise
  std::string name;
  NetworkConfig network;
  VismaParams visma;
  std::vector<InverterParams> inverters;
  double P_load_before = 0.0;  // W
  double P_load_after = 0.0;   // W
  double Q_load = 0.0;         // var
  Bands bands;
  SimulationSettings sim;
  CostWeights weights;
  LadderConfig tempering;

  MicrogridModel model() const { return MicrogridModel(network, visma, inverters); }
  double max_inverter_T() const;
};

ScenarioConfig load_builtin_scenario(int id);

// Human-readable list of every violated invariant; empty when valid.
std::vector<std::string> validate(const ScenarioConfig& scenario);

nlohmann::json to_json(const ScenarioConfig& scenario);
ScenarioConfig scenario_from_json(const nlohmann::json& j);

std::string serialize(const ScenarioConfig& scenario);
ScenarioConfig parse_scenario(std::string_view text);
ScenarioConfig load_scenario_file(const std::string& path);

// Stable 64-bit FNV-1a digest of the serialized configuration.
std::string config_hash(const ScenarioConfig& scenario);

}  // namespace visma
