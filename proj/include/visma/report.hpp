// Output formats: provenance headers, CSV writers and the optimisation
// results table.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "visma/scenario.hpp"
#include "visma/sim.hpp"
#include "visma/tempering.hpp"

namespace visma {

inline constexpr int kCsvSchemaVersion = 1;

struct Manifest {
  std::string command;
  std::string config;  // file path, or "builtin:<id>"
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> fields;
};

Manifest make_manifest(std::string command, std::string config, std::uint64_t seed, const ScenarioConfig& scenario);

// One "# key: value" line per entry, schema version first.
void write_manifest(std::ostream& out, const Manifest& manifest);

// 0..3 for J, k_d, T_d, K_I; nullopt for anything else.
std::optional<int> tuning_index(std::string_view name);
const char* tuning_name(int index);

// Columns: phase, round, slot, theta, J, k_d, T_d, K_I, E.
void write_ladder_trace_csv(std::ostream& out, const std::vector<RoundRecord>& trace);

struct ResultRow {
  int index = 1;
  VismaTuning phi;
  Evaluation eval;
  CostWeights weights;
};

// Rounds to `digits` significant digits; "REJECTED" style markers are the
// caller's business.
std::string format_sig(double value, int digits = 4);

// Aligned text table: #, J, k_d, T_d, K_I, E, alpha, beta, J+k_d, Sigma,
// t_final, alpha(J+k_d), Sigma/beta.
std::string results_table(const std::vector<ResultRow>& rows);
void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);

// Columns: param, value, status, E, t_final, delta_f, delta_V.
void write_landscape_csv(std::ostream& out, std::string_view param, const std::vector<ScanPoint>& points);

struct EnergyStatistics {
  int n_runs = 0;
  int n_rejected = 0;
  double mean = 0.0;
  std::optional<double> std_error;  // undefined below two finite runs
  double min = 0.0;
  double max = 0.0;
};

EnergyStatistics summarize_energies(const std::vector<Energy>& energies);

}  // namespace visma
