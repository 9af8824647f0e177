#include "visma/report.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

namespace visma {

Manifest make_manifest(std::string command, std::string config, std::uint64_t seed, const ScenarioConfig& scenario) {
  Manifest m;
  m.command = std::move(command);
  m.config = std::move(config);
  m.seed = seed;
  m.config_hash = config_hash(scenario);
  return m;
}

void write_manifest(std::ostream& out, const Manifest& m) {
  out << fmt::format("# schema: {}\n", kCsvSchemaVersion);
  out << fmt::format("# command: {}\n", m.command);
  out << fmt::format("# config: {}\n", m.config);
  out << fmt::format("# config_hash: {}\n", m.config_hash);
  out << fmt::format("# seed: {}\n", m.seed);
  for (const auto& [key, value] : m.fields) out << fmt::format("# {}: {}\n", key, value);
}

std::optional<int> tuning_index(std::string_view name) {
  for (int i = 0; i < VismaTuning::kSize; ++i) {
    if (name == tuning_name(i)) return i;
  }
  return std::nullopt;
}

const char* tuning_name(int index) {
  static constexpr const char* kNames[] = {"J", "k_d", "T_d", "K_I"};
  return index >= 0 && index < VismaTuning::kSize ? kNames[index] : "?";
}

namespace {

std::string energy_csv(const Energy& e) { return e.is_rejected() ? "REJECTED" : fmt::format("{:.17g}", e.value()); }

}  // namespace

void write_ladder_trace_csv(std::ostream& out, const std::vector<RoundRecord>& trace) {
  out << "phase,round,slot,theta,J,k_d,T_d,K_I,E\n";
  for (const auto& r : trace) {
    for (std::size_t k = 0; k < r.replicas.size(); ++k) {
      const auto& rep = r.replicas[k];
      out << fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", r.phase, r.round, k, rep.theta,
                         rep.phi.J, rep.phi.k_d, rep.phi.T_d, rep.phi.K_I, energy_csv(rep.energy));
    }
  }
}

std::string format_sig(double value, int digits) {
  if (!std::isfinite(value)) return fmt::format("{}", value);
  if (value == 0.0) return "0";
  const int exponent = static_cast<int>(std::floor(std::log10(std::abs(value))));
  if (exponent < -3 || exponent >= 6) return fmt::format("{:.{}e}", value, digits - 1);
  return fmt::format("{:.{}f}", value, std::max(0, digits - 1 - exponent));
}

namespace {

std::vector<std::string> row_cells(const ResultRow& row) {
  const auto& p = row.phi;
  const auto& b = row.eval.breakdown;
  std::vector<std::string> c{std::to_string(row.index), format_sig(p.J),       format_sig(p.k_d),
                             format_sig(p.T_d),         format_sig(p.K_I),     "",
                             format_sig(row.weights.alpha), format_sig(row.weights.beta)};
  if (row.eval.energy.is_rejected()) {
    c[5] = "REJECTED";
    for (int i = 0; i < 5; ++i) c.emplace_back("-");
  } else {
    c[5] = format_sig(row.eval.energy.value());
    for (double v : {b.inertia, b.sigma, b.t_final, b.inertia_term, b.sigma_term}) c.push_back(format_sig(v));
  }
  return c;
}

}  // namespace

std::string results_table(const std::vector<ResultRow>& rows) {
  std::vector<std::vector<std::string>> cells{
      {"#", "J", "k_d", "T_d", "K_I", "E", "alpha", "beta", "J+k_d", "Sigma", "t_final", "alpha(J+k_d)", "Sigma/beta"}};
  for (const auto& r : rows) cells.push_back(row_cells(r));
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      out += fmt::format("{}{:>{}}", i ? "  " : "", cells[r][i], width[i]);
    }
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out += std::string(total - 2, '-') + '\n';
    }
  }
  return out;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "index,J,k_d,T_d,K_I,E,alpha,beta,J_plus_k_d,Sigma,t_final,alpha_term,Sigma_over_beta\n";
  for (const auto& r : rows) {
    const auto& p = r.phi;
    const auto& b = r.eval.breakdown;
    std::string line = fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g}", r.index, p.J, p.k_d, p.T_d,
                                   p.K_I, energy_csv(r.eval.energy), r.weights.alpha, r.weights.beta);
    if (r.eval.energy.is_rejected()) {
      line += ",,,,,";
    } else {
      line += fmt::format(",{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}", b.inertia, b.sigma, b.t_final, b.inertia_term,
                          b.sigma_term);
    }
    out << line << '\n';
  }
}

void write_landscape_csv(std::ostream& out, std::string_view param, const std::vector<ScanPoint>& points) {
  out << "param,value,status,E,t_final,delta_f,delta_V\n";
  for (const auto& p : points) {
    const bool ok = !p.energy.is_rejected();
    out << fmt::format("{},{:.17g},{},{},{},{},{}\n", param, p.value, ok ? "OK" : to_string(p.metrics.status),
                       energy_csv(p.energy), ok ? fmt::format("{:.17g}", p.metrics.t_final) : "",
                       ok ? fmt::format("{:.17g}", p.metrics.delta_f_peak) : "",
                       ok ? fmt::format("{:.17g}", p.metrics.delta_V_peak) : "");
  }
}

EnergyStatistics summarize_energies(const std::vector<Energy>& energies) {
  EnergyStatistics s;
  s.n_runs = static_cast<int>(energies.size());
  std::vector<double> v;
  for (const auto& e : energies) {
    if (e.is_rejected()) {
      ++s.n_rejected;
    } else {
      v.push_back(e.value());
    }
  }
  if (v.empty()) return s;
  const auto n = static_cast<double>(v.size());
  // Offsets from the first value keep identical runs at exactly zero spread.
  double offset = 0.0;
  for (double x : v) offset += x - v.front();
  s.mean = v.front() + offset / n;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return s;
}

}  // namespace visma
