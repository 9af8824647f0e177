#include "visma/tempering.hpp"

#include <algorithm>
#include <cmath>

#include "visma/parallel.hpp"

namespace visma {

std::vector<double> default_temperatures() { return {0.01, 0.02, 0.07, 0.2, 0.5, 1.0, 3.0, 7.0, 20.0, 50.0, 100.0, 1e9}; }

bool metropolis_accept(const Energy& e1, const Energy& e2, double theta, Rng& rng) {
  if (e2.is_rejected()) return false;
  if (e1.is_rejected()) return true;
  const double dE = e2.value() - e1.value();
  if (dE <= 0.0) return true;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < std::exp(-dE / theta);
}

double proposal_factor(double r_perc, double r) { return std::abs(1.0 + r_perc * r); }

VismaTuning propose(const VismaTuning& phi, double r_perc, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, 3);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const int i = pick(rng);
  double m = 0.0;
  while (m == 0.0) m = proposal_factor(r_perc, unit(rng));
  VismaTuning out = phi;
  out[i] *= m;
  return out;
}

namespace {

struct SweepOutcome {
  SweepStats stats;
  VismaTuning best_phi;
  Evaluation best;
};

SweepOutcome sweep_tracked(Replica& replica, const Objective& objective, double r_perc, int iterations) {
  SweepOutcome out;
  for (int it = 0; it < iterations; ++it) {
    const VismaTuning candidate = propose(replica.phi, r_perc, replica.rng);
    ++out.stats.proposals;
    if (!objective.feasible(candidate)) {
      ++out.stats.infeasible;
      continue;
    }
    const std::uint64_t seed = replica.rng();
    Evaluation eval;
    try {
      eval = objective.evaluate(candidate, seed);
    } catch (const std::exception&) {
      eval = Evaluation{};
    }
    if (eval.energy.is_rejected()) {
      ++out.stats.failed;
      continue;
    }
    if (eval.energy < out.best.energy) {
      out.best = eval;
      out.best_phi = candidate;
    }
    if (metropolis_accept(replica.eval.energy, eval.energy, replica.theta, replica.rng)) {
      replica.phi = candidate;
      replica.eval = eval;
      ++out.stats.accepted;
    }
  }
  return out;
}

void validate(const LadderConfig& config) {
  const auto& th = config.temperatures;
  if (th.size() < 2) throw std::invalid_argument("the ladder needs at least two temperatures");
  for (std::size_t i = 0; i < th.size(); ++i) {
    if (!(th[i] > 0.0)) throw std::invalid_argument("temperatures must be positive");
    if (i > 0 && !(th[i] > th[i - 1])) throw std::invalid_argument("temperatures must be strictly increasing");
  }
  if (config.rounds_coarse < 0 || config.rounds_fine < 0 || config.sweeps_per_round < 1 ||
      config.iterations_per_sweep < 1 || config.swap_attempts < 0) {
    throw std::invalid_argument("invalid round structure");
  }
  if (!(config.r_perc_coarse > 0.0) || !(config.r_perc_fine > 0.0)) {
    throw std::invalid_argument("proposal widths must be positive");
  }
  if (!config.initial) throw std::invalid_argument("no initial tuning given");
}

}  // namespace

SweepStats sweep(Replica& replica, const Objective& objective, double r_perc, int iterations) {
  return sweep_tracked(replica, objective, r_perc, iterations).stats;
}

bool swap_attempt(std::vector<Replica>& ladder, int k, Rng& rng) {
  if (k < 0 || k + 1 >= static_cast<int>(ladder.size())) throw std::out_of_range("swap index out of range");
  auto& lo = ladder[static_cast<std::size_t>(k)];
  auto& hi = ladder[static_cast<std::size_t>(k) + 1];
  bool accept;
  if (lo.eval.energy.is_rejected() || hi.eval.energy.is_rejected()) {
    // Only a rejected state climbing the ladder goes through.
    accept = lo.eval.energy.is_rejected() && !hi.eval.energy.is_rejected();
  } else {
    const double exponent = (1.0 / lo.theta - 1.0 / hi.theta) * (lo.eval.energy.value() - hi.eval.energy.value());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    accept = exponent >= 0.0 || u(rng) < std::exp(exponent);
  }
  if (accept) {
    std::swap(lo.phi, hi.phi);
    std::swap(lo.eval, hi.eval);
  }
  return accept;
}

TemperingResult run_tempering(const Objective& objective, const LadderConfig& config, const RoundObserver& observer) {
  validate(config);
  const VismaTuning start = *config.initial;
  if (!objective.feasible(start)) throw InfeasibleStartError("initial tuning violates the constraints");

  const int n = static_cast<int>(config.temperatures.size());
  const int workers = resolve_workers(config.workers);
  const int swaps = config.swap_attempts > 0 ? config.swap_attempts : n - 1;
  const int iterations = config.sweeps_per_round * config.iterations_per_sweep;

  // Stream n drives the swaps, stream n + 1 the initial evaluation.
  auto stream = [&](int index) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(index)};
    return Rng(seq);
  };

  TemperingResult result;
  Rng init_rng = stream(n + 1);
  Evaluation first;
  try {
    first = objective.evaluate(start, init_rng());
  } catch (const std::exception&) {
    first = Evaluation{};
  }
  ++result.evaluations;
  result.phi_min = start;
  result.best = first;

  std::vector<Replica> ladder(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& r = ladder[static_cast<std::size_t>(i)];
    r.theta = config.temperatures[static_cast<std::size_t>(i)];
    r.phi = start;
    r.eval = first;
    r.rng = stream(i);
  }
  Rng swap_rng = stream(n);
  std::uniform_int_distribution<int> pick(0, n - 2);
  std::vector<SweepOutcome> outcomes(static_cast<std::size_t>(n));

  auto run_phase = [&](int phase, int rounds, double r_perc) {
    for (int round = 1; round <= rounds; ++round) {
      parallel_for(n, workers, [&](int i) {
        outcomes[static_cast<std::size_t>(i)] =
            sweep_tracked(ladder[static_cast<std::size_t>(i)], objective, r_perc, iterations);
      });
      for (const auto& o : outcomes) {
        result.evaluations += o.stats.proposals - o.stats.infeasible;
        result.accepted += o.stats.accepted;
        if (o.best.energy < result.best.energy) {
          result.best = o.best;
          result.phi_min = o.best_phi;
        }
      }
      std::vector<Replica> before;
      if (observer) before = ladder;
      for (int s = 0; s < swaps; ++s) {
        ++result.swaps_attempted;
        if (swap_attempt(ladder, pick(swap_rng), swap_rng)) ++result.swaps_accepted;
      }
      if (observer) observer(phase, round, before, ladder);

      RoundRecord rec{phase, round, {}, result.best.energy};
      rec.replicas.reserve(ladder.size());
      for (const auto& r : ladder) rec.replicas.push_back({r.theta, r.phi, r.eval.energy});
      result.trace.push_back(std::move(rec));
    }
  };

  run_phase(1, config.rounds_coarse, config.r_perc_coarse);
  if (result.best.energy.is_rejected()) {
    throw InfeasibleStartError("every replica is still rejected after the coarse phase");
  }
  for (auto& r : ladder) {
    r.phi = result.phi_min;
    r.eval = result.best;
  }
  run_phase(2, config.rounds_fine, config.r_perc_fine);
  return result;
}

}  // namespace visma
