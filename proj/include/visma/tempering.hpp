// Parallel Tempering (replica exchange Monte Carlo) over the machine tuning
// (J, k_d, T_d, K_I).
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "visma/devices.hpp"
#include "visma/metrics.hpp"

namespace visma {

class InfeasibleStartError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

struct Evaluation {
  Energy energy = Energy::rejected();
  CostBreakdown breakdown;
};

// `feasible` is checked before `evaluate`; infeasible proposals never reach
// the simulator. `evaluate` may throw, which counts as a rejected energy.
struct Objective {
  std::function<bool(const VismaTuning&)> feasible;
  std::function<Evaluation(const VismaTuning&, std::uint64_t seed)> evaluate;
};

std::vector<double> default_temperatures();

struct LadderConfig {
  std::vector<double> temperatures = default_temperatures();
  int rounds_coarse = 200;
  int rounds_fine = 200;
  int sweeps_per_round = 2;
  int iterations_per_sweep = 8;  // 2 per tuned parameter
  int swap_attempts = 0;         // per round; 0 means ladder size - 1
  double r_perc_coarse = 0.8;
  double r_perc_fine = 0.4;
  std::optional<VismaTuning> initial;
  std::uint64_t seed = 1;
  int workers = 0;  // 0: hardware concurrency
};

struct Replica {
  double theta = 1.0;
  VismaTuning phi;
  Evaluation eval;
  Rng rng;
};

// Metropolis rule min{1, exp(-(E2 - E1)/theta)}. A rejected candidate is
// never accepted; a finite candidate always replaces a rejected current state.
bool metropolis_accept(const Energy& e1, const Energy& e2, double theta, Rng& rng);

// Scales one uniformly chosen parameter by |1 + r_perc * r|, r ~ U[-1, 1].
VismaTuning propose(const VismaTuning& phi, double r_perc, Rng& rng);

// Multiplier used by propose; exposed for tests.
double proposal_factor(double r_perc, double r);

struct SweepStats {
  int proposals = 0;
  int accepted = 0;
  int infeasible = 0;
  int failed = 0;
};

SweepStats sweep(Replica& replica, const Objective& objective, double r_perc, int iterations);

// Exchange attempt between ladder slots k and k+1 (zero-based, k in
// [0, n-2]) with probability min{1, exp((1/theta_k - 1/theta_k+1)(E_k - E_k+1))}.
// Configurations move, temperatures stay with their slots.
bool swap_attempt(std::vector<Replica>& ladder, int k, Rng& rng);

struct ReplicaRecord {
  double theta;
  VismaTuning phi;
  Energy energy;
};

struct RoundRecord {
  int phase;  // 1 coarse, 2 fine
  int round;
  std::vector<ReplicaRecord> replicas;
  Energy best;
};

struct TemperingResult {
  VismaTuning phi_min;
  Evaluation best;
  std::vector<RoundRecord> trace;
  long evaluations = 0;
  long accepted = 0;
  long swaps_accepted = 0;
  long swaps_attempted = 0;
};

// Called after the sweeps and after the swaps of every round.
using RoundObserver =
    std::function<void(int phase, int round, const std::vector<Replica>& before, const std::vector<Replica>& after)>;

// Two-phase run: rounds_coarse rounds with r_perc_coarse from `initial`,
// then rounds_fine rounds with r_perc_fine restarted from the best tuning.
// Each round does sweeps_per_round sweeps per replica followed by the swap
// attempts. Returns the best evaluation seen over both phases.
TemperingResult run_tempering(const Objective& objective, const LadderConfig& config,
                              const RoundObserver& observer = {});

}  // namespace visma
