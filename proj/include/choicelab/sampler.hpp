#pragma once

#include "choicelab/prospect.hpp"

#include <functional>
#include <string>
#include <vector>

namespace choicelab {

// log density and (optionally) its gradient at x
using LogDensity = std::function<double(const Vec&, Vec*)>;

struct HmcConfig {
  int chains = 4;
  int iterations = 2000;
  int warmup = 1000;
  double target_accept = 0.90;
  int leapfrog_steps = 16;
  std::uint64_t seed = 0;
  // When set, used verbatim instead of dual-averaging adaptation. Supports
  // reading the reported "step size" as a literal integrator step.
  double fixed_step_size = 0.0;
};

struct ChainSet {
  std::vector<Mat> chains;  // post-warmup draws x dim, one per chain
  std::vector<int> divergences;
  std::vector<double> step_sizes;
  std::vector<double> accept_rates;

  int n_chains() const { return static_cast<int>(chains.size()); }
  Eigen::Index n_draws() const { return chains.empty() ? 0 : chains[0].rows(); }
  Eigen::Index dim() const { return chains.empty() ? 0 : chains[0].cols(); }

  // One chain's draws of one coordinate.
  Vec coordinate(int chain, Eigen::Index coord) const {
    return chains[static_cast<std::size_t>(chain)].col(coord);
  }
};

// Static-trajectory HMC: leapfrog integration with Metropolis correction,
// dual-averaging step-size adaptation to target_accept during warmup, and a
// diagonal mass matrix estimated from mid-warmup draws. Chains are seeded
// seed + chain index and run independently.
ChainSet hmc_sample(const LogDensity& target, const Vec& init,
                    const HmcConfig& config);

struct MapConfig {
  int max_iterations = 20000;
  double grad_tolerance = 1e-6;
  double initial_step = 1.0;
};

struct MapResult {
  Vec x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
};

// Gradient ascent with a doubling/halving backtracking step size.
MapResult map_fit(const LogDensity& target, const Vec& init,
                  const MapConfig& config = {});

// Split-chain potential scale reduction factor. Needs >= 2 chains of
// >= 4 draws; throws DegenerateChains when within-chain variance is zero.
double r_hat(const std::vector<Vec>& chains);

// Autocorrelation-based effective sample size with Geyer initial-positive-
// sequence truncation, combined across chains.
double ess(const std::vector<Vec>& chains);

struct DiagnosticsRow {
  std::string parameter;
  double r_hat = 0.0;
  double ess = 0.0;
};

struct ChainDiagnostics {
  std::vector<DiagnosticsRow> rows;
  int total_divergences = 0;
};

ChainDiagnostics diagnose(const ChainSet& set,
                          const std::function<std::string(Eigen::Index)>& name);

void save_diagnostics(const std::string& path, const ChainDiagnostics& d);

enum class FitMethod { Hmc, Map };

struct BehavioralFit {
  std::vector<std::string> user_ids;
  std::vector<SVParams> params;
  GroupPrior prior;
  ChainDiagnostics diagnostics;  // HMC only
  bool converged = true;         // MAP only
};

// Fits the hierarchical subjective-value model. HMC: posterior mean of the
// raw per-user parameters (then transformed) plus convergence diagnostics.
// MAP: point estimates from the posterior mode.
BehavioralFit fit_behavioral(const Dataset& dataset, FitMethod method,
                             const HmcConfig& hmc_config,
                             const MapConfig& map_config = {});

}  // namespace choicelab
