#pragma once

#include "choicelab/data.hpp"
#include "choicelab/forest.hpp"
#include "choicelab/nn.hpp"
#include "choicelab/repr.hpp"
#include "choicelab/sampler.hpp"

#include <string>
#include <vector>

namespace choicelab {

enum class ModelKind {
  Rf,
  Mlp,
  Beh2vecId,
  Beh2vecDemo,
  Beh2vecText,
  BehavioralHmc,
  BehavioralMap,
};

enum class InputSet { G, GUserId, GDemo, GText };  // rf / mlp input variants

std::string to_string(ModelKind kind);
std::string to_string(InputSet inputs);
ModelKind model_kind_from(const std::string& name);

struct ExperimentConfig {
  ModelKind model = ModelKind::Mlp;
  InputSet inputs = InputSet::G;
  std::string choices_path;
  std::string participants_path;
  std::string vectors_path;
  std::string schema_path;
  std::string out_dir;
  SplitSpec split;
  TrainConfig train;
  HmcConfig hmc;
  MapConfig map;
  ForestConfig forest;

  static ExperimentConfig load(const std::string& path);
  std::string canonical_json() const;
  std::string hash() const;  // FNV-1a of the canonical form
  std::string model_name() const;
};

struct MetricsReport {
  std::string model;
  double accuracy_all = 0.0;
  double accuracy_gains = 0.0;
  double accuracy_losses = 0.0;
  long n_all = 0;
  long n_gains = 0;
  long n_losses = 0;
  long correct_all = 0;
  long correct_gains = 0;
  long correct_losses = 0;
  std::string config_hash;
  bool skipped = false;
  std::string note;
};

// Threshold 0.5; exact 0.5 predicts Option2.
MetricsReport evaluate(const std::vector<double>& probabilities,
                       const std::vector<ChoiceRecord>& records);

// Count-weighted combination; keeps the accuracy bookkeeping identity.
MetricsReport combine(const std::vector<MetricsReport>& folds);

struct AgentSpec {
  int n_users = 100;
  GroupPrior prior;
  std::vector<GambleScenario> gambles;  // shared across agents
  std::uint64_t seed = 0;
};

struct SimResult {
  Dataset dataset;
  std::vector<std::string> user_ids;
  std::vector<SVParams> truth;
};

// Half gain and half loss trials; outcomes in {5,10,20} (negated for loss
// trials), probabilities in {0.25, 0.5, 1.0}, recipients drawn per option.
std::vector<GambleScenario> design_space_gambles(int n, std::uint64_t seed);

// Agents drawn from the group prior, choices Bernoulli(choice_prob); also
// fills in synthetic demographics and text tokens so every model kind runs.
SimResult simulate_agents(const AgentSpec& spec);

enum class ReportFormat { Csv, Markdown };

// Rows sorted by model name; byte-stable for identical inputs.
std::string emit_report(std::vector<MetricsReport> reports, ReportFormat format);
void emit_report_file(const std::string& path, std::vector<MetricsReport> reports,
                      ReportFormat format);

// Full protocol: split, train/fit, evaluate on both val/test fold
// assignments, average, write artifacts to the run directory. Partial
// artifacts are removed on failure.
MetricsReport run_experiment(const ExperimentConfig& config);

}  // namespace choicelab
