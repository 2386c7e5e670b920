#pragma once

#include "choicelab/data.hpp"
#include "choicelab/nn.hpp"
#include "choicelab/wordvec.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace choicelab {

enum class NetKind {
  PlainMlp,       // raw inputs straight into the trunk
  IdEmbedding,    // per-user embedding row -> id dense -> trunk
  VectorEncoder,  // fixed per-user vector -> encoder stack -> trunk
};

// Per-component z-score fit on the training split. Constant components get
// std 1 so they pass through unchanged.
struct Standardizer {
  Vec mean;
  Vec std;

  static Standardizer fit(const std::vector<Vec>& values);
  static Standardizer identity(int dim);
  Vec apply(const Vec& x) const;
};

// One architecture for all choice classifiers: an optional per-user path
// (embedding row or encoded vector) concatenated with the standardized
// 6 scenario features, then a dense trunk. The trunk's last layer is linear
// and the sigmoid is applied outside, so the fused cross-entropy gradient
// at the output is exactly (p - y).
struct ChoiceNet {
  NetKind kind = NetKind::PlainMlp;
  EmbeddingTable embedding;  // IdEmbedding only
  DenseStack encoder;        // IdEmbedding + VectorEncoder
  DenseStack trunk;
  Standardizer feature_std;
  Standardizer user_std;  // PlainMlp + VectorEncoder inputs
  bool embedding_only = false;  // freeze everything except embedding rows

  struct Grads {
    std::map<int, Vec> embedding_rows;
    StackGrads encoder;
    StackGrads trunk;
    void zero();
  };

  Grads make_grads() const;
  double predict(const Sample& sample) const;
  double forward_backward(const Sample& sample, Grads& grads);
  void apply_sgd(const Grads& grads, double lr);

  double loss(const Sample& sample) const { return cross_entropy(predict(sample), sample.label); }
  Vec flat_params() const;
  void set_flat_params(const Vec& theta);
  Vec flat_grad(const Sample& sample);

  void save(const std::string& path) const;
  static ChoiceNet load(const std::string& path);
};

// Architectures from the experiment settings; trunk hidden dims are
// [128, 64, 32, 4] in every variant.
ChoiceNet make_beh2vec(const std::vector<std::string>& user_ids,
                       std::uint64_t seed, int embedding_dim = 200);
ChoiceNet make_text_model(std::uint64_t seed, int input_dim = 300);
ChoiceNet make_demo_model(std::uint64_t seed, int input_dim = 11);
ChoiceNet make_plain_mlp(int extra_inputs, std::uint64_t seed);

Sample make_sample(const ChoiceRecord& record);

std::vector<Sample> samples_for_ids(const std::vector<ChoiceRecord>& records,
                                    const EmbeddingTable& table);
std::vector<Sample> samples_for_vectors(
    const std::vector<ChoiceRecord>& records,
    const std::map<std::string, Vec>& user_vectors);

struct OovStats {
  int users_total = 0;
  int users_all_oov = 0;  // fell back to the corpus mean
  int tokens_total = 0;
  int tokens_oov = 0;
};

// Per-user text centroids; all-OOV users get the corpus mean and are counted.
std::map<std::string, Vec> text_vectors(
    const std::map<std::string, Participant>& participants,
    const WordVectorTable& table, OovStats* stats = nullptr);

std::map<std::string, Vec> demographic_vectors(
    const std::map<std::string, Participant>& participants);

struct TrainedNet {
  ChoiceNet net;
  TrainHistory history;
};

TrainedNet train_beh2vec(const Split& split, const TrainConfig& config,
                         int embedding_dim = 200);
TrainedNet train_text_model(const Split& split,
                            const std::map<std::string, Participant>& participants,
                            const WordVectorTable& table, const TrainConfig& config);
TrainedNet train_demo_model(const Split& split,
                            const std::map<std::string, Participant>& participants,
                            const TrainConfig& config);

// Appends one embedding row for an unseen user and fits only that row on the
// observed records; every other parameter is bit-identical afterwards.
void add_new_user(ChoiceNet& model, const std::string& user_id,
                  const std::vector<std::pair<GambleScenario, Choice>>& observed,
                  const TrainConfig& config);

}  // namespace choicelab
