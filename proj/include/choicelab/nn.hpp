#pragma once

#include "choicelab/types.hpp"

#include <algorithm>
#include <iosfwd>
#include <random>
#include <vector>

namespace choicelab {

enum class Activation { ReLU, Sigmoid, Identity };

Vec activate(const Vec& z, Activation act);
// Derivative w.r.t. the pre-activation, expressed through the activation
// output (valid for all three supported activations).
Vec activation_grad(const Vec& a, Activation act);

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline constexpr double kProbEps = 1e-12;
inline double clamp_prob(double p) {
  return std::min(1.0 - kProbEps, std::max(kProbEps, p));
}

// loss = -[y ln p + (1-y) ln(1-p)], p clamped to [eps, 1-eps]
double cross_entropy(double probability, int label);

struct DenseLayer {
  Mat weights;  // out x in
  Vec bias;     // out
  Activation act = Activation::ReLU;

  // Glorot uniform init: U(-a, a), a = sqrt(6/(fan_in+fan_out)).
  static DenseLayer init(int out, int in, Activation act, std::mt19937_64& rng);

  Vec forward(const Vec& x) const;
};

struct StackGrads {
  std::vector<Mat> dW;
  std::vector<Vec> db;
  void zero();
};

struct DenseStack {
  std::vector<DenseLayer> layers;

  struct Cache {
    std::vector<Vec> inputs;       // input to each layer
    std::vector<Vec> activations;  // output of each layer
  };

  static DenseStack init(const std::vector<int>& dims, Activation hidden,
                         Activation output, std::mt19937_64& rng);

  int input_dim() const { return static_cast<int>(layers.front().weights.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weights.rows()); }

  Vec forward(const Vec& x, Cache* cache = nullptr) const;

  StackGrads make_grads() const;

  // dout = dL/d(output activation); accumulates into grads, returns dL/dx.
  Vec backward(const Cache& cache, const Vec& dout, StackGrads& grads) const;

  void sgd_step(const StackGrads& grads, double lr);
};

struct EmbeddingTable {
  Mat matrix;  // n_ids x dim, one row per user
  std::map<std::string, int> id_index;

  static EmbeddingTable init(const std::vector<std::string>& ids, int dim,
                             std::mt19937_64& rng);

  int dim() const { return static_cast<int>(matrix.cols()); }
  int row_of(const std::string& id) const;  // throws UnknownUser
  bool has(const std::string& id) const { return id_index.count(id) != 0; }
};

// p <- p - lr * g, shape-checked
void sgd_step(Mat& params, const Mat& grads, double lr);
void sgd_step(Vec& params, const Vec& grads, double lr);

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 64;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 0;
};

struct Sample {
  int user = -1;       // embedding row; -1 when the model takes a raw vector
  Vec user_vec;        // demographic / text-centroid / extra raw features
  Features features;   // 6 scenario features
  int label = 0;       // 1 = Option1 chosen
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
};

// Mini-batch SGD with early stopping on validation accuracy (ties broken by
// lower validation loss). Keeps the best-epoch parameters. Model needs:
//   Grads type, make_grads(), forward_backward(sample, grads) -> loss,
//   apply_sgd(grads, lr), predict(sample) -> probability, copy semantics.
template <typename Model>
TrainHistory train_classifier(Model& model, const std::vector<Sample>& train,
                              const std::vector<Sample>& val,
                              const TrainConfig& config) {
  if (train.empty()) throw EmptyTrainingSet();
  std::mt19937_64 rng(config.seed ^ 0x7261696e6c6f6fULL);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainHistory history;
  Model best = model;
  double best_acc = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;

  auto evaluate = [&](const std::vector<Sample>& set, double& loss, double& acc) {
    loss = 0.0;
    std::size_t correct = 0;
    for (const auto& s : set) {
      double p = model.predict(s);
      loss += cross_entropy(p, s.label);
      int pred = p > 0.5 ? 1 : 0;
      if (pred == s.label) ++correct;
    }
    if (!set.empty()) {
      loss /= static_cast<double>(set.size());
      acc = static_cast<double>(correct) / static_cast<double>(set.size());
    } else {
      acc = 0.0;
    }
  };

  auto grads = model.make_grads();
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      grads.zero();
      for (std::size_t i = start; i < end; ++i)
        epoch_loss += model.forward_backward(train[order[i]], grads);
      const double scale = 1.0 / static_cast<double>(end - start);
      model.apply_sgd(grads, config.learning_rate * scale);
    }

    EpochStats stats;
    stats.train_loss = epoch_loss / static_cast<double>(train.size());
    evaluate(val, stats.val_loss, stats.val_accuracy);
    history.epochs.push_back(stats);

    const bool improved =
        stats.val_accuracy > best_acc ||
        (stats.val_accuracy == best_acc && stats.val_loss < best_loss);
    if (improved) {
      best = model;
      best_acc = stats.val_accuracy;
      best_loss = stats.val_loss;
      history.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best > config.patience) break;
    if (config.patience == 0 && epoch == 0) break;
  }

  model = best;
  history.best_val_accuracy = best_acc;
  return history;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  int checked_params = 0;
};

// Central finite differences over the parameters of a flattenable model:
//   flat_params() -> Vec, set_flat_params(Vec), flat_grad(sample) -> Vec,
//   loss(sample) -> double.
// Each coordinate is estimated at two step sizes; when the two estimates
// disagree the loss is not locally smooth there (a ReLU kink sits inside the
// stencil) and the finite-difference oracle is invalid, so the coordinate is
// skipped rather than scored.
// Each coordinate costs four full loss evaluations, so checking all p
// coordinates is O(p^2); max_coordinates > 0 checks an evenly strided subset
// instead (deterministic, covers every layer of the flat layout).
template <typename Model>
GradCheckReport grad_check(Model& model, const std::vector<Sample>& samples,
                           double step = 1e-5,
                           Eigen::Index max_coordinates = 0) {
  GradCheckReport report;
  for (const auto& sample : samples) {
    Vec analytic = model.flat_grad(sample);
    Vec theta = model.flat_params();
    const Eigen::Index n = theta.size();
    const Eigen::Index stride =
        (max_coordinates > 0 && n > max_coordinates) ? n / max_coordinates : 1;
    Vec t = theta;
    for (Eigen::Index i = 0; i < n; i += stride) {
      ++report.checked_params;
      auto central = [&](double h) {
        t[i] = theta[i] + h;
        model.set_flat_params(t);
        double up = model.loss(sample);
        t[i] = theta[i] - h;
        model.set_flat_params(t);
        double down = model.loss(sample);
        return (up - down) / (2.0 * h);
      };
      const double coarse = central(step);
      const double fine = central(step / 2.0);
      t[i] = theta[i];
      const double scale = std::max({std::abs(coarse), std::abs(fine), 1e-6});
      if (std::abs(coarse - fine) > 1e-3 * scale) continue;  // kink in stencil
      // the floor absorbs cancellation noise on near-zero coordinates
      const double denom = std::max({std::abs(fine), std::abs(analytic[i]), 1e-4});
      report.max_rel_error =
          std::max(report.max_rel_error, std::abs(fine - analytic[i]) / denom);
    }
    model.set_flat_params(theta);
  }
  return report;
}

// Exact text round-trip (hexfloat) for checkpoints.
void write_matrix(std::ostream& out, const Mat& m);
Mat read_matrix(std::istream& in);
void write_vector(std::ostream& out, const Vec& v);
Vec read_vector(std::istream& in);

}  // namespace choicelab
