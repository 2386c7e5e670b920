#include "choicelab/repr.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace choicelab {

Standardizer Standardizer::fit(const std::vector<Vec>& values) {
  if (values.empty()) throw ValidationError("cannot fit standardizer on no data");
  const Eigen::Index dim = values.front().size();
  Vec mean = Vec::Zero(dim);
  for (const auto& v : values) mean += v;
  mean /= static_cast<double>(values.size());
  Vec var = Vec::Zero(dim);
  for (const auto& v : values) var += (v - mean).cwiseAbs2();
  var /= static_cast<double>(values.size());
  Standardizer s;
  s.mean = mean;
  s.std = var.cwiseSqrt().unaryExpr([](double x) { return x > 1e-12 ? x : 1.0; });
  return s;
}

Standardizer Standardizer::identity(int dim) {
  Standardizer s;
  s.mean = Vec::Zero(dim);
  s.std = Vec::Ones(dim);
  return s;
}

Vec Standardizer::apply(const Vec& x) const {
  if (x.size() != mean.size())
    throw DimensionMismatch("standardizer input " + std::to_string(x.size()));
  return (x - mean).cwiseQuotient(std);
}

void ChoiceNet::Grads::zero() {
  embedding_rows.clear();
  encoder.zero();
  trunk.zero();
}

ChoiceNet::Grads ChoiceNet::make_grads() const {
  Grads g;
  g.encoder = encoder.make_grads();
  g.trunk = trunk.make_grads();
  return g;
}

namespace {

Vec concat(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

}  // namespace

double ChoiceNet::predict(const Sample& sample) const {
  const Vec f = feature_std.apply(sample.features);
  Vec x;
  switch (kind) {
    case NetKind::PlainMlp:
      x = sample.user_vec.size() ? concat(user_std.apply(sample.user_vec), f) : f;
      break;
    case NetKind::IdEmbedding: {
      if (sample.user < 0 || sample.user >= embedding.matrix.rows())
        throw UnknownUser(std::to_string(sample.user));
      Vec h = encoder.forward(embedding.matrix.row(sample.user).transpose());
      x = concat(h, f);
      break;
    }
    case NetKind::VectorEncoder: {
      Vec h = encoder.forward(user_std.apply(sample.user_vec));
      x = concat(h, f);
      break;
    }
  }
  return logistic(trunk.forward(x)[0]);
}

double ChoiceNet::forward_backward(const Sample& sample, Grads& grads) {
  const Vec f = feature_std.apply(sample.features);
  DenseStack::Cache enc_cache, trunk_cache;
  Vec x;
  switch (kind) {
    case NetKind::PlainMlp:
      x = sample.user_vec.size() ? concat(user_std.apply(sample.user_vec), f) : f;
      break;
    case NetKind::IdEmbedding: {
      if (sample.user < 0 || sample.user >= embedding.matrix.rows())
        throw UnknownUser(std::to_string(sample.user));
      Vec h = encoder.forward(embedding.matrix.row(sample.user).transpose(), &enc_cache);
      x = concat(h, f);
      break;
    }
    case NetKind::VectorEncoder: {
      Vec h = encoder.forward(user_std.apply(sample.user_vec), &enc_cache);
      x = concat(h, f);
      break;
    }
  }
  const double z = trunk.forward(x, &trunk_cache)[0];
  const double p = logistic(z);

  // fused sigmoid + cross-entropy: dL/dz = p - y
  Vec dz(1);
  dz << p - sample.label;
  Vec dx = trunk.backward(trunk_cache, dz, grads.trunk);

  if (kind != NetKind::PlainMlp) {
    const Eigen::Index h_dim = x.size() - 6;
    Vec dh = dx.head(h_dim);
    Vec dinput = encoder.backward(enc_cache, dh, grads.encoder);
    if (kind == NetKind::IdEmbedding) {
      auto [it, inserted] =
          grads.embedding_rows.try_emplace(sample.user, Vec::Zero(embedding.dim()));
      it->second += dinput;
    }
  }
  return cross_entropy(p, sample.label);
}

void ChoiceNet::apply_sgd(const Grads& grads, double lr) {
  for (const auto& [row, g] : grads.embedding_rows)
    embedding.matrix.row(row) -= lr * g.transpose();
  if (embedding_only) return;
  encoder.sgd_step(grads.encoder, lr);
  trunk.sgd_step(grads.trunk, lr);
}

namespace {

template <typename Fn>
void visit_stack(const DenseStack& stack, Fn&& fn) {
  for (const auto& layer : stack.layers) {
    fn(layer.weights);
    fn(Mat(layer.bias));
  }
}

Eigen::Index stack_param_count(const DenseStack& s) {
  Eigen::Index n = 0;
  for (const auto& l : s.layers) n += l.weights.size() + l.bias.size();
  return n;
}

}  // namespace

Vec ChoiceNet::flat_params() const {
  Eigen::Index n = embedding.matrix.size() + stack_param_count(encoder) +
                   stack_param_count(trunk);
  Vec theta(n);
  Eigen::Index at = 0;
  auto put_mat = [&](const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) theta[at++] = m(r, c);
  };
  put_mat(embedding.matrix);
  visit_stack(encoder, put_mat);
  visit_stack(trunk, put_mat);
  return theta;
}

void ChoiceNet::set_flat_params(const Vec& theta) {
  Eigen::Index at = 0;
  auto take_mat = [&](Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = theta[at++];
  };
  take_mat(embedding.matrix);
  auto take_stack = [&](DenseStack& s) {
    for (auto& layer : s.layers) {
      take_mat(layer.weights);
      Mat b(layer.bias);
      take_mat(b);
      layer.bias = b.col(0);
    }
  };
  take_stack(encoder);
  take_stack(trunk);
  if (at != theta.size()) throw DimensionMismatch("flat parameter vector");
}

Vec ChoiceNet::flat_grad(const Sample& sample) {
  Grads g = make_grads();
  forward_backward(sample, g);
  Mat emb = Mat::Zero(embedding.matrix.rows(), embedding.matrix.cols());
  for (const auto& [row, grad] : g.embedding_rows) emb.row(row) = grad.transpose();

  Vec flat(flat_params().size());
  Eigen::Index at = 0;
  auto put_mat = [&](const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) flat[at++] = m(r, c);
  };
  put_mat(emb);
  auto put_stack = [&](const StackGrads& sg) {
    for (std::size_t i = 0; i < sg.dW.size(); ++i) {
      put_mat(sg.dW[i]);
      put_mat(Mat(sg.db[i]));
    }
  };
  put_stack(g.encoder);
  put_stack(g.trunk);
  return flat;
}

namespace {

const std::vector<int> kTrunkHidden = {128, 64, 32, 4};

std::vector<int> trunk_dims(int input) {
  std::vector<int> dims = {input};
  dims.insert(dims.end(), kTrunkHidden.begin(), kTrunkHidden.end());
  dims.push_back(1);
  return dims;
}

}  // namespace

ChoiceNet make_beh2vec(const std::vector<std::string>& user_ids,
                       std::uint64_t seed, int embedding_dim) {
  std::mt19937_64 rng(seed);
  ChoiceNet net;
  net.kind = NetKind::IdEmbedding;
  net.embedding = EmbeddingTable::init(user_ids, embedding_dim, rng);
  net.encoder = DenseStack::init({embedding_dim, embedding_dim}, Activation::ReLU,
                                 Activation::ReLU, rng);
  net.trunk = DenseStack::init(trunk_dims(embedding_dim + 6), Activation::ReLU,
                               Activation::Identity, rng);
  net.feature_std = Standardizer::identity(6);
  net.user_std = Standardizer::identity(0);
  return net;
}

ChoiceNet make_text_model(std::uint64_t seed, int input_dim) {
  std::mt19937_64 rng(seed);
  ChoiceNet net;
  net.kind = NetKind::VectorEncoder;
  net.encoder = DenseStack::init({input_dim, 128, 64, 64}, Activation::ReLU,
                                 Activation::ReLU, rng);
  net.trunk = DenseStack::init(trunk_dims(64 + 6), Activation::ReLU,
                               Activation::Identity, rng);
  net.feature_std = Standardizer::identity(6);
  net.user_std = Standardizer::identity(input_dim);
  return net;
}

ChoiceNet make_demo_model(std::uint64_t seed, int input_dim) {
  std::mt19937_64 rng(seed);
  ChoiceNet net;
  net.kind = NetKind::VectorEncoder;
  net.encoder = DenseStack::init({input_dim, 128, 64, 64}, Activation::ReLU,
                                 Activation::ReLU, rng);
  net.trunk = DenseStack::init(trunk_dims(64 + 6), Activation::ReLU,
                               Activation::Identity, rng);
  net.feature_std = Standardizer::identity(6);
  net.user_std = Standardizer::identity(input_dim);
  return net;
}

ChoiceNet make_plain_mlp(int extra_inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ChoiceNet net;
  net.kind = NetKind::PlainMlp;
  net.trunk = DenseStack::init(trunk_dims(extra_inputs + 6), Activation::ReLU,
                               Activation::Identity, rng);
  net.feature_std = Standardizer::identity(6);
  net.user_std = Standardizer::identity(extra_inputs);
  return net;
}

Sample make_sample(const ChoiceRecord& record) {
  Sample s;
  s.features = encode_features(record.scenario);
  s.label = record.choice == Choice::Option1 ? 1 : 0;
  return s;
}

std::vector<Sample> samples_for_ids(const std::vector<ChoiceRecord>& records,
                                    const EmbeddingTable& table) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Sample s = make_sample(r);
    s.user = table.row_of(r.user_id);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> samples_for_vectors(
    const std::vector<ChoiceRecord>& records,
    const std::map<std::string, Vec>& user_vectors) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto it = user_vectors.find(r.user_id);
    if (it == user_vectors.end()) throw UnknownUser(r.user_id);
    Sample s = make_sample(r);
    s.user_vec = it->second;
    out.push_back(std::move(s));
  }
  return out;
}

std::map<std::string, Vec> text_vectors(
    const std::map<std::string, Participant>& participants,
    const WordVectorTable& table, OovStats* stats) {
  const Vec fallback = table.corpus_mean();
  std::map<std::string, Vec> out;
  for (const auto& [id, p] : participants) {
    if (stats) {
      ++stats->users_total;
      for (const auto& t : p.text_tokens) {
        ++stats->tokens_total;
        if (!table.has(t)) ++stats->tokens_oov;
      }
    }
    try {
      out[id] = user_text_vector(table, p.text_tokens);
    } catch (const NoValidTokens&) {
      out[id] = fallback;
      if (stats) ++stats->users_all_oov;
    }
  }
  return out;
}

std::map<std::string, Vec> demographic_vectors(
    const std::map<std::string, Participant>& participants) {
  std::map<std::string, Vec> out;
  for (const auto& [id, p] : participants) {
    if (p.demographics.size() == 0)
      throw ValidationError("participant " + id + " has no demographics");
    out[id] = p.demographics;
  }
  return out;
}

namespace {

Standardizer fit_feature_std(const std::vector<Sample>& train) {
  std::vector<Vec> feats;
  feats.reserve(train.size());
  for (const auto& s : train) feats.emplace_back(s.features);
  return Standardizer::fit(feats);
}

Standardizer fit_user_std(const std::vector<Sample>& train) {
  std::vector<Vec> vecs;
  vecs.reserve(train.size());
  for (const auto& s : train) vecs.push_back(s.user_vec);
  return Standardizer::fit(vecs);
}

}  // namespace

TrainedNet train_beh2vec(const Split& split, const TrainConfig& config,
                         int embedding_dim) {
  Dataset all;
  all.records = split.train;
  all.records.insert(all.records.end(), split.val.begin(), split.val.end());
  all.records.insert(all.records.end(), split.test.begin(), split.test.end());
  TrainedNet result;
  result.net = make_beh2vec(all.user_ids(), config.seed, embedding_dim);
  auto train = samples_for_ids(split.train, result.net.embedding);
  auto val = samples_for_ids(split.val, result.net.embedding);
  result.net.feature_std = fit_feature_std(train);
  result.history = train_classifier(result.net, train, val, config);
  return result;
}

TrainedNet train_text_model(const Split& split,
                            const std::map<std::string, Participant>& participants,
                            const WordVectorTable& table, const TrainConfig& config) {
  auto vectors = text_vectors(participants, table);
  TrainedNet result;
  result.net = make_text_model(config.seed, table.dim);
  auto train = samples_for_vectors(split.train, vectors);
  auto val = samples_for_vectors(split.val, vectors);
  result.net.feature_std = fit_feature_std(train);
  result.net.user_std = fit_user_std(train);
  result.history = train_classifier(result.net, train, val, config);
  return result;
}

TrainedNet train_demo_model(const Split& split,
                            const std::map<std::string, Participant>& participants,
                            const TrainConfig& config) {
  auto vectors = demographic_vectors(participants);
  const int dim = static_cast<int>(vectors.begin()->second.size());
  TrainedNet result;
  result.net = make_demo_model(config.seed, dim);
  auto train = samples_for_vectors(split.train, vectors);
  auto val = samples_for_vectors(split.val, vectors);
  result.net.feature_std = fit_feature_std(train);
  result.net.user_std = fit_user_std(train);
  result.history = train_classifier(result.net, train, val, config);
  return result;
}

void add_new_user(ChoiceNet& model, const std::string& user_id,
                  const std::vector<std::pair<GambleScenario, Choice>>& observed,
                  const TrainConfig& config) {
  if (model.kind != NetKind::IdEmbedding)
    throw ValidationError("add_new_user needs an ID-embedding model");
  if (observed.empty()) throw EmptyObservations();
  if (model.embedding.has(user_id))
    throw ValidationError("user already known: " + user_id);

  std::mt19937_64 rng(config.seed ^ 0x6e657775736572ULL);
  const int dim = model.embedding.dim();
  const double a = std::sqrt(6.0 / static_cast<double>(2 * dim));
  std::uniform_real_distribution<double> dist(-a, a);
  const int row = static_cast<int>(model.embedding.matrix.rows());
  model.embedding.matrix.conservativeResize(row + 1, Eigen::NoChange);
  for (int c = 0; c < dim; ++c) model.embedding.matrix(row, c) = dist(rng);
  model.embedding.id_index[user_id] = row;

  std::vector<Sample> samples;
  for (const auto& [scenario, choice] : observed) {
    Sample s;
    s.user = row;
    s.features = encode_features(scenario);
    s.label = choice == Choice::Option1 ? 1 : 0;
    samples.push_back(std::move(s));
  }

  model.embedding_only = true;
  std::mt19937_64 order_rng(config.seed ^ 0x6f72646572ULL);
  auto grads = model.make_grads();
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      grads.zero();
      for (std::size_t i = start; i < end; ++i)
        model.forward_backward(samples[order[i]], grads);
      model.apply_sgd(grads, config.learning_rate / static_cast<double>(end - start));
    }
  }
  model.embedding_only = false;
}

namespace {

void write_stack(std::ostream& out, const DenseStack& stack) {
  out << stack.layers.size() << "\n";
  for (const auto& layer : stack.layers) {
    out << static_cast<int>(layer.act) << "\n";
    write_matrix(out, layer.weights);
    write_vector(out, layer.bias);
  }
}

DenseStack read_stack(std::istream& in) {
  std::size_t n = 0;
  in >> n;
  DenseStack stack;
  for (std::size_t i = 0; i < n; ++i) {
    int act = 0;
    in >> act;
    DenseLayer layer;
    layer.act = static_cast<Activation>(act);
    layer.weights = read_matrix(in);
    layer.bias = read_vector(in);
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

}  // namespace

void ChoiceNet::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);
  out << "CHOICELAB-NET 1\n";
  out << static_cast<int>(kind) << "\n";
  write_vector(out, feature_std.mean);
  write_vector(out, feature_std.std);
  write_vector(out, user_std.mean);
  write_vector(out, user_std.std);
  out << embedding.id_index.size() << "\n";
  for (const auto& [id, idx] : embedding.id_index) out << id << " " << idx << "\n";
  write_matrix(out, embedding.matrix);
  write_stack(out, encoder);
  write_stack(out, trunk);
}

ChoiceNet ChoiceNet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "CHOICELAB-NET" || version != "1")
    throw ValidationError("unrecognized checkpoint format in " + path);
  ChoiceNet net;
  int kind = 0;
  in >> kind;
  net.kind = static_cast<NetKind>(kind);
  net.feature_std.mean = read_vector(in);
  net.feature_std.std = read_vector(in);
  net.user_std.mean = read_vector(in);
  net.user_std.std = read_vector(in);
  std::size_t ids = 0;
  in >> ids;
  for (std::size_t i = 0; i < ids; ++i) {
    std::string id;
    int idx = 0;
    in >> id >> idx;
    net.embedding.id_index[id] = idx;
  }
  net.embedding.matrix = read_matrix(in);
  net.encoder = read_stack(in);
  net.trunk = read_stack(in);
  return net;
}

}  // namespace choicelab
