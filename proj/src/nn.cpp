#include "choicelab/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace choicelab {

Vec activate(const Vec& z, Activation act) {
  switch (act) {
    case Activation::ReLU:
      return z.cwiseMax(0.0);
    case Activation::Sigmoid:
      return z.unaryExpr([](double x) { return logistic(x); });
    case Activation::Identity:
      return z;
  }
  return z;
}

Vec activation_grad(const Vec& a, Activation act) {
  switch (act) {
    case Activation::ReLU:
      return a.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
    case Activation::Sigmoid:
      return a.cwiseProduct(Vec::Ones(a.size()) - a);
    case Activation::Identity:
      return Vec::Ones(a.size());
  }
  return Vec::Ones(a.size());
}

double cross_entropy(double probability, int label) {
  const double p = clamp_prob(probability);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

DenseLayer DenseLayer::init(int out, int in, Activation act, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-a, a);
  DenseLayer layer;
  layer.weights = Mat::NullaryExpr(out, in, [&]() { return dist(rng); });
  layer.bias = Vec::Zero(out);
  layer.act = act;
  return layer;
}

Vec DenseLayer::forward(const Vec& x) const {
  if (x.size() != weights.cols())
    throw DimensionMismatch("dense layer input " + std::to_string(x.size()) +
                            ", expected " + std::to_string(weights.cols()));
  return activate(weights * x + bias, act);
}

void StackGrads::zero() {
  for (auto& m : dW) m.setZero();
  for (auto& v : db) v.setZero();
}

DenseStack DenseStack::init(const std::vector<int>& dims, Activation hidden,
                            Activation output, std::mt19937_64& rng) {
  if (dims.size() < 2) throw ValidationError("stack needs at least 2 dims");
  DenseStack stack;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    const bool last = i + 1 == dims.size();
    stack.layers.push_back(
        DenseLayer::init(dims[i], dims[i - 1], last ? output : hidden, rng));
  }
  return stack;
}

Vec DenseStack::forward(const Vec& x, Cache* cache) const {
  Vec a = x;
  if (cache) {
    cache->inputs.clear();
    cache->activations.clear();
  }
  for (const auto& layer : layers) {
    if (cache) cache->inputs.push_back(a);
    a = layer.forward(a);
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

StackGrads DenseStack::make_grads() const {
  StackGrads g;
  for (const auto& layer : layers) {
    g.dW.push_back(Mat::Zero(layer.weights.rows(), layer.weights.cols()));
    g.db.push_back(Vec::Zero(layer.bias.size()));
  }
  return g;
}

Vec DenseStack::backward(const Cache& cache, const Vec& dout,
                         StackGrads& grads) const {
  if (cache.inputs.size() != layers.size())
    throw DimensionMismatch("backward cache does not match stack");
  Vec da = dout;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& layer = layers[li];
    Vec dz = da.cwiseProduct(activation_grad(cache.activations[li], layer.act));
    grads.dW[li].noalias() += dz * cache.inputs[li].transpose();
    grads.db[li] += dz;
    da = layer.weights.transpose() * dz;
  }
  return da;
}

void DenseStack::sgd_step(const StackGrads& grads, double lr) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    choicelab::sgd_step(layers[i].weights, grads.dW[i], lr);
    choicelab::sgd_step(layers[i].bias, grads.db[i], lr);
  }
}

EmbeddingTable EmbeddingTable::init(const std::vector<std::string>& ids, int dim,
                                    std::mt19937_64& rng) {
  EmbeddingTable table;
  const double a = std::sqrt(6.0 / static_cast<double>(dim + dim));
  std::uniform_real_distribution<double> dist(-a, a);
  table.matrix =
      Mat::NullaryExpr(static_cast<Eigen::Index>(ids.size()), dim, [&]() { return dist(rng); });
  for (std::size_t i = 0; i < ids.size(); ++i)
    table.id_index[ids[i]] = static_cast<int>(i);
  return table;
}

int EmbeddingTable::row_of(const std::string& id) const {
  auto it = id_index.find(id);
  if (it == id_index.end()) throw UnknownUser(id);
  return it->second;
}

void sgd_step(Mat& params, const Mat& grads, double lr) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols())
    throw DimensionMismatch("sgd_step matrix shapes");
  params -= lr * grads;
}

void sgd_step(Vec& params, const Vec& grads, double lr) {
  if (params.size() != grads.size()) throw DimensionMismatch("sgd_step vector sizes");
  params -= lr * grads;
}

void write_matrix(std::ostream& out, const Mat& m) {
  out << m.rows() << " " << m.cols() << "\n";
  out << std::hexfloat;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << " ";
      out << m(r, c);
    }
    out << "\n";
  }
  out << std::defaultfloat;
}

Mat read_matrix(std::istream& in) {
  Eigen::Index rows = 0, cols = 0;
  in >> rows >> cols;
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::string tok;
      in >> tok;
      m(r, c) = std::strtod(tok.c_str(), nullptr);
    }
  if (!in) throw ValidationError("truncated matrix in checkpoint");
  return m;
}

void write_vector(std::ostream& out, const Vec& v) {
  write_matrix(out, Mat(v));
}

Vec read_vector(std::istream& in) {
  Mat m = read_matrix(in);
  return Vec(m.col(0));
}

}  // namespace choicelab
