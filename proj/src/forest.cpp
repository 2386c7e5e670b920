#include "choicelab/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace choicelab {

double Tree::predict(const Vec& x) const {
  int at = 0;
  while (!nodes[static_cast<std::size_t>(at)].leaf) {
    const auto& n = nodes[static_cast<std::size_t>(at)];
    at = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(at)].p1;
}

double Forest::predict(const Vec& x) const {
  if (x.size() != n_features)
    throw DimensionMismatch("forest expects " + std::to_string(n_features) +
                            " features, got " + std::to_string(x.size()));
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return sum / static_cast<double>(trees.size());
}

namespace {

struct Builder {
  const std::vector<LabeledSample>& samples;
  const ForestConfig& config;
  int n_features;
  int mtry;
  std::mt19937_64 rng;
  std::vector<TreeNode> nodes;

  // indices: sample indices reaching this node (with bootstrap multiplicity)
  int build(std::vector<int>& indices, int depth) {
    int ones = 0;
    for (int i : indices) ones += samples[static_cast<std::size_t>(i)].label;
    const int n = static_cast<int>(indices.size());

    auto make_leaf = [&]() {
      TreeNode leaf;
      leaf.leaf = true;
      leaf.p1 = n ? static_cast<double>(ones) / n : 0.5;
      nodes.push_back(leaf);
      return static_cast<int>(nodes.size()) - 1;
    };

    if (ones == 0 || ones == n || n < 2 * config.min_leaf ||
        (config.max_depth > 0 && depth >= config.max_depth))
      return make_leaf();

    // random feature subset, then the best Gini split among them
    std::vector<int> features(static_cast<std::size_t>(n_features));
    std::iota(features.begin(), features.end(), 0);
    std::shuffle(features.begin(), features.end(), rng);
    features.resize(static_cast<std::size_t>(mtry));

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_score = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, int>> values(indices.size());

    for (int f : features) {
      for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& s = samples[static_cast<std::size_t>(indices[i])];
        values[i] = {s.features[f], s.label};
      }
      std::sort(values.begin(), values.end());
      int left_n = 0, left_ones = 0;
      for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        ++left_n;
        left_ones += values[i].second;
        if (values[i].first == values[i + 1].first) continue;
        const int right_n = n - left_n;
        if (left_n < config.min_leaf || right_n < config.min_leaf) continue;
        const int right_ones = ones - left_ones;
        auto gini = [](int cnt, int one) {
          const double p = static_cast<double>(one) / cnt;
          return 2.0 * p * (1.0 - p);
        };
        const double score =
            left_n * gini(left_n, left_ones) + right_n * gini(right_n, right_ones);
        if (score < best_score) {
          best_score = score;
          best_feature = f;
          best_threshold = 0.5 * (values[i].first + values[i + 1].first);
        }
      }
    }

    if (best_feature < 0) return make_leaf();

    std::vector<int> left, right;
    for (int i : indices) {
      if (samples[static_cast<std::size_t>(i)].features[best_feature] <= best_threshold)
        left.push_back(i);
      else
        right.push_back(i);
    }
    if (left.empty() || right.empty()) return make_leaf();

    const int at = static_cast<int>(nodes.size());
    TreeNode split;
    split.leaf = false;
    split.feature = best_feature;
    split.threshold = best_threshold;
    nodes.push_back(split);
    indices.clear();
    indices.shrink_to_fit();
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    nodes[static_cast<std::size_t>(at)].left = l;
    nodes[static_cast<std::size_t>(at)].right = r;
    return at;
  }
};

}  // namespace

Forest rf_train(const std::vector<LabeledSample>& samples,
                const ForestConfig& config) {
  if (samples.empty()) throw EmptySamples();
  const int d = static_cast<int>(samples.front().features.size());
  for (const auto& s : samples)
    if (s.features.size() != d)
      throw DimensionMismatch("inconsistent feature dimension");

  Forest forest;
  forest.n_features = d;
  const int mtry =
      config.features_per_split > 0
          ? std::min(config.features_per_split, d)
          : std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(d)))));

  const int n = static_cast<int>(samples.size());
  for (int t = 0; t < config.n_trees; ++t) {
    Builder builder{samples, config, d, mtry,
                    std::mt19937_64(config.seed + static_cast<std::uint64_t>(t)),
                    {}};
    std::vector<int> indices;
    indices.reserve(static_cast<std::size_t>(n));
    if (config.bootstrap) {
      std::uniform_int_distribution<int> pick(0, n - 1);
      for (int i = 0; i < n; ++i) indices.push_back(pick(builder.rng));
    } else {
      for (int i = 0; i < n; ++i) indices.push_back(i);
    }
    builder.build(indices, 0);
    forest.trees.push_back(Tree{std::move(builder.nodes)});
  }
  return forest;
}

void Forest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write forest: " + path);
  out << "CHOICELAB-FOREST 1\n";
  out << n_features << " " << trees.size() << "\n";
  out << std::hexfloat;
  for (const auto& t : trees) {
    out << t.nodes.size() << "\n";
    for (const auto& n : t.nodes) {
      if (n.leaf)
        out << "L " << n.p1 << "\n";
      else
        out << "S " << n.feature << " " << n.threshold << " " << n.left << " "
            << n.right << "\n";
    }
  }
}

Forest Forest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open forest: " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "CHOICELAB-FOREST" || version != "1")
    throw ValidationError("unrecognized forest format in " + path);
  Forest forest;
  std::size_t n_trees = 0;
  in >> forest.n_features >> n_trees;
  for (std::size_t t = 0; t < n_trees; ++t) {
    std::size_t n_nodes = 0;
    in >> n_nodes;
    Tree tree;
    for (std::size_t i = 0; i < n_nodes; ++i) {
      std::string tag;
      in >> tag;
      TreeNode node;
      if (tag == "L") {
        std::string p;
        in >> p;
        node.leaf = true;
        node.p1 = std::strtod(p.c_str(), nullptr);
      } else if (tag == "S") {
        std::string thr;
        node.leaf = false;
        in >> node.feature >> thr >> node.left >> node.right;
        node.threshold = std::strtod(thr.c_str(), nullptr);
      } else {
        throw ValidationError("bad node tag in forest file");
      }
      tree.nodes.push_back(node);
    }
    forest.trees.push_back(std::move(tree));
  }
  if (!in) throw ValidationError("truncated forest file");
  return forest;
}

}  // namespace choicelab
