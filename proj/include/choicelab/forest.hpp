#pragma once

#include "choicelab/types.hpp"

#include <string>
#include <vector>

namespace choicelab {

struct TreeNode {
  bool leaf = true;
  // split
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  // leaf
  double p1 = 0.5;  // probability of class 1
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const Vec& x) const;
};

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 0;  // 0 = unlimited
  int min_leaf = 1;
  int features_per_split = 0;  // 0 = round(sqrt(d))
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct Forest {
  std::vector<Tree> trees;
  int n_features = 0;

  // mean of per-tree leaf probabilities
  double predict(const Vec& x) const;

  void save(const std::string& path) const;
  static Forest load(const std::string& path);
};

struct LabeledSample {
  Vec features;
  int label = 0;
};

// Bagged CART with Gini impurity splits and a random feature subset per
// split; per-tree RNG seeded seed + tree index.
Forest rf_train(const std::vector<LabeledSample>& samples,
                const ForestConfig& config);

}  // namespace choicelab
