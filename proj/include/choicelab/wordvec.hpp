#pragma once

#include "choicelab/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace choicelab {

struct DimensionInconsistent : ValidationError {
  explicit DimensionInconsistent(std::size_t line)
      : ValidationError("word vector line " + std::to_string(line) +
                        " has inconsistent dimension") {}
};

struct WordVectorTable {
  int dim = 0;
  std::map<std::string, Vec> vocab;

  bool has(const std::string& token) const { return vocab.count(token) != 0; }

  // Mean of all stored vectors; substitute for all-OOV users.
  Vec corpus_mean() const;
};

// Text format: optional first line "<count> <dim>", then one
// "token v1 ... v_dim" per line, space-separated. Duplicate tokens: last one
// wins, a warning is printed to stderr.
WordVectorTable load_word_vectors(const std::string& path);

// Centroid of the in-vocabulary token vectors. Multiword tokens are looked
// up as the underscore-joined phrase first; OOV tokens are skipped. Throws
// NoValidTokens when nothing matched.
Vec user_text_vector(const WordVectorTable& table,
                     const std::vector<std::string>& tokens);

}  // namespace choicelab
