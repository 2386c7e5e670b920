#include "choicelab/wordvec.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <sstream>

namespace choicelab {

Vec WordVectorTable::corpus_mean() const {
  if (vocab.empty()) throw ValidationError("empty word vector table");
  Vec sum = Vec::Zero(dim);
  for (const auto& [tok, v] : vocab) sum += v;
  return sum / static_cast<double>(vocab.size());
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

WordVectorTable load_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open word vector file: " + path);
  WordVectorTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string token;
    row >> token;
    std::vector<double> values;
    std::string field;
    while (row >> field) {
      try {
        std::size_t pos = 0;
        values.push_back(std::stod(field, &pos));
        if (pos != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ValidationError("word vector line " + std::to_string(lineno) +
                              ": cannot parse '" + field + "'");
      }
    }
    // optional "<count> <dim>" preamble
    if (lineno == 1 && values.size() == 1) {
      table.dim = static_cast<int>(values[0]);
      continue;
    }
    if (values.empty())
      throw ValidationError("word vector line " + std::to_string(lineno) +
                            ": no values");
    if (table.dim == 0) table.dim = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != table.dim)
      throw DimensionInconsistent(lineno);
    std::string key = lower(token);
    if (table.vocab.count(key))
      std::cerr << "warning: duplicate token '" << key << "' at line " << lineno
                << ", keeping last\n";
    table.vocab[key] = Eigen::Map<Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  if (table.vocab.empty()) throw ValidationError("no vectors in " + path);
  return table;
}

Vec user_text_vector(const WordVectorTable& table,
                     const std::vector<std::string>& tokens) {
  Vec sum = Vec::Zero(table.dim);
  int hits = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string key = lower(tokens[i]);
    const std::size_t parts =
        static_cast<std::size_t>(std::count(key.begin(), key.end(), '_')) + 1;
    auto it = table.vocab.find(key);
    if (it != table.vocab.end()) {
      sum += it->second;
      ++hits;
      // phrase hit consumes its constituent words (tokenize emits them next)
      if (parts > 1) i += parts;
    }
    // phrase miss: fall through, the individual words follow in the list
  }
  if (hits == 0) throw NoValidTokens();
  return sum / static_cast<double>(hits);
}

}  // namespace choicelab
