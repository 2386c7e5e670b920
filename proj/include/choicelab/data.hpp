#pragma once

#include "choicelab/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace choicelab {

// Column-name mapping plus demographic codebook, loaded from a JSON file.
// Adapts arbitrary source column names to the canonical fields; unknown
// demographic levels are hard errors.
struct Schema {
  char delimiter = ',';

  // choices table
  std::string user_id = "user_id";
  std::string outcome1 = "outcome.1";
  std::string prob1 = "prob.1";
  std::string recipient1 = "recipient.1";
  std::string outcome2 = "outcome.2";
  std::string prob2 = "prob.2";
  std::string recipient2 = "recipient.2";
  std::string choice = "choice";

  // participants table
  std::vector<std::string> demographic_columns;  // exactly 11
  std::vector<std::string> text_columns;         // exactly 2

  // value decoding
  std::vector<std::string> self_levels = {"self", "0"};
  std::vector<std::string> other_levels = {"other", "1"};
  std::vector<std::string> option1_levels = {"1", "option1"};
  std::vector<std::string> option2_levels = {"2", "option2"};

  // codebook[column][level] -> numeric code
  std::map<std::string, std::map<std::string, double>> codebook;

  static Schema load(const std::string& path);
  static Schema default_schema();
};

Dataset load_choices(const std::string& path, const Schema& schema);

std::map<std::string, Participant> load_participants(const std::string& path,
                                                     const Schema& schema);

// lowercase, split on commas then whitespace, strip non-alphanumerics;
// comma-delimited phrases are kept as underscore-joined units plus their
// individual words.
std::vector<std::string> tokenize(const std::string& text);

// Fixed order (outcome.1, prob.1, recipient.1, outcome.2, prob.2,
// recipient.2); Self -> 0, Other -> 1.
Features encode_features(const GambleScenario& scenario);

Frame frame_of(const ChoiceRecord& record);
Frame frame_of(const GambleScenario& scenario);

struct Split {
  std::vector<ChoiceRecord> train;
  std::vector<ChoiceRecord> val;
  std::vector<ChoiceRecord> test;
};

Split make_split(const Dataset& dataset, const SplitSpec& spec);

// Canonical re-serialization; loading the result with the default schema
// reproduces the dataset exactly.
void save_choices(const std::string& path, const Dataset& dataset);
void save_participants(const std::string& path,
                       const std::map<std::string, Participant>& participants);

}  // namespace choicelab
