#pragma once

#include <Eigen/Core>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace choicelab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Features = Eigen::Matrix<double, 6, 1>;

enum class Recipient { Self, Other };
enum class Choice { Option1, Option2 };
enum class Frame { Gain, Loss };

struct GambleOption {
  double outcome = 0.0;  // signed dollars
  double prob = 0.0;     // in [0,1]
  Recipient recipient = Recipient::Self;
};

struct GambleScenario {
  GambleOption option1;
  GambleOption option2;
};

struct ChoiceRecord {
  std::string user_id;
  GambleScenario scenario;
  Choice choice = Choice::Option1;
};

struct Participant {
  std::string user_id;
  Vec demographics;  // 11 coded attributes; empty when unavailable
  std::vector<std::string> text_tokens;
};

struct Dataset {
  std::map<std::string, Participant> participants;
  std::vector<ChoiceRecord> records;

  // Distinct user ids of the records, sorted; stable index base for
  // embedding tables.
  std::vector<std::string> user_ids() const;
};

struct SplitSpec {
  double train_fraction = 0.8;
  int test_folds = 2;
  std::uint64_t seed = 0;
};

// Validation failures map to CLI exit code 2; everything else to 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingColumn : ValidationError {
  explicit MissingColumn(const std::string& col)
      : ValidationError("missing column: " + col) {}
};

struct UnparsableValue : ValidationError {
  UnparsableValue(std::size_t row, const std::string& col, const std::string& value)
      : ValidationError("row " + std::to_string(row) + ", column '" + col +
                        "': cannot parse '" + value + "'") {}
};

struct ProbabilityOutOfRange : ValidationError {
  ProbabilityOutOfRange(std::size_t row, double p)
      : ValidationError("row " + std::to_string(row) + ": probability " +
                        std::to_string(p) + " outside [0,1]") {}
};

struct UnknownCategoryLevel : ValidationError {
  UnknownCategoryLevel(const std::string& col, const std::string& value)
      : ValidationError("column '" + col + "': unknown level '" + value + "'") {}
};

struct EmptyDataset : ValidationError {
  EmptyDataset() : ValidationError("dataset has no records") {}
};

struct DimensionMismatch : ValidationError {
  explicit DimensionMismatch(const std::string& what)
      : ValidationError("dimension mismatch: " + what) {}
};

struct UnknownUser : ValidationError {
  explicit UnknownUser(const std::string& id)
      : ValidationError("unknown user: " + id) {}
};

struct EmptyTrainingSet : ValidationError {
  EmptyTrainingSet() : ValidationError("training set is empty") {}
};

struct EmptyObservations : ValidationError {
  EmptyObservations() : ValidationError("no observed records for new user") {}
};

struct EmptyRecords : ValidationError {
  EmptyRecords() : ValidationError("record list is empty") {}
};

struct NoValidTokens : ValidationError {
  NoValidTokens() : ValidationError("no in-vocabulary tokens") {}
};

struct DegenerateChains : ValidationError {
  DegenerateChains() : ValidationError("zero within-chain variance") {}
};

struct NonFiniteDensity : ValidationError {
  NonFiniteDensity() : ValidationError("log density non-finite at init") {}
};

struct EmptySamples : ValidationError {
  EmptySamples() : ValidationError("no training samples") {}
};

struct LengthMismatch : ValidationError {
  LengthMismatch(std::size_t a, std::size_t b)
      : ValidationError("length mismatch: " + std::to_string(a) + " vs " +
                        std::to_string(b)) {}
};

}  // namespace choicelab
