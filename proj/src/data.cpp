#include "choicelab/data.hpp"

#include "choicelab/csv.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace choicelab {

using nlohmann::json;

std::vector<std::string> Dataset::user_ids() const {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.user_id);
  return {ids.begin(), ids.end()};
}

Schema Schema::default_schema() {
  Schema s;
  s.demographic_columns = {"demo.1", "demo.2", "demo.3", "demo.4",
                           "demo.5", "demo.6", "demo.7", "demo.8",
                           "demo.9", "demo.10", "demo.11"};
  s.text_columns = {"text.1", "text.2"};
  return s;
}

Schema Schema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open schema file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("schema parse error in " + path + ": " + e.what());
  }
  Schema s = Schema::default_schema();
  if (j.contains("delimiter")) {
    std::string d = j["delimiter"].get<std::string>();
    if (d.size() != 1) throw ValidationError("delimiter must be one character");
    s.delimiter = d[0];
  }
  auto str = [&](const char* key, std::string& field) {
    if (j.contains(key)) field = j[key].get<std::string>();
  };
  str("user_id", s.user_id);
  str("outcome1", s.outcome1);
  str("prob1", s.prob1);
  str("recipient1", s.recipient1);
  str("outcome2", s.outcome2);
  str("prob2", s.prob2);
  str("recipient2", s.recipient2);
  str("choice", s.choice);
  auto list = [&](const char* key, std::vector<std::string>& field) {
    if (j.contains(key)) field = j[key].get<std::vector<std::string>>();
  };
  list("demographic_columns", s.demographic_columns);
  list("text_columns", s.text_columns);
  list("self_levels", s.self_levels);
  list("other_levels", s.other_levels);
  list("option1_levels", s.option1_levels);
  list("option2_levels", s.option2_levels);
  if (j.contains("codebook")) {
    for (auto& [col, levels] : j["codebook"].items())
      for (auto& [level, code] : levels.items())
        s.codebook[col][level] = code.get<double>();
  }
  if (!s.demographic_columns.empty() && s.demographic_columns.size() != 11)
    throw ValidationError("schema must map exactly 11 demographic columns");
  if (!s.text_columns.empty() && s.text_columns.size() != 2)
    throw ValidationError("schema must map exactly 2 text columns");
  return s;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& raw, std::size_t row, const std::string& col) {
  std::string s = trim(raw);
  bool percent = !s.empty() && s.back() == '%';
  if (percent) s.pop_back();
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return percent ? v / 100.0 : v;
  } catch (const std::exception&) {
    throw UnparsableValue(row, col, raw);
  }
}

bool matches(const std::string& value, const std::vector<std::string>& levels) {
  std::string v = lower(trim(value));
  for (const auto& l : levels)
    if (v == lower(l)) return true;
  return false;
}

Recipient parse_recipient(const std::string& value, const Schema& schema,
                          std::size_t row, const std::string& col) {
  if (matches(value, schema.self_levels)) return Recipient::Self;
  if (matches(value, schema.other_levels)) return Recipient::Other;
  throw UnparsableValue(row, col, value);
}

Choice parse_choice(const std::string& value, const Schema& schema,
                    std::size_t row, const std::string& col) {
  if (matches(value, schema.option1_levels)) return Choice::Option1;
  if (matches(value, schema.option2_levels)) return Choice::Option2;
  throw UnparsableValue(row, col, value);
}

double check_prob(double p, std::size_t row) {
  if (p < 0.0 || p > 1.0) throw ProbabilityOutOfRange(row, p);
  return p;
}

}  // namespace

Dataset load_choices(const std::string& path, const Schema& schema) {
  auto table = csv::read_file(path, schema.delimiter);
  const auto c_user = table.column(schema.user_id);
  const auto c_o1 = table.column(schema.outcome1);
  const auto c_p1 = table.column(schema.prob1);
  const auto c_r1 = table.column(schema.recipient1);
  const auto c_o2 = table.column(schema.outcome2);
  const auto c_p2 = table.column(schema.prob2);
  const auto c_r2 = table.column(schema.recipient2);
  const auto c_choice = table.column(schema.choice);

  Dataset ds;
  ds.records.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::size_t line = i + 2;  // 1-based, after header
    ChoiceRecord rec;
    rec.user_id = trim(row.at(c_user));
    rec.scenario.option1.outcome = parse_number(row.at(c_o1), line, schema.outcome1);
    rec.scenario.option1.prob =
        check_prob(parse_number(row.at(c_p1), line, schema.prob1), line);
    rec.scenario.option1.recipient =
        parse_recipient(row.at(c_r1), schema, line, schema.recipient1);
    rec.scenario.option2.outcome = parse_number(row.at(c_o2), line, schema.outcome2);
    rec.scenario.option2.prob =
        check_prob(parse_number(row.at(c_p2), line, schema.prob2), line);
    rec.scenario.option2.recipient =
        parse_recipient(row.at(c_r2), schema, line, schema.recipient2);
    rec.choice = parse_choice(row.at(c_choice), schema, line, schema.choice);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream units(text);
  std::string unit;
  while (std::getline(units, unit, ',')) {
    std::string cleaned;
    for (unsigned char c : lower(unit)) {
      if (std::isalnum(c) || c == '_')
        cleaned += static_cast<char>(c);
      else if (std::isspace(c))
        cleaned += ' ';
    }
    std::istringstream words(cleaned);
    std::vector<std::string> parts;
    std::string w;
    while (words >> w) parts.push_back(w);
    if (parts.empty()) continue;
    if (parts.size() > 1) {
      std::string phrase = parts[0];
      for (std::size_t i = 1; i < parts.size(); ++i) phrase += "_" + parts[i];
      tokens.push_back(phrase);
    }
    for (auto& p : parts) tokens.push_back(std::move(p));
  }
  return tokens;
}

std::map<std::string, Participant> load_participants(const std::string& path,
                                                     const Schema& schema) {
  auto table = csv::read_file(path, schema.delimiter);
  const auto c_user = table.column(schema.user_id);
  std::vector<std::size_t> demo_cols;
  for (const auto& col : schema.demographic_columns)
    demo_cols.push_back(table.column(col));
  std::vector<std::size_t> text_cols;
  for (const auto& col : schema.text_columns)
    text_cols.push_back(table.column(col));

  std::map<std::string, Participant> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::size_t line = i + 2;
    Participant p;
    p.user_id = trim(row.at(c_user));
    p.demographics.resize(static_cast<Eigen::Index>(demo_cols.size()));
    for (std::size_t d = 0; d < demo_cols.size(); ++d) {
      const auto& col = schema.demographic_columns[d];
      const std::string raw = trim(row.at(demo_cols[d]));
      auto cb = schema.codebook.find(col);
      if (cb != schema.codebook.end()) {
        auto level = cb->second.find(raw);
        if (level == cb->second.end()) throw UnknownCategoryLevel(col, raw);
        p.demographics[static_cast<Eigen::Index>(d)] = level->second;
      } else {
        p.demographics[static_cast<Eigen::Index>(d)] = parse_number(raw, line, col);
      }
    }
    for (auto tc : text_cols) {
      auto toks = tokenize(row.at(tc));
      p.text_tokens.insert(p.text_tokens.end(), toks.begin(), toks.end());
    }
    out[p.user_id] = std::move(p);
  }
  return out;
}

Features encode_features(const GambleScenario& s) {
  Features f;
  f << s.option1.outcome, s.option1.prob,
      s.option1.recipient == Recipient::Other ? 1.0 : 0.0, s.option2.outcome,
      s.option2.prob, s.option2.recipient == Recipient::Other ? 1.0 : 0.0;
  return f;
}

Frame frame_of(const GambleScenario& s) {
  return (s.option1.outcome < 0.0 || s.option2.outcome < 0.0) ? Frame::Loss
                                                              : Frame::Gain;
}

Frame frame_of(const ChoiceRecord& record) { return frame_of(record.scenario); }

Split make_split(const Dataset& dataset, const SplitSpec& spec) {
  const std::size_t n = dataset.records.size();
  if (n == 0) throw EmptyDataset();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  const auto n_train =
      static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  const std::size_t n_rest = n - n_train;
  const std::size_t n_val = (n_rest + 1) / 2;

  Split split;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = dataset.records[idx[i]];
    if (i < n_train)
      split.train.push_back(rec);
    else if (i < n_train + n_val)
      split.val.push_back(rec);
    else
      split.test.push_back(rec);
  }
  return split;
}

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void save_choices(const std::string& path, const Dataset& dataset) {
  csv::Table t;
  t.header = {"user_id", "outcome.1", "prob.1", "recipient.1",
              "outcome.2", "prob.2", "recipient.2", "choice"};
  for (const auto& r : dataset.records) {
    const auto& o1 = r.scenario.option1;
    const auto& o2 = r.scenario.option2;
    t.rows.push_back({r.user_id, fmt(o1.outcome), fmt(o1.prob),
                      o1.recipient == Recipient::Self ? "self" : "other",
                      fmt(o2.outcome), fmt(o2.prob),
                      o2.recipient == Recipient::Self ? "self" : "other",
                      r.choice == Choice::Option1 ? "1" : "2"});
  }
  csv::write_file(path, t);
}

void save_participants(const std::string& path,
                       const std::map<std::string, Participant>& participants) {
  csv::Table t;
  t.header = {"user_id"};
  for (int i = 1; i <= 11; ++i) t.header.push_back("demo." + std::to_string(i));
  t.header.push_back("text.1");
  t.header.push_back("text.2");
  for (const auto& [id, p] : participants) {
    std::vector<std::string> row = {id};
    for (int i = 0; i < 11; ++i)
      row.push_back(i < p.demographics.size() ? fmt(p.demographics[i]) : "0");
    std::string text;
    for (std::size_t i = 0; i < p.text_tokens.size(); ++i) {
      if (i) text += ", ";
      text += p.text_tokens[i];
    }
    row.push_back(text);
    row.push_back("");
    t.rows.push_back(std::move(row));
  }
  csv::write_file(path, t);
}

}  // namespace choicelab
