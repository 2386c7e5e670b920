#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "choicelab/csv.hpp"
#include "choicelab/data.hpp"

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace choicelab;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("choicelab_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name, const std::string& content) {
    auto p = (path / name).string();
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  }
};

const char* kChoicesHeader =
    "user_id,outcome.1,prob.1,recipient.1,outcome.2,prob.2,recipient.2,choice\n";

Dataset tiny_dataset(int n_users, int n_records_per_user) {
  Dataset ds;
  for (int u = 0; u < n_users; ++u) {
    for (int r = 0; r < n_records_per_user; ++r) {
      ChoiceRecord rec;
      rec.user_id = "u" + std::to_string(u);
      rec.scenario.option1 = {10.0 + r, 0.5, Recipient::Self};
      rec.scenario.option2 = {20.0, 0.25, (r % 2) ? Recipient::Other : Recipient::Self};
      rec.choice = (u + r) % 2 ? Choice::Option1 : Choice::Option2;
      ds.records.push_back(rec);
    }
  }
  return ds;
}

}  // namespace

TEST_CASE("load_choices parses rows into records") {
  TempDir dir;
  auto path = dir.file("choices.csv",
                       std::string(kChoicesHeader) +
                           "u1,10,0.5,self,20,0.25,self,1\n"
                           "u2,-5,1.0,other,5,0.5,self,2\n");
  Dataset ds = load_choices(path, Schema::default_schema());
  REQUIRE(ds.records.size() == 2);
  CHECK(ds.records[0].user_id == "u1");
  CHECK(ds.records[0].scenario.option1.outcome == 10.0);
  CHECK(ds.records[0].scenario.option2.prob == 0.25);
  CHECK(ds.records[0].choice == Choice::Option1);
  CHECK(ds.records[1].scenario.option1.outcome == -5.0);
  CHECK(ds.records[1].scenario.option1.recipient == Recipient::Other);
  CHECK(ds.records[1].choice == Choice::Option2);
}

TEST_CASE("load_choices: header-only file gives empty dataset") {
  TempDir dir;
  auto path = dir.file("empty.csv", kChoicesHeader);
  Dataset ds = load_choices(path, Schema::default_schema());
  CHECK(ds.records.empty());
}

TEST_CASE("load_choices: probability out of range") {
  TempDir dir;
  auto path = dir.file("bad.csv", std::string(kChoicesHeader) +
                                      "u1,10,1.7,self,20,0.25,self,1\n");
  CHECK_THROWS_AS(load_choices(path, Schema::default_schema()),
                  ProbabilityOutOfRange);
}

TEST_CASE("load_choices: missing column") {
  TempDir dir;
  auto path = dir.file("missing.csv", "user_id,outcome.1\nu1,10\n");
  CHECK_THROWS_AS(load_choices(path, Schema::default_schema()), MissingColumn);
}

TEST_CASE("load_choices: unparsable value names row and column") {
  TempDir dir;
  auto path = dir.file("bad.csv", std::string(kChoicesHeader) +
                                      "u1,ten,0.5,self,20,0.25,self,1\n");
  CHECK_THROWS_AS(load_choices(path, Schema::default_schema()), UnparsableValue);
}

TEST_CASE("tokenize: comma-separated single words") {
  auto toks = tokenize("politics, history, sports");
  CHECK(toks == std::vector<std::string>{"politics", "history", "sports"});
}

TEST_CASE("tokenize: phrases kept as unit plus words") {
  auto toks = tokenize("climate change, politics");
  CHECK(toks == std::vector<std::string>{"climate_change", "climate", "change",
                                         "politics"});
}

TEST_CASE("tokenize: lowercases and strips punctuation") {
  auto toks = tokenize("Video Games!, COOKING.");
  CHECK(toks == std::vector<std::string>{"video_games", "video", "games", "cooking"});
}

TEST_CASE("tokenize: empty text") { CHECK(tokenize("").empty()); }

TEST_CASE("load_participants codes demographics and tokenizes text") {
  TempDir dir;
  std::string header = "user_id";
  for (int i = 1; i <= 11; ++i) header += ",demo." + std::to_string(i);
  header += ",text.1,text.2\n";
  auto path = dir.file("parts.csv",
                       header + "u1,0,1,2,3,4,0,1,2,3,4,0,\"politics, history\",sports\n"
                                "u2,1,1,1,1,1,1,1,1,1,1,1,,\n");
  auto parts = load_participants(path, Schema::default_schema());
  REQUIRE(parts.size() == 2);
  CHECK(parts.at("u1").demographics.size() == 11);
  CHECK(parts.at("u1").demographics[2] == 2.0);
  CHECK(parts.at("u1").text_tokens ==
        std::vector<std::string>{"politics", "history", "sports"});
  CHECK(parts.at("u2").text_tokens.empty());
}

TEST_CASE("load_participants: codebook rejects unknown levels") {
  TempDir dir;
  Schema schema = Schema::default_schema();
  schema.codebook["demo.1"] = {{"male", 0.0}, {"female", 1.0}};
  std::string header = "user_id";
  for (int i = 1; i <= 11; ++i) header += ",demo." + std::to_string(i);
  header += ",text.1,text.2\n";
  auto good = dir.file("good.csv", header + "u1,female,1,1,1,1,1,1,1,1,1,1,,\n");
  auto parts = load_participants(good, schema);
  CHECK(parts.at("u1").demographics[0] == 1.0);
  auto bad = dir.file("bad.csv", header + "u1,unknown,1,1,1,1,1,1,1,1,1,1,,\n");
  CHECK_THROWS_AS(load_participants(bad, schema), UnknownCategoryLevel);
}

TEST_CASE("encode_features fixed order and recipient coding") {
  GambleScenario s;
  s.option1 = {10.0, 0.5, Recipient::Self};
  s.option2 = {20.0, 0.25, Recipient::Self};
  Features f = encode_features(s);
  CHECK(f[0] == 10.0);
  CHECK(f[1] == 0.5);
  CHECK(f[2] == 0.0);
  CHECK(f[3] == 20.0);
  CHECK(f[4] == 0.25);
  CHECK(f[5] == 0.0);

  s.option2 = {-5.0, 1.0, Recipient::Other};
  f = encode_features(s);
  CHECK(f[3] == -5.0);
  CHECK(f[4] == 1.0);
  CHECK(f[5] == 1.0);

  s.option2 = s.option1;
  f = encode_features(s);
  CHECK(f.head<3>() == f.tail<3>());
}

TEST_CASE("frame_of: any negative outcome means Loss") {
  GambleScenario s;
  s.option1 = {10.0, 0.5, Recipient::Self};
  s.option2 = {20.0, 0.5, Recipient::Self};
  CHECK(frame_of(s) == Frame::Gain);
  s.option1.outcome = -10.0;
  s.option2.outcome = -5.0;
  CHECK(frame_of(s) == Frame::Loss);
  s.option1.outcome = 0.0;
  s.option2.outcome = 5.0;
  CHECK(frame_of(s) == Frame::Gain);
}

TEST_CASE("make_split: sizes, determinism, disjointness") {
  Dataset ds = tiny_dataset(10, 20);  // 200 records
  SplitSpec spec;
  spec.seed = 42;
  Split a = make_split(ds, spec);
  CHECK(a.train.size() == 160);
  CHECK(a.val.size() == 20);
  CHECK(a.test.size() == 20);

  Split b = make_split(ds, spec);
  for (std::size_t i = 0; i < a.train.size(); ++i)
    CHECK(a.train[i].user_id == b.train[i].user_id);
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    CHECK(a.test[i].user_id == b.test[i].user_id);
    CHECK(a.test[i].scenario.option1.outcome == b.test[i].scenario.option1.outcome);
  }

  // union = all, pairwise disjoint (records made unique via outcome value)
  auto key = [](const ChoiceRecord& r) {
    return r.user_id + "#" + std::to_string(r.scenario.option1.outcome) + "#" +
           std::to_string(r.scenario.option2.recipient == Recipient::Other);
  };
  std::multiset<std::string> everything, original;
  for (const auto& r : ds.records) original.insert(key(r));
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (const auto& r : *part) everything.insert(key(r));
  CHECK(everything == original);
}

TEST_CASE("make_split honors train_fraction within rounding for small N") {
  for (int n = 5; n <= 40; ++n) {
    Dataset ds = tiny_dataset(1, n);
    SplitSpec spec;
    spec.train_fraction = 0.8;
    Split s = make_split(ds, spec);
    CHECK(std::abs(static_cast<double>(s.train.size()) - 0.8 * n) <= 1.0);
    CHECK(s.train.size() + s.val.size() + s.test.size() == static_cast<std::size_t>(n));
  }
}

TEST_CASE("make_split: empty dataset") {
  Dataset ds;
  CHECK_THROWS_AS(make_split(ds, SplitSpec{}), EmptyDataset);
}

TEST_CASE("paper-scale split arithmetic: 77120 -> 61696/7712/7712") {
  Dataset ds;
  ds.records.resize(77120);
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    ds.records[i].user_id = "u" + std::to_string(i % 1205);
  Split s = make_split(ds, SplitSpec{});
  CHECK(s.train.size() == 61696);
  CHECK(s.val.size() == 7712);
  CHECK(s.test.size() == 7712);
}

TEST_CASE("round trip: save then load yields an identical dataset") {
  TempDir dir;
  Dataset ds = tiny_dataset(4, 6);
  ds.records[3].scenario.option1.prob = 0.123456789012345;
  auto path = (dir.path / "canonical.csv").string();
  save_choices(path, ds);
  Dataset back = load_choices(path, Schema::default_schema());
  REQUIRE(back.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto &a = ds.records[i], &b = back.records[i];
    CHECK(a.user_id == b.user_id);
    CHECK(a.choice == b.choice);
    CHECK(encode_features(a.scenario) == encode_features(b.scenario));
  }

  // and the participants table
  std::map<std::string, Participant> parts;
  Participant p;
  p.user_id = "u1";
  p.demographics = Vec::LinSpaced(11, 0, 10);
  p.text_tokens = {"climate_change", "climate", "change", "politics"};
  parts["u1"] = p;
  auto ppath = (dir.path / "parts.csv").string();
  save_participants(ppath, parts);
  auto back_parts = load_participants(ppath, Schema::default_schema());
  CHECK(back_parts.at("u1").demographics == p.demographics);
  CHECK(back_parts.at("u1").text_tokens == p.text_tokens);
}

TEST_CASE("csv quoting round-trips") {
  csv::Table t;
  t.header = {"a", "b"};
  t.rows.push_back({"hello, world", "quote\"inside"});
  auto text = csv::to_string(t);
  auto back = csv::read_string(text);
  CHECK(back.rows[0][0] == "hello, world");
  CHECK(back.rows[0][1] == "quote\"inside");
}
