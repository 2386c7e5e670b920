#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "choicelab/harness.hpp"
#include "choicelab/repr.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace choicelab;

namespace {

std::string temp_file(const std::string& name, const std::string& content) {
  auto p = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p;
}

Sample id_sample(int user, double x0, int label) {
  Sample s;
  s.user = user;
  s.features = Features::Zero();
  s.features[0] = x0;
  s.label = label;
  return s;
}

}  // namespace

TEST_CASE("beh2vec architecture dimensions") {
  auto net = make_beh2vec({"a", "b", "c"}, 1);
  CHECK(net.embedding.matrix.rows() == 3);
  CHECK(net.embedding.matrix.cols() == 200);
  CHECK(net.encoder.input_dim() == 200);
  CHECK(net.encoder.output_dim() == 200);
  CHECK(net.trunk.input_dim() == 206);
  CHECK(net.trunk.output_dim() == 1);
}

TEST_CASE("text model architecture: trunk sees only 70 inputs") {
  auto net = make_text_model(1);
  CHECK(net.encoder.input_dim() == 300);
  CHECK(net.encoder.output_dim() == 64);
  CHECK(net.trunk.input_dim() == 70);
}

TEST_CASE("demo model takes 11 inputs") {
  auto net = make_demo_model(1);
  CHECK(net.encoder.input_dim() == 11);
  CHECK(net.trunk.input_dim() == 70);
}

TEST_CASE("zero-initialized beh2vec predicts one half") {
  auto net = make_beh2vec({"a", "b"}, 3, 8);
  net.embedding.matrix.setZero();
  for (auto& l : net.encoder.layers) {
    l.weights.setZero();
    l.bias.setZero();
  }
  for (auto& l : net.trunk.layers) {
    l.weights.setZero();
    l.bias.setZero();
  }
  CHECK(net.predict(id_sample(0, 1.0, 1)) == 0.5);
}

TEST_CASE("same user contributes the same embedding in every scenario") {
  auto net = make_beh2vec({"a", "b"}, 3, 8);
  // the user-path output feeding the trunk depends only on the user
  Vec h1 = net.encoder.forward(net.embedding.matrix.row(0).transpose());
  Vec h2 = net.encoder.forward(net.embedding.matrix.row(0).transpose());
  CHECK(h1 == h2);
  // unknown user throws
  Sample s = id_sample(7, 0.0, 1);
  CHECK_THROWS_AS(net.predict(s), UnknownUser);
}

TEST_CASE("embedding-row isolation: other users' rows get zero gradient") {
  auto net = make_beh2vec({"a", "b", "c", "d"}, 5, 8);
  auto grads = net.make_grads();
  net.forward_backward(id_sample(2, 1.0, 1), grads);
  CHECK(grads.embedding_rows.count(2) == 1);
  CHECK(grads.embedding_rows.size() == 1);  // rows 0,1,3 untouched
}

TEST_CASE("beh2vec gradients match finite differences") {
  auto net = make_beh2vec({"a", "b", "c"}, 11, 6);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  std::vector<Sample> samples;
  for (int i = 0; i < 3; ++i) {
    Sample s;
    s.user = i;
    s.features = Features::NullaryExpr([&]() { return normal(rng); });
    s.label = i % 2;
    samples.push_back(s);
  }
  auto report = grad_check(net, samples);
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("word vector loading") {
  auto path = temp_file("vec_ok.txt",
                        "alpha 1 0 0\n"
                        "beta 0 1 0\n"
                        "gamma 0 0 1\n");
  auto table = load_word_vectors(path);
  CHECK(table.dim == 3);
  CHECK(table.vocab.size() == 3);
  CHECK(table.vocab.at("beta")[1] == 1.0);

  auto bad = temp_file("vec_bad.txt", "alpha 1 0 0\nbeta 0 1\n");
  CHECK_THROWS_AS(load_word_vectors(bad), DimensionInconsistent);

  // duplicate token: last occurrence wins
  auto dup = temp_file("vec_dup.txt", "alpha 1 0\nalpha 2 0\n");
  auto t2 = load_word_vectors(dup);
  CHECK(t2.vocab.at("alpha")[0] == 2.0);

  // optional "<count> <dim>" preamble
  auto pre = temp_file("vec_pre.txt", "2 3\nalpha 1 0 0\nbeta 0 1 0\n");
  CHECK(load_word_vectors(pre).vocab.size() == 2);
}

TEST_CASE("user_text_vector centroid") {
  WordVectorTable table;
  table.dim = 2;
  table.vocab["v"] = (Vec(2) << 2.0, 0.0).finished();
  table.vocab["w"] = (Vec(2) << 0.0, 4.0).finished();

  CHECK(user_text_vector(table, {"v"}) == table.vocab["v"]);
  Vec mean = user_text_vector(table, {"v", "w"});
  CHECK(mean[0] == 1.0);
  CHECK(mean[1] == 2.0);
  CHECK_THROWS_AS(user_text_vector(table, {"oov", "tokens"}), NoValidTokens);
  CHECK_THROWS_AS(user_text_vector(table, {}), NoValidTokens);

  // permutation invariance
  CHECK(user_text_vector(table, {"w", "v"}) == mean);

  // scale equivariance
  WordVectorTable scaled = table;
  for (auto& [k, vec] : scaled.vocab) vec *= 3.0;
  CHECK(user_text_vector(scaled, {"v", "w"}) == 3.0 * mean);
}

TEST_CASE("phrase lookup takes precedence over its words") {
  WordVectorTable table;
  table.dim = 1;
  table.vocab["climate_change"] = (Vec(1) << 10.0).finished();
  table.vocab["climate"] = (Vec(1) << 1.0).finished();
  table.vocab["change"] = (Vec(1) << 2.0).finished();
  // tokenize order: phrase then its words
  auto v = user_text_vector(table, tokenize("climate change"));
  CHECK(v[0] == 10.0);
  // without the phrase in vocab, fall back to the words
  table.vocab.erase("climate_change");
  v = user_text_vector(table, tokenize("climate change"));
  CHECK(v[0] == 1.5);
}

TEST_CASE("text_vectors: all-OOV users get the corpus mean and are counted") {
  WordVectorTable table;
  table.dim = 1;
  table.vocab["known"] = (Vec(1) << 4.0).finished();
  table.vocab["other"] = (Vec(1) << 2.0).finished();
  std::map<std::string, Participant> parts;
  parts["u1"] = {"u1", Vec(), {"known"}};
  parts["u2"] = {"u2", Vec(), {"mystery"}};
  OovStats stats;
  auto vectors = text_vectors(parts, table, &stats);
  CHECK(vectors.at("u1")[0] == 4.0);
  CHECK(vectors.at("u2")[0] == 3.0);  // corpus mean
  CHECK(stats.users_all_oov == 1);
  CHECK(stats.tokens_oov == 1);
  CHECK(stats.tokens_total == 2);
}

TEST_CASE("trained model prediction is a pure function") {
  auto net = make_beh2vec({"a", "b"}, 13, 8);
  Sample s = id_sample(1, 0.4, 1);
  const double p1 = net.predict(s);
  const double p2 = net.predict(s);
  CHECK(p1 == p2);
}

TEST_CASE("beh2vec memorizes a single user's constant choice") {
  Dataset ds;
  auto gambles = design_space_gambles(16, 3);
  for (const auto& g : gambles)
    ds.records.push_back({"solo", g, Choice::Option1});
  Split split;
  split.train = ds.records;
  split.val = ds.records;
  split.test = ds.records;
  TrainConfig config;
  config.learning_rate = 0.01;
  config.max_epochs = 60;
  config.patience = 60;
  config.seed = 4;
  auto trained = train_beh2vec(split, config, 16);
  auto samples = samples_for_ids(split.test, trained.net.embedding);
  for (const auto& s : samples) CHECK(trained.net.predict(s) > 0.5);
}

TEST_CASE("add_new_user: frozen parameters, only the new row moves") {
  auto gambles = design_space_gambles(12, 5);
  Dataset ds;
  for (const auto& g : gambles) {
    ds.records.push_back({"a", g, Choice::Option1});
    ds.records.push_back({"b", g, Choice::Option2});
  }
  Split split;
  split.train = ds.records;
  split.val = ds.records;
  split.test = ds.records;
  TrainConfig config;
  config.max_epochs = 10;
  config.seed = 6;
  auto trained = train_beh2vec(split, config, 8);
  ChoiceNet before = trained.net;

  std::vector<std::pair<GambleScenario, Choice>> observed;
  for (const auto& g : gambles) observed.emplace_back(g, Choice::Option1);
  TrainConfig fit = config;
  fit.max_epochs = 40;
  fit.learning_rate = 0.05;
  add_new_user(trained.net, "newcomer", observed, fit);

  // old users' predictions bit-identical
  for (int u = 0; u < 2; ++u) {
    Sample s = id_sample(u, 0.3, 1);
    s.features = encode_features(gambles[0]);
    CHECK(trained.net.predict(s) == before.predict(s));
  }
  // dense parameters untouched
  for (std::size_t li = 0; li < before.trunk.layers.size(); ++li)
    CHECK(before.trunk.layers[li].weights == trained.net.trunk.layers[li].weights);
  // old embedding rows untouched, new row appended and moved
  CHECK(trained.net.embedding.matrix.rows() == 3);
  CHECK(before.embedding.matrix == trained.net.embedding.matrix.topRows(2));
  CHECK(trained.net.embedding.has("newcomer"));

  CHECK_THROWS_AS(add_new_user(trained.net, "empty", {}, fit), EmptyObservations);
}

TEST_CASE("add_new_user with zero epochs keeps the initialized row") {
  auto net = make_beh2vec({"a"}, 9, 4);
  TrainConfig config;
  config.max_epochs = 0;
  std::vector<std::pair<GambleScenario, Choice>> observed = {
      {design_space_gambles(1, 0)[0], Choice::Option1}};
  add_new_user(net, "fresh", observed, config);
  ChoiceNet again = make_beh2vec({"a"}, 9, 4);
  TrainConfig c2 = config;
  add_new_user(again, "fresh", observed, c2);
  CHECK(net.embedding.matrix == again.embedding.matrix);
}

TEST_CASE("checkpoint round-trip is exact") {
  auto net = make_beh2vec({"a", "b"}, 17, 8);
  auto path = (std::filesystem::temp_directory_path() / "net.ckpt").string();
  net.save(path);
  ChoiceNet back = ChoiceNet::load(path);
  CHECK(back.flat_params() == net.flat_params());
  CHECK(back.embedding.id_index == net.embedding.id_index);
  Sample s = id_sample(1, 0.4, 0);
  CHECK(back.predict(s) == net.predict(s));
}
