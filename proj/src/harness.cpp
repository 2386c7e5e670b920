#include "choicelab/harness.hpp"

#include "choicelab/csv.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace choicelab {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Rf: return "rf";
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Beh2vecId: return "beh2vec_id";
    case ModelKind::Beh2vecDemo: return "beh2vec_demo";
    case ModelKind::Beh2vecText: return "beh2vec_text";
    case ModelKind::BehavioralHmc: return "behavioral_hmc";
    case ModelKind::BehavioralMap: return "behavioral_map";
  }
  return "?";
}

std::string to_string(InputSet inputs) {
  switch (inputs) {
    case InputSet::G: return "G";
    case InputSet::GUserId: return "G+UserID";
    case InputSet::GDemo: return "G+Demographics";
    case InputSet::GText: return "G+Text";
  }
  return "?";
}

ModelKind model_kind_from(const std::string& name) {
  for (ModelKind k : {ModelKind::Rf, ModelKind::Mlp, ModelKind::Beh2vecId,
                      ModelKind::Beh2vecDemo, ModelKind::Beh2vecText,
                      ModelKind::BehavioralHmc, ModelKind::BehavioralMap})
    if (to_string(k) == name) return k;
  throw ValidationError("unknown model kind: " + name);
}

namespace {

InputSet input_set_from(const std::string& name) {
  for (InputSet s : {InputSet::G, InputSet::GUserId, InputSet::GDemo, InputSet::GText})
    if (to_string(s) == name) return s;
  throw ValidationError("unknown input set: " + name);
}

std::string data_root() {
  const char* env = std::getenv("CHOICELAB_DATA");
  return env ? env : "";
}

std::string resolve_path(std::string p) {
  if (p.empty() || fs::path(p).is_absolute() || data_root().empty()) return p;
  if (fs::exists(p)) return p;
  return (fs::path(data_root()) / p).string();
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config parse error in " + path + ": " + e.what());
  }
  ExperimentConfig c;
  c.model = model_kind_from(j.at("model").get<std::string>());
  if (j.contains("inputs")) c.inputs = input_set_from(j["inputs"].get<std::string>());
  auto str = [&](const char* key, std::string& field) {
    if (j.contains(key)) field = j[key].get<std::string>();
  };
  str("choices", c.choices_path);
  str("participants", c.participants_path);
  str("vectors", c.vectors_path);
  str("schema", c.schema_path);
  str("out", c.out_dir);
  if (!j.contains("seed")) throw ValidationError("config requires a seed");
  const auto seed = j["seed"].get<std::uint64_t>();
  c.split.seed = seed;
  c.train.seed = seed;
  c.hmc.seed = seed;
  c.forest.seed = seed;
  if (j.contains("split")) {
    const auto& s = j["split"];
    if (s.contains("train_fraction")) c.split.train_fraction = s["train_fraction"].get<double>();
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    if (t.contains("learning_rate")) c.train.learning_rate = t["learning_rate"].get<double>();
    if (t.contains("batch_size")) c.train.batch_size = t["batch_size"].get<int>();
    if (t.contains("max_epochs")) c.train.max_epochs = t["max_epochs"].get<int>();
    if (t.contains("patience")) c.train.patience = t["patience"].get<int>();
  }
  if (j.contains("hmc")) {
    const auto& h = j["hmc"];
    if (h.contains("chains")) c.hmc.chains = h["chains"].get<int>();
    if (h.contains("iterations")) c.hmc.iterations = h["iterations"].get<int>();
    if (h.contains("warmup")) c.hmc.warmup = h["warmup"].get<int>();
    if (h.contains("target_accept")) c.hmc.target_accept = h["target_accept"].get<double>();
    if (h.contains("leapfrog_steps")) c.hmc.leapfrog_steps = h["leapfrog_steps"].get<int>();
    if (h.contains("step_size")) c.hmc.fixed_step_size = h["step_size"].get<double>();
  }
  if (j.contains("forest")) {
    const auto& f = j["forest"];
    if (f.contains("n_trees")) c.forest.n_trees = f["n_trees"].get<int>();
    if (f.contains("max_depth")) c.forest.max_depth = f["max_depth"].get<int>();
    if (f.contains("min_leaf")) c.forest.min_leaf = f["min_leaf"].get<int>();
    if (f.contains("features_per_split"))
      c.forest.features_per_split = f["features_per_split"].get<int>();
    if (f.contains("bootstrap")) c.forest.bootstrap = f["bootstrap"].get<bool>();
  }
  return c;
}

std::string ExperimentConfig::canonical_json() const {
  json j;
  j["model"] = to_string(model);
  j["inputs"] = to_string(inputs);
  j["choices"] = choices_path;
  j["participants"] = participants_path;
  j["vectors"] = vectors_path;
  j["schema"] = schema_path;
  j["seed"] = split.seed;
  j["split"] = {{"train_fraction", split.train_fraction}};
  j["train"] = {{"learning_rate", train.learning_rate},
                {"batch_size", train.batch_size},
                {"max_epochs", train.max_epochs},
                {"patience", train.patience}};
  j["hmc"] = {{"chains", hmc.chains},
              {"iterations", hmc.iterations},
              {"warmup", hmc.warmup},
              {"target_accept", hmc.target_accept},
              {"leapfrog_steps", hmc.leapfrog_steps}};
  j["forest"] = {{"n_trees", forest.n_trees},
                 {"max_depth", forest.max_depth},
                 {"min_leaf", forest.min_leaf},
                 {"features_per_split", forest.features_per_split},
                 {"bootstrap", forest.bootstrap}};
  return j.dump(2);
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical_json()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

std::string ExperimentConfig::model_name() const {
  switch (model) {
    case ModelKind::Rf:
    case ModelKind::Mlp:
      return to_string(model) + "(" + to_string(inputs) + ")";
    case ModelKind::Beh2vecId: return "beh2vec(G+UserID)";
    case ModelKind::Beh2vecDemo: return "beh2vec(G+Demographics)";
    case ModelKind::Beh2vecText: return "beh2vec(G+Text)";
    case ModelKind::BehavioralHmc: return "behavioral(hmc)";
    case ModelKind::BehavioralMap: return "behavioral(map)";
  }
  return to_string(model);
}

MetricsReport evaluate(const std::vector<double>& probabilities,
                       const std::vector<ChoiceRecord>& records) {
  if (probabilities.size() != records.size())
    throw LengthMismatch(probabilities.size(), records.size());
  MetricsReport r;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Choice predicted =
        probabilities[i] > 0.5 ? Choice::Option1 : Choice::Option2;
    const bool correct = predicted == records[i].choice;
    const bool gain = frame_of(records[i]) == Frame::Gain;
    ++r.n_all;
    if (gain) ++r.n_gains; else ++r.n_losses;
    if (correct) {
      ++r.correct_all;
      if (gain) ++r.correct_gains; else ++r.correct_losses;
    }
  }
  auto ratio = [](long c, long n) { return n ? static_cast<double>(c) / n : 0.0; };
  r.accuracy_all = ratio(r.correct_all, r.n_all);
  r.accuracy_gains = ratio(r.correct_gains, r.n_gains);
  r.accuracy_losses = ratio(r.correct_losses, r.n_losses);
  return r;
}

MetricsReport combine(const std::vector<MetricsReport>& folds) {
  MetricsReport r;
  for (const auto& f : folds) {
    r.n_all += f.n_all;
    r.n_gains += f.n_gains;
    r.n_losses += f.n_losses;
    r.correct_all += f.correct_all;
    r.correct_gains += f.correct_gains;
    r.correct_losses += f.correct_losses;
  }
  auto ratio = [](long c, long n) { return n ? static_cast<double>(c) / n : 0.0; };
  r.accuracy_all = ratio(r.correct_all, r.n_all);
  r.accuracy_gains = ratio(r.correct_gains, r.n_gains);
  r.accuracy_losses = ratio(r.correct_losses, r.n_losses);
  if (!folds.empty()) r.model = folds.front().model;
  return r;
}

std::vector<GambleScenario> design_space_gambles(int n, std::uint64_t seed) {
  static const double kOutcomes[] = {5.0, 10.0, 20.0};
  static const double kProbs[] = {0.25, 0.5, 1.0};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick3(0, 2);
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<GambleScenario> out;
  for (int i = 0; i < n; ++i) {
    const double sign = i < n / 2 ? 1.0 : -1.0;  // first half gains
    GambleScenario s;
    for (GambleOption* opt : {&s.option1, &s.option2}) {
      opt->outcome = sign * kOutcomes[pick3(rng)];
      opt->prob = kProbs[pick3(rng)];
      opt->recipient = coin(rng) ? Recipient::Other : Recipient::Self;
    }
    out.push_back(s);
  }
  return out;
}

SimResult simulate_agents(const AgentSpec& spec) {
  if (spec.n_users < 1) throw ValidationError("n_users must be >= 1");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> demo_level(0, 4);
  static const char* kTokens[] = {
      "politics", "history",  "sports",   "science", "music",
      "movies",   "cooking",  "travel",   "finance", "art",
      "gaming",   "fitness",  "reading",  "nature",  "technology",
      "fashion",  "puzzles",  "gardening", "photography", "astronomy"};
  std::uniform_int_distribution<int> token_pick(0, 19);

  SimResult result;
  const int width = static_cast<int>(std::to_string(spec.n_users).size());
  for (int u = 0; u < spec.n_users; ++u) {
    std::ostringstream id;
    id << "agent";
    for (int pad = static_cast<int>(std::to_string(u + 1).size()); pad < width; ++pad)
      id << '0';
    id << (u + 1);
    result.user_ids.push_back(id.str());

    RawParams raw;
    for (int k = 0; k < 4; ++k)
      raw[k] = spec.prior.location[k] + spec.prior.scale[k] * normal(rng);
    const SVParams params = params_from_raw(raw);
    result.truth.push_back(params);

    Participant p;
    p.user_id = id.str();
    p.demographics = Vec::NullaryExpr(11, [&]() { return static_cast<double>(demo_level(rng)); });
    for (int t = 0; t < 3; ++t) p.text_tokens.push_back(kTokens[token_pick(rng)]);
    result.dataset.participants[p.user_id] = std::move(p);

    for (const auto& scenario : spec.gambles) {
      ChoiceRecord rec;
      rec.user_id = id.str();
      rec.scenario = scenario;
      rec.choice = unif(rng) < choice_prob(scenario, params) ? Choice::Option1
                                                             : Choice::Option2;
      result.dataset.records.push_back(std::move(rec));
    }
  }
  return result;
}

namespace {

std::string fmt_acc(double v) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << v;
  return out.str();
}

}  // namespace

std::string emit_report(std::vector<MetricsReport> reports, ReportFormat format) {
  if (reports.empty()) throw ValidationError("no reports to emit");
  std::stable_sort(reports.begin(), reports.end(),
                   [](const MetricsReport& a, const MetricsReport& b) {
                     return a.model < b.model;
                   });
  std::ostringstream out;
  const std::vector<std::string> cols = {"model",      "status",  "accuracy_all",
                                         "accuracy_gains", "accuracy_losses",
                                         "n_all",      "n_gains", "n_losses",
                                         "config_hash"};
  auto row_of = [](const MetricsReport& r) {
    std::vector<std::string> row = {r.model, r.skipped ? "SKIPPED" : "ok"};
    if (r.skipped) {
      row.insert(row.end(), {"-", "-", "-", "-", "-", "-"});
    } else {
      row.insert(row.end(),
                 {fmt_acc(r.accuracy_all), fmt_acc(r.accuracy_gains),
                  fmt_acc(r.accuracy_losses), std::to_string(r.n_all),
                  std::to_string(r.n_gains), std::to_string(r.n_losses)});
    }
    row.push_back(r.config_hash);
    return row;
  };
  if (format == ReportFormat::Csv) {
    csv::Table t;
    t.header = cols;
    for (const auto& r : reports) t.rows.push_back(row_of(r));
    out << csv::to_string(t);
  } else {
    auto line = [&](const std::vector<std::string>& cells) {
      out << "|";
      for (const auto& c : cells) out << " " << c << " |";
      out << "\n";
    };
    line(cols);
    std::vector<std::string> rule(cols.size(), "---");
    line(rule);
    for (const auto& r : reports) line(row_of(r));
  }
  return out.str();
}

void emit_report_file(const std::string& path, std::vector<MetricsReport> reports,
                      ReportFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write report: " + path);
  out << emit_report(std::move(reports), format);
}

namespace {

struct LoadedData {
  Dataset dataset;
  std::map<std::string, Participant> participants;
  bool have_participants = false;
};

LoadedData load_data(const ExperimentConfig& config) {
  Schema schema;
  std::string schema_path = config.schema_path;
  if (schema_path.empty()) {
    const char* env = std::getenv("CHOICELAB_SCHEMA");
    if (env) schema_path = env;
  }
  schema = schema_path.empty() ? Schema::default_schema() : Schema::load(schema_path);
  LoadedData data;
  if (config.choices_path.empty()) throw ValidationError("config has no choices path");
  data.dataset = load_choices(resolve_path(config.choices_path), schema);
  if (!config.participants_path.empty()) {
    data.participants =
        load_participants(resolve_path(config.participants_path), schema);
    data.dataset.participants = data.participants;
    data.have_participants = true;
  }
  return data;
}

std::map<std::string, int> user_index_of(const std::vector<std::string>& ids) {
  std::map<std::string, int> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = static_cast<int>(i);
  return out;
}

// Extra per-user raw inputs for the non-embedding baselines.
std::map<std::string, Vec> baseline_vectors(const ExperimentConfig& config,
                                            const LoadedData& data,
                                            const std::vector<std::string>& ids,
                                            std::string* skip_reason) {
  std::map<std::string, Vec> out;
  switch (config.inputs) {
    case InputSet::G:
      for (const auto& id : ids) out[id] = Vec();
      break;
    case InputSet::GUserId: {
      auto index = user_index_of(ids);
      for (const auto& id : ids) {
        Vec v(1);
        v << static_cast<double>(index.at(id));
        out[id] = v;
      }
      break;
    }
    case InputSet::GDemo: {
      if (!data.have_participants) {
        *skip_reason = "no participants file: demographics unavailable";
        return {};
      }
      return demographic_vectors(data.participants);
    }
    case InputSet::GText: {
      if (!data.have_participants || config.vectors_path.empty()) {
        *skip_reason = "text inputs need a participants file and --vectors";
        return {};
      }
      auto table = load_word_vectors(resolve_path(config.vectors_path));
      return text_vectors(data.participants, table);
    }
  }
  return out;
}

std::vector<double> predict_all(const ChoiceNet& net, const std::vector<Sample>& samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(net.predict(s));
  return out;
}

struct FoldOutcome {
  MetricsReport metrics;
  bool skipped = false;
  std::string note;
};

FoldOutcome run_fold(const ExperimentConfig& config, const LoadedData& data,
                     const Split& split, const fs::path& run_dir, int fold) {
  FoldOutcome out;
  const auto checkpoint = [&](const std::string& stem) {
    return (run_dir / (stem + ".fold" + std::to_string(fold))).string();
  };

  switch (config.model) {
    case ModelKind::Beh2vecId: {
      TrainedNet trained = train_beh2vec(split, config.train);
      trained.net.save(checkpoint("beh2vec_id.net"));
      auto test = samples_for_ids(split.test, trained.net.embedding);
      out.metrics = evaluate(predict_all(trained.net, test), split.test);
      break;
    }
    case ModelKind::Beh2vecDemo: {
      if (!data.have_participants) {
        out.skipped = true;
        out.note = "no participants file: demographics unavailable";
        return out;
      }
      TrainedNet trained = train_demo_model(split, data.participants, config.train);
      trained.net.save(checkpoint("beh2vec_demo.net"));
      auto vectors = demographic_vectors(data.participants);
      auto test = samples_for_vectors(split.test, vectors);
      out.metrics = evaluate(predict_all(trained.net, test), split.test);
      break;
    }
    case ModelKind::Beh2vecText: {
      if (!data.have_participants || config.vectors_path.empty()) {
        out.skipped = true;
        out.note = "text model needs a participants file and --vectors";
        return out;
      }
      auto table = load_word_vectors(resolve_path(config.vectors_path));
      TrainedNet trained =
          train_text_model(split, data.participants, table, config.train);
      trained.net.save(checkpoint("beh2vec_text.net"));
      auto vectors = text_vectors(data.participants, table);
      auto test = samples_for_vectors(split.test, vectors);
      out.metrics = evaluate(predict_all(trained.net, test), split.test);
      break;
    }
    case ModelKind::Mlp: {
      Dataset all;
      all.records = split.train;
      all.records.insert(all.records.end(), split.val.begin(), split.val.end());
      all.records.insert(all.records.end(), split.test.begin(), split.test.end());
      std::string reason;
      auto vectors = baseline_vectors(config, data, all.user_ids(), &reason);
      if (!reason.empty()) {
        out.skipped = true;
        out.note = reason;
        return out;
      }
      auto train = samples_for_vectors(split.train, vectors);
      auto val = samples_for_vectors(split.val, vectors);
      auto test = samples_for_vectors(split.test, vectors);
      const int extra = static_cast<int>(train.front().user_vec.size());
      ChoiceNet net = make_plain_mlp(extra, config.train.seed);
      {
        std::vector<Vec> feats;
        for (const auto& s : train) feats.emplace_back(s.features);
        net.feature_std = Standardizer::fit(feats);
      }
      if (extra > 0) {
        std::vector<Vec> extras;
        for (const auto& s : train) extras.push_back(s.user_vec);
        net.user_std = Standardizer::fit(extras);
      }
      train_classifier(net, train, val, config.train);
      net.save(checkpoint("mlp.net"));
      out.metrics = evaluate(predict_all(net, test), split.test);
      break;
    }
    case ModelKind::Rf: {
      Dataset all;
      all.records = split.train;
      all.records.insert(all.records.end(), split.val.begin(), split.val.end());
      all.records.insert(all.records.end(), split.test.begin(), split.test.end());
      std::string reason;
      auto vectors = baseline_vectors(config, data, all.user_ids(), &reason);
      if (!reason.empty()) {
        out.skipped = true;
        out.note = reason;
        return out;
      }
      auto featurize = [&](const ChoiceRecord& r) {
        const Vec extra = vectors.at(r.user_id);
        Vec x(6 + extra.size());
        x << Vec(encode_features(r.scenario)), extra;
        return x;
      };
      std::vector<LabeledSample> train;
      for (const auto& r : split.train)
        train.push_back({featurize(r), r.choice == Choice::Option1 ? 1 : 0});
      // RF does not use a validation half; it still predicts only the test fold
      Forest forest = rf_train(train, config.forest);
      forest.save(checkpoint("forest.txt"));
      std::vector<double> probs;
      for (const auto& r : split.test) probs.push_back(forest.predict(featurize(r)));
      out.metrics = evaluate(probs, split.test);
      break;
    }
    case ModelKind::BehavioralHmc:
    case ModelKind::BehavioralMap: {
      Dataset train_ds;
      train_ds.records = split.train;
      const FitMethod method = config.model == ModelKind::BehavioralHmc
                                   ? FitMethod::Hmc
                                   : FitMethod::Map;
      BehavioralFit fit = fit_behavioral(train_ds, method, config.hmc, config.map);
      save_params_table(checkpoint("sv_params.csv"), fit.user_ids, fit.params);
      if (method == FitMethod::Hmc)
        save_diagnostics(checkpoint("diagnostics.csv"), fit.diagnostics);
      std::map<std::string, SVParams> by_user;
      for (std::size_t i = 0; i < fit.user_ids.size(); ++i)
        by_user[fit.user_ids[i]] = fit.params[i];
      std::vector<double> probs;
      for (const auto& r : split.test) {
        auto it = by_user.find(r.user_id);
        // users absent from the training split fall back to the group mean
        SVParams params =
            it != by_user.end()
                ? it->second
                : params_from_raw(RawParams(fit.prior.location));
        probs.push_back(choice_prob(r.scenario, params));
      }
      out.metrics = evaluate(probs, split.test);
      break;
    }
  }
  return out;
}

}  // namespace

MetricsReport run_experiment(const ExperimentConfig& config) {
  const LoadedData data = load_data(config);
  if (data.dataset.records.empty()) throw EmptyDataset();

  const fs::path run_dir = config.out_dir.empty()
                               ? fs::path("runs") / config.hash()
                               : fs::path(config.out_dir);
  const bool existed = fs::exists(run_dir);
  fs::create_directories(run_dir);
  try {
    {
      std::ofstream out(run_dir / "config.json", std::ios::binary);
      out << config.canonical_json() << "\n";
    }

    // the two val/test role assignments of the held-out 20%
    Split fold0 = make_split(data.dataset, config.split);
    Split fold1 = fold0;
    std::swap(fold1.val, fold1.test);

    std::vector<MetricsReport> folds;
    bool skipped = false;
    std::string note;
    int fold_id = 0;
    for (const Split* split : {&fold0, &fold1}) {
      FoldOutcome outcome = run_fold(config, data, *split, run_dir, fold_id++);
      if (outcome.skipped) {
        skipped = true;
        note = outcome.note;
        break;
      }
      folds.push_back(outcome.metrics);
    }

    MetricsReport report = skipped ? MetricsReport{} : combine(folds);
    report.model = config.model_name();
    report.config_hash = config.hash();
    report.skipped = skipped;
    report.note = note;

    emit_report_file((run_dir / "report.csv").string(), {report}, ReportFormat::Csv);
    emit_report_file((run_dir / "report.md").string(), {report}, ReportFormat::Markdown);
    if (!skipped && folds.size() == 2) {
      for (std::size_t i = 0; i < folds.size(); ++i) {
        folds[i].model = report.model + ".fold" + std::to_string(i);
        folds[i].config_hash = report.config_hash;
      }
      emit_report_file((run_dir / "folds.csv").string(), folds, ReportFormat::Csv);
    }
    return report;
  } catch (...) {
    if (!existed) fs::remove_all(run_dir);
    throw;
  }
}

}  // namespace choicelab
