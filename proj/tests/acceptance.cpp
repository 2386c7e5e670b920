// End-to-end acceptance suite. Prints one line per criterion; exits nonzero
// if any criterion fails. Criteria 6-9 need the released experiment data
// (CHOICELAB_DATA); without it they are reported as SKIPPED, never silently
// dropped.

#include "choicelab/harness.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

using namespace choicelab;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::cout << "[" << criterion << "] " << (pass ? "PASS" : "FAIL") << " — "
            << detail << std::endl;
  if (!pass) ++g_failures;
}

void report_skip(int criterion, const std::string& reason) {
  std::cout << "[" << criterion << "] SKIPPED — " << reason << std::endl;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Sample random_sample(std::mt19937_64& rng, int user, int user_dim) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Sample s;
  s.user = user;
  if (user_dim > 0)
    s.user_vec = Vec::NullaryExpr(user_dim, [&]() { return normal(rng); });
  s.features << 10.0 * normal(rng), unif(rng), unif(rng) < 0.5 ? 0.0 : 1.0,
      10.0 * normal(rng), unif(rng), unif(rng) < 0.5 ? 0.0 : 1.0;
  s.label = unif(rng) < 0.5 ? 0 : 1;
  return s;
}

// --- criterion 1: analytic gradients vs central finite differences ---------

void criterion_gradients() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::string worst_model = "none";
  auto track = [&](const std::string& model, double err) {
    if (err > worst) {
      worst = err;
      worst_model = model;
    }
  };

  for (int i = 0; i < 10; ++i) {
    auto net = make_beh2vec({"a", "b", "c"}, 500 + i, 32);
    auto r = grad_check(net, {random_sample(rng, i % 3, 0)}, 1e-5, 1200);
    track("id-embedding", r.max_rel_error);
  }
  for (int i = 0; i < 10; ++i) {
    auto net = make_text_model(600 + i, 48);
    auto r = grad_check(net, {random_sample(rng, -1, 48)}, 1e-5, 1200);
    track("text-encoder", r.max_rel_error);
  }
  for (int i = 0; i < 10; ++i) {
    auto net = make_demo_model(700 + i);
    auto r = grad_check(net, {random_sample(rng, -1, 11)}, 1e-5, 1200);
    track("demographic-encoder", r.max_rel_error);
  }
  for (int i = 0; i < 10; ++i) {
    auto net = make_plain_mlp(0, 800 + i);
    auto r = grad_check(net, {random_sample(rng, -1, 0)}, 1e-5, 1200);
    track("plain-mlp", r.max_rel_error);
  }

  AgentSpec spec;
  spec.n_users = 5;
  spec.seed = 9;
  spec.gambles = design_space_gambles(16, 4);
  HierarchicalSV model(simulate_agents(spec).dataset);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 10; ++i) {
    Vec x = Vec::NullaryExpr(model.dim(), [&]() { return 0.3 * normal(rng); });
    Vec grad(model.dim());
    model.log_posterior(x, &grad);
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < model.dim(); ++k) {
      Vec up = x, down = x;
      up[k] += h;
      down[k] -= h;
      const double numeric =
          (model.log_posterior(up) - model.log_posterior(down)) / (2 * h);
      const double denom = std::max({std::abs(numeric), std::abs(grad[k]), 1e-8});
      track("hierarchical-posterior", std::abs(numeric - grad[k]) / denom);
    }
    Vec mx = Vec::NullaryExpr(model.map_dim(), [&]() { return 0.3 * normal(rng); });
    Vec mgrad(model.map_dim());
    model.log_posterior_map(mx, &mgrad);
    for (Eigen::Index k = 0; k < model.map_dim(); ++k) {
      Vec up = mx, down = mx;
      up[k] += h;
      down[k] -= h;
      const double numeric = (model.log_posterior_map(up) -
                              model.log_posterior_map(down)) /
                             (2 * h);
      const double denom = std::max({std::abs(numeric), std::abs(mgrad[k]), 1e-8});
      track("point-estimate-objective", std::abs(numeric - mgrad[k]) / denom);
    }
  }

  std::ostringstream detail;
  detail << "gradient fidelity: max relative error " << worst << " ("
         << worst_model << "), tolerance 1e-5";
  report(1, worst < 1e-5, detail.str());
}

// --- criterion 2: sampler calibration on a known 10-D Gaussian --------------

void criterion_sampler() {
  const int d = 10;
  Vec mean(d), sd(d);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unif(0.5, 1.0);
  std::normal_distribution<double> normal;
  for (int i = 0; i < d; ++i) {
    mean[i] = 2.0 * normal(rng);
    sd[i] = unif(rng);
  }
  LogDensity target = [&](const Vec& x, Vec* grad) {
    Vec z = (x - mean).cwiseQuotient(sd);
    if (grad) *grad = -z.cwiseQuotient(sd);
    return -0.5 * z.squaredNorm();
  };

  HmcConfig config;
  config.chains = 4;
  config.iterations = 2000;
  config.warmup = 1000;
  config.seed = 17;
  const auto start = std::chrono::steady_clock::now();
  ChainSet set = hmc_sample(target, Vec::Zero(d), config);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  double worst_mean_err = 0.0, worst_rhat = 0.0, worst_ess = 1e18;
  const double total_draws = 4.0 * 1000.0;
  for (int k = 0; k < d; ++k) {
    std::vector<Vec> chains;
    double m = 0.0;
    for (int c = 0; c < set.n_chains(); ++c) {
      chains.push_back(set.coordinate(c, k));
      m += chains.back().mean();
    }
    m /= set.n_chains();
    worst_mean_err = std::max(worst_mean_err, std::abs(m - mean[k]));
    worst_rhat = std::max(worst_rhat, r_hat(chains));
    worst_ess = std::min(worst_ess, ess(chains));
  }

  const bool pass = worst_mean_err < 0.05 && worst_rhat < 1.01 &&
                    worst_ess > total_draws / 100.0 && seconds < 60.0;
  std::ostringstream detail;
  detail << "sampler calibration: max |mean error| " << worst_mean_err
         << " (< 0.05), max R-hat " << worst_rhat << " (< 1.01), min ESS "
         << worst_ess << " (> " << total_draws / 100.0 << "), " << seconds
         << "s (< 60s)";
  report(2, pass, detail.str());
}

// --- criterion 3: parameter recovery on simulated agents --------------------

void criterion_recovery() {
  AgentSpec spec;
  spec.n_users = 200;
  spec.seed = 99;
  spec.prior.location << 0.0, 0.0, 1.1, 1.1;
  spec.prior.scale << 1.3, 1.3, 1.0, 1.0;
  spec.gambles = design_space_gambles(64, 12);
  SimResult sim = simulate_agents(spec);

  MapConfig map_config;
  map_config.max_iterations = 4000;
  map_config.grad_tolerance = 1e-4;
  const auto start = std::chrono::steady_clock::now();
  BehavioralFit fit = fit_behavioral(sim.dataset, FitMethod::Map, {}, map_config);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  std::map<std::string, const SVParams*> fitted;
  for (std::size_t i = 0; i < fit.user_ids.size(); ++i)
    fitted[fit.user_ids[i]] = &fit.params[i];
  std::vector<double> truth[4], est[4];
  for (std::size_t u = 0; u < sim.user_ids.size(); ++u) {
    const SVParams& t = sim.truth[u];
    const SVParams& e = *fitted.at(sim.user_ids[u]);
    truth[0].push_back(t.alpha_gain);
    truth[1].push_back(t.alpha_loss);
    truth[2].push_back(t.beta_self);
    truth[3].push_back(t.beta_other);
    est[0].push_back(e.alpha_gain);
    est[1].push_back(e.alpha_loss);
    est[2].push_back(e.beta_self);
    est[3].push_back(e.beta_other);
  }
  const char* names[4] = {"alpha_gain", "alpha_loss", "beta_self", "beta_other"};
  double worst = 1.0;
  std::string worst_name;
  std::ostringstream rbuf;
  for (int k = 0; k < 4; ++k) {
    const double r = pearson(truth[k], est[k]);
    rbuf << names[k] << "=" << r << (k < 3 ? ", " : "");
    if (r < worst) {
      worst = r;
      worst_name = names[k];
    }
  }
  const bool pass = worst >= 0.8 && seconds < 120.0;
  std::ostringstream detail;
  detail << "parameter recovery (200 agents x 64 gambles, MAP): Pearson r "
         << rbuf.str() << " (all >= 0.8), " << seconds << "s (< 120s)";
  report(3, pass, detail.str());
}

// --- criterion 4: cross-module invariants -----------------------------------

void criterion_invariants() {
  int checks = 0, passed = 0;
  auto expect = [&](bool ok) {
    ++checks;
    if (ok) ++passed;
  };

  // embedding-row isolation: one sample touches exactly one embedding row
  {
    auto net = make_beh2vec({"a", "b", "c", "d"}, 3, 16);
    std::mt19937_64 rng(1);
    auto grads = net.make_grads();
    net.forward_backward(random_sample(rng, 2, 0), grads);
    expect(grads.embedding_rows.size() == 1 &&
           grads.embedding_rows.begin()->first == 2);
  }

  // centroid permutation invariance
  {
    WordVectorTable table;
    table.dim = 3;
    table.vocab["red"] = Vec::Constant(3, 1.0);
    table.vocab["blue"] = Vec::Constant(3, 5.0);
    table.vocab["green"] = Vec::Constant(3, -2.0);
    Vec a = user_text_vector(table, {"red", "blue", "green"});
    Vec b = user_text_vector(table, {"green", "red", "blue"});
    expect((a - b).cwiseAbs().maxCoeff() == 0.0);
  }

  // accuracy bookkeeping identity
  {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<ChoiceRecord> records;
    std::vector<double> probs;
    for (const auto& g : design_space_gambles(64, 5)) {
      records.push_back(
          {"u", g, unif(rng) < 0.5 ? Choice::Option1 : Choice::Option2});
      probs.push_back(unif(rng));
    }
    MetricsReport r = evaluate(probs, records);
    expect(r.correct_all == r.correct_gains + r.correct_losses &&
           r.n_all == r.n_gains + r.n_losses &&
           std::abs(r.accuracy_all * static_cast<double>(r.n_all) -
                    (r.accuracy_gains * static_cast<double>(r.n_gains) +
                     r.accuracy_losses * static_cast<double>(r.n_losses))) <
               1e-9);
  }

  // split determinism + partition integrity
  {
    AgentSpec spec;
    spec.n_users = 20;
    spec.seed = 2;
    spec.gambles = design_space_gambles(10, 3);
    Dataset ds = simulate_agents(spec).dataset;
    SplitSpec sp;
    sp.seed = 11;
    Split s1 = make_split(ds, sp);
    Split s2 = make_split(ds, sp);
    bool same = s1.train.size() == s2.train.size() &&
                s1.val.size() == s2.val.size() && s1.test.size() == s2.test.size();
    for (std::size_t i = 0; same && i < s1.train.size(); ++i)
      same = s1.train[i].user_id == s2.train[i].user_id &&
             s1.train[i].choice == s2.train[i].choice;
    expect(same &&
           s1.train.size() + s1.val.size() + s1.test.size() == ds.records.size());
  }

  std::ostringstream detail;
  detail << "module invariants: " << passed << "/" << checks << " checks";
  report(4, passed == checks, detail.str());
}

// --- criterion 5: chance-level accuracy on uninformative labels -------------

void criterion_null_model() {
  // Agents with zero choice weights produce labels independent of the
  // scenario — the permuted-label null. Every model kind must score ~0.5.
  AgentSpec spec;
  spec.n_users = 120;
  spec.seed = 40;
  spec.prior.location << 0.0, 0.0, 0.0, 0.0;
  spec.prior.scale << 0.3, 0.3, 0.0, 0.0;
  spec.gambles = design_space_gambles(64, 6);
  SimResult sim = simulate_agents(spec);
  // explicit label permutation on top of the null data
  {
    std::mt19937_64 rng(41);
    std::vector<Choice> labels;
    for (const auto& r : sim.dataset.records) labels.push_back(r.choice);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < labels.size(); ++i)
      sim.dataset.records[i].choice = labels[i];
  }

  fs::path dir = fs::temp_directory_path() / "choicelab-acceptance-null";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_choices((dir / "choices.csv").string(), sim.dataset);
  save_participants((dir / "participants.csv").string(), sim.dataset.participants);
  {
    // word vectors covering the simulated vocabulary, for the text model
    std::set<std::string> vocab;
    for (const auto& [id, p] : sim.dataset.participants)
      for (const auto& t : p.text_tokens) vocab.insert(t);
    std::mt19937_64 rng(42);
    std::normal_distribution<double> normal;
    std::ofstream out(dir / "vectors.txt");
    for (const auto& word : vocab) {
      out << word;
      for (int k = 0; k < 16; ++k) out << " " << normal(rng);
      out << "\n";
    }
  }

  ExperimentConfig base;
  base.choices_path = (dir / "choices.csv").string();
  base.participants_path = (dir / "participants.csv").string();
  base.vectors_path = (dir / "vectors.txt").string();
  base.split.seed = 1;
  base.train.seed = 1;
  base.train.max_epochs = 15;
  base.train.patience = 3;
  base.forest.n_trees = 30;
  base.forest.seed = 1;
  base.hmc.chains = 2;
  base.hmc.iterations = 400;
  base.hmc.warmup = 200;
  base.hmc.seed = 1;
  base.map.max_iterations = 1000;
  base.map.grad_tolerance = 1e-4;

  const std::vector<std::pair<ModelKind, InputSet>> kinds = {
      {ModelKind::Rf, InputSet::G},          {ModelKind::Mlp, InputSet::G},
      {ModelKind::Beh2vecId, InputSet::G},   {ModelKind::Beh2vecDemo, InputSet::G},
      {ModelKind::Beh2vecText, InputSet::G}, {ModelKind::BehavioralMap, InputSet::G},
      {ModelKind::BehavioralHmc, InputSet::G},
  };
  bool pass = true;
  std::ostringstream buf;
  int run = 0;
  for (const auto& [kind, inputs] : kinds) {
    ExperimentConfig config = base;
    config.model = kind;
    config.inputs = inputs;
    config.out_dir = (dir / ("run-" + std::to_string(run++))).string();
    const auto t0 = std::chrono::steady_clock::now();
    MetricsReport r = run_experiment(config);
    std::cerr << "    [" << r.model << " took "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                               t0)
                     .count()
              << "s]" << std::endl;
    buf << r.model << "=" << (r.skipped ? "SKIPPED" : std::to_string(r.accuracy_all))
        << " ";
    if (r.skipped || std::abs(r.accuracy_all - 0.5) > 0.03) pass = false;
  }
  fs::remove_all(dir);
  std::ostringstream detail;
  detail << "null-model sanity (0.5 +/- 0.03): " << buf.str();
  report(5, pass, detail.str());
}

// --- criteria 6-9: released-data reproduction -------------------------------

struct RealData {
  std::string choices;
  std::string participants;  // may be empty
  std::string vectors;       // may be empty
};

bool find_real_data(RealData& out) {
  const char* env = std::getenv("CHOICELAB_DATA");
  if (!env) return false;
  fs::path root(env);
  if (fs::is_regular_file(root)) {
    out.choices = root.string();
    return true;
  }
  if (!fs::is_directory(root)) return false;
  if (!fs::exists(root / "choices.csv")) return false;
  out.choices = (root / "choices.csv").string();
  if (fs::exists(root / "participants.csv"))
    out.participants = (root / "participants.csv").string();
  if (fs::exists(root / "vectors.txt"))
    out.vectors = (root / "vectors.txt").string();
  return true;
}

MetricsReport run_real(const RealData& data, ModelKind kind, InputSet inputs,
                       const fs::path& out_root, int& counter) {
  ExperimentConfig config;
  config.model = kind;
  config.inputs = inputs;
  config.choices_path = data.choices;
  config.participants_path = data.participants;
  config.vectors_path = data.vectors;
  config.out_dir = (out_root / ("run-" + std::to_string(counter++))).string();
  config.split.seed = 1;
  config.train.seed = 1;
  config.forest.seed = 1;
  config.hmc.chains = 4;
  config.hmc.iterations = 7000;
  config.hmc.warmup = 3500;
  config.hmc.seed = 1;
  return run_experiment(config);
}

void criteria_real_data() {
  RealData data;
  if (!find_real_data(data)) {
    report_skip(6, "released choice data not found (set CHOICELAB_DATA)");
    report_skip(7, "released choice data not found (set CHOICELAB_DATA)");
    report_skip(8, "released choice data not found (set CHOICELAB_DATA)");
    report_skip(9, "released choice data not found (set CHOICELAB_DATA)");
    return;
  }

  fs::path out_root = fs::temp_directory_path() / "choicelab-acceptance-real";
  fs::remove_all(out_root);
  fs::create_directories(out_root);
  int counter = 0;

  // 6: scenario-only baselines
  MetricsReport mlp_g = run_real(data, ModelKind::Mlp, InputSet::G, out_root, counter);
  MetricsReport rf_g = run_real(data, ModelKind::Rf, InputSet::G, out_root, counter);
  {
    const bool pass = std::abs(mlp_g.accuracy_all - 0.701) <= 0.02 &&
                      std::abs(rf_g.accuracy_all - 0.700) <= 0.03;
    std::ostringstream detail;
    detail << "scenario-only baselines: mlp(G)=" << mlp_g.accuracy_all
           << " (0.701 +/- 0.02), rf(G)=" << rf_g.accuracy_all
           << " (0.700 +/- 0.03)";
    report(6, pass, detail.str());
  }

  // 7: id-embedding model and its demographic/text variants
  MetricsReport b2v_id =
      run_real(data, ModelKind::Beh2vecId, InputSet::GUserId, out_root, counter);
  bool pass7 = std::abs(b2v_id.accuracy_all - 0.734) <= 0.02;
  std::ostringstream d7;
  d7 << "user representations: id=" << b2v_id.accuracy_all << " (0.734 +/- 0.02)";
  MetricsReport b2v_demo, b2v_text;
  bool have_demo = false, have_text = false;
  if (!data.participants.empty()) {
    b2v_demo =
        run_real(data, ModelKind::Beh2vecDemo, InputSet::GDemo, out_root, counter);
    have_demo = true;
    pass7 = pass7 && std::abs(b2v_demo.accuracy_all - 0.735) <= 0.02;
    d7 << ", demographics=" << b2v_demo.accuracy_all << " (0.735 +/- 0.02)";
  } else {
    d7 << ", demographics=SKIPPED (no participants table)";
  }
  if (!data.participants.empty() && !data.vectors.empty()) {
    b2v_text =
        run_real(data, ModelKind::Beh2vecText, InputSet::GText, out_root, counter);
    have_text = true;
    pass7 = pass7 && std::abs(b2v_text.accuracy_all - 0.757) <= 0.02;
    d7 << ", text=" << b2v_text.accuracy_all << " (0.757 +/- 0.02)";
  } else {
    d7 << ", text=SKIPPED (no word vectors)";
  }
  report(7, pass7, d7.str());

  // 8: ordering claims
  {
    MetricsReport mlp_id =
        run_real(data, ModelKind::Mlp, InputSet::GUserId, out_root, counter);
    MetricsReport rf_id =
        run_real(data, ModelKind::Rf, InputSet::GUserId, out_root, counter);
    bool pass8 = b2v_id.accuracy_all > mlp_id.accuracy_all &&
                 rf_id.accuracy_all < rf_g.accuracy_all;
    std::ostringstream d8;
    d8 << "ordering: beh2vec(id)=" << b2v_id.accuracy_all << " > mlp(id)="
       << mlp_id.accuracy_all << "; rf(id)=" << rf_id.accuracy_all
       << " < rf(G)=" << rf_g.accuracy_all;
    if (have_demo) {
      MetricsReport mlp_demo =
          run_real(data, ModelKind::Mlp, InputSet::GDemo, out_root, counter);
      pass8 = pass8 && b2v_demo.accuracy_all > mlp_demo.accuracy_all;
      d8 << "; beh2vec(demo) > mlp(demo): " << b2v_demo.accuracy_all << " vs "
         << mlp_demo.accuracy_all;
    }
    if (have_text) {
      MetricsReport mlp_text =
          run_real(data, ModelKind::Mlp, InputSet::GText, out_root, counter);
      pass8 = pass8 && b2v_text.accuracy_all > mlp_text.accuracy_all;
      d8 << "; beh2vec(text) > mlp(text): " << b2v_text.accuracy_all << " vs "
         << mlp_text.accuracy_all;
    }
    report(8, pass8, d8.str());
  }

  // 9: hierarchical behavioral model
  {
    MetricsReport beh =
        run_real(data, ModelKind::BehavioralHmc, InputSet::G, out_root, counter);
    bool pass9 = std::abs(beh.accuracy_all - 0.749) <= 0.02 &&
                 std::abs(beh.accuracy_gains - 0.770) <= 0.02 &&
                 std::abs(beh.accuracy_losses - 0.726) <= 0.02;
    std::ostringstream d9;
    d9 << "behavioral model: all=" << beh.accuracy_all << " (0.749 +/- 0.02), gains="
       << beh.accuracy_gains << " (0.770 +/- 0.02), losses=" << beh.accuracy_losses
       << " (0.726 +/- 0.02)";
    if (have_text) {
      pass9 = pass9 && b2v_text.accuracy_losses >= beh.accuracy_losses;
      d9 << "; beh2vec(text) losses " << b2v_text.accuracy_losses
         << " >= behavioral losses " << beh.accuracy_losses;
    }
    report(9, pass9, d9.str());
  }

  fs::remove_all(out_root);
}

}  // namespace

int main() {
  const auto timed = [](const char* name, const auto& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    std::cerr << "  [" << name << " took "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                               t0)
                     .count()
              << "s]" << std::endl;
  };
  try {
    timed("gradients", criterion_gradients);
    timed("sampler", criterion_sampler);
    timed("recovery", criterion_recovery);
    timed("invariants", criterion_invariants);
    timed("null-model", criterion_null_model);
    timed("real-data", criteria_real_data);
    std::cout << "[10] NOT REPRODUCED — synthetic-population mixing table is "
                 "out of scope by design" << std::endl;
  } catch (const std::exception& e) {
    std::cout << "FAIL — unexpected exception: " << e.what() << std::endl;
    return 1;
  }
  return g_failures == 0 ? 0 : 1;
}
