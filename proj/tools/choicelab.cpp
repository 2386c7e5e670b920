#include "choicelab/csv.hpp"
#include "choicelab/harness.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>

namespace fs = std::filesystem;
using namespace choicelab;

namespace {

Schema schema_from(const std::string& path) {
  std::string p = path;
  if (p.empty()) {
    const char* env = std::getenv("CHOICELAB_SCHEMA");
    if (env) p = env;
  }
  return p.empty() ? Schema::default_schema() : Schema::load(p);
}

int cmd_ingest(const std::string& choices, const std::string& participants,
               const std::string& schema_path, const std::string& out_dir) {
  Schema schema = schema_from(schema_path);
  fs::create_directories(out_dir);
  Dataset ds = load_choices(choices, schema);
  save_choices((fs::path(out_dir) / "choices.csv").string(), ds);
  std::cout << "choices: " << ds.records.size() << " records, "
            << ds.user_ids().size() << " users\n";
  if (!participants.empty()) {
    auto parts = load_participants(participants, schema);
    save_participants((fs::path(out_dir) / "participants.csv").string(), parts);
    std::cout << "participants: " << parts.size() << "\n";
  }
  return 0;
}

int cmd_simulate(int users, int gambles, std::uint64_t seed,
                 const std::string& out_dir) {
  AgentSpec spec;
  spec.n_users = users;
  spec.seed = seed;
  spec.prior.location << 0.0, 0.0, 1.0, 1.0;
  spec.prior.scale << 0.7, 0.7, 0.5, 0.5;
  spec.gambles = design_space_gambles(gambles, seed + 1);
  SimResult sim = simulate_agents(spec);
  fs::create_directories(out_dir);
  save_choices((fs::path(out_dir) / "choices.csv").string(), sim.dataset);
  save_participants((fs::path(out_dir) / "participants.csv").string(),
                    sim.dataset.participants);
  save_params_table((fs::path(out_dir) / "true_params.csv").string(),
                    sim.user_ids, sim.truth);
  std::cout << "simulated " << sim.dataset.records.size() << " records for "
            << users << " agents -> " << out_dir << "\n";
  return 0;
}

int cmd_fit_behavioral(const std::string& choices, const std::string& schema_path,
                       const std::string& method, const HmcConfig& hmc,
                       const std::string& out_dir) {
  Dataset ds = load_choices(choices, schema_from(schema_path));
  const FitMethod m = method == "map" ? FitMethod::Map : FitMethod::Hmc;
  BehavioralFit fit = fit_behavioral(ds, m, hmc);
  fs::create_directories(out_dir);
  save_params_table((fs::path(out_dir) / "sv_params.csv").string(), fit.user_ids,
                    fit.params);
  if (m == FitMethod::Hmc) {
    save_diagnostics((fs::path(out_dir) / "diagnostics.csv").string(),
                     fit.diagnostics);
    double worst_rhat = 0.0;
    for (const auto& row : fit.diagnostics.rows)
      worst_rhat = std::max(worst_rhat, row.r_hat);
    std::cout << "max r_hat " << worst_rhat << ", divergences "
              << fit.diagnostics.total_divergences << "\n";
  } else if (!fit.converged) {
    std::cout << "warning: MAP did not reach the gradient tolerance\n";
  }
  std::cout << "fitted " << fit.user_ids.size() << " users -> " << out_dir << "\n";
  return 0;
}

int cmd_evaluate(const std::string& choices, const std::string& schema_path,
                 const std::string& params_path) {
  Dataset ds = load_choices(choices, schema_from(schema_path));
  auto table = load_params_table(params_path);
  std::map<std::string, SVParams> by_user(table.begin(), table.end());
  std::vector<double> probs;
  for (const auto& r : ds.records) {
    auto it = by_user.find(r.user_id);
    if (it == by_user.end()) throw UnknownUser(r.user_id);
    probs.push_back(choice_prob(r.scenario, it->second));
  }
  MetricsReport report = evaluate(probs, ds.records);
  report.model = "behavioral(params table)";
  std::cout << emit_report({report}, ReportFormat::Markdown);
  return 0;
}

int cmd_gradcheck(double tolerance, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto random_sample = [&](int user_dim, int n_users) {
    Sample s;
    if (n_users > 0) {
      s.user = static_cast<int>(rng() % static_cast<std::uint64_t>(n_users));
    } else if (user_dim > 0) {
      s.user_vec = Vec::NullaryExpr(user_dim, [&]() { return normal(rng); });
    }
    s.features = Features::NullaryExpr([&]() { return normal(rng); });
    s.label = static_cast<int>(rng() % 2);
    return s;
  };

  double worst = 0.0;
  auto check_net = [&](const char* name, ChoiceNet net, int user_dim, int n_users) {
    std::vector<Sample> samples;
    for (int i = 0; i < 5; ++i) samples.push_back(random_sample(user_dim, n_users));
    auto report = grad_check(net, samples);
    std::cout << name << ": max rel error " << report.max_rel_error << " over "
              << report.checked_params << " params\n";
    worst = std::max(worst, report.max_rel_error);
  };

  std::vector<std::string> ids = {"u1", "u2", "u3", "u4", "u5"};
  check_net("beh2vec", make_beh2vec(ids, seed, 8), 0, 5);
  check_net("text", make_text_model(seed + 1, 12), 12, 0);
  check_net("demo", make_demo_model(seed + 2, 11), 11, 0);
  check_net("mlp", make_plain_mlp(3, seed + 3), 3, 0);

  // hierarchical posterior against finite differences
  AgentSpec spec;
  spec.n_users = 4;
  spec.seed = seed;
  spec.gambles = design_space_gambles(12, seed + 4);
  SimResult sim = simulate_agents(spec);
  HierarchicalSV model(sim.dataset);
  Vec x = Vec::NullaryExpr(model.dim(), [&]() { return 0.3 * normal(rng); });
  Vec grad(model.dim());
  model.log_posterior(x, &grad);
  double worst_post = 0.0;
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < model.dim(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double numeric =
        (model.log_posterior(xp) - model.log_posterior(xm)) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
    worst_post = std::max(worst_post, std::abs(numeric - grad[i]) / denom);
  }
  std::cout << "log_posterior: max rel error " << worst_post << " over "
            << model.dim() << " coords\n";
  worst = std::max(worst, worst_post);

  std::cout << (worst < tolerance ? "OK" : "FAILED") << " (tolerance "
            << tolerance << ")\n";
  return worst < tolerance ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"choicelab: individual-difference choice prediction"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string config_path, out;
  app.add_option("--seed", seed, "global RNG seed");
  app.add_option("--config", config_path, "experiment config file");
  app.add_option("--out", out, "output directory");

  std::string choices, participants, schema, vectors;

  auto* ingest = app.add_subcommand("ingest", "validate and canonicalize data files");
  ingest->add_option("--choices", choices, "choices table")->required();
  ingest->add_option("--participants", participants, "participants table");
  ingest->add_option("--schema", schema, "schema mapping file");

  auto* train = app.add_subcommand("train", "run a training experiment from --config");

  std::string method = "hmc";
  HmcConfig hmc;
  auto* fitb = app.add_subcommand("fit-behavioral", "fit the subjective-value model");
  fitb->add_option("--choices", choices, "choices table")->required();
  fitb->add_option("--schema", schema, "schema mapping file");
  fitb->add_option("--method", method, "hmc or map")
      ->check(CLI::IsMember({"hmc", "map"}));
  fitb->add_option("--chains", hmc.chains, "number of chains");
  fitb->add_option("--iters", hmc.iterations, "iterations per chain");
  fitb->add_option("--warmup", hmc.warmup, "warmup iterations");
  fitb->add_option("--target-accept", hmc.target_accept, "adaptation target");
  fitb->add_option("--leapfrog", hmc.leapfrog_steps, "leapfrog steps");

  std::string params_path;
  auto* eval = app.add_subcommand("evaluate", "score a params table on a choices file");
  eval->add_option("--choices", choices, "choices table")->required();
  eval->add_option("--schema", schema, "schema mapping file");
  eval->add_option("--params", params_path, "sv_params.csv table")->required();

  int sim_users = 200, sim_gambles = 64;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic agent dataset");
  sim->add_option("--users", sim_users, "number of agents");
  sim->add_option("--gambles", sim_gambles, "gambles per agent");

  double tolerance = 1e-5;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--tolerance", tolerance, "max relative error");

  std::vector<std::string> report_inputs;
  std::string format = "markdown";
  auto* report = app.add_subcommand("report", "merge report.csv files into one table");
  report->add_option("files", report_inputs, "report.csv files")->required();
  report->add_option("--format", format, "csv or markdown")
      ->check(CLI::IsMember({"csv", "markdown"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest)
      return cmd_ingest(choices, participants, schema,
                        out.empty() ? "ingested" : out);
    if (*train) {
      if (config_path.empty()) throw ValidationError("train needs --config");
      ExperimentConfig config = ExperimentConfig::load(config_path);
      if (!out.empty()) config.out_dir = out;
      MetricsReport r = run_experiment(config);
      std::cout << emit_report({r}, ReportFormat::Markdown);
      return 0;
    }
    if (*fitb) {
      hmc.seed = seed;
      return cmd_fit_behavioral(choices, schema, method, hmc,
                                out.empty() ? "behavioral_fit" : out);
    }
    if (*eval) return cmd_evaluate(choices, schema, params_path);
    if (*sim)
      return cmd_simulate(sim_users, sim_gambles, seed,
                          out.empty() ? "simulated" : out);
    if (*gradcheck) return cmd_gradcheck(tolerance, seed);
    if (*report) {
      std::vector<MetricsReport> all;
      for (const auto& path : report_inputs) {
        auto t = csv::read_file(path);
        const auto c_model = t.column("model");
        const auto c_status = t.column("status");
        const auto c_all = t.column("accuracy_all");
        const auto c_g = t.column("accuracy_gains");
        const auto c_l = t.column("accuracy_losses");
        const auto c_n = t.column("n_all");
        const auto c_ng = t.column("n_gains");
        const auto c_nl = t.column("n_losses");
        const auto c_hash = t.column("config_hash");
        for (const auto& row : t.rows) {
          MetricsReport r;
          r.model = row.at(c_model);
          r.skipped = row.at(c_status) == "SKIPPED";
          if (!r.skipped) {
            r.accuracy_all = std::stod(row.at(c_all));
            r.accuracy_gains = std::stod(row.at(c_g));
            r.accuracy_losses = std::stod(row.at(c_l));
            r.n_all = std::stol(row.at(c_n));
            r.n_gains = std::stol(row.at(c_ng));
            r.n_losses = std::stol(row.at(c_nl));
          }
          r.config_hash = row.at(c_hash);
          all.push_back(std::move(r));
        }
      }
      const auto fmt = format == "csv" ? ReportFormat::Csv : ReportFormat::Markdown;
      if (out.empty())
        std::cout << emit_report(all, fmt);
      else
        emit_report_file(out, all, fmt);
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
