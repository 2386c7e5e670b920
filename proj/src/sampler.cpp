#include "choicelab/sampler.hpp"

#include "choicelab/csv.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>

namespace choicelab {

namespace {

struct Hamiltonian {
  const LogDensity& target;
  Vec inv_mass;  // diagonal, = estimated posterior variances

  double kinetic(const Vec& p) const {
    return 0.5 * p.cwiseAbs2().cwiseProduct(inv_mass).sum();
  }

  Vec sample_momentum(std::mt19937_64& rng) const {
    std::normal_distribution<double> normal;
    Vec p(inv_mass.size());
    for (Eigen::Index i = 0; i < p.size(); ++i)
      p[i] = normal(rng) / std::sqrt(inv_mass[i]);
    return p;
  }
};

struct Transition {
  Vec q;
  double log_density;
  double accept_stat;  // min(1, exp(-dH)), 0 on divergence
  bool divergent;
  bool accepted;
};

constexpr double kDivergenceThreshold = 1000.0;

Transition leapfrog_transition(const Hamiltonian& ham, const Vec& q0, double lp0,
                               double step, int n_steps, std::mt19937_64& rng) {
  Vec p = ham.sample_momentum(rng);
  const double h0 = -lp0 + ham.kinetic(p);

  Vec q = q0;
  Vec grad(q.size());
  double lp = ham.target(q, &grad);
  p += 0.5 * step * grad;
  for (int l = 0; l < n_steps; ++l) {
    q += step * ham.inv_mass.cwiseProduct(p);
    lp = ham.target(q, &grad);
    if (!std::isfinite(lp)) break;
    if (l + 1 < n_steps)
      p += step * grad;
    else
      p += 0.5 * step * grad;
  }

  Transition t{q0, lp0, 0.0, false, false};
  const double h1 = -lp + ham.kinetic(p);
  const double dh = h1 - h0;
  if (!std::isfinite(dh) || dh > kDivergenceThreshold) {
    t.divergent = true;
    return t;
  }
  t.accept_stat = std::min(1.0, std::exp(-dh));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (unif(rng) < t.accept_stat) {
    t.q = q;
    t.log_density = lp;
    t.accepted = true;
  }
  return t;
}

// Doubling/halving search for a step size with acceptance near 0.5.
double find_initial_step(const Hamiltonian& ham, const Vec& q, double lp,
                         std::mt19937_64& rng) {
  double eps = 0.1;
  Vec p = ham.sample_momentum(rng);
  auto accept_of = [&](double step) {
    Vec pp = p;
    Vec qq = q;
    Vec grad(q.size());
    double l = ham.target(qq, &grad);
    pp += 0.5 * step * grad;
    qq += step * ham.inv_mass.cwiseProduct(pp);
    l = ham.target(qq, &grad);
    pp += 0.5 * step * grad;
    const double dh = (-l + ham.kinetic(pp)) - (-lp + ham.kinetic(p));
    return std::isfinite(dh) ? std::exp(-dh) : 0.0;
  };
  const bool go_up = accept_of(eps) > 0.5;
  for (int i = 0; i < 50; ++i) {
    const double a = accept_of(eps);
    if (go_up) {
      if (a < 0.5) break;
      eps *= 2.0;
    } else {
      if (a > 0.5) break;
      eps *= 0.5;
    }
  }
  return eps;
}

struct DualAveraging {
  double mu;
  double log_eps = 0.0;
  double log_eps_bar = 0.0;
  double h_bar = 0.0;
  int count = 0;
  static constexpr double gamma = 0.05;
  static constexpr double t0 = 10.0;
  static constexpr double kappa = 0.75;

  explicit DualAveraging(double eps0)
      : mu(std::log(10.0 * eps0)), log_eps(std::log(eps0)) {}

  void update(double accept_stat, double target) {
    ++count;
    const double eta = 1.0 / (count + t0);
    h_bar = (1.0 - eta) * h_bar + eta * (target - accept_stat);
    log_eps = mu - std::sqrt(static_cast<double>(count)) / gamma * h_bar;
    const double weight = std::pow(static_cast<double>(count), -kappa);
    log_eps_bar = weight * log_eps + (1.0 - weight) * log_eps_bar;
  }

  double current() const { return std::exp(log_eps); }
  double final_eps() const { return std::exp(log_eps_bar); }
};

}  // namespace

ChainSet hmc_sample(const LogDensity& target, const Vec& init,
                    const HmcConfig& config) {
  if (config.warmup >= config.iterations)
    throw ValidationError("warmup must be < iterations");
  {
    double lp0 = target(init, nullptr);
    if (!std::isfinite(lp0)) throw NonFiniteDensity();
  }

  const Eigen::Index dim = init.size();
  const int post = config.iterations - config.warmup;
  ChainSet out;

  for (int chain = 0; chain < config.chains; ++chain) {
    std::mt19937_64 rng(config.seed + static_cast<std::uint64_t>(chain));
    Hamiltonian ham{target, Vec::Ones(dim)};
    Vec q = init;
    double lp = target(q, nullptr);

    const bool adapt = config.fixed_step_size <= 0.0;
    double eps = adapt ? find_initial_step(ham, q, lp, rng) : config.fixed_step_size;
    DualAveraging da(eps);

    // mass estimated from the middle warmup window, then step size re-adapted
    const int mass_from = config.warmup / 4;
    const int mass_until = (3 * config.warmup) / 4;
    std::vector<Vec> mass_window;

    Mat draws(post, dim);
    int divergences = 0;
    double accepted = 0.0;
    // jittered trajectory length breaks leapfrog resonance (periodic orbits
    // that pin single coordinates when L*eps matches the local period)
    std::uniform_int_distribution<int> steps_dist(1, std::max(1, config.leapfrog_steps));

    for (int iter = 0; iter < config.iterations; ++iter) {
      const bool in_warmup = iter < config.warmup;
      auto t = leapfrog_transition(ham, q, lp, eps, steps_dist(rng), rng);
      q = t.q;
      lp = t.log_density;
      if (t.divergent && !in_warmup) ++divergences;

      if (in_warmup) {
        if (adapt) {
          da.update(t.accept_stat, config.target_accept);
          eps = da.current();
        }
        if (iter >= mass_from && iter < mass_until) mass_window.push_back(q);
        if (iter + 1 == mass_until && mass_window.size() >= 10) {
          Vec mean = Vec::Zero(dim);
          for (const auto& d : mass_window) mean += d;
          mean /= static_cast<double>(mass_window.size());
          Vec var = Vec::Zero(dim);
          for (const auto& d : mass_window) var += (d - mean).cwiseAbs2();
          var /= static_cast<double>(mass_window.size() - 1);
          ham.inv_mass =
              var.unaryExpr([](double v) { return v > 1e-10 ? v : 1e-10; });
          if (adapt) {
            eps = find_initial_step(ham, q, lp, rng);
            da = DualAveraging(eps);
          }
        }
        if (iter + 1 == config.warmup && adapt) eps = da.final_eps();
      } else {
        draws.row(iter - config.warmup) = q.transpose();
        accepted += t.accept_stat;
      }
    }

    out.chains.push_back(std::move(draws));
    out.divergences.push_back(divergences);
    out.step_sizes.push_back(eps);
    out.accept_rates.push_back(accepted / static_cast<double>(post));
  }
  return out;
}

// L-BFGS ascent (two-loop recursion, limited memory 10) with backtracking
// Armijo line search; falls back to the raw gradient whenever the quasi-
// Newton direction stops being an ascent direction.
MapResult map_fit(const LogDensity& target, const Vec& init,
                  const MapConfig& config) {
  constexpr int kMemory = 10;
  constexpr double kArmijo = 1e-4;

  MapResult result;
  result.x = init;
  Vec grad(init.size());
  result.value = target(result.x, &grad);
  if (!std::isfinite(result.value)) throw NonFiniteDensity();

  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    result.iterations = iter;
    result.grad_norm = grad.norm();
    if (result.grad_norm < config.grad_tolerance) {
      result.converged = true;
      return result;
    }

    // two-loop recursion on the ascent gradient
    Vec direction = grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(direction);
      direction -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      direction *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(direction);
      direction += (alpha[i] - beta) * s_hist[i];
    }
    double slope = grad.dot(direction);
    if (!(slope > 0.0) || !direction.allFinite()) {
      direction = grad;
      slope = grad.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = s_hist.empty() ? std::min(config.initial_step,
                                            1.0 / std::max(1.0, result.grad_norm))
                                 : 1.0;
    bool moved = false;
    Vec cgrad(init.size());
    while (step > 1e-18) {
      Vec candidate = result.x + step * direction;
      const double cvalue = target(candidate, &cgrad);
      if (std::isfinite(cvalue) &&
          cvalue > result.value + kArmijo * step * slope) {
        Vec s = step * direction;
        Vec y = grad - cgrad;  // curvature of the negated (convex) objective
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
          s_hist.push_back(std::move(s));
          y_hist.push_back(std::move(y));
          rho_hist.push_back(1.0 / sy);
          if (static_cast<int>(s_hist.size()) > kMemory) {
            s_hist.pop_front();
            y_hist.pop_front();
            rho_hist.pop_front();
          }
        }
        result.x = std::move(candidate);
        result.value = cvalue;
        grad = cgrad;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;  // no ascent along the search direction
  }
  result.grad_norm = grad.norm();
  result.converged = result.grad_norm < config.grad_tolerance;
  return result;
}

namespace {

// Splits every chain in half; returns per-sequence (mean, variance, n).
struct SplitStats {
  std::vector<double> means;
  std::vector<double> vars;
  Eigen::Index half = 0;
};

SplitStats split_chains(const std::vector<Vec>& chains) {
  if (chains.size() < 2) throw ValidationError("need >= 2 chains");
  Eigen::Index n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 4) throw ValidationError("need >= 4 draws per chain");
  SplitStats s;
  s.half = n / 2;
  for (const auto& c : chains) {
    for (int part = 0; part < 2; ++part) {
      const Vec seq = c.segment(part * s.half, s.half);
      const double mean = seq.mean();
      const double var =
          (seq.array() - mean).square().sum() / static_cast<double>(s.half - 1);
      s.means.push_back(mean);
      s.vars.push_back(var);
    }
  }
  return s;
}

}  // namespace

double r_hat(const std::vector<Vec>& chains) {
  const SplitStats s = split_chains(chains);
  const double m = static_cast<double>(s.means.size());
  const double n = static_cast<double>(s.half);
  double w = 0.0;
  for (double v : s.vars) w += v;
  w /= m;
  if (w <= 0.0) throw DegenerateChains();
  double grand = 0.0;
  for (double mu : s.means) grand += mu;
  grand /= m;
  double b_over_n = 0.0;
  for (double mu : s.means) b_over_n += (mu - grand) * (mu - grand);
  b_over_n /= (m - 1.0);
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

double ess(const std::vector<Vec>& chains) {
  if (chains.size() < 2) throw ValidationError("need >= 2 chains");
  Eigen::Index n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 4) throw ValidationError("need >= 4 draws per chain");
  const double m = static_cast<double>(chains.size());
  const double dn = static_cast<double>(n);

  // per-chain autocovariances (biased, divisor n)
  std::vector<Vec> acov;
  std::vector<double> means;
  for (const auto& c : chains) {
    const Vec x = c.head(n);
    const double mean = x.mean();
    means.push_back(mean);
    Vec a = Vec::Zero(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      double sum = 0.0;
      for (Eigen::Index i = 0; i + t < n; ++i)
        sum += (x[i] - mean) * (x[i + t] - mean);
      a[t] = sum / dn;
    }
    acov.push_back(std::move(a));
  }

  double w = 0.0;
  for (const auto& a : acov) w += a[0] * dn / (dn - 1.0);
  w /= m;
  if (w <= 0.0) throw DegenerateChains();

  double grand = 0.0;
  for (double mu : means) grand += mu;
  grand /= m;
  double b_over_n = 0.0;
  if (chains.size() > 1) {
    for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
    b_over_n /= (m - 1.0);
  }
  const double var_plus = (dn - 1.0) / dn * w + b_over_n;
  if (var_plus <= 0.0) throw DegenerateChains();

  auto rho = [&](Eigen::Index t) {
    double mean_acov = 0.0;
    for (const auto& a : acov) mean_acov += a[t];
    mean_acov /= m;
    return 1.0 - (w - mean_acov) / var_plus;
  };

  // Geyer initial positive sequence over lag pairs
  double tau = rho(0);  // = 1 - small correction
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 1; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);  // enforce monotone decrease
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  const double total = m * dn;
  return std::min(total, total / std::max(tau, 1e-12));
}

ChainDiagnostics diagnose(const ChainSet& set,
                          const std::function<std::string(Eigen::Index)>& name) {
  ChainDiagnostics d;
  for (int dv : set.divergences) d.total_divergences += dv;
  for (Eigen::Index coord = 0; coord < set.dim(); ++coord) {
    std::vector<Vec> per_chain;
    for (int c = 0; c < set.n_chains(); ++c)
      per_chain.push_back(set.coordinate(c, coord));
    DiagnosticsRow row;
    row.parameter = name ? name(coord) : ("param_" + std::to_string(coord));
    row.r_hat = r_hat(per_chain);
    row.ess = ess(per_chain);
    d.rows.push_back(std::move(row));
  }
  return d;
}

void save_diagnostics(const std::string& path, const ChainDiagnostics& d) {
  csv::Table t;
  t.header = {"parameter", "r_hat", "ess", "divergences"};
  for (const auto& row : d.rows) {
    std::ostringstream rh, es;
    rh.precision(6);
    es.precision(6);
    rh << row.r_hat;
    es << row.ess;
    t.rows.push_back(
        {row.parameter, rh.str(), es.str(), std::to_string(d.total_divergences)});
  }
  csv::write_file(path, t);
}

BehavioralFit fit_behavioral(const Dataset& dataset, FitMethod method,
                             const HmcConfig& hmc_config,
                             const MapConfig& map_config) {
  HierarchicalSV model(dataset);
  LogDensity target = [&model](const Vec& x, Vec* grad) {
    return model.log_posterior(x, grad);
  };

  BehavioralFit fit;
  fit.user_ids = model.user_ids();

  if (method == FitMethod::Map) {
    LogDensity objective = [&model](const Vec& x, Vec* grad) {
      return model.log_posterior_map(x, grad);
    };
    MapResult r = map_fit(objective, Vec::Zero(model.map_dim()), map_config);
    fit.converged = r.converged;
    for (Eigen::Index j = 0; j < model.n_users(); ++j)
      fit.params.push_back(params_from_raw(model.raw_for_user_map(r.x, j)));
    fit.prior.location = r.x.segment<4>(0);
    fit.prior.scale = Eigen::Vector4d::Ones();  // held fixed, not estimated
    return fit;
  }

  ChainSet set = hmc_sample(target, model.initial_point(), hmc_config);
  fit.diagnostics =
      diagnose(set, [&model](Eigen::Index i) { return model.coordinate_name(i); });

  // posterior mean of the raw per-user parameters, then transformed
  const double total =
      static_cast<double>(set.n_chains()) * static_cast<double>(set.n_draws());
  std::vector<RawParams> raw_mean(static_cast<std::size_t>(model.n_users()),
                                  RawParams::Zero());
  Eigen::Vector4d mu_mean = Eigen::Vector4d::Zero();
  Eigen::Vector4d sigma_mean = Eigen::Vector4d::Zero();
  for (const auto& chain : set.chains) {
    for (Eigen::Index d = 0; d < chain.rows(); ++d) {
      const Vec x = chain.row(d).transpose();
      const Eigen::Vector4d mu = x.segment<4>(0);
      const Eigen::Vector4d sigma = x.segment<4>(4).array().exp();
      mu_mean += mu;
      sigma_mean += sigma;
      for (Eigen::Index j = 0; j < model.n_users(); ++j)
        raw_mean[static_cast<std::size_t>(j)] +=
            mu + sigma.cwiseProduct(Eigen::Vector4d(x.segment<4>(8 + 4 * j)));
    }
  }
  for (auto& r : raw_mean) fit.params.push_back(params_from_raw(r / total));
  fit.prior.location = mu_mean / total;
  fit.prior.scale = sigma_mean / total;
  return fit;
}

}  // namespace choicelab
