#pragma once

#include "choicelab/data.hpp"

#include <string>
#include <vector>

namespace choicelab {

// Per-user subjective-value parameters on the constrained scale.
struct SVParams {
  double alpha_gain = 0.75;  // in (0, 1.5)
  double alpha_loss = 0.75;  // in (0, 1.5)
  double beta_self = 0.0;
  double beta_other = 0.0;
};

// Unconstrained scale: (alpha_gain_raw, alpha_loss_raw, beta_self, beta_other).
// Betas are their own raw value; alphas go through the bounded transform.
using RawParams = Eigen::Vector4d;

// alpha = 1.5 * logistic(raw); strictly increasing bijection onto (0, 1.5).
double alpha_from_raw(double raw);
double raw_from_alpha(double alpha);

SVParams params_from_raw(const RawParams& raw);
RawParams raw_from_params(const SVParams& params);

// SV = sign(V) * p * |V|^alpha, alpha_gain for V >= 0, alpha_loss otherwise.
double subjective_value(double p, double outcome, const SVParams& params);

// p(choose option1) = logistic(beta_1 SV_1 - beta_2 SV_2), beta by recipient.
double choice_prob(const GambleScenario& scenario, const SVParams& params);

double user_log_likelihood(const std::vector<ChoiceRecord>& records,
                           const SVParams& params);

// d loglik / d raw for one user's records.
RawParams user_log_likelihood_grad(const std::vector<ChoiceRecord>& records,
                                   const RawParams& raw);

struct GroupPrior {
  Eigen::Vector4d location = Eigen::Vector4d::Zero();
  Eigen::Vector4d scale = Eigen::Vector4d::Ones();  // > 0, raw scale
};

// Non-centered hierarchical posterior over x = [mu(4), log_sigma(4),
// z(4 per user)], raw_j = mu + sigma .* z_j. Priors: z ~ N(0,1),
// mu ~ N(0,1), sigma ~ half-Normal(0,1) with the log-scale Jacobian.
class HierarchicalSV {
 public:
  explicit HierarchicalSV(const Dataset& dataset);

  Eigen::Index dim() const { return 8 + 4 * n_users(); }
  Eigen::Index n_users() const { return static_cast<Eigen::Index>(users_.size()); }
  const std::vector<std::string>& user_ids() const { return users_; }

  double log_posterior(const Vec& x, Vec* grad = nullptr) const;

  // Point-estimation objective over x = [mu(4), raw(4 per user)] with the
  // group scale held at the prior scale of 1, i.e. ridge shrinkage of each
  // user toward mu. Maximizing jointly over the scale is degenerate: the
  // non-centered mode inflates it (no shrinkage) while the centered density
  // has an unbounded complete-pooling spike at scale zero, so the point
  // estimate does not fit the scale at all.
  Eigen::Index map_dim() const { return 4 + 4 * n_users(); }
  double log_posterior_map(const Vec& x, Vec* grad = nullptr) const;

  RawParams raw_for_user(const Vec& x, Eigen::Index user) const;
  RawParams raw_for_user_map(const Vec& x, Eigen::Index user) const {
    return x.segment<4>(4 + 4 * user);
  }
  Vec initial_point() const;

  // Human-readable name per coordinate, for diagnostics reports.
  std::string coordinate_name(Eigen::Index i) const;

 private:
  std::vector<std::string> users_;
  std::vector<std::vector<ChoiceRecord>> records_;  // grouped per user
};

// Parameter table serialization: columns
// (user_id, alpha_gain, alpha_loss, beta_self, beta_other).
void save_params_table(const std::string& path,
                       const std::vector<std::string>& user_ids,
                       const std::vector<SVParams>& params);
std::vector<std::pair<std::string, SVParams>> load_params_table(const std::string& path);

}  // namespace choicelab
