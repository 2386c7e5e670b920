#include "choicelab/prospect.hpp"

#include "choicelab/csv.hpp"
#include "choicelab/nn.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace choicelab {

double alpha_from_raw(double raw) { return 1.5 * logistic(raw); }

double raw_from_alpha(double alpha) {
  if (alpha <= 0.0 || alpha >= 1.5)
    throw ValidationError("alpha outside (0, 1.5)");
  const double u = alpha / 1.5;
  return std::log(u / (1.0 - u));
}

SVParams params_from_raw(const RawParams& raw) {
  SVParams p;
  p.alpha_gain = alpha_from_raw(raw[0]);
  p.alpha_loss = alpha_from_raw(raw[1]);
  p.beta_self = raw[2];
  p.beta_other = raw[3];
  return p;
}

RawParams raw_from_params(const SVParams& params) {
  return {raw_from_alpha(params.alpha_gain), raw_from_alpha(params.alpha_loss),
          params.beta_self, params.beta_other};
}

double subjective_value(double p, double outcome, const SVParams& params) {
  if (outcome == 0.0) return 0.0;
  const double alpha = outcome >= 0.0 ? params.alpha_gain : params.alpha_loss;
  const double sign = outcome >= 0.0 ? 1.0 : -1.0;
  return sign * p * std::pow(std::abs(outcome), alpha);
}

namespace {

double beta_for(const GambleOption& opt, const SVParams& params) {
  return opt.recipient == Recipient::Self ? params.beta_self : params.beta_other;
}

double utility_diff(const GambleScenario& s, const SVParams& params) {
  const double sv1 = subjective_value(s.option1.prob, s.option1.outcome, params);
  const double sv2 = subjective_value(s.option2.prob, s.option2.outcome, params);
  return beta_for(s.option1, params) * sv1 - beta_for(s.option2, params) * sv2;
}

}  // namespace

double choice_prob(const GambleScenario& scenario, const SVParams& params) {
  return logistic(utility_diff(scenario, params));
}

namespace {

// log logistic(t), computed on the logit scale so saturated choices stay
// finite and smooth (no probability clamping).
double log_logistic(double t) {
  return t >= 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
}

}  // namespace

double user_log_likelihood(const std::vector<ChoiceRecord>& records,
                           const SVParams& params) {
  if (records.empty()) throw EmptyRecords();
  double ll = 0.0;
  for (const auto& r : records) {
    const double d = utility_diff(r.scenario, params);
    ll += log_logistic(r.choice == Choice::Option1 ? d : -d);
  }
  return ll;
}

RawParams user_log_likelihood_grad(const std::vector<ChoiceRecord>& records,
                                   const RawParams& raw) {
  if (records.empty()) throw EmptyRecords();
  const SVParams params = params_from_raw(raw);
  // d alpha / d raw through the bounded transform
  const double dag = params.alpha_gain * (1.0 - params.alpha_gain / 1.5);
  const double dal = params.alpha_loss * (1.0 - params.alpha_loss / 1.5);

  RawParams grad = RawParams::Zero();
  for (const auto& r : records) {
    const auto& o1 = r.scenario.option1;
    const auto& o2 = r.scenario.option2;
    const double sv1 = subjective_value(o1.prob, o1.outcome, params);
    const double sv2 = subjective_value(o2.prob, o2.outcome, params);
    const double b1 = beta_for(o1, params);
    const double b2 = beta_for(o2, params);
    const double p1 = logistic(b1 * sv1 - b2 * sv2);
    const double dLda = (r.choice == Choice::Option1 ? 1.0 : 0.0) - p1;

    // d sv / d alpha = sv * ln|V| in the matching frame, 0 otherwise
    auto dsv_dalpha = [](const GambleOption& o, double sv, bool gain_frame) {
      if (o.outcome == 0.0) return 0.0;
      const bool is_gain = o.outcome >= 0.0;
      if (is_gain != gain_frame) return 0.0;
      return sv * std::log(std::abs(o.outcome));
    };

    grad[0] += dLda * (b1 * dsv_dalpha(o1, sv1, true) - b2 * dsv_dalpha(o2, sv2, true)) * dag;
    grad[1] += dLda * (b1 * dsv_dalpha(o1, sv1, false) - b2 * dsv_dalpha(o2, sv2, false)) * dal;
    const double dda_bself = (o1.recipient == Recipient::Self ? sv1 : 0.0) -
                             (o2.recipient == Recipient::Self ? sv2 : 0.0);
    const double dda_bother = (o1.recipient == Recipient::Other ? sv1 : 0.0) -
                              (o2.recipient == Recipient::Other ? sv2 : 0.0);
    grad[2] += dLda * dda_bself;
    grad[3] += dLda * dda_bother;
  }
  return grad;
}

HierarchicalSV::HierarchicalSV(const Dataset& dataset) {
  if (dataset.records.empty()) throw EmptyDataset();
  std::map<std::string, std::vector<ChoiceRecord>> grouped;
  for (const auto& r : dataset.records) grouped[r.user_id].push_back(r);
  for (auto& [id, recs] : grouped) {
    users_.push_back(id);
    records_.push_back(std::move(recs));
  }
}

RawParams HierarchicalSV::raw_for_user(const Vec& x, Eigen::Index user) const {
  const Eigen::Vector4d mu = x.segment<4>(0);
  const Eigen::Vector4d sigma = x.segment<4>(4).array().exp();
  const Eigen::Vector4d z = x.segment<4>(8 + 4 * user);
  return mu + sigma.cwiseProduct(z);
}

Vec HierarchicalSV::initial_point() const { return Vec::Zero(dim()); }

double HierarchicalSV::log_posterior(const Vec& x, Vec* grad) const {
  if (x.size() != dim()) throw DimensionMismatch("posterior point");
  const Eigen::Vector4d mu = x.segment<4>(0);
  const Eigen::Vector4d s = x.segment<4>(4);
  const Eigen::Vector4d sigma = s.array().exp();

  // mu ~ N(0,1); sigma ~ half-N(0,1) sampled on the log scale (+s Jacobian)
  double lp = -0.5 * mu.squaredNorm() - 0.5 * sigma.squaredNorm() + s.sum();
  if (grad) {
    grad->setZero(dim());
    grad->segment<4>(0) = -mu;
    grad->segment<4>(4) =
        (-sigma.cwiseProduct(sigma) + Eigen::Vector4d::Ones());
  }

  for (Eigen::Index j = 0; j < n_users(); ++j) {
    const Eigen::Vector4d z = x.segment<4>(8 + 4 * j);
    const RawParams raw = mu + sigma.cwiseProduct(z);
    lp += -0.5 * z.squaredNorm();
    lp += user_log_likelihood(records_[static_cast<std::size_t>(j)],
                              params_from_raw(raw));
    if (grad) {
      const RawParams g =
          user_log_likelihood_grad(records_[static_cast<std::size_t>(j)], raw);
      grad->segment<4>(0) += g;
      grad->segment<4>(4) += g.cwiseProduct(sigma).cwiseProduct(z);
      grad->segment<4>(8 + 4 * j) = -z + g.cwiseProduct(sigma);
    }
  }
  return lp;
}

double HierarchicalSV::log_posterior_map(const Vec& x, Vec* grad) const {
  if (x.size() != map_dim()) throw DimensionMismatch("posterior point");
  const Eigen::Vector4d mu = x.segment<4>(0);

  double lp = -0.5 * mu.squaredNorm();
  if (grad) {
    grad->setZero(map_dim());
    grad->segment<4>(0) = -mu;
  }

  for (Eigen::Index j = 0; j < n_users(); ++j) {
    const RawParams raw = x.segment<4>(4 + 4 * j);
    const Eigen::Vector4d delta = raw - mu;  // unit group scale
    lp += -0.5 * delta.squaredNorm();
    lp += user_log_likelihood(records_[static_cast<std::size_t>(j)],
                              params_from_raw(raw));
    if (grad) {
      const RawParams g =
          user_log_likelihood_grad(records_[static_cast<std::size_t>(j)], raw);
      grad->segment<4>(0) += delta;
      grad->segment<4>(4 + 4 * j) = -delta + g;
    }
  }
  return lp;
}

std::string HierarchicalSV::coordinate_name(Eigen::Index i) const {
  static const char* kNames[4] = {"alpha_gain", "alpha_loss", "beta_self",
                                  "beta_other"};
  if (i < 4) return std::string("mu.") + kNames[i];
  if (i < 8) return std::string("log_sigma.") + kNames[i - 4];
  const Eigen::Index j = (i - 8) / 4;
  return users_[static_cast<std::size_t>(j)] + "." + kNames[(i - 8) % 4];
}

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void save_params_table(const std::string& path,
                       const std::vector<std::string>& user_ids,
                       const std::vector<SVParams>& params) {
  if (user_ids.size() != params.size())
    throw LengthMismatch(user_ids.size(), params.size());
  csv::Table t;
  t.header = {"user_id", "alpha_gain", "alpha_loss", "beta_self", "beta_other"};
  for (std::size_t i = 0; i < user_ids.size(); ++i) {
    const auto& p = params[i];
    t.rows.push_back({user_ids[i], fmt(p.alpha_gain), fmt(p.alpha_loss),
                      fmt(p.beta_self), fmt(p.beta_other)});
  }
  csv::write_file(path, t);
}

std::vector<std::pair<std::string, SVParams>> load_params_table(
    const std::string& path) {
  auto t = csv::read_file(path);
  const auto c_id = t.column("user_id");
  const auto c_ag = t.column("alpha_gain");
  const auto c_al = t.column("alpha_loss");
  const auto c_bs = t.column("beta_self");
  const auto c_bo = t.column("beta_other");
  std::vector<std::pair<std::string, SVParams>> out;
  for (const auto& row : t.rows) {
    SVParams p;
    p.alpha_gain = std::stod(row.at(c_ag));
    p.alpha_loss = std::stod(row.at(c_al));
    p.beta_self = std::stod(row.at(c_bs));
    p.beta_other = std::stod(row.at(c_bo));
    out.emplace_back(row.at(c_id), p);
  }
  return out;
}

}  // namespace choicelab
