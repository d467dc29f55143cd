#include "gsc/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gsc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool subdictionary_full_rank(const Dictionary& dict, const std::vector<int>& support) {
  if (support.empty()) return true;
  if (static_cast<int>(support.size()) > dict.n_signal()) return false;
  Eigen::MatrixXd sub(dict.n_signal(), support.size());
  for (std::size_t c = 0; c < support.size(); ++c) sub.col(c) = dict.matrix().col(support[c]);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub);
  const auto& sv = svd.singularValues();
  return sv(sv.size() - 1) > kRankTol * sv(0);
}

bool support_subset(const std::vector<int>& inner, const std::vector<int>& outer) {
  return std::includes(outer.begin(), outer.end(), inner.begin(), inner.end());
}

}  // namespace

Theorem2Certificate check_theorem2(const Dictionary& dict, const RegularizerSpec& spec,
                                   const SparseCode& gamma_true, const Eigen::VectorXd& noise,
                                   double c) {
  if (!(c > 0.0 && c < 1.0)) throw InvalidInput("check_theorem2: c must lie in (0,1)");
  if (gamma_true.size() != dict.n_atoms())
    throw InvalidInput("check_theorem2: code length does not match atoms");
  if (noise.size() != dict.n_signal())
    throw InvalidInput("check_theorem2: noise length does not match signal dimension");

  Theorem2Certificate cert;
  cert.c = c;
  cert.lambda = spec.lambda();
  cert.theta = spec.theta();
  cert.mu = mutual_coherence(dict).absolute_max;
  cert.mu_is_zero = cert.mu <= kZeroTol;

  const std::vector<int> chi = characteristic_support(gamma_true, spec);
  cert.stripe_of_chi = stripe_norm(chi, dict);
  cert.e_local = local_amplitude(noise, dict);

  const double a_factor = c * cert.theta / (1.0 + cert.theta);
  if (cert.mu_is_zero) {
    cert.condition_a_bound = kInf;
    cert.condition_a_holds = true;
    cert.min_feasible_c = 0.0;
  } else {
    const double one_plus = 1.0 + 1.0 / cert.mu;
    cert.condition_a_bound = a_factor * one_plus;
    cert.condition_a_holds = cert.stripe_of_chi <= cert.condition_a_bound;
    const double needed =
        cert.stripe_of_chi * (1.0 + cert.theta) / (cert.theta * one_plus);
    cert.min_feasible_c = needed < 1.0 ? needed : kInf;
  }

  cert.required_gamma_min = cert.e_local / (cert.lambda * (1.0 - c));
  cert.condition_b_holds = spec.gamma_min() >= cert.required_gamma_min * (1.0 - 1e-12);
  cert.rank_ok = subdictionary_full_rank(dict, chi);

  const double common = (1.0 + cert.theta) / (cert.theta * (1.0 - c)) * cert.e_local;
  cert.weak_linf_bound = common;
  cert.linf_bound = common / (1.0 + cert.mu);
  return cert;
}

RecoveryReport verify_recovery(const SolveResult& result, const SolveResult& alt_start_result,
                               const SparseCode& gamma_true, const Theorem2Certificate& cert,
                               const RegularizerSpec& spec) {
  std::vector<std::string> failed;
  if (!cert.condition_a_holds) failed.push_back("condition a (stripe of chi)");
  if (!cert.condition_b_holds) failed.push_back("condition b (gamma_min)");
  if (!cert.rank_ok) failed.push_back("full column rank on supp(chi)");
  if (!failed.empty())
    throw PreconditionViolated("verify_recovery: certificate conditions do not hold", failed);

  RecoveryReport rep;
  const std::vector<int> chi = characteristic_support(gamma_true, spec);
  const auto& got = result.code.support();
  rep.support_containment.pass = support_subset(got, chi);
  rep.support_containment.slack =
      static_cast<double>(chi.size()) - static_cast<double>(got.size());

  const double disagree =
      (result.code.values() - alt_start_result.code.values()).lpNorm<Eigen::Infinity>();
  rep.uniqueness_two_start.pass = disagree <= 1e-7;
  rep.uniqueness_two_start.slack = 1e-7 - disagree;

  rep.measured_linf_error =
      (result.code.values() - gamma_true.values()).lpNorm<Eigen::Infinity>();
  // the certified bound is vacuous at zero noise; exact recovery is then
  // expected up to solver precision
  const double bound = cert.linf_bound > 0.0 ? cert.linf_bound : kNoiselessRecoveryTol;
  rep.linf_error.pass = rep.measured_linf_error < bound;
  rep.linf_error.slack = bound - rep.measured_linf_error;

  bool contained = true;
  double worst = kInf;
  for (int i = 0; i < gamma_true.size(); ++i) {
    if (std::abs(gamma_true.values()[i]) > cert.linf_bound) {
      const bool in = std::binary_search(got.begin(), got.end(), i);
      if (!in) contained = false;
      worst = std::min(worst, std::abs(gamma_true.values()[i]) - cert.linf_bound);
    }
  }
  rep.threshold_support.pass = contained;
  rep.threshold_support.slack = contained ? (worst == kInf ? 0.0 : worst) : -1.0;
  return rep;
}

bool LayeredBounds::all_conditions() const {
  for (const auto& l : layers) {
    if (!l.condition_a_holds || !l.condition_b_holds || !l.rank_ok) return false;
  }
  return true;
}

LayeredBounds layered_error_bounds(const LayeredProblem& problem,
                                   const std::vector<SparseCode>& gamma_true_layers,
                                   const Eigen::VectorXd& noise,
                                   const std::vector<double>& c_list) {
  const int k = problem.layers();
  if (static_cast<int>(gamma_true_layers.size()) != k)
    throw InvalidInput("layered_error_bounds: one true code per layer required");
  if (static_cast<int>(c_list.size()) != k)
    throw InvalidInput("layered_error_bounds: one c per layer required");

  LayeredBounds out;
  out.epsilons.push_back(local_amplitude(noise, problem.dictionaries[0]));
  out.epsilons_weak.push_back(out.epsilons[0]);

  for (int i = 0; i < k; ++i) {
    const auto& dict = problem.dictionaries[i];
    const auto& spec = problem.specs[i];
    const double c = c_list[i];
    if (!(c > 0.0 && c < 1.0)) throw InvalidInput("layered_error_bounds: c must lie in (0,1)");

    LayerConditionRecord rec;
    rec.c = c;
    rec.lambda = spec.lambda();
    rec.theta = spec.theta();
    rec.mu = mutual_coherence(dict).absolute_max;

    const std::vector<int> chi = characteristic_support(gamma_true_layers[i], spec);
    rec.stripe_of_chi = stripe_norm(chi, dict);
    if (rec.mu <= kZeroTol) {
      rec.condition_a_bound = kInf;
      rec.condition_a_holds = true;
      rec.mu = 0.0;
    } else {
      rec.condition_a_bound =
          c * rec.theta / (1.0 + rec.theta) * (1.0 + 1.0 / rec.mu);
      rec.condition_a_holds = rec.stripe_of_chi <= rec.condition_a_bound;
    }
    rec.rank_ok = subdictionary_full_rank(dict, chi);
    rec.required_gamma_min = out.epsilons[i] / (rec.lambda * (1.0 - c));
    rec.condition_b_holds = spec.gamma_min() >= rec.required_gamma_min * (1.0 - 1e-12);

    const double factor_weak = (1.0 + rec.theta) / (rec.theta * (1.0 - c));
    const double factor = factor_weak / (1.0 + rec.mu);
    rec.linf_bound = factor * out.epsilons[i];

    // sparsity of chi_i seen through the next dictionary's atom supports;
    // plain l0 count at the last layer
    rec.chi_count_next = (i + 1 < k)
                             ? local_sparsity(chi, problem.dictionaries[i + 1])
                             : static_cast<int>(chi.size());
    const double root = std::sqrt(static_cast<double>(rec.chi_count_next));
    out.epsilons.push_back(out.epsilons[i] * root * factor);
    out.epsilons_weak.push_back(out.epsilons_weak[i] * root * factor_weak);
    out.layers.push_back(rec);
  }
  return out;
}

namespace {

PropositionP1Report p1_common(const Dictionary& dict, const std::vector<int>& support,
                              int stripe_value, double lambda_eff) {
  if (!(lambda_eff > 0.0 && lambda_eff <= 1.0))
    throw InvalidInput("proposition_p1: lambda_eff must lie in (0,1]");
  PropositionP1Report rep;
  rep.lambda_eff = lambda_eff;
  rep.mu = mutual_coherence(dict).absolute_max;
  rep.k_dict = max_stripe(dict);
  rep.k_support = static_cast<int>(support.size());
  rep.k_support_stripe = stripe_norm(support, dict);
  rep.stripe_value = stripe_value;

  if (rep.mu <= kZeroTol) {
    rep.bound_k_dict = kInf;
    rep.bound_common = kInf;
  } else {
    rep.bound_k_dict = 1.0 + lambda_eff / ((1.0 + lambda_eff) * rep.mu);
    rep.bound_common = lambda_eff / (1.0 + lambda_eff) * (1.0 + 1.0 / rep.mu);
  }
  rep.cond_k_dict = rep.k_dict < rep.bound_k_dict;
  rep.cond_k_support = rep.k_support < rep.bound_common;
  rep.cond_k_support_stripe = rep.k_support_stripe < rep.bound_common;
  rep.cond_stripe = rep.stripe_value < rep.bound_common;
  rep.any_condition =
      rep.cond_k_dict || rep.cond_k_support || rep.cond_k_support_stripe || rep.cond_stripe;

  try {
    rep.erc_value = erc(support, dict, lambda_eff);
    rep.erc_computed = true;
    rep.erc_positive = rep.erc_value > 0.0;
  } catch (const RankDeficiencyError&) {
    rep.erc_computed = false;
  }
  return rep;
}

}  // namespace

PropositionP1Report proposition_p1_conditions(const Dictionary& dict,
                                              const std::vector<int>& support,
                                              double lambda_eff) {
  return p1_common(dict, support, stripe_norm(support, dict), lambda_eff);
}

PropositionP1Report proposition_p1_conditions(const Dictionary& dict, const SparseCode& code,
                                              const RegularizerSpec& spec) {
  const std::vector<int> chi = characteristic_support(code, spec);
  return p1_common(dict, chi, stripe_norm(chi, dict), spec.theta());
}

MarginCertificateResult margin_certificate(double margin, const LinearClassifier& clf,
                                           double theta_last, double mu_last, double c_last,
                                           double epsilon_prev, int chi_l0) {
  MarginCertificateResult res;
  if (clf.single_score()) {
    res.phi = clf.weights.row(0).norm();
  } else {
    for (int i = 0; i < clf.n_outputs(); ++i) {
      for (int j = i + 1; j < clf.n_outputs(); ++j) {
        res.phi = std::max(res.phi, (clf.weights.row(i) - clf.weights.row(j)).norm());
      }
    }
  }
  const double factor =
      (1.0 + theta_last) / ((1.0 + mu_last) * theta_last * (1.0 - c_last));
  res.threshold = res.phi * std::sqrt(static_cast<double>(chi_l0)) * factor * epsilon_prev;
  res.certified = margin > res.threshold;
  return res;
}

MarginCertificateResult margin_certificate(double margin, const LinearClassifier& clf,
                                           const Theorem2Certificate& cert, int chi_l0) {
  return margin_certificate(margin, clf, cert.theta, cert.mu, cert.c, cert.e_local, chi_l0);
}

}  // namespace gsc
