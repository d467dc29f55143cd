#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gsc/classify.hpp"
#include "gsc/dictionary.hpp"
#include "gsc/solver.hpp"

namespace gsc {

// Evaluated recovery-stability conditions for one clean code and one noise
// vector. Coherence is the absolute variant. mu == 0 (orthonormal atoms)
// makes condition a) vacuous and drops the coherence factor from the bound.
struct Theorem2Certificate {
  double c = 0.0;
  double theta = 0.0;
  double mu = 0.0;
  double lambda = 1.0;
  int stripe_of_chi = 0;
  double condition_a_bound = 0.0;  // c*theta/(1+theta)*(1+1/mu); +inf when mu == 0
  bool condition_a_holds = false;
  double e_local = 0.0;            // ||E||_L
  double required_gamma_min = 0.0; // e_local / (lambda (1-c))
  bool condition_b_holds = false;  // spec gamma_min >= required
  bool rank_ok = false;
  double linf_bound = 0.0;       // (1+theta)/((1+mu) theta (1-c)) * e_local
  double weak_linf_bound = 0.0;  // (1+theta)/(theta (1-c)) * e_local
  bool mu_is_zero = false;
  // smallest c in (0,1) for which condition a) holds (it holds for every
  // larger c); infinity when no admissible c exists
  double min_feasible_c = 0.0;

  bool all_conditions() const { return condition_a_holds && condition_b_holds && rank_ok; }
};

/// Evaluates the certificate; never runs a solver.
Theorem2Certificate check_theorem2(const Dictionary& dict, const RegularizerSpec& spec,
                                   const SparseCode& gamma_true, const Eigen::VectorXd& noise,
                                   double c);

struct ClaimResult {
  bool pass = false;
  double slack = 0.0;  // margin by which the claim held (negative on failure)
};

struct RecoveryReport {
  ClaimResult support_containment;   // supp(solution) within supp(chi)
  ClaimResult uniqueness_two_start;  // empirical: two starts agree in linf
  ClaimResult linf_error;            // ||solution - truth||_inf below the bound
  ClaimResult threshold_support;     // every |truth_i| above the bound is recovered
  double measured_linf_error = 0.0;

  bool all_pass() const {
    return support_containment.pass && uniqueness_two_start.pass && linf_error.pass &&
           threshold_support.pass;
  }
};

/// Exact-recovery tolerance used for claim 3 when the certified bound is zero
/// (noiseless instances recover up to solver precision, not exactly).
inline constexpr double kNoiselessRecoveryTol = 1e-6;

/// Checks the four certified claims against a solve and a second solve from a
/// different start. Throws PreconditionViolated when the certificate fails.
RecoveryReport verify_recovery(const SolveResult& result, const SolveResult& alt_start_result,
                               const SparseCode& gamma_true, const Theorem2Certificate& cert,
                               const RegularizerSpec& spec);

struct LayerConditionRecord {
  double c = 0.0;
  double theta = 0.0;
  double mu = 0.0;
  double lambda = 1.0;
  int stripe_of_chi = 0;
  double condition_a_bound = 0.0;
  bool condition_a_holds = false;
  bool rank_ok = false;
  double required_gamma_min = 0.0;  // epsilon_{i-1} / (lambda_i (1 - c_i))
  bool condition_b_holds = false;
  double linf_bound = 0.0;  // per-coordinate bound fed by epsilon_{i-1}
  int chi_count_next = 0;   // ||chi_i||_{0, D_{i+1}}; plain l0 at the last layer
};

struct LayeredBounds {
  std::vector<double> epsilons;       // epsilon_0 .. epsilon_K, coherence-sharpened
  std::vector<double> epsilons_weak;  // same recursion without the (1+mu) factor
  std::vector<LayerConditionRecord> layers;

  bool all_conditions() const;
};

/// Error-propagation bounds for the layered solve; epsilon_0 is the local
/// amplitude of the noise with respect to the first dictionary.
LayeredBounds layered_error_bounds(const LayeredProblem& problem,
                                   const std::vector<SparseCode>& gamma_true_layers,
                                   const Eigen::VectorXd& noise,
                                   const std::vector<double>& c_list);

struct PropositionP1Report {
  double mu = 0.0;
  double lambda_eff = 1.0;
  int k_dict = 0;          // widest non-orthogonality neighbourhood in D
  int k_support = 0;       // |support|
  int k_support_stripe = 0;  // stripe norm of the support indicator
  int stripe_value = 0;      // stripe norm of the code (or its chi variant)
  double bound_k_dict = 0.0;   // 1 + lambda/((1+lambda) mu)
  double bound_common = 0.0;   // lambda/(1+lambda) (1 + 1/mu)
  bool cond_k_dict = false;
  bool cond_k_support = false;
  bool cond_k_support_stripe = false;
  bool cond_stripe = false;
  bool any_condition = false;
  bool erc_computed = false;
  double erc_value = 0.0;
  bool erc_positive = false;
};

/// Sufficient conditions for ERC positivity on an explicit support.
PropositionP1Report proposition_p1_conditions(const Dictionary& dict,
                                              const std::vector<int>& support, double lambda_eff);

/// Same conditions on the characteristic support of a code.
PropositionP1Report proposition_p1_conditions(const Dictionary& dict, const SparseCode& code,
                                              const RegularizerSpec& spec);

struct MarginCertificateResult {
  double threshold = 0.0;
  bool certified = false;
  double phi = 0.0;  // ||w||_2 single classifier; max pairwise row distance otherwise
};

/// Class prediction is guaranteed unchanged when the clean margin exceeds
/// phi * sqrt(||chi_K||_0) * (1+theta)/((1+mu) theta (1-c)) * epsilon_{K-1}.
MarginCertificateResult margin_certificate(double margin, const LinearClassifier& clf,
                                           double theta_last, double mu_last, double c_last,
                                           double epsilon_prev, int chi_l0);

/// Single-layer convenience: pulls the constants from a Theorem 2 certificate.
MarginCertificateResult margin_certificate(double margin, const LinearClassifier& clf,
                                           const Theorem2Certificate& cert, int chi_l0);

}  // namespace gsc
