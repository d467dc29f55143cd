#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "gsc/dictionary.hpp"

namespace gsc {

struct SolveOptions {
  int max_iter = 5000;
  double rel_tol = 1e-9;       // relative objective decrease, stagnation test
  bool acceleration = true;    // FISTA momentum; off gives plain ISTA
  bool nonnegative = false;
  std::optional<Eigen::VectorXd> init;  // warm start; also drives multi-start checks
  // absolute optimality-residual target; defaults to 1e-7 * (1 + ||x||_2)
  std::optional<double> residual_tol;
};

struct SolveResult {
  SparseCode code;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;   // subgradient optimality residual at the returned code
  bool group_full = false; // positive coding: supp equals the characteristic support
};

/// Entries below 1e-8 * max(1, ||v||_inf) snap to exact zero.
inline constexpr double kSupportSnapTol = 1e-8;

/// argmin_u 0.5||u - v||^2 + step * <gamma, l(u)>, groupwise closed forms.
Eigen::VectorXd prox_step(const Eigen::VectorXd& v, const RegularizerSpec& spec, double step);

/// Same composite prox followed by projection onto the nonnegative orthant
/// (exact for l1 groups; certified a posteriori for l2/elastic groups).
Eigen::VectorXd prox_step_nonnegative(const Eigen::VectorXd& v, const RegularizerSpec& spec,
                                      double step);

double gbp_objective(const Eigen::VectorXd& x, const Dictionary& dict,
                     const RegularizerSpec& spec, const Eigen::VectorXd& gamma);

/// Euclidean distance from D^T(x - D gamma) to the subdifferential of
/// <gamma_weights, l(.)> at gamma; zero iff gamma is a global minimizer.
double optimality_residual(const Eigen::VectorXd& gamma, const Eigen::VectorXd& x,
                           const Dictionary& dict, const RegularizerSpec& spec);
double optimality_residual(const SparseCode& code, const Eigen::VectorXd& x,
                           const Dictionary& dict, const RegularizerSpec& spec);

SolveResult solve_gbp(const Eigen::VectorXd& x, const Dictionary& dict,
                      const RegularizerSpec& spec, const SolveOptions& opts = {});

SolveResult solve_positive_gbp(const Eigen::VectorXd& x, const Dictionary& dict,
                               const RegularizerSpec& spec, const SolveOptions& opts = {});

struct LayeredProblem {
  std::vector<Dictionary> dictionaries;  // rows of D_{j+1} == cols of D_j
  std::vector<RegularizerSpec> specs;

  LayeredProblem(std::vector<Dictionary> dicts, std::vector<RegularizerSpec> layer_specs);
  int layers() const { return static_cast<int>(dictionaries.size()); }
};

class LayeredSolveError : public std::runtime_error {
 public:
  LayeredSolveError(int layer, const std::string& what)
      : std::runtime_error("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

/// Solves layer by layer; layer j codes the previous layer's code values.
std::vector<SolveResult> solve_layered_gbp(const Eigen::VectorXd& x, const LayeredProblem& problem,
                                           const SolveOptions& opts = {});

// Single-layer rewrite of a layered problem: block bidiagonal system with
// -I subdiagonals, columns renormalized to unit length and the column scales
// pushed into the weights. column_scales maps a renormalized-problem solution
// back: original = renormalized / column_scales (elementwise).
struct RewriteResult {
  Dictionary dictionary;
  RegularizerSpec spec;
  Eigen::VectorXd column_scales;
  std::vector<int> block_offsets;  // first column of each layer block
  std::vector<int> block_sizes;
  int signal_rows = 0;  // rows of the stacked signal occupied by x

  Eigen::VectorXd recover_original(const Eigen::VectorXd& renormalized) const;
  Eigen::VectorXd stacked_signal(const Eigen::VectorXd& x) const;
};

RewriteResult rewrite_single_layer(const LayeredProblem& problem);

/// Renormalizes an arbitrary stacked system (skip connections, feedback
/// blocks): every column is scaled to unit norm; a group either shares a
/// common column norm (weight divided by it) or, when l1-tagged, splits into
/// singletons; anything else is an InvalidStructure error.
RewriteResult renormalize_system(const Eigen::MatrixXd& stacked, const RegularizerSpec& spec,
                                 int signal_rows);

/// Assembles a K x K block matrix from explicitly placed blocks, zero-filled
/// elsewhere. Lower blocks give skip connections, upper blocks feedback.
class BlockSystemBuilder {
 public:
  BlockSystemBuilder(std::vector<int> row_dims, std::vector<int> col_dims);
  BlockSystemBuilder& set_block(int p, int q, Eigen::MatrixXd block);
  Eigen::MatrixXd assemble() const;

 private:
  std::vector<int> row_dims_, col_dims_, row_off_, col_off_;
  Eigen::MatrixXd dense_;
};

/// Closed-form absolute coherence of the renormalized bidiagonal system.
/// Interior subdiagonal cross terms carry 1/2; the final one carries 1/sqrt(2)
/// because the last diagonal block is not rescaled.
double rewrite_coherence_closed_form(const LayeredProblem& problem);

}  // namespace gsc
