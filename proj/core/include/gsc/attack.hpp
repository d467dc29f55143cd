#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gsc/classify.hpp"
#include "gsc/dictionary.hpp"
#include "gsc/solver.hpp"

namespace gsc {

// The attacked model: solve -> (optional pooling) -> linear head -> loss,
// with an optional single-sample gap penalty added to the attacked loss.
struct Pipeline {
  Dictionary dictionary;
  RegularizerSpec spec;
  SolveOptions solve_opts;
  LinearClassifier classifier;
  LossKind loss = LossKind::Hinge;
  bool pooled = false;
  double gap_weight = 0.0;
  double gap_threshold = 0.0;
  int unroll_iterations = 300;

  /// Hinge expects labels in {-1,+1}; predictions map 0 -> -1.
  int loss_label(int label) const {
    return loss == LossKind::Hinge ? (label > 0 ? 1 : -1) : label;
  }
};

Prediction pipeline_predict(const Pipeline& p, const Eigen::VectorXd& x);
double pipeline_loss(const Pipeline& p, const Eigen::VectorXd& x, int label);

struct InputGradient {
  Eigen::VectorXd grad;
  bool solver_converged = true;
};

/// Gradient of the total loss with respect to the input, by reverse-mode
/// differentiation of a fixed-length proximal-gradient unroll warm-started at
/// the converged code. Hard-zeroed coordinates and blocks carry the zero
/// element of the sub-Jacobian.
InputGradient input_gradient(const Pipeline& p, const Eigen::VectorXd& x, int label);

struct AttackConfig {
  double epsilon = 0.1;
  int steps = 10;
  double clamp_low = -std::numeric_limits<double>::infinity();
  double clamp_high = std::numeric_limits<double>::infinity();
  bool include_gap_term = false;

  double step_size() const { return epsilon / steps; }  // a = eps / T
};

/// T sign-gradient steps of size eps/T, clamped to the data range and to the
/// linf ball of radius eps around x.
Eigen::VectorXd ifgsm(const Pipeline& p, const Eigen::VectorXd& x, int label,
                      const AttackConfig& cfg);

struct SweepDataset {
  Eigen::MatrixXd inputs;  // one sample per column
  Eigen::VectorXi labels;
};

struct SweepRow {
  std::string method;
  double epsilon = 0.0;
  double accuracy = 0.0;
  int n_samples = 0;
  std::uint64_t seed = 0;
};

/// Predicts a class for an input; empty means "evaluate on the craft
/// pipeline" (white box). A feedforward predictor makes the sweep black box.
using Predictor = std::function<int(const Eigen::VectorXd&)>;

/// Accuracy under attack per epsilon. Perturbations are always crafted on
/// `craft`; `evaluate` may redirect evaluation to another model. jobs > 1
/// splits samples across threads with a deterministic result order.
std::vector<SweepRow> attack_sweep(const Pipeline& craft, const SweepDataset& data,
                                   const std::vector<double>& epsilons, const AttackConfig& base,
                                   const std::string& method, std::uint64_t seed,
                                   const Predictor& evaluate = {}, int jobs = 1);

}  // namespace gsc
