#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gsc/dictionary.hpp"

namespace gsc {

// Linear heads f_i = w_i . code + b_i (rows of weights). A single row is the
// binary single-score form used with the hinge loss and labels in {-1,+1}.
struct LinearClassifier {
  Eigen::MatrixXd weights;  // C x d
  Eigen::VectorXd bias;     // C

  int n_outputs() const { return static_cast<int>(weights.rows()); }
  int dim() const { return static_cast<int>(weights.cols()); }
  bool single_score() const { return weights.rows() == 1; }

  Eigen::VectorXd scores(const Eigen::VectorXd& code) const;
};

void save_classifier(const std::string& path, const LinearClassifier& clf);
LinearClassifier load_classifier(const std::string& path);

/// Per-group l2 norms of a code.
Eigen::VectorXd pool_groups(const Eigen::VectorXd& code, const GroupPartition& partition);
Eigen::VectorXd pool_groups(const SparseCode& code, const GroupPartition& partition);

struct Prediction {
  int label = 0;      // argmax index; single-score: 1 if f >= 0 else 0 (tie -> 0)
  double margin = 0.0;
};

/// Winning score minus the best rival; |f| in the single-score case.
/// Ties resolve to the lowest index with margin zero.
Prediction predict_and_margin(const LinearClassifier& clf, const Eigen::VectorXd& code);

enum class LossKind { Hinge, CrossEntropy };

struct LossValue {
  double value = 0.0;
  Eigen::VectorXd grad_code;  // analytic gradient w.r.t. the code
};

/// Hinge needs a single-score classifier and labels in {-1,+1}; cross-entropy
/// takes class indices in [0, C).
LossValue classification_loss(const LinearClassifier& clf, const Eigen::VectorXd& code, int label,
                              LossKind kind);

struct GapValue {
  double value = 0.0;
  std::vector<Eigen::VectorXd> grads;  // one subgradient per batch sample
  bool degenerate = false;             // every sample skipped
};

/// Batch gap penalty: negative separation between the smallest active and the
/// largest inactive group norm, minimised over the batch. A group is active
/// when its norm exceeds gamma_threshold; samples with no active or no
/// inactive group are skipped.
GapValue gap_regularizer(const std::vector<Eigen::VectorXd>& batch, const GroupPartition& partition,
                         double gamma_threshold);

}  // namespace gsc
