#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "gsc/classify.hpp"
#include "gsc/dictionary.hpp"
#include "gsc/solver.hpp"

namespace gsc {

struct TrainConfig {
  int epochs_max = 500;
  int early_stop_patience = 10;
  int gamma_warmup_epochs = 4;
  int batch_size = 32;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::CrossEntropy;
  double gap_weight = 0.0;     // 0 disables the gap term in the reported loss
  double gap_threshold = 0.0;  // activity gate for the gap term
  double val_fraction = 0.1;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;  // reconstruction loss / accuracy / mse, op-dependent
};

using TrainLog = std::vector<EpochRecord>;

/// Linear warmup factor applied to the regularizer weights: (epoch+1)/warmup
/// capped at 1 (epochs count from zero).
inline double warmup_scale(int epoch, int warmup_epochs) {
  if (warmup_epochs <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch + 1) / warmup_epochs);
}

/// Alternating minimization for the reconstruction objective: sparse-code the
/// samples, refit the used atoms by least squares, renormalize. Weights ramp
/// linearly over the warmup epochs; early stopping watches the validation
/// reconstruction loss. Throws DeadDictionaryError when an epoch codes every
/// sample to zero.
Dictionary pretrain_dictionary(const Eigen::MatrixXd& samples, const RegularizerSpec& spec,
                               const TrainConfig& config, TrainLog* log = nullptr);

/// SGD on hinge (binary, single-score) or cross-entropy over precomputed
/// codes; the gap term enters the reported loss only (codes are fixed).
/// Returns the best-validation-accuracy parameters.
LinearClassifier train_classifier(const Eigen::MatrixXd& codes, const Eigen::VectorXi& labels,
                                  int n_classes, const GroupPartition& partition,
                                  const TrainConfig& config, TrainLog* log = nullptr);

enum class LayerKind { Affine, BatchNorm, Relu, LinearAttention, Softmax };

struct Layer {
  LayerKind kind = LayerKind::Affine;
  int in_dim = 0;
  int out_dim = 0;
  // affine
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
  // batch normalization (momentum 0.9, eps 1e-5)
  Eigen::VectorXd bn_gamma, bn_beta, bn_run_mean, bn_run_var;
  // linear attention: tokens of width token_dim, feature maps of width units
  Eigen::MatrixXd wq, wk, wv;
  int tokens = 0;
  int token_dim = 0;
  int units = 0;

  static Layer affine(int in, int out, class Rng& rng);
  static Layer batch_norm(int dim);
  static Layer relu(int dim);
  static Layer linear_attention(int tokens, int token_dim, int units, class Rng& rng);
  static Layer softmax(int dim);
};

// A feedforward approximator: the trunk regresses the pooled code, the head
// (from head_start on) is the stacked classifier.
struct FeedforwardModel {
  std::string tag;  // DenseShallow | DenseDeep | LinearTransformer
  std::vector<Layer> layers;
  int head_start = 0;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
  int trunk_dim() const;
};

/// Inference-mode forward pass (batch-norm uses running statistics).
Eigen::VectorXd forward(const FeedforwardModel& model, const Eigen::VectorXd& x);
Eigen::MatrixXd forward_batch(const FeedforwardModel& model, const Eigen::MatrixXd& x);
/// Trunk output only: the pooled-code estimate.
Eigen::VectorXd trunk_output(const FeedforwardModel& model, const Eigen::VectorXd& x);
Eigen::MatrixXd trunk_output_batch(const FeedforwardModel& model, const Eigen::MatrixXd& x);

/// Architectures for the synthetic task (input n, n_groups pooled outputs,
/// single-score head) and for MNIST-shaped inputs (784 -> 32 -> 10 classes).
FeedforwardModel make_synthetic_model(const std::string& tag, int input_dim, int n_groups,
                                      std::uint64_t seed);
FeedforwardModel make_mnist_model(const std::string& tag, std::uint64_t seed);

/// Installs a linear head (e.g. the known pooled classifier) on the trunk.
void set_head(FeedforwardModel& model, const LinearClassifier& clf);

/// Trains the trunk by SGD on mean squared error against pooled-code targets;
/// returns the best-validation model. Throws TrainingDiverged past 1e6 loss.
FeedforwardModel train_feedforward_approximator(const Eigen::MatrixXd& inputs,
                                                const Eigen::MatrixXd& targets,
                                                FeedforwardModel model, const TrainConfig& config,
                                                TrainLog* log = nullptr);

void save_model(const std::string& path, const FeedforwardModel& model);
FeedforwardModel load_model(const std::string& path);

void write_train_log_csv(const std::string& path, const TrainLog& log);

// exposed for the layer-wise gradient checks
struct LayerTape;
Eigen::MatrixXd layer_forward_train(Layer& layer, const Eigen::MatrixXd& x, LayerTape& tape);
Eigen::MatrixXd layer_backward(Layer& layer, const Eigen::MatrixXd& grad_out, const LayerTape& tape,
                               Eigen::MatrixXd* grad_w, Eigen::VectorXd* grad_b,
                               Eigen::MatrixXd* grad_wq, Eigen::MatrixXd* grad_wk,
                               Eigen::MatrixXd* grad_wv);

struct LayerTape {
  Eigen::MatrixXd input;
  Eigen::MatrixXd normalized;    // batch norm
  Eigen::VectorXd batch_mean, batch_inv_std;
  Eigen::MatrixXd output;        // softmax / relu mask source
  // attention caches, one entry per sample
  std::vector<Eigen::MatrixXd> phi_q, phi_k, values, s_matrix;
  std::vector<Eigen::VectorXd> z_vector, denom;
  std::vector<Eigen::MatrixXd> q_raw, k_raw;
};

}  // namespace gsc
