#include "gsc/classify.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "gsc/matrix_io.hpp"

namespace gsc {

Eigen::VectorXd LinearClassifier::scores(const Eigen::VectorXd& code) const {
  if (code.size() != weights.cols()) throw InvalidInput("classifier: code length mismatch");
  return weights * code + bias;
}

void save_classifier(const std::string& path, const LinearClassifier& clf) {
  // GBPC container: weight matrix block followed by the bias as a column
  Eigen::MatrixXd packed(clf.weights.rows(), clf.weights.cols() + 1);
  packed.leftCols(clf.weights.cols()) = clf.weights;
  packed.rightCols(1) = clf.bias;
  write_matrix(path, packed, kMagicClassifier);
}

LinearClassifier load_classifier(const std::string& path) {
  const Eigen::MatrixXd packed = read_matrix(path, kMagicClassifier);
  if (packed.cols() < 2) throw FormatError("classifier container too narrow", 8);
  LinearClassifier clf;
  clf.weights = packed.leftCols(packed.cols() - 1);
  clf.bias = packed.rightCols(1);
  return clf;
}

Eigen::VectorXd pool_groups(const Eigen::VectorXd& code, const GroupPartition& partition) {
  if (code.size() != partition.n_indices())
    throw InvalidInput("pool_groups: code length does not match partition");
  Eigen::VectorXd out(partition.n_groups());
  for (int g = 0; g < partition.n_groups(); ++g) {
    double sq = 0.0;
    for (int idx : partition.group(g)) sq += code[idx] * code[idx];
    out[g] = std::sqrt(sq);
  }
  return out;
}

Eigen::VectorXd pool_groups(const SparseCode& code, const GroupPartition& partition) {
  return pool_groups(code.values(), partition);
}

Prediction predict_and_margin(const LinearClassifier& clf, const Eigen::VectorXd& code) {
  const Eigen::VectorXd f = clf.scores(code);
  Prediction p;
  if (clf.single_score()) {
    p.label = f[0] > 0.0 ? 1 : 0;
    p.margin = std::abs(f[0]);
    return p;
  }
  int best = 0;
  for (int i = 1; i < f.size(); ++i) {
    if (f[i] > f[best]) best = i;
  }
  double runner = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < f.size(); ++i) {
    if (i != best) runner = std::max(runner, f[i]);
  }
  p.label = best;
  p.margin = f[best] - runner;
  return p;
}

LossValue classification_loss(const LinearClassifier& clf, const Eigen::VectorXd& code, int label,
                              LossKind kind) {
  LossValue out;
  if (kind == LossKind::Hinge) {
    if (!clf.single_score())
      throw InvalidInput("hinge loss requires the single-score binary classifier");
    if (label != 1 && label != -1) throw InvalidInput("hinge loss labels are -1 or +1");
    const double f = clf.scores(code)[0];
    const double margin = 1.0 - label * f;
    if (margin > 0.0) {
      out.value = margin;
      out.grad_code = -static_cast<double>(label) * clf.weights.row(0).transpose();
    } else {
      out.value = 0.0;
      out.grad_code = Eigen::VectorXd::Zero(code.size());
    }
    return out;
  }
  if (label < 0 || label >= clf.n_outputs()) throw InvalidInput("cross-entropy label out of range");
  Eigen::VectorXd f = clf.scores(code);
  const double fmax = f.maxCoeff();
  Eigen::VectorXd p = (f.array() - fmax).exp();
  p /= p.sum();
  out.value = -std::log(std::max(p[label], 1e-300));
  Eigen::VectorXd delta = p;
  delta[label] -= 1.0;
  out.grad_code = clf.weights.transpose() * delta;
  return out;
}

GapValue gap_regularizer(const std::vector<Eigen::VectorXd>& batch,
                         const GroupPartition& partition, double gamma_threshold) {
  if (batch.empty()) throw InvalidInput("gap_regularizer: empty batch");
  GapValue out;
  out.grads.assign(batch.size(), Eigen::VectorXd());

  double worst_gap = std::numeric_limits<double>::infinity();
  int worst_sample = -1;
  int worst_active = -1, worst_inactive = -1;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Eigen::VectorXd norms = pool_groups(batch[s], partition);
    double min_active = std::numeric_limits<double>::infinity();
    double max_inactive = -std::numeric_limits<double>::infinity();
    int g_active = -1, g_inactive = -1;
    for (int g = 0; g < norms.size(); ++g) {
      if (norms[g] > gamma_threshold) {
        if (norms[g] < min_active) {
          min_active = norms[g];
          g_active = g;
        }
      } else if (norms[g] > max_inactive) {
        max_inactive = norms[g];
        g_inactive = g;
      }
    }
    if (g_active < 0 || g_inactive < 0) continue;  // degenerate sample, skip
    const double gap = min_active - max_inactive;
    if (gap < worst_gap) {
      worst_gap = gap;
      worst_sample = static_cast<int>(s);
      worst_active = g_active;
      worst_inactive = g_inactive;
    }
  }

  for (std::size_t s = 0; s < batch.size(); ++s)
    out.grads[s] = Eigen::VectorXd::Zero(partition.n_indices());

  if (worst_sample < 0) {
    out.degenerate = true;
    return out;
  }
  out.value = -worst_gap;

  // d(-gap)/d code on the minimising sample: descend the active group norm,
  // ascend the inactive one (zero-norm groups keep a zero subgradient)
  const Eigen::VectorXd& code = batch[worst_sample];
  auto add_ray = [&](int g, double sign) {
    double sq = 0.0;
    for (int idx : partition.group(g)) sq += code[idx] * code[idx];
    const double nrm = std::sqrt(sq);
    if (nrm <= 0.0) return;
    for (int idx : partition.group(g)) out.grads[worst_sample][idx] = sign * code[idx] / nrm;
  };
  add_ray(worst_active, -1.0);
  add_ray(worst_inactive, 1.0);
  return out;
}

}  // namespace gsc
