#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gsc/classify.hpp"
#include "gsc/dictionary.hpp"
#include "gsc/solver.hpp"
#include "gsc/stability.hpp"

namespace gsc {

struct PackingResult {
  Dictionary dictionary;
  double achieved_mu = 0.0;  // absolute coherence of the returned frame
  int rounds_used = 0;
};

/// Low-coherence unit-normed frame by alternating projection on the Gram
/// matrix: clip off-diagonal entries, project back to rank n, renormalize.
/// Returns the best frame found within max_rounds; never errors on a missed
/// target. target_mu <= 0 aims at the Welch bound. Deterministic per seed.
PackingResult build_low_coherence_dictionary(int n, int m, const GroupPartition& partition,
                                             std::uint64_t seed, double target_mu = 0.0,
                                             int max_rounds = 400);

struct SyntheticSpec {
  int n = 100;
  int m = 300;
  int n_groups = 75;
  int group_size = 4;
  int active_groups = 8;
  double amplitude_lo = 1.0;
  double amplitude_hi = 2.0;
  int count = 10000;
  double margin = 0.1;  // eta
  std::uint64_t seed = 0;
};

struct LabeledDataset {
  Eigen::MatrixXd inputs;  // signal per column
  Eigen::MatrixXd codes;   // true code per column
  Eigen::VectorXi labels;  // 0/1 for the binary synthetic task
  Eigen::VectorXd margins;
  std::uint64_t seed = 0;

  int count() const { return static_cast<int>(inputs.cols()); }
};

struct SyntheticPair {
  LabeledDataset no_pool;
  LabeledDataset pooled;
};

/// Normalized Gaussian single-score classifier, zero bias.
LinearClassifier make_random_classifier(int dim, std::uint64_t seed);

/// Rejection-samples codes with the configured active-group pattern, keeps
/// signals whose margin under the true classifier reaches spec.margin. The
/// two sets draw independently (seeds spec.seed and spec.seed + 1).
SyntheticPair generate_synthetic_dataset(const Dictionary& dict, const SyntheticSpec& spec,
                                         const LinearClassifier& clf_full,
                                         const LinearClassifier& clf_pooled);

void save_dataset(const std::string& prefix, const LabeledDataset& data);
LabeledDataset load_dataset(const std::string& prefix);

struct CertifiedInstance {
  Dictionary dictionary;
  RegularizerSpec spec;
  SparseCode gamma_true;
  Eigen::VectorXd noise;
  Theorem2Certificate certificate;
};

/// Builds an instance satisfying every Theorem 2 hypothesis: a group-full
/// support small enough for condition a), uniform weights at the condition b)
/// boundary, code entries above the certified bound, noise scaled to the
/// requested local amplitude. Throws InfeasibleRequest when condition a)
/// cannot hold at the dictionary's coherence.
CertifiedInstance generate_certified_instance(const Dictionary& dict,
                                              const GroupPartition& partition,
                                              const std::vector<GroupNorm>& norms,
                                              int active_groups, double noise_level, double c,
                                              std::uint64_t seed, bool nonnegative = false);

/// Convenience overload that also builds the low-coherence dictionary.
CertifiedInstance generate_certified_instance(int n, int m, const GroupPartition& partition,
                                              const std::vector<GroupNorm>& norms,
                                              int active_groups, double noise_level, double c,
                                              std::uint64_t seed, bool nonnegative = false);

struct CertifiedLayeredInstance {
  LayeredProblem problem;
  std::vector<SparseCode> gamma_true;
  Eigen::VectorXd x;      // clean signal
  Eigen::VectorXd noise;  // perturbation on the signal
  LayeredBounds bounds;
  std::vector<double> c_list;
};

/// Two-layer chain satisfying the layered theorem: layer-2 atoms live inside
/// single layer-1 groups, so the intermediate code stays group-sparse.
CertifiedLayeredInstance generate_certified_layered_instance(int n, int m1, int n_groups2,
                                                             double noise_level, double c,
                                                             std::uint64_t seed);

struct MnistData {
  Eigen::MatrixXd images;  // 784 x count, raw pixel values
  Eigen::VectorXi labels;  // 0..9
};

/// IDX readers/writers (big-endian dimensions, magics 0x803 / 0x801).
MnistData load_mnist_idx(const std::string& images_path, const std::string& labels_path);
void write_mnist_idx(const std::string& images_path, const std::string& labels_path,
                     const MnistData& data);

// Per-pixel standardization fitted on the training split and persisted for
// test-split reuse; denominator carries a 1e-8 floor.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  static Standardizer fit(const Eigen::MatrixXd& train);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  void save(const std::string& path) const;
  static Standardizer load(const std::string& path);
};

}  // namespace gsc
