#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gsc/errors.hpp"

namespace gsc {

/// Absolute tolerance for zero tests on dot products and supports.
inline constexpr double kZeroTol = 1e-12;
/// Relative singular-value cutoff used when pseudo-inverting subdictionaries.
inline constexpr double kRankTol = 1e-10;

// A dictionary of atoms (columns). Immutable after construction; the Gram
// matrix, column norms, atom supports and the largest singular value are
// precomputed so downstream metrics stay one-pass.
class Dictionary {
 public:
  static Dictionary from_matrix(Eigen::MatrixXd atoms);

  const Eigen::MatrixXd& matrix() const { return atoms_; }
  int n_signal() const { return static_cast<int>(atoms_.rows()); }
  int n_atoms() const { return static_cast<int>(atoms_.cols()); }
  bool unit_normed() const { return unit_normed_; }

  /// Row indices where column i is nonzero (|entry| > kZeroTol).
  const std::vector<std::vector<int>>& atom_supports() const { return atom_supports_; }

  const Eigen::MatrixXd& gram() const { return gram_; }
  double sigma_max() const { return sigma_max_; }

  Eigen::VectorXd atom(int i) const { return atoms_.col(i); }

 private:
  explicit Dictionary(Eigen::MatrixXd atoms);

  Eigen::MatrixXd atoms_;
  Eigen::MatrixXd gram_;
  std::vector<std::vector<int>> atom_supports_;
  double sigma_max_ = 0.0;
  bool unit_normed_ = false;
};

// Disjoint groups covering {0..m-1}. Groups keep their construction order;
// indices within a group are sorted.
class GroupPartition {
 public:
  GroupPartition(std::vector<std::vector<int>> groups, int n_indices);

  static GroupPartition contiguous(int n_indices, int group_size);
  static GroupPartition singletons(int n_indices);

  int n_indices() const { return n_indices_; }
  int n_groups() const { return static_cast<int>(groups_.size()); }
  const std::vector<int>& group(int g) const { return groups_[g]; }
  const std::vector<std::vector<int>>& groups() const { return groups_; }
  int group_of(int index) const { return group_of_[index]; }

 private:
  std::vector<std::vector<int>> groups_;
  std::vector<int> group_of_;
  int n_indices_;
};

enum class NormTag { L1, L2, Elastic };

struct GroupNorm {
  NormTag tag = NormTag::L1;
  double beta = 0.0;  // elastic mixing weight, strictly in (0,1)

  static GroupNorm l1() { return {NormTag::L1, 0.0}; }
  static GroupNorm l2() { return {NormTag::L2, 0.0}; }
  static GroupNorm elastic(double beta);
};

// Weighted mixed-norm regularizer <gamma, l(.)>: one norm tag and one
// positive weight per group of the partition.
class RegularizerSpec {
 public:
  RegularizerSpec(GroupPartition partition, std::vector<GroupNorm> norms,
                  Eigen::VectorXd weights);

  static RegularizerSpec uniform(GroupPartition partition, GroupNorm norm, double gamma);

  const GroupPartition& partition() const { return partition_; }
  const GroupNorm& norm(int g) const { return norms_[g]; }
  const std::vector<GroupNorm>& norms() const { return norms_; }
  double weight(int g) const { return weights_[g]; }
  const Eigen::VectorXd& weights() const { return weights_; }

  /// min{1, beta_1, ..., beta_r} over the elastic tags present.
  double lambda() const { return lambda_; }
  double gamma_min() const { return gamma_min_; }
  double gamma_max() const { return gamma_max_; }
  /// lambda * gamma_min / gamma_max, in (0, 1].
  double theta() const { return lambda_ * gamma_min_ / gamma_max_; }

  /// Per-group norm values l(v).
  Eigen::VectorXd norm_values(const Eigen::VectorXd& v) const;
  /// Regularizer value <gamma, l(v)>.
  double value(const Eigen::VectorXd& v) const;

  /// Same partition and tags with all weights multiplied by factor > 0.
  RegularizerSpec scaled_weights(double factor) const;
  RegularizerSpec with_weights(Eigen::VectorXd weights) const;

 private:
  GroupPartition partition_;
  std::vector<GroupNorm> norms_;
  Eigen::VectorXd weights_;
  double lambda_ = 1.0;
  double gamma_min_ = 0.0;
  double gamma_max_ = 0.0;
};

// A code vector with its exact support; per-group l2 norms are carried along
// when the partition is known at construction.
class SparseCode {
 public:
  SparseCode() = default;
  explicit SparseCode(Eigen::VectorXd values);
  SparseCode(Eigen::VectorXd values, const GroupPartition& partition);

  const Eigen::VectorXd& values() const { return values_; }
  const std::vector<int>& support() const { return support_; }
  const Eigen::VectorXd& group_norms() const { return group_norms_; }
  int size() const { return static_cast<int>(values_.size()); }

 private:
  Eigen::VectorXd values_;
  std::vector<int> support_;
  Eigen::VectorXd group_norms_;  // empty unless a partition was supplied
};

struct CoherenceResult {
  double signed_max = 0.0;    // max_{i!=j} <d_i, d_j>, the literal definition
  double absolute_max = 0.0;  // max_{i!=j} |<d_i, d_j>|, used by certificates
};

/// Mutual coherence of a unit-normed dictionary with at least two atoms.
CoherenceResult mutual_coherence(const Dictionary& dict);

/// Largest non-orthogonality neighbourhood size k_D = max_i |Lambda_i(D)|;
/// the neighbourhood of atom i includes i itself.
int max_stripe(const Dictionary& dict);

/// max_i |supp(gamma) ∩ Lambda_i(D)|.
int stripe_norm(const SparseCode& code, const Dictionary& dict);
int stripe_norm(const std::vector<int>& support, const Dictionary& dict);

/// max_i |support ∩ supp(d_i)|; the l0 counterpart of the local amplitude.
int local_sparsity(const std::vector<int>& support, const Dictionary& dict);

/// max_i ||e restricted to supp(d_i)||_2.
double local_amplitude(const Eigen::VectorXd& e, const Dictionary& dict);

/// 0/1 vector: support spread over every l2-tagged group the code touches.
Eigen::VectorXd characteristic_vector(const SparseCode& code, const RegularizerSpec& spec);
std::vector<int> characteristic_support(const SparseCode& code, const RegularizerSpec& spec);

/// Every l2-tagged group is contained in the support or disjoint from it.
bool is_group_full(const std::vector<int>& support, const RegularizerSpec& spec);

/// Exact Recovery Coefficient lambda_eff - max_{w not in support} ||D_support^+ d_w||_1.
/// Throws RankDeficiencyError when the subdictionary loses column rank.
double erc(const std::vector<int>& support, const Dictionary& dict, double lambda_eff);

}  // namespace gsc
