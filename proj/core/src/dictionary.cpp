#include "gsc/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gsc {

Dictionary::Dictionary(Eigen::MatrixXd atoms) : atoms_(std::move(atoms)) {
  const int n = static_cast<int>(atoms_.rows());
  const int m = static_cast<int>(atoms_.cols());
  if (n <= 0 || m <= 0) throw InvalidInput("dictionary must be nonempty");
  if (!atoms_.allFinite()) throw InvalidInput("dictionary contains non-finite entries");

  atom_supports_.resize(m);
  unit_normed_ = true;
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) {
      if (std::abs(atoms_(i, j)) > kZeroTol) atom_supports_[j].push_back(i);
    }
    if (atom_supports_[j].empty()) {
      throw InvalidInput("dictionary atom " + std::to_string(j) + " is all zero");
    }
    if (std::abs(atoms_.col(j).norm() - 1.0) > kZeroTol) unit_normed_ = false;
  }

  gram_ = atoms_.transpose() * atoms_;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(atoms_);
  sigma_max_ = svd.singularValues()(0);
}

Dictionary Dictionary::from_matrix(Eigen::MatrixXd atoms) {
  return Dictionary(std::move(atoms));
}

GroupPartition::GroupPartition(std::vector<std::vector<int>> groups, int n_indices)
    : groups_(std::move(groups)), n_indices_(n_indices) {
  if (n_indices <= 0) throw InvalidInput("partition over an empty index set");
  group_of_.assign(n_indices, -1);
  for (int g = 0; g < static_cast<int>(groups_.size()); ++g) {
    auto& grp = groups_[g];
    if (grp.empty()) throw InvalidInput("empty group in partition");
    std::sort(grp.begin(), grp.end());
    for (int idx : grp) {
      if (idx < 0 || idx >= n_indices) throw InvalidInput("group index out of range");
      if (group_of_[idx] != -1) throw InvalidInput("groups are not disjoint");
      group_of_[idx] = g;
    }
  }
  for (int i = 0; i < n_indices; ++i) {
    if (group_of_[i] == -1)
      throw InvalidInput("partition does not cover index " + std::to_string(i));
  }
}

GroupPartition GroupPartition::contiguous(int n_indices, int group_size) {
  if (group_size <= 0 || n_indices % group_size != 0)
    throw InvalidInput("group size must divide the index count");
  std::vector<std::vector<int>> groups;
  for (int start = 0; start < n_indices; start += group_size) {
    std::vector<int> g(group_size);
    std::iota(g.begin(), g.end(), start);
    groups.push_back(std::move(g));
  }
  return GroupPartition(std::move(groups), n_indices);
}

GroupPartition GroupPartition::singletons(int n_indices) {
  return contiguous(n_indices, 1);
}

GroupNorm GroupNorm::elastic(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidInput("elastic beta must lie in (0,1)");
  return {NormTag::Elastic, beta};
}

RegularizerSpec::RegularizerSpec(GroupPartition partition, std::vector<GroupNorm> norms,
                                 Eigen::VectorXd weights)
    : partition_(std::move(partition)), norms_(std::move(norms)), weights_(std::move(weights)) {
  const int k = partition_.n_groups();
  if (static_cast<int>(norms_.size()) != k || weights_.size() != k)
    throw InvalidInput("regularizer spec: one norm tag and one weight per group required");
  lambda_ = 1.0;
  for (const auto& nm : norms_) {
    if (nm.tag == NormTag::Elastic) {
      if (!(nm.beta > 0.0 && nm.beta < 1.0)) throw InvalidInput("elastic beta must lie in (0,1)");
      lambda_ = std::min(lambda_, nm.beta);
    }
  }
  gamma_min_ = weights_.minCoeff();
  gamma_max_ = weights_.maxCoeff();
  if (gamma_min_ <= 0.0) throw InvalidInput("regularizer weights must be positive");
}

RegularizerSpec RegularizerSpec::uniform(GroupPartition partition, GroupNorm norm, double gamma) {
  const int k = partition.n_groups();
  return RegularizerSpec(std::move(partition), std::vector<GroupNorm>(k, norm),
                         Eigen::VectorXd::Constant(k, gamma));
}

Eigen::VectorXd RegularizerSpec::norm_values(const Eigen::VectorXd& v) const {
  if (v.size() != partition_.n_indices())
    throw InvalidInput("regularizer: vector length does not match partition");
  const int k = partition_.n_groups();
  Eigen::VectorXd out(k);
  for (int g = 0; g < k; ++g) {
    double l1 = 0.0, sq = 0.0;
    for (int idx : partition_.group(g)) {
      l1 += std::abs(v[idx]);
      sq += v[idx] * v[idx];
    }
    const double l2 = std::sqrt(sq);
    switch (norms_[g].tag) {
      case NormTag::L1: out[g] = l1; break;
      case NormTag::L2: out[g] = l2; break;
      case NormTag::Elastic: out[g] = norms_[g].beta * l1 + (1.0 - norms_[g].beta) * l2; break;
    }
  }
  return out;
}

double RegularizerSpec::value(const Eigen::VectorXd& v) const {
  return weights_.dot(norm_values(v));
}

RegularizerSpec RegularizerSpec::scaled_weights(double factor) const {
  if (factor <= 0.0) throw InvalidInput("weight scale must be positive");
  return RegularizerSpec(partition_, norms_, weights_ * factor);
}

RegularizerSpec RegularizerSpec::with_weights(Eigen::VectorXd weights) const {
  return RegularizerSpec(partition_, norms_, std::move(weights));
}

SparseCode::SparseCode(Eigen::VectorXd values) : values_(std::move(values)) {
  for (int i = 0; i < values_.size(); ++i) {
    if (values_[i] != 0.0) support_.push_back(i);
  }
}

SparseCode::SparseCode(Eigen::VectorXd values, const GroupPartition& partition)
    : SparseCode(std::move(values)) {
  if (values_.size() != partition.n_indices())
    throw InvalidInput("sparse code length does not match partition");
  group_norms_.resize(partition.n_groups());
  for (int g = 0; g < partition.n_groups(); ++g) {
    double sq = 0.0;
    for (int idx : partition.group(g)) sq += values_[idx] * values_[idx];
    group_norms_[g] = std::sqrt(sq);
  }
}

CoherenceResult mutual_coherence(const Dictionary& dict) {
  if (dict.n_atoms() < 2) throw InvalidInput("mutual coherence needs at least two atoms");
  if (!dict.unit_normed()) throw InvalidInput("mutual coherence requires a unit-normed dictionary");
  const auto& g = dict.gram();
  CoherenceResult res;
  res.signed_max = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < g.rows(); ++i) {
    for (int j = 0; j < g.cols(); ++j) {
      if (i == j) continue;
      res.signed_max = std::max(res.signed_max, g(i, j));
      res.absolute_max = std::max(res.absolute_max, std::abs(g(i, j)));
    }
  }
  return res;
}

int max_stripe(const Dictionary& dict) {
  const auto& g = dict.gram();
  int best = 0;
  for (int i = 0; i < g.cols(); ++i) {
    int count = 0;
    for (int w = 0; w < g.rows(); ++w) {
      if (std::abs(g(w, i)) > kZeroTol) ++count;
    }
    best = std::max(best, count);
  }
  return best;
}

int stripe_norm(const std::vector<int>& support, const Dictionary& dict) {
  const auto& g = dict.gram();
  int best = 0;
  for (int i = 0; i < g.cols(); ++i) {
    int count = 0;
    for (int idx : support) {
      if (std::abs(g(idx, i)) > kZeroTol) ++count;
    }
    best = std::max(best, count);
  }
  return best;
}

int stripe_norm(const SparseCode& code, const Dictionary& dict) {
  if (code.size() != dict.n_atoms())
    throw InvalidInput("stripe norm: code length does not match atom count");
  return stripe_norm(code.support(), dict);
}

int local_sparsity(const std::vector<int>& support, const Dictionary& dict) {
  std::vector<char> in_support(dict.n_signal(), 0);
  for (int idx : support) {
    if (idx < 0 || idx >= dict.n_signal())
      throw InvalidInput("local sparsity: support index out of range");
    in_support[idx] = 1;
  }
  int best = 0;
  for (const auto& rows : dict.atom_supports()) {
    int count = 0;
    for (int r : rows) count += in_support[r];
    best = std::max(best, count);
  }
  return best;
}

double local_amplitude(const Eigen::VectorXd& e, const Dictionary& dict) {
  if (e.size() != dict.n_signal())
    throw InvalidInput("local amplitude: vector length does not match signal dimension");
  double best = 0.0;
  for (const auto& rows : dict.atom_supports()) {
    double sq = 0.0;
    for (int r : rows) sq += e[r] * e[r];
    best = std::max(best, std::sqrt(sq));
  }
  return best;
}

std::vector<int> characteristic_support(const SparseCode& code, const RegularizerSpec& spec) {
  const auto& part = spec.partition();
  if (code.size() != part.n_indices())
    throw InvalidInput("characteristic vector: code length does not match partition");
  std::vector<char> active(part.n_indices(), 0);
  for (int idx : code.support()) active[idx] = 1;
  for (int idx : code.support()) {
    const int g = part.group_of(idx);
    if (spec.norm(g).tag == NormTag::L2) {
      for (int j : part.group(g)) active[j] = 1;
    }
  }
  std::vector<int> out;
  for (int i = 0; i < part.n_indices(); ++i) {
    if (active[i]) out.push_back(i);
  }
  return out;
}

Eigen::VectorXd characteristic_vector(const SparseCode& code, const RegularizerSpec& spec) {
  Eigen::VectorXd chi = Eigen::VectorXd::Zero(code.size());
  for (int idx : characteristic_support(code, spec)) chi[idx] = 1.0;
  return chi;
}

bool is_group_full(const std::vector<int>& support, const RegularizerSpec& spec) {
  const auto& part = spec.partition();
  std::vector<char> in_support(part.n_indices(), 0);
  for (int idx : support) {
    if (idx < 0 || idx >= part.n_indices())
      throw InvalidInput("is_group_full: support index out of range");
    in_support[idx] = 1;
  }
  for (int g = 0; g < part.n_groups(); ++g) {
    if (spec.norm(g).tag != NormTag::L2) continue;
    int hit = 0;
    for (int idx : part.group(g)) hit += in_support[idx];
    if (hit != 0 && hit != static_cast<int>(part.group(g).size())) return false;
  }
  return true;
}

namespace {

// Pseudoinverse of the subdictionary through an SVD with a relative rank
// cutoff; throws when rank < |support|.
Eigen::MatrixXd subdictionary_pinv(const std::vector<int>& support, const Dictionary& dict) {
  const int k = static_cast<int>(support.size());
  Eigen::MatrixXd sub(dict.n_signal(), k);
  for (int c = 0; c < k; ++c) {
    if (support[c] < 0 || support[c] >= dict.n_atoms())
      throw InvalidInput("erc: support index out of range");
    sub.col(c) = dict.matrix().col(support[c]);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = kRankTol * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++rank;
  }
  if (rank < k) throw RankDeficiencyError(rank, k);
  Eigen::VectorXd inv = sv.cwiseInverse();
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace

double erc(const std::vector<int>& support, const Dictionary& dict, double lambda_eff) {
  if (!(lambda_eff > 0.0 && lambda_eff <= 1.0))
    throw InvalidInput("erc: lambda_eff must lie in (0,1]");
  if (support.empty()) throw InvalidInput("erc: empty support");
  const Eigen::MatrixXd pinv = subdictionary_pinv(support, dict);

  std::vector<char> in_support(dict.n_atoms(), 0);
  for (int idx : support) in_support[idx] = 1;

  double worst = 0.0;  // max over the empty set is 0 by convention
  for (int w = 0; w < dict.n_atoms(); ++w) {
    if (in_support[w]) continue;
    worst = std::max(worst, (pinv * dict.matrix().col(w)).lpNorm<1>());
  }
  return lambda_eff - worst;
}

}  // namespace gsc
