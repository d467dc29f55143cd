#include "gsc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace gsc {

namespace {

double soft(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

void prox_group(const std::vector<int>& idx, const GroupNorm& norm, double t,
                const Eigen::VectorXd& v, Eigen::VectorXd& out) {
  switch (norm.tag) {
    case NormTag::L1:
      for (int i : idx) out[i] = soft(v[i], t);
      break;
    case NormTag::L2: {
      double sq = 0.0;
      for (int i : idx) sq += v[i] * v[i];
      const double nrm = std::sqrt(sq);
      const double scale = nrm > t ? 1.0 - t / nrm : 0.0;
      for (int i : idx) out[i] = scale * v[i];
      break;
    }
    case NormTag::Elastic: {
      // prox of beta*l1 + (1-beta)*l2 composes: elementwise shrink, then block shrink
      const double t1 = t * norm.beta;
      const double t2 = t * (1.0 - norm.beta);
      double sq = 0.0;
      for (int i : idx) {
        const double u = soft(v[i], t1);
        out[i] = u;
        sq += u * u;
      }
      const double nrm = std::sqrt(sq);
      const double scale = nrm > t2 ? 1.0 - t2 / nrm : 0.0;
      for (int i : idx) out[i] *= scale;
      break;
    }
  }
}

}  // namespace

Eigen::VectorXd prox_step(const Eigen::VectorXd& v, const RegularizerSpec& spec, double step) {
  if (step <= 0.0) throw InvalidInput("prox_step: step must be positive");
  if (v.size() != spec.partition().n_indices())
    throw InvalidInput("prox_step: vector length does not match partition");
  Eigen::VectorXd out(v.size());
  const auto& part = spec.partition();
  for (int g = 0; g < part.n_groups(); ++g) {
    prox_group(part.group(g), spec.norm(g), step * spec.weight(g), v, out);
  }
  return out;
}

Eigen::VectorXd prox_step_nonnegative(const Eigen::VectorXd& v, const RegularizerSpec& spec,
                                      double step) {
  if (step <= 0.0) throw InvalidInput("prox_step: step must be positive");
  Eigen::VectorXd out(v.size());
  const auto& part = spec.partition();
  for (int g = 0; g < part.n_groups(); ++g) {
    const auto& idx = part.group(g);
    const auto& norm = spec.norm(g);
    const double t = step * spec.weight(g);
    if (norm.tag == NormTag::L1) {
      // exact: prox of t*|.| + indicator(>=0) is a one-sided shrink
      for (int i : idx) out[i] = std::max(0.0, v[i] - t);
    } else {
      prox_group(idx, norm, t, v, out);
      for (int i : idx) out[i] = std::max(0.0, out[i]);
    }
  }
  return out;
}

double gbp_objective(const Eigen::VectorXd& x, const Dictionary& dict,
                     const RegularizerSpec& spec, const Eigen::VectorXd& gamma) {
  const Eigen::VectorXd r = x - dict.matrix() * gamma;
  return 0.5 * r.squaredNorm() + spec.value(gamma);
}

double optimality_residual(const Eigen::VectorXd& gamma, const Eigen::VectorXd& x,
                           const Dictionary& dict, const RegularizerSpec& spec) {
  if (x.size() != dict.n_signal() || gamma.size() != dict.n_atoms())
    throw InvalidInput("optimality_residual: dimension mismatch");
  // condition: r = D^T (x - D gamma) lies in the subdifferential of the
  // regularizer at gamma; squared distance accumulates per group
  const Eigen::VectorXd r = dict.matrix().transpose() * (x - dict.matrix() * gamma);
  const auto& part = spec.partition();
  double dist_sq = 0.0;
  for (int g = 0; g < part.n_groups(); ++g) {
    const auto& idx = part.group(g);
    const auto& norm = spec.norm(g);
    const double w = spec.weight(g);
    double group_norm_sq = 0.0;
    for (int i : idx) group_norm_sq += gamma[i] * gamma[i];
    const bool group_active = group_norm_sq > 0.0;
    const double group_norm = std::sqrt(group_norm_sq);

    switch (norm.tag) {
      case NormTag::L1:
        for (int i : idx) {
          if (gamma[i] != 0.0) {
            const double d = r[i] - w * (gamma[i] > 0 ? 1.0 : -1.0);
            dist_sq += d * d;
          } else {
            const double d = std::max(0.0, std::abs(r[i]) - w);
            dist_sq += d * d;
          }
        }
        break;
      case NormTag::L2:
        if (group_active) {
          for (int i : idx) {
            const double d = r[i] - w * gamma[i] / group_norm;
            dist_sq += d * d;
          }
        } else {
          double sq = 0.0;
          for (int i : idx) sq += r[i] * r[i];
          const double d = std::max(0.0, std::sqrt(sq) - w);
          dist_sq += d * d;
        }
        break;
      case NormTag::Elastic: {
        const double wb = w * norm.beta;
        const double w2 = w * (1.0 - norm.beta);
        if (group_active) {
          for (int i : idx) {
            const double ray = w2 * gamma[i] / group_norm;
            if (gamma[i] != 0.0) {
              const double d = r[i] - wb * (gamma[i] > 0 ? 1.0 : -1.0) - ray;
              dist_sq += d * d;
            } else {
              const double d = std::max(0.0, std::abs(r[i]) - wb);
              dist_sq += d * d;
            }
          }
        } else {
          // distance to the Minkowski sum of the linf ball (radius wb) and
          // the l2 ball (radius w2): soft-threshold, then shrink the norm
          double sq = 0.0;
          for (int i : idx) {
            const double s = soft(r[i], wb);
            sq += s * s;
          }
          const double d = std::max(0.0, std::sqrt(sq) - w2);
          dist_sq += d * d;
        }
        break;
      }
    }
  }
  return std::sqrt(dist_sq);
}

double optimality_residual(const SparseCode& code, const Eigen::VectorXd& x,
                           const Dictionary& dict, const RegularizerSpec& spec) {
  return optimality_residual(code.values(), x, dict, spec);
}

namespace {

Eigen::VectorXd snap_support(Eigen::VectorXd gamma) {
  const double cutoff = kSupportSnapTol * std::max(1.0, gamma.lpNorm<Eigen::Infinity>());
  for (int i = 0; i < gamma.size(); ++i) {
    if (std::abs(gamma[i]) < cutoff) gamma[i] = 0.0;
  }
  return gamma;
}

using ProxFn = Eigen::VectorXd (*)(const Eigen::VectorXd&, const RegularizerSpec&, double);
using ResidualFn = std::function<double(const Eigen::VectorXd&)>;

struct IterateState {
  Eigen::VectorXd gamma;
  double objective;
  int iterations;
};

IterateState run_proximal_gradient(const Eigen::VectorXd& x, const Dictionary& dict,
                                   const RegularizerSpec& spec, const SolveOptions& opts,
                                   ProxFn prox, const ResidualFn& residual_fn,
                                   double residual_target) {
  const Eigen::MatrixXd& d = dict.matrix();
  const double sig = dict.sigma_max();
  const double step = sig > 0.0 ? 1.0 / (sig * sig) : 1.0;

  Eigen::VectorXd gamma = opts.init ? *opts.init : Eigen::VectorXd::Zero(dict.n_atoms());
  if (gamma.size() != dict.n_atoms()) throw InvalidInput("solve: warm start has wrong length");
  Eigen::VectorXd gamma_prev = gamma;
  Eigen::VectorXd y = gamma;
  double t_momentum = 1.0;

  double obj = gbp_objective(x, dict, spec, gamma);
  Eigen::VectorXd best_gamma = gamma;
  double best_obj = obj;
  bool hit_target = false;
  int stall = 0;
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    const Eigen::VectorXd grad = d.transpose() * (d * y - x);
    const Eigen::VectorXd next = prox(y - step * grad, spec, step);

    if (opts.acceleration) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
      y = next + ((t_momentum - 1.0) / t_next) * (next - gamma);
      t_momentum = t_next;
    } else {
      y = next;
    }
    gamma_prev.swap(gamma);
    gamma = next;

    const double new_obj = gbp_objective(x, dict, spec, gamma);
    if (new_obj < best_obj) {
      best_obj = new_obj;
      best_gamma = gamma;
    }
    if (std::abs(new_obj - obj) <= opts.rel_tol * std::max(1.0, std::abs(new_obj))) {
      ++stall;
    } else {
      stall = 0;
    }
    obj = new_obj;
    if (stall == 3 || (iter % 128 == 127)) {
      if (residual_fn(gamma) <= 0.25 * residual_target) {
        hit_target = true;
        ++iter;
        break;
      }
    }
  }
  if (!hit_target && best_obj < obj) {
    gamma = best_gamma;
    obj = best_obj;
  }
  return {std::move(gamma), obj, iter};
}

}  // namespace

SolveResult solve_gbp(const Eigen::VectorXd& x, const Dictionary& dict,
                      const RegularizerSpec& spec, const SolveOptions& opts) {
  if (x.size() != dict.n_signal()) throw InvalidInput("solve_gbp: signal length mismatch");
  if (spec.partition().n_indices() != dict.n_atoms())
    throw InvalidInput("solve_gbp: partition does not match atom count");
  if (!x.allFinite()) throw InvalidInput("solve_gbp: signal contains NaN or Inf");
  if (opts.max_iter < 1 || opts.rel_tol <= 0.0) throw InvalidInput("solve_gbp: bad options");
  if (opts.nonnegative) return solve_positive_gbp(x, dict, spec, opts);

  const double residual_target =
      opts.residual_tol ? *opts.residual_tol : 1e-7 * (1.0 + x.norm());
  const auto residual_fn = [&](const Eigen::VectorXd& g) {
    return optimality_residual(g, x, dict, spec);
  };
  IterateState st =
      run_proximal_gradient(x, dict, spec, opts, &prox_step, residual_fn, residual_target);

  SolveResult res;
  Eigen::VectorXd snapped = snap_support(std::move(st.gamma));
  res.residual = optimality_residual(snapped, x, dict, spec);
  res.objective = gbp_objective(x, dict, spec, snapped);
  res.code = SparseCode(std::move(snapped), spec.partition());
  res.iterations = st.iterations;
  res.converged = res.residual <= residual_target;
  return res;
}

namespace {

// Canonical subgradient of the regularizer at gamma restricted to the
// nonnegative orthant; zero coordinates pick the element closest to -grad.
Eigen::VectorXd polish_subgradient(const Eigen::VectorXd& gamma, const Eigen::VectorXd& grad,
                                   const RegularizerSpec& spec) {
  const auto& part = spec.partition();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(gamma.size());
  for (int g = 0; g < part.n_groups(); ++g) {
    const auto& idx = part.group(g);
    const auto& norm = spec.norm(g);
    const double w = spec.weight(g);
    double nrm = 0.0;
    for (int i : idx) nrm += gamma[i] * gamma[i];
    nrm = std::sqrt(nrm);
    for (int i : idx) {
      double v = 0.0;
      switch (norm.tag) {
        case NormTag::L1:
          v = gamma[i] > 0.0 ? w : std::clamp(-grad[i], -w, w);
          break;
        case NormTag::L2:
          v = nrm > 0.0 ? w * gamma[i] / nrm : std::clamp(-grad[i], -w, w);
          break;
        case NormTag::Elastic: {
          const double wb = w * norm.beta;
          const double w2 = w * (1.0 - norm.beta);
          const double ray = nrm > 0.0 ? w2 * gamma[i] / nrm : 0.0;
          v = ray + (gamma[i] > 0.0 ? wb : std::clamp(-grad[i] - ray, -wb, wb));
          break;
        }
      }
      s[i] = v;
    }
  }
  return s;
}

}  // namespace

SolveResult solve_positive_gbp(const Eigen::VectorXd& x, const Dictionary& dict,
                               const RegularizerSpec& spec, const SolveOptions& opts) {
  if (x.size() != dict.n_signal()) throw InvalidInput("solve_positive_gbp: signal length mismatch");
  if (spec.partition().n_indices() != dict.n_atoms())
    throw InvalidInput("solve_positive_gbp: partition does not match atom count");
  if (!x.allFinite()) throw InvalidInput("solve_positive_gbp: signal contains NaN or Inf");

  const double residual_target =
      opts.residual_tol ? *opts.residual_tol : 1e-7 * (1.0 + x.norm());
  SolveOptions local = opts;
  if (local.init && (local.init->array() < 0.0).any())
    throw InvalidInput("solve_positive_gbp: warm start must be nonnegative");

  const Eigen::MatrixXd& d = dict.matrix();
  const double sig = dict.sigma_max();
  const double step = sig > 0.0 ? 1.0 / (sig * sig) : 1.0;

  auto projected_residual = [&](const Eigen::VectorXd& gamma) {
    const Eigen::VectorXd grad = d.transpose() * (d * gamma - x);
    const Eigen::VectorXd next = prox_step_nonnegative(gamma - step * grad, spec, step);
    return (gamma - next).norm() / step;
  };

  IterateState st = run_proximal_gradient(x, dict, spec, local, &prox_step_nonnegative,
                                          projected_residual, residual_target);

  Eigen::VectorXd gamma = st.gamma;
  if (projected_residual(gamma) > residual_target) {
    // projected-subgradient polish; the composite prox above is inexact for
    // l2/elastic groups under the orthant constraint
    Eigen::VectorXd best = gamma;
    double best_obj = gbp_objective(x, dict, spec, gamma);
    const double step0 = step;
    for (int k = 1; k <= 500; ++k) {
      const Eigen::VectorXd grad = d.transpose() * (d * gamma - x);
      const Eigen::VectorXd sub = polish_subgradient(gamma, grad, spec);
      gamma = (gamma - (step0 / std::sqrt(static_cast<double>(k))) * (grad + sub))
                  .cwiseMax(0.0);
      const double obj = gbp_objective(x, dict, spec, gamma);
      if (obj < best_obj) {
        best_obj = obj;
        best = gamma;
      }
    }
    gamma = best;
    // re-run the proximal iteration from the polished point
    SolveOptions warm = local;
    warm.init = gamma;
    st = run_proximal_gradient(x, dict, spec, warm, &prox_step_nonnegative, projected_residual,
                               residual_target);
    st.iterations += 500;
    gamma = st.gamma;
  }

  SolveResult res;
  Eigen::VectorXd snapped = snap_support(std::move(gamma)).cwiseMax(0.0);
  res.residual = projected_residual(snapped);
  res.objective = gbp_objective(x, dict, spec, snapped);
  res.code = SparseCode(std::move(snapped), spec.partition());
  res.iterations = st.iterations;
  res.converged = res.residual <= residual_target;
  res.group_full = characteristic_support(res.code, spec) == res.code.support();
  return res;
}

LayeredProblem::LayeredProblem(std::vector<Dictionary> dicts,
                               std::vector<RegularizerSpec> layer_specs)
    : dictionaries(std::move(dicts)), specs(std::move(layer_specs)) {
  if (dictionaries.empty()) throw InvalidInput("layered problem needs at least one layer");
  if (dictionaries.size() != specs.size())
    throw InvalidInput("layered problem: one spec per dictionary required");
  for (std::size_t j = 0; j < dictionaries.size(); ++j) {
    if (specs[j].partition().n_indices() != dictionaries[j].n_atoms())
      throw InvalidInput("layered problem: spec " + std::to_string(j) + " does not match atoms");
    if (j + 1 < dictionaries.size() &&
        dictionaries[j + 1].n_signal() != dictionaries[j].n_atoms())
      throw InvalidInput("layered problem: dimension chain broken at layer " + std::to_string(j));
  }
}

std::vector<SolveResult> solve_layered_gbp(const Eigen::VectorXd& x,
                                           const LayeredProblem& problem,
                                           const SolveOptions& opts) {
  std::vector<SolveResult> results;
  Eigen::VectorXd signal = x;
  for (int j = 0; j < problem.layers(); ++j) {
    try {
      results.push_back(solve_gbp(signal, problem.dictionaries[j], problem.specs[j], opts));
    } catch (const std::exception& e) {
      throw LayeredSolveError(j, e.what());
    }
    signal = results.back().code.values();
  }
  return results;
}

BlockSystemBuilder::BlockSystemBuilder(std::vector<int> row_dims, std::vector<int> col_dims)
    : row_dims_(std::move(row_dims)), col_dims_(std::move(col_dims)) {
  int r = 0, c = 0;
  for (int v : row_dims_) {
    row_off_.push_back(r);
    r += v;
  }
  for (int v : col_dims_) {
    col_off_.push_back(c);
    c += v;
  }
  dense_ = Eigen::MatrixXd::Zero(r, c);
}

BlockSystemBuilder& BlockSystemBuilder::set_block(int p, int q, Eigen::MatrixXd block) {
  if (p < 0 || p >= static_cast<int>(row_dims_.size()) || q < 0 ||
      q >= static_cast<int>(col_dims_.size()))
    throw InvalidInput("block index out of range");
  if (block.rows() != row_dims_[p] || block.cols() != col_dims_[q])
    throw InvalidInput("block shape does not match the grid");
  dense_.block(row_off_[p], col_off_[q], row_dims_[p], col_dims_[q]) = std::move(block);
  return *this;
}

Eigen::MatrixXd BlockSystemBuilder::assemble() const { return dense_; }

RewriteResult renormalize_system(const Eigen::MatrixXd& stacked, const RegularizerSpec& spec,
                                 int signal_rows) {
  const int m = static_cast<int>(stacked.cols());
  if (spec.partition().n_indices() != m)
    throw InvalidInput("renormalize_system: spec does not match column count");

  Eigen::VectorXd scales(m);
  for (int j = 0; j < m; ++j) {
    scales[j] = stacked.col(j).norm();
    if (scales[j] <= 0.0) throw InvalidStructure("renormalize: zero column " + std::to_string(j));
  }

  const auto& part = spec.partition();
  std::vector<std::vector<int>> new_groups;
  std::vector<GroupNorm> new_norms;
  std::vector<double> new_weights;
  for (int g = 0; g < part.n_groups(); ++g) {
    const auto& idx = part.group(g);
    double lo = scales[idx.front()], hi = lo;
    for (int i : idx) {
      lo = std::min(lo, scales[i]);
      hi = std::max(hi, scales[i]);
    }
    const bool common = (hi - lo) <= 1e-9 * hi;
    if (common) {
      new_groups.push_back(idx);
      new_norms.push_back(spec.norm(g));
      new_weights.push_back(spec.weight(g) / scales[idx.front()]);
    } else if (spec.norm(g).tag == NormTag::L1) {
      // l1 is separable: unequal scales absorb per coordinate
      for (int i : idx) {
        new_groups.push_back({i});
        new_norms.push_back(GroupNorm::l1());
        new_weights.push_back(spec.weight(g) / scales[i]);
      }
    } else {
      throw InvalidStructure("group " + std::to_string(g) +
                             " mixes column norms under an l2/elastic tag");
    }
  }

  Eigen::MatrixXd unit = stacked;
  for (int j = 0; j < m; ++j) unit.col(j) /= scales[j];

  RewriteResult out{Dictionary::from_matrix(std::move(unit)),
                    RegularizerSpec(GroupPartition(std::move(new_groups), m), std::move(new_norms),
                                    Eigen::Map<Eigen::VectorXd>(new_weights.data(),
                                                                static_cast<Eigen::Index>(
                                                                    new_weights.size()))),
                    std::move(scales),
                    {},
                    {},
                    signal_rows};
  return out;
}

Eigen::VectorXd RewriteResult::recover_original(const Eigen::VectorXd& renormalized) const {
  if (renormalized.size() != column_scales.size())
    throw InvalidInput("recover_original: length mismatch");
  return renormalized.cwiseQuotient(column_scales);
}

Eigen::VectorXd RewriteResult::stacked_signal(const Eigen::VectorXd& x) const {
  if (x.size() != signal_rows) throw InvalidInput("stacked_signal: wrong signal length");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dictionary.n_signal());
  out.head(signal_rows) = x;
  return out;
}

RewriteResult rewrite_single_layer(const LayeredProblem& problem) {
  const int k = problem.layers();
  std::vector<int> row_dims, col_dims;
  row_dims.push_back(problem.dictionaries[0].n_signal());
  for (int j = 0; j < k; ++j) {
    col_dims.push_back(problem.dictionaries[j].n_atoms());
    if (j + 1 < k) row_dims.push_back(problem.dictionaries[j].n_atoms());
  }

  BlockSystemBuilder builder(row_dims, col_dims);
  for (int j = 0; j < k; ++j) {
    builder.set_block(j, j, problem.dictionaries[j].matrix());
    if (j + 1 < k) {
      builder.set_block(j + 1, j,
                        -Eigen::MatrixXd::Identity(problem.dictionaries[j].n_atoms(),
                                                   problem.dictionaries[j].n_atoms()));
    }
  }

  // stack the per-layer partitions with column offsets
  std::vector<std::vector<int>> groups;
  std::vector<GroupNorm> norms;
  std::vector<double> weights;
  int offset = 0;
  std::vector<int> block_offsets, block_sizes;
  for (int j = 0; j < k; ++j) {
    const auto& spec = problem.specs[j];
    block_offsets.push_back(offset);
    block_sizes.push_back(problem.dictionaries[j].n_atoms());
    for (int g = 0; g < spec.partition().n_groups(); ++g) {
      std::vector<int> idx = spec.partition().group(g);
      for (int& i : idx) i += offset;
      groups.push_back(std::move(idx));
      norms.push_back(spec.norm(g));
      weights.push_back(spec.weight(g));
    }
    offset += problem.dictionaries[j].n_atoms();
  }
  RegularizerSpec stacked_spec(
      GroupPartition(std::move(groups), offset), std::move(norms),
      Eigen::Map<Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size())));

  RewriteResult out = renormalize_system(builder.assemble(), stacked_spec,
                                         problem.dictionaries[0].n_signal());
  out.block_offsets = std::move(block_offsets);
  out.block_sizes = std::move(block_sizes);
  return out;
}

double rewrite_coherence_closed_form(const LayeredProblem& problem) {
  const int k = problem.layers();
  double best = 0.0;
  for (int j = 0; j < k; ++j) {
    const double mu = mutual_coherence(problem.dictionaries[j]).absolute_max;
    best = std::max(best, (j + 1 < k) ? 0.5 * mu : mu);
    if (j >= 1) {
      const double entry = problem.dictionaries[j].matrix().cwiseAbs().maxCoeff();
      best = std::max(best, (j + 1 < k) ? 0.5 * entry : entry / std::sqrt(2.0));
    }
  }
  return best;
}

}  // namespace gsc
