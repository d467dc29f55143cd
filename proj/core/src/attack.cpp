#include "gsc/attack.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace gsc {

namespace {

struct ForwardTrace {
  std::vector<Eigen::VectorXd> pre_prox;  // v_t for t = 0..T-1
  Eigen::VectorXd final_code;
  bool converged = true;
};

ForwardTrace unrolled_forward(const Pipeline& p, const Eigen::VectorXd& x) {
  ForwardTrace trace;
  const SolveResult warm = solve_gbp(x, p.dictionary, p.spec, p.solve_opts);
  trace.converged = warm.converged;

  const Eigen::MatrixXd& d = p.dictionary.matrix();
  const double sig = p.dictionary.sigma_max();
  const double step = sig > 0.0 ? 1.0 / (sig * sig) : 1.0;

  Eigen::VectorXd gamma = warm.code.values();
  trace.pre_prox.reserve(p.unroll_iterations);
  for (int t = 0; t < p.unroll_iterations; ++t) {
    Eigen::VectorXd v = gamma - step * (d.transpose() * (d * gamma - x));
    gamma = prox_step(v, p.spec, step);
    trace.pre_prox.push_back(std::move(v));
  }
  trace.final_code = std::move(gamma);
  return trace;
}

// transpose-Jacobian application of the groupwise prox at pre-prox point v
Eigen::VectorXd prox_jacobian_apply(const Eigen::VectorXd& v, const Eigen::VectorXd& gbar,
                                    const RegularizerSpec& spec, double step) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
  const auto& part = spec.partition();
  for (int g = 0; g < part.n_groups(); ++g) {
    const auto& idx = part.group(g);
    const auto& norm = spec.norm(g);
    const double t = step * spec.weight(g);
    switch (norm.tag) {
      case NormTag::L1:
        for (int i : idx) out[i] = std::abs(v[i]) > t ? gbar[i] : 0.0;
        break;
      case NormTag::L2: {
        double sq = 0.0;
        for (int i : idx) sq += v[i] * v[i];
        const double nrm = std::sqrt(sq);
        if (nrm <= t) break;  // zeroed block: zero sub-Jacobian
        double dot = 0.0;
        for (int i : idx) dot += v[i] * gbar[i];
        const double a = 1.0 - t / nrm;
        const double b = t * dot / (nrm * nrm * nrm);
        for (int i : idx) out[i] = a * gbar[i] + b * v[i];
        break;
      }
      case NormTag::Elastic: {
        // p(v) = blockshrink(S(v)); J^T g = mask .* (J_blk(S(v)) g)
        const double t1 = t * norm.beta;
        const double t2 = t * (1.0 - norm.beta);
        double sq = 0.0;
        std::vector<double> w(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
          const double vi = v[idx[k]];
          w[k] = vi > t1 ? vi - t1 : (vi < -t1 ? vi + t1 : 0.0);
          sq += w[k] * w[k];
        }
        const double nrm = std::sqrt(sq);
        if (nrm <= t2) break;
        double dot = 0.0;
        for (std::size_t k = 0; k < idx.size(); ++k) dot += w[k] * gbar[idx[k]];
        const double a = 1.0 - t2 / nrm;
        const double b = t2 * dot / (nrm * nrm * nrm);
        for (std::size_t k = 0; k < idx.size(); ++k) {
          const int i = idx[k];
          const double blk = a * gbar[i] + b * w[k];
          out[i] = std::abs(v[i]) > t1 ? blk : 0.0;
        }
        break;
      }
    }
  }
  return out;
}

// gradient of the total loss w.r.t. the final code
Eigen::VectorXd loss_grad_wrt_code(const Pipeline& p, const Eigen::VectorXd& code, int label,
                                   double* loss_out) {
  Eigen::VectorXd feat = code;
  if (p.pooled) feat = pool_groups(code, p.spec.partition());
  const LossValue lv = classification_loss(p.classifier, feat, p.loss_label(label), p.loss);

  Eigen::VectorXd grad(code.size());
  if (p.pooled) {
    const auto& part = p.spec.partition();
    grad.setZero();
    for (int g = 0; g < part.n_groups(); ++g) {
      if (feat[g] <= 0.0) continue;  // zero-norm group: zero subgradient
      for (int idx : part.group(g)) grad[idx] = lv.grad_code[g] * code[idx] / feat[g];
    }
  } else {
    grad = lv.grad_code;
  }

  double total = lv.value;
  if (p.gap_weight != 0.0) {
    const GapValue gap = gap_regularizer({code}, p.spec.partition(), p.gap_threshold);
    total += p.gap_weight * gap.value;
    if (!gap.degenerate) grad += p.gap_weight * gap.grads[0];
  }
  if (loss_out) *loss_out = total;
  return grad;
}

}  // namespace

Prediction pipeline_predict(const Pipeline& p, const Eigen::VectorXd& x) {
  const SolveResult r = solve_gbp(x, p.dictionary, p.spec, p.solve_opts);
  Eigen::VectorXd feat = r.code.values();
  if (p.pooled) feat = pool_groups(feat, p.spec.partition());
  return predict_and_margin(p.classifier, feat);
}

double pipeline_loss(const Pipeline& p, const Eigen::VectorXd& x, int label) {
  const SolveResult r = solve_gbp(x, p.dictionary, p.spec, p.solve_opts);
  double loss = 0.0;
  loss_grad_wrt_code(p, r.code.values(), label, &loss);
  return loss;
}

InputGradient input_gradient(const Pipeline& p, const Eigen::VectorXd& x, int label) {
  const ForwardTrace trace = unrolled_forward(p, x);
  const Eigen::MatrixXd& d = p.dictionary.matrix();
  const Eigen::MatrixXd& gram = p.dictionary.gram();
  const double sig = p.dictionary.sigma_max();
  const double step = sig > 0.0 ? 1.0 / (sig * sig) : 1.0;

  Eigen::VectorXd gbar = loss_grad_wrt_code(p, trace.final_code, label, nullptr);
  Eigen::VectorXd xbar = Eigen::VectorXd::Zero(x.size());
  for (int t = static_cast<int>(trace.pre_prox.size()) - 1; t >= 0; --t) {
    const Eigen::VectorXd vbar = prox_jacobian_apply(trace.pre_prox[t], gbar, p.spec, step);
    xbar.noalias() += step * (d * vbar);
    gbar = vbar - step * (gram * vbar);
  }
  return {std::move(xbar), trace.converged};
}

Eigen::VectorXd ifgsm(const Pipeline& p, const Eigen::VectorXd& x, int label,
                      const AttackConfig& cfg) {
  if (cfg.steps < 1) throw InvalidInput("ifgsm: steps must be >= 1");
  if (!(cfg.clamp_low < cfg.clamp_high)) throw InvalidInput("ifgsm: empty clamp range");
  if (cfg.epsilon < 0.0) throw InvalidInput("ifgsm: negative budget");
  if (x.minCoeff() < cfg.clamp_low || x.maxCoeff() > cfg.clamp_high)
    throw InvalidInput("ifgsm: input lies outside the clamp range");
  if (cfg.epsilon == 0.0) return x;

  const double a = cfg.step_size();
  Eigen::VectorXd y = x;
  for (int t = 0; t < cfg.steps; ++t) {
    const InputGradient g = input_gradient(p, y, label);
    for (int i = 0; i < y.size(); ++i) {
      const double s = g.grad[i] > 0.0 ? 1.0 : (g.grad[i] < 0.0 ? -1.0 : 0.0);
      const double lo = std::max(x[i] - cfg.epsilon, cfg.clamp_low);
      const double hi = std::min(x[i] + cfg.epsilon, cfg.clamp_high);
      y[i] = std::clamp(y[i] + a * s, lo, hi);
    }
  }
  return y;
}

std::vector<SweepRow> attack_sweep(const Pipeline& craft, const SweepDataset& data,
                                   const std::vector<double>& epsilons, const AttackConfig& base,
                                   const std::string& method, std::uint64_t seed,
                                   const Predictor& evaluate, int jobs) {
  if (data.inputs.cols() != data.labels.size())
    throw InvalidInput("attack_sweep: labels do not match inputs");
  const int n = static_cast<int>(data.inputs.cols());
  const auto predict = [&](const Eigen::VectorXd& v) {
    return evaluate ? evaluate(v) : pipeline_predict(craft, v).label;
  };

  std::vector<SweepRow> rows;
  for (double eps : epsilons) {
    AttackConfig cfg = base;
    cfg.epsilon = eps;
    std::vector<char> correct(n, 0);
    const auto worker = [&](int begin, int end) {
      for (int i = begin; i < end; ++i) {
        const Eigen::VectorXd x = data.inputs.col(i);
        const Eigen::VectorXd y = eps == 0.0 ? x : ifgsm(craft, x, data.labels[i], cfg);
        correct[i] = predict(y) == data.labels[i] ? 1 : 0;
      }
    };
    const int threads = std::max(1, jobs);
    if (threads == 1 || n < 2 * threads) {
      worker(0, n);
    } else {
      std::vector<std::thread> pool;
      const int chunk = (n + threads - 1) / threads;
      for (int t = 0; t < threads; ++t) {
        const int b = t * chunk;
        const int e = std::min(n, b + chunk);
        if (b < e) pool.emplace_back(worker, b, e);
      }
      for (auto& th : pool) th.join();
    }
    int hits = 0;
    for (char c : correct) hits += c;
    rows.push_back({method, eps, n > 0 ? static_cast<double>(hits) / n : 0.0, n, seed});
  }
  return rows;
}

}  // namespace gsc
