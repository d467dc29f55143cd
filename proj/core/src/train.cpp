#include "gsc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "gsc/errors.hpp"
#include "gsc/matrix_io.hpp"
#include "gsc/rng.hpp"

namespace gsc {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;

double phi(double z) { return z >= 0.0 ? z + 1.0 : std::exp(z); }
double phi_prime(double z) { return z >= 0.0 ? 1.0 : std::exp(z); }

std::vector<int> permutation(int n, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.uniform_index(static_cast<std::uint64_t>(i) + 1)]);
  }
  return idx;
}

}  // namespace

Layer Layer::affine(int in, int out, Rng& rng) {
  Layer l;
  l.kind = LayerKind::Affine;
  l.in_dim = in;
  l.out_dim = out;
  l.w = rng.normal_matrix(out, in) * std::sqrt(2.0 / (in + out));
  l.b = Eigen::VectorXd::Zero(out);
  return l;
}

Layer Layer::batch_norm(int dim) {
  Layer l;
  l.kind = LayerKind::BatchNorm;
  l.in_dim = dim;
  l.out_dim = dim;
  l.bn_gamma = Eigen::VectorXd::Ones(dim);
  l.bn_beta = Eigen::VectorXd::Zero(dim);
  l.bn_run_mean = Eigen::VectorXd::Zero(dim);
  l.bn_run_var = Eigen::VectorXd::Ones(dim);
  return l;
}

Layer Layer::relu(int dim) {
  Layer l;
  l.kind = LayerKind::Relu;
  l.in_dim = dim;
  l.out_dim = dim;
  return l;
}

Layer Layer::linear_attention(int tokens, int token_dim, int units, Rng& rng) {
  Layer l;
  l.kind = LayerKind::LinearAttention;
  l.tokens = tokens;
  l.token_dim = token_dim;
  l.units = units;
  l.in_dim = tokens * token_dim;
  l.out_dim = tokens * units;
  const double scale = 1.0 / std::sqrt(static_cast<double>(token_dim));
  l.wq = rng.normal_matrix(units, token_dim) * scale;
  l.wk = rng.normal_matrix(units, token_dim) * scale;
  l.wv = rng.normal_matrix(units, token_dim) * scale;
  return l;
}

Layer Layer::softmax(int dim) {
  Layer l;
  l.kind = LayerKind::Softmax;
  l.in_dim = dim;
  l.out_dim = dim;
  return l;
}

namespace {

// attention forward for one sample; caches everything the backward needs
Eigen::VectorXd attention_forward_sample(const Layer& l, const Eigen::VectorXd& x,
                                         LayerTape* tape, int sample) {
  const Eigen::Map<const Eigen::MatrixXd> tok(x.data(), l.token_dim, l.tokens);
  Eigen::MatrixXd q = l.wq * tok;  // units x tokens
  Eigen::MatrixXd k = l.wk * tok;
  Eigen::MatrixXd v = l.wv * tok;
  Eigen::MatrixXd pq = q.unaryExpr([](double z) { return phi(z); });
  Eigen::MatrixXd pk = k.unaryExpr([](double z) { return phi(z); });

  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(l.units, l.units);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(l.units);
  for (int t = 0; t < l.tokens; ++t) {
    s.noalias() += v.col(t) * pk.col(t).transpose();
    z += pk.col(t);
  }
  Eigen::VectorXd out(l.out_dim);
  Eigen::VectorXd denom(l.tokens);
  for (int t = 0; t < l.tokens; ++t) {
    denom[t] = z.dot(pq.col(t));
    out.segment(t * l.units, l.units) = (s * pq.col(t)) / denom[t];
  }
  if (tape) {
    tape->phi_q[sample] = std::move(pq);
    tape->phi_k[sample] = std::move(pk);
    tape->values[sample] = std::move(v);
    tape->s_matrix[sample] = std::move(s);
    tape->z_vector[sample] = std::move(z);
    tape->denom[sample] = std::move(denom);
    tape->q_raw[sample] = std::move(q);
    tape->k_raw[sample] = std::move(k);
  }
  return out;
}

Eigen::MatrixXd layer_forward_inference(const Layer& l, const Eigen::MatrixXd& x) {
  switch (l.kind) {
    case LayerKind::Affine:
      return (l.w * x).colwise() + l.b;
    case LayerKind::Relu:
      return x.cwiseMax(0.0);
    case LayerKind::BatchNorm: {
      Eigen::MatrixXd out = x.colwise() - l.bn_run_mean;
      const Eigen::VectorXd inv = (l.bn_run_var.array() + kBnEps).sqrt().inverse();
      for (int c = 0; c < out.cols(); ++c)
        out.col(c) = l.bn_gamma.cwiseProduct(out.col(c).cwiseProduct(inv)) + l.bn_beta;
      return out;
    }
    case LayerKind::Softmax: {
      Eigen::MatrixXd out(x.rows(), x.cols());
      for (int c = 0; c < x.cols(); ++c) {
        Eigen::VectorXd e = (x.col(c).array() - x.col(c).maxCoeff()).exp();
        out.col(c) = e / e.sum();
      }
      return out;
    }
    case LayerKind::LinearAttention: {
      Eigen::MatrixXd out(l.out_dim, x.cols());
      for (int c = 0; c < x.cols(); ++c)
        out.col(c) = attention_forward_sample(l, x.col(c), nullptr, 0);
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace

Eigen::MatrixXd layer_forward_train(Layer& layer, const Eigen::MatrixXd& x, LayerTape& tape) {
  tape.input = x;
  switch (layer.kind) {
    case LayerKind::Affine:
      return (layer.w * x).colwise() + layer.b;
    case LayerKind::Relu:
      return x.cwiseMax(0.0);
    case LayerKind::BatchNorm: {
      const int batch = static_cast<int>(x.cols());
      tape.batch_mean = x.rowwise().mean();
      Eigen::MatrixXd centered = x.colwise() - tape.batch_mean;
      Eigen::VectorXd var = centered.array().square().rowwise().mean();
      tape.batch_inv_std = (var.array() + kBnEps).sqrt().inverse();
      tape.normalized = centered.array().colwise() * tape.batch_inv_std.array();
      layer.bn_run_mean = kBnMomentum * layer.bn_run_mean + (1.0 - kBnMomentum) * tape.batch_mean;
      layer.bn_run_var = kBnMomentum * layer.bn_run_var + (1.0 - kBnMomentum) * var;
      Eigen::MatrixXd out = tape.normalized.array().colwise() * layer.bn_gamma.array();
      out.colwise() += layer.bn_beta;
      (void)batch;
      return out;
    }
    case LayerKind::Softmax: {
      tape.output = layer_forward_inference(layer, x);
      return tape.output;
    }
    case LayerKind::LinearAttention: {
      const int batch = static_cast<int>(x.cols());
      tape.phi_q.resize(batch);
      tape.phi_k.resize(batch);
      tape.values.resize(batch);
      tape.s_matrix.resize(batch);
      tape.z_vector.resize(batch);
      tape.denom.resize(batch);
      tape.q_raw.resize(batch);
      tape.k_raw.resize(batch);
      Eigen::MatrixXd out(layer.out_dim, batch);
      for (int c = 0; c < batch; ++c)
        out.col(c) = attention_forward_sample(layer, x.col(c), &tape, c);
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

Eigen::MatrixXd layer_backward(Layer& layer, const Eigen::MatrixXd& grad_out,
                               const LayerTape& tape, Eigen::MatrixXd* grad_w,
                               Eigen::VectorXd* grad_b, Eigen::MatrixXd* grad_wq,
                               Eigen::MatrixXd* grad_wk, Eigen::MatrixXd* grad_wv) {
  switch (layer.kind) {
    case LayerKind::Affine: {
      if (grad_w) *grad_w = grad_out * tape.input.transpose();
      if (grad_b) *grad_b = grad_out.rowwise().sum();
      return layer.w.transpose() * grad_out;
    }
    case LayerKind::Relu:
      return (tape.input.array() > 0.0).select(grad_out, 0.0);
    case LayerKind::BatchNorm: {
      const double batch = static_cast<double>(grad_out.cols());
      Eigen::MatrixXd dxhat = grad_out.array().colwise() * layer.bn_gamma.array();
      if (grad_w) {  // packs gamma gradients in a one-column matrix
        *grad_w = (grad_out.array() * tape.normalized.array()).rowwise().sum();
      }
      if (grad_b) *grad_b = grad_out.rowwise().sum();
      const Eigen::VectorXd mean_dxhat = dxhat.rowwise().mean();
      const Eigen::VectorXd mean_dxhat_xhat =
          (dxhat.array() * tape.normalized.array()).rowwise().mean();
      Eigen::MatrixXd dx =
          dxhat.colwise() - mean_dxhat -
          (tape.normalized.array().colwise() * mean_dxhat_xhat.array()).matrix();
      (void)batch;
      return dx.array().colwise() * tape.batch_inv_std.array();
    }
    case LayerKind::Softmax: {
      Eigen::MatrixXd dx(grad_out.rows(), grad_out.cols());
      for (int c = 0; c < grad_out.cols(); ++c) {
        const auto& y = tape.output.col(c);
        dx.col(c) = y.cwiseProduct(grad_out.col(c) -
                                   Eigen::VectorXd::Constant(y.size(), y.dot(grad_out.col(c))));
      }
      return dx;
    }
    case LayerKind::LinearAttention: {
      const int batch = static_cast<int>(grad_out.cols());
      Eigen::MatrixXd dx(layer.in_dim, batch);
      if (grad_wq) grad_wq->setZero(layer.units, layer.token_dim);
      if (grad_wk) grad_wk->setZero(layer.units, layer.token_dim);
      if (grad_wv) grad_wv->setZero(layer.units, layer.token_dim);
      for (int c = 0; c < batch; ++c) {
        const auto& pq = tape.phi_q[c];
        const auto& pk = tape.phi_k[c];
        const auto& v = tape.values[c];
        const auto& s = tape.s_matrix[c];
        const auto& z = tape.z_vector[c];
        const auto& denom = tape.denom[c];
        const Eigen::Map<const Eigen::MatrixXd> tok(tape.input.col(c).data(), layer.token_dim,
                                                    layer.tokens);

        Eigen::MatrixXd d_s = Eigen::MatrixXd::Zero(layer.units, layer.units);
        Eigen::VectorXd d_z = Eigen::VectorXd::Zero(layer.units);
        Eigen::MatrixXd d_pq(layer.units, layer.tokens);
        for (int t = 0; t < layer.tokens; ++t) {
          const Eigen::VectorXd g = grad_out.col(c).segment(t * layer.units, layer.units);
          const Eigen::VectorXd g_over_d = g / denom[t];
          const double d_denom = -(s * pq.col(t)).dot(g) / (denom[t] * denom[t]);
          d_pq.col(t) = s.transpose() * g_over_d + d_denom * z;
          d_s.noalias() += g_over_d * pq.col(t).transpose();
          d_z += d_denom * pq.col(t);
        }
        Eigen::MatrixXd d_q = d_pq.cwiseProduct(
            tape.q_raw[c].unaryExpr([](double u) { return phi_prime(u); }));
        Eigen::MatrixXd d_v = d_s * pk;  // column t: dL/dv_t
        Eigen::MatrixXd d_pk = d_s.transpose() * v;
        d_pk.colwise() += d_z;
        Eigen::MatrixXd d_k =
            d_pk.cwiseProduct(tape.k_raw[c].unaryExpr([](double u) { return phi_prime(u); }));

        if (grad_wq) grad_wq->noalias() += d_q * tok.transpose();
        if (grad_wk) grad_wk->noalias() += d_k * tok.transpose();
        if (grad_wv) grad_wv->noalias() += d_v * tok.transpose();

        Eigen::MatrixXd d_tok = layer.wq.transpose() * d_q + layer.wk.transpose() * d_k +
                                layer.wv.transpose() * d_v;
        dx.col(c) = Eigen::Map<Eigen::VectorXd>(d_tok.data(), layer.in_dim);
      }
      return dx;
    }
  }
  throw std::logic_error("unreachable");
}

int FeedforwardModel::trunk_dim() const {
  return head_start > 0 ? layers[head_start - 1].out_dim
                        : (layers.empty() ? 0 : layers.back().out_dim);
}

Eigen::MatrixXd forward_batch(const FeedforwardModel& model, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd cur = x;
  for (const auto& l : model.layers) cur = layer_forward_inference(l, cur);
  return cur;
}

Eigen::VectorXd forward(const FeedforwardModel& model, const Eigen::VectorXd& x) {
  return forward_batch(model, x);
}

Eigen::MatrixXd trunk_output_batch(const FeedforwardModel& model, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd cur = x;
  for (int i = 0; i < model.head_start; ++i) cur = layer_forward_inference(model.layers[i], cur);
  return cur;
}

Eigen::VectorXd trunk_output(const FeedforwardModel& model, const Eigen::VectorXd& x) {
  return trunk_output_batch(model, x);
}

FeedforwardModel make_synthetic_model(const std::string& tag, int input_dim, int n_groups,
                                      std::uint64_t seed) {
  Rng rng(seed);
  FeedforwardModel m;
  m.tag = tag;
  if (tag == "DenseShallow") {
    m.layers.push_back(Layer::affine(input_dim, n_groups, rng));
    m.layers.push_back(Layer::batch_norm(n_groups));
    m.layers.push_back(Layer::relu(n_groups));
  } else if (tag == "DenseDeep") {
    int cur = input_dim;
    for (int width : {96, 92, 89, 85, 82, 78}) {
      m.layers.push_back(Layer::affine(cur, width, rng));
      m.layers.push_back(Layer::relu(width));
      cur = width;
    }
    m.layers.push_back(Layer::affine(cur, n_groups, rng));
    m.layers.push_back(Layer::batch_norm(n_groups));
    m.layers.push_back(Layer::relu(n_groups));
  } else if (tag == "LinearTransformer") {
    const int token_dim = 4;  // the synthetic group size
    if (input_dim % token_dim != 0)
      throw InvalidInput("transformer: input is not divisible into 4-wide tokens");
    const int tokens = input_dim / token_dim;
    m.layers.push_back(Layer::linear_attention(tokens, token_dim, 100, rng));
    m.layers.push_back(Layer::affine(tokens * 100, n_groups, rng));
    m.layers.push_back(Layer::batch_norm(n_groups));
    m.layers.push_back(Layer::relu(n_groups));
  } else {
    throw InvalidInput("unknown architecture tag: " + tag);
  }
  m.head_start = static_cast<int>(m.layers.size());
  m.layers.push_back(Layer::affine(n_groups, 1, rng));
  return m;
}

FeedforwardModel make_mnist_model(const std::string& tag, std::uint64_t seed) {
  Rng rng(seed);
  FeedforwardModel m;
  m.tag = tag;
  const int input_dim = 784;
  if (tag == "DenseShallow") {
    m.layers.push_back(Layer::affine(input_dim, 32, rng));
    m.layers.push_back(Layer::relu(32));
  } else if (tag == "DenseDeep") {
    int cur = input_dim;
    for (int width : {676, 569, 461, 354, 246, 139}) {
      m.layers.push_back(Layer::affine(cur, width, rng));
      m.layers.push_back(Layer::relu(width));
      cur = width;
    }
    m.layers.push_back(Layer::affine(cur, 32, rng));
    m.layers.push_back(Layer::relu(32));
  } else if (tag == "LinearTransformer") {
    const int token_dim = 28;  // one image row per token
    const int tokens = 28;
    m.layers.push_back(Layer::linear_attention(tokens, token_dim, 784, rng));
    m.layers.push_back(Layer::batch_norm(tokens * 784));
    m.layers.push_back(Layer::affine(tokens * 784, 32, rng));
    m.layers.push_back(Layer::relu(32));
  } else {
    throw InvalidInput("unknown architecture tag: " + tag);
  }
  m.head_start = static_cast<int>(m.layers.size());
  m.layers.push_back(Layer::affine(32, 10, rng));
  m.layers.push_back(Layer::softmax(10));
  return m;
}

void set_head(FeedforwardModel& model, const LinearClassifier& clf) {
  for (int i = model.head_start; i < static_cast<int>(model.layers.size()); ++i) {
    Layer& l = model.layers[i];
    if (l.kind == LayerKind::Affine) {
      if (l.in_dim != clf.dim() || l.out_dim != clf.n_outputs())
        throw InvalidInput("set_head: classifier shape does not match the head");
      l.w = clf.weights;
      l.b = clf.bias;
      return;
    }
  }
  throw InvalidInput("set_head: model has no affine head layer");
}

namespace {

struct Split {
  std::vector<int> train, val;
};

Split split_train_val(int n, double val_fraction, Rng& rng) {
  Split s;
  std::vector<int> idx = permutation(n, rng);
  int n_val = static_cast<int>(std::floor(val_fraction * n));
  n_val = std::max(1, std::min(n_val, n - 1));
  s.val.assign(idx.begin(), idx.begin() + n_val);
  s.train.assign(idx.begin() + n_val, idx.end());
  return s;
}

}  // namespace

FeedforwardModel train_feedforward_approximator(const Eigen::MatrixXd& inputs,
                                                const Eigen::MatrixXd& targets,
                                                FeedforwardModel model, const TrainConfig& config,
                                                TrainLog* log) {
  if (inputs.cols() != targets.cols()) throw InvalidInput("train: inputs/targets mismatch");
  if (targets.rows() != model.trunk_dim())
    throw InvalidInput("train: target dimension does not match the trunk");
  if (config.early_stop_patience < 1 || config.gamma_warmup_epochs > config.epochs_max)
    throw InvalidInput("train: bad config");
  Rng rng(config.seed);
  const Split split = split_train_val(static_cast<int>(inputs.cols()), config.val_fraction, rng);

  Eigen::MatrixXd val_in(inputs.rows(), split.val.size());
  Eigen::MatrixXd val_t(targets.rows(), split.val.size());
  for (std::size_t i = 0; i < split.val.size(); ++i) {
    val_in.col(i) = inputs.col(split.val[i]);
    val_t.col(i) = targets.col(split.val[i]);
  }

  std::vector<Layer> best_layers = model.layers;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int last_finite = -1;

  std::vector<int> order(split.train);
  const int n_trunk = model.head_start;
  for (int epoch = 0; epoch < config.epochs_max; ++epoch) {
    // deterministic reshuffle per epoch from the single seed stream
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_index(static_cast<std::uint64_t>(i) + 1)]);

    double epoch_loss = 0.0;
    int n_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const int bs = static_cast<int>(
          std::min<std::size_t>(config.batch_size, order.size() - start));
      Eigen::MatrixXd xb(inputs.rows(), bs);
      Eigen::MatrixXd tb(targets.rows(), bs);
      for (int i = 0; i < bs; ++i) {
        xb.col(i) = inputs.col(order[start + i]);
        tb.col(i) = targets.col(order[start + i]);
      }
      std::vector<LayerTape> tapes(n_trunk);
      Eigen::MatrixXd cur = xb;
      for (int li = 0; li < n_trunk; ++li)
        cur = layer_forward_train(model.layers[li], cur, tapes[li]);

      const Eigen::MatrixXd diff = cur - tb;
      const double loss = 0.5 * diff.squaredNorm() / bs;
      epoch_loss += loss;
      ++n_batches;
      if (!std::isfinite(loss) || loss > 1e6)
        throw TrainingDiverged("feedforward training diverged", last_finite);

      Eigen::MatrixXd grad = diff / bs;
      for (int li = n_trunk - 1; li >= 0; --li) {
        Layer& l = model.layers[li];
        Eigen::MatrixXd gw, gwq, gwk, gwv;
        Eigen::VectorXd gb;
        grad = layer_backward(l, grad, tapes[li], &gw, &gb, &gwq, &gwk, &gwv);
        const double lr = config.learning_rate;
        switch (l.kind) {
          case LayerKind::Affine:
            l.w -= lr * gw;
            l.b -= lr * gb;
            break;
          case LayerKind::BatchNorm:
            l.bn_gamma -= lr * Eigen::VectorXd(gw.col(0));
            l.bn_beta -= lr * gb;
            break;
          case LayerKind::LinearAttention:
            l.wq -= lr * gwq;
            l.wk -= lr * gwk;
            l.wv -= lr * gwv;
            break;
          default:
            break;
        }
      }
    }
    last_finite = epoch;

    const Eigen::MatrixXd val_out = trunk_output_batch(model, val_in);
    const double val_mse = (val_out - val_t).squaredNorm() / (2.0 * val_in.cols());
    if (log) log->push_back({epoch, epoch_loss / std::max(1, n_batches), val_mse});

    if (val_mse <= best_val) {  // prefer the most recent among equal-best
      const bool strict = val_mse < best_val;
      best_val = val_mse;
      best_layers = model.layers;
      if (strict) since_best = 0;
      else ++since_best;
      if (since_best >= config.early_stop_patience) break;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  model.layers = std::move(best_layers);
  return model;
}

LinearClassifier train_classifier(const Eigen::MatrixXd& codes, const Eigen::VectorXi& labels,
                                  int n_classes, const GroupPartition& partition,
                                  const TrainConfig& config, TrainLog* log) {
  if (codes.cols() != labels.size()) throw InvalidInput("train_classifier: label count mismatch");
  if (n_classes < 2) throw InvalidInput("train_classifier: need at least two classes");
  const bool hinge = config.loss == LossKind::Hinge;
  if (hinge && n_classes != 2)
    throw InvalidInput("train_classifier: hinge requires the binary case");
  for (int i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw InvalidInput("train_classifier: label out of range");
  }

  Rng rng(config.seed);
  const int dim = static_cast<int>(codes.rows());
  LinearClassifier clf;
  clf.weights = rng.normal_matrix(hinge ? 1 : n_classes, dim) * 0.01;
  clf.bias = Eigen::VectorXd::Zero(hinge ? 1 : n_classes);

  const Split split = split_train_val(static_cast<int>(codes.cols()), config.val_fraction, rng);
  LinearClassifier best = clf;
  double best_acc = -1.0;
  int since_best = 0;
  int last_finite = -1;

  std::vector<int> order(split.train);
  for (int epoch = 0; epoch < config.epochs_max; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_index(static_cast<std::uint64_t>(i) + 1)]);

    double epoch_loss = 0.0;
    int count = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const int bs = static_cast<int>(
          std::min<std::size_t>(config.batch_size, order.size() - start));
      Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(clf.weights.rows(), dim);
      Eigen::VectorXd gb = Eigen::VectorXd::Zero(clf.weights.rows());
      std::vector<Eigen::VectorXd> batch_codes;
      batch_codes.reserve(bs);
      for (int i = 0; i < bs; ++i) {
        const int idx = order[start + i];
        const Eigen::VectorXd code = codes.col(idx);
        batch_codes.push_back(code);
        if (hinge) {
          const int y = labels[idx] > 0 ? 1 : -1;
          const double f = clf.weights.row(0).dot(code) + clf.bias[0];
          const double margin = 1.0 - y * f;
          if (margin > 0.0) {
            epoch_loss += margin;
            gw.row(0) -= y * code.transpose();
            gb[0] -= y;
          }
        } else {
          Eigen::VectorXd f = clf.weights * code + clf.bias;
          Eigen::VectorXd p = (f.array() - f.maxCoeff()).exp();
          p /= p.sum();
          epoch_loss += -std::log(std::max(p[labels[idx]], 1e-300));
          p[labels[idx]] -= 1.0;
          gw += p * code.transpose();
          gb += p;
        }
        ++count;
      }
      // the gap term depends only on the (fixed) codes; it enters the
      // reported loss but not the parameter gradient
      if (config.gap_weight != 0.0) {
        const GapValue gap = gap_regularizer(batch_codes, partition, config.gap_threshold);
        epoch_loss += config.gap_weight * gap.value * bs;
      }
      clf.weights -= (config.learning_rate / bs) * gw;
      clf.bias -= (config.learning_rate / bs) * gb;
    }
    if (!std::isfinite(epoch_loss))
      throw TrainingDiverged("classifier training diverged", last_finite);
    last_finite = epoch;

    int hits = 0;
    for (int vi : split.val) {
      const Prediction p = predict_and_margin(clf, codes.col(vi));
      const int want = hinge ? (labels[vi] > 0 ? 1 : 0) : labels[vi];
      hits += p.label == want ? 1 : 0;
    }
    const double acc = static_cast<double>(hits) / static_cast<double>(split.val.size());
    if (log) log->push_back({epoch, epoch_loss / std::max(1, count), acc});

    if (acc > best_acc) {
      best_acc = acc;
      best = clf;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  return best;
}

Dictionary pretrain_dictionary(const Eigen::MatrixXd& samples, const RegularizerSpec& spec,
                               const TrainConfig& config, TrainLog* log) {
  if (samples.cols() < 2) throw InvalidInput("pretrain: need at least two samples");
  const int n = static_cast<int>(samples.rows());
  const int m = spec.partition().n_indices();
  Rng rng(config.seed);

  Eigen::MatrixXd atoms = rng.normal_matrix(n, m);
  for (int j = 0; j < m; ++j) atoms.col(j).normalize();

  const Split split = split_train_val(static_cast<int>(samples.cols()), config.val_fraction, rng);
  SolveOptions sopts;
  sopts.max_iter = 2000;

  Eigen::MatrixXd best_atoms = atoms;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < config.epochs_max; ++epoch) {
    const double ramp = warmup_scale(epoch, config.gamma_warmup_epochs);
    const RegularizerSpec eff = spec.scaled_weights(ramp);
    Dictionary dict = Dictionary::from_matrix(atoms);

    Eigen::MatrixXd codes(m, split.train.size());
    bool any_nonzero = false;
    for (std::size_t i = 0; i < split.train.size(); ++i) {
      codes.col(i) = solve_gbp(samples.col(split.train[i]), dict, eff, sopts).code.values();
      any_nonzero = any_nonzero || codes.col(i).squaredNorm() > 0.0;
    }
    if (!any_nonzero) {
      throw DeadDictionaryError("every code was zero at epoch " + std::to_string(epoch) +
                                " (weight ramp " + std::to_string(ramp) + ")");
    }

    // least squares on the used atoms, unused atoms stay put
    std::vector<int> used;
    for (int j = 0; j < m; ++j) {
      if (codes.row(j).cwiseAbs().maxCoeff() > 0.0) used.push_back(j);
    }
    Eigen::MatrixXd cu(used.size(), codes.cols());
    for (std::size_t k = 0; k < used.size(); ++k) cu.row(k) = codes.row(used[k]);
    Eigen::MatrixXd xt(n, split.train.size());
    for (std::size_t i = 0; i < split.train.size(); ++i) xt.col(i) = samples.col(split.train[i]);
    Eigen::MatrixXd gram = cu * cu.transpose();
    gram.diagonal().array() += 1e-10 * std::max(1.0, gram.trace());
    const Eigen::MatrixXd du = (gram.ldlt().solve(cu * xt.transpose())).transpose();
    for (std::size_t k = 0; k < used.size(); ++k) {
      const double nrm = du.col(k).norm();
      if (nrm > 1e-12) atoms.col(used[k]) = du.col(k) / nrm;
    }

    // validation reconstruction loss at the updated dictionary
    Dictionary updated = Dictionary::from_matrix(atoms);
    double train_loss = 0.0;
    for (std::size_t i = 0; i < split.train.size(); ++i) {
      train_loss +=
          (xt.col(i) - updated.matrix() * codes.col(i)).squaredNorm() / split.train.size();
    }
    double val_loss = 0.0;
    for (int vi : split.val) {
      const auto r = solve_gbp(samples.col(vi), updated, eff, sopts);
      val_loss += (samples.col(vi) - updated.matrix() * r.code.values()).squaredNorm() /
                  split.val.size();
    }
    if (log) log->push_back({epoch, train_loss, val_loss});

    if (epoch + 1 >= config.gamma_warmup_epochs) {  // compare like with like
      if (val_loss < best_val) {
        best_val = val_loss;
        best_atoms = atoms;
        since_best = 0;
      } else if (++since_best >= config.early_stop_patience) {
        break;
      }
    }
  }
  return Dictionary::from_matrix(best_atoms);
}

namespace {

void write_mat(std::ostream& os, const Eigen::MatrixXd& m) {
  const std::uint32_t r = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t c = static_cast<std::uint32_t>(m.cols());
  os.write(reinterpret_cast<const char*>(&r), 4);
  os.write(reinterpret_cast<const char*>(&c), 4);
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Eigen::MatrixXd read_mat(std::istream& is) {
  std::uint32_t r = 0, c = 0;
  is.read(reinterpret_cast<char*>(&r), 4);
  is.read(reinterpret_cast<char*>(&c), 4);
  if (!is) throw FormatError("truncated model container", 0);
  Eigen::MatrixXd m(r, c);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!is) throw FormatError("truncated model matrix", 0);
  return m;
}

}  // namespace

void save_model(const std::string& path, const FeedforwardModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path, 0);
  os.write("GBPN", 4);
  const std::uint32_t tag_len = static_cast<std::uint32_t>(model.tag.size());
  os.write(reinterpret_cast<const char*>(&tag_len), 4);
  os.write(model.tag.data(), tag_len);
  const std::uint32_t head = static_cast<std::uint32_t>(model.head_start);
  const std::uint32_t n_layers = static_cast<std::uint32_t>(model.layers.size());
  os.write(reinterpret_cast<const char*>(&head), 4);
  os.write(reinterpret_cast<const char*>(&n_layers), 4);
  for (const auto& l : model.layers) {
    const std::uint32_t meta[6] = {static_cast<std::uint32_t>(l.kind),
                                   static_cast<std::uint32_t>(l.in_dim),
                                   static_cast<std::uint32_t>(l.out_dim),
                                   static_cast<std::uint32_t>(l.tokens),
                                   static_cast<std::uint32_t>(l.token_dim),
                                   static_cast<std::uint32_t>(l.units)};
    os.write(reinterpret_cast<const char*>(meta), sizeof(meta));
    write_mat(os, l.w);
    write_mat(os, l.b);
    write_mat(os, l.bn_gamma);
    write_mat(os, l.bn_beta);
    write_mat(os, l.bn_run_mean);
    write_mat(os, l.bn_run_var);
    write_mat(os, l.wq);
    write_mat(os, l.wk);
    write_mat(os, l.wv);
  }
}

FeedforwardModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path, 0);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "GBPN", 4) != 0) throw FormatError("bad model magic", 0);
  std::uint32_t tag_len = 0;
  is.read(reinterpret_cast<char*>(&tag_len), 4);
  FeedforwardModel m;
  m.tag.resize(tag_len);
  is.read(m.tag.data(), tag_len);
  std::uint32_t head = 0, n_layers = 0;
  is.read(reinterpret_cast<char*>(&head), 4);
  is.read(reinterpret_cast<char*>(&n_layers), 4);
  if (!is) throw FormatError("truncated model header", 4);
  m.head_start = static_cast<int>(head);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    std::uint32_t meta[6];
    is.read(reinterpret_cast<char*>(meta), sizeof(meta));
    if (!is) throw FormatError("truncated layer header", 0);
    Layer l;
    l.kind = static_cast<LayerKind>(meta[0]);
    l.in_dim = static_cast<int>(meta[1]);
    l.out_dim = static_cast<int>(meta[2]);
    l.tokens = static_cast<int>(meta[3]);
    l.token_dim = static_cast<int>(meta[4]);
    l.units = static_cast<int>(meta[5]);
    l.w = read_mat(is);
    l.b = read_mat(is);
    l.bn_gamma = read_mat(is);
    l.bn_beta = read_mat(is);
    l.bn_run_mean = read_mat(is);
    l.bn_run_var = read_mat(is);
    l.wq = read_mat(is);
    l.wk = read_mat(is);
    l.wv = read_mat(is);
    m.layers.push_back(std::move(l));
  }
  return m;
}

void write_train_log_csv(const std::string& path, const TrainLog& log) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open for writing: " + path, 0);
  os << "epoch,train_loss,val_metric\n";
  for (const auto& rec : log) {
    os << rec.epoch << ',' << format_double(rec.train_loss) << ','
       << format_double(rec.val_metric) << '\n';
  }
}

}  // namespace gsc
