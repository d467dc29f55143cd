// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Run a single criterion with `acceptance --only N`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "gsc/attack.hpp"
#include "gsc/data.hpp"
#include "gsc/experiment.hpp"
#include "gsc/rng.hpp"
#include "gsc/solver.hpp"
#include "gsc/stability.hpp"
#include "gsc/train.hpp"
#include "test_util.hpp"

using namespace gsc;

namespace {

// ------------------------------------------------------------- criterion 1

double closed_form_l1(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

double elastic_residual(const Eigen::VectorXd& u, const Eigen::VectorXd& v, double t,
                        double beta) {
  const Eigen::VectorXd r = v - u;
  const double tb = t * beta;
  const double t2 = t * (1.0 - beta);
  const double nrm = u.norm();
  double dist_sq = 0.0;
  if (nrm > 0.0) {
    for (int i = 0; i < u.size(); ++i) {
      const double ray = t2 * u[i] / nrm;
      if (u[i] != 0.0) {
        const double d = r[i] - tb * (u[i] > 0 ? 1.0 : -1.0) - ray;
        dist_sq += d * d;
      } else {
        const double d = std::max(0.0, std::abs(r[i]) - tb);
        dist_sq += d * d;
      }
    }
  } else {
    double sq = 0.0;
    for (int i = 0; i < r.size(); ++i) {
      const double s = closed_form_l1(r[i], tb);
      sq += s * s;
    }
    dist_sq = std::pow(std::max(0.0, std::sqrt(sq) - t2), 2);
  }
  return std::sqrt(dist_sq);
}

bool criterion_prox_oracle(std::string& detail) {
  Rng rng(101);
  double worst_l1 = 0.0, worst_l2 = 0.0, worst_elastic = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int sz = 1 + static_cast<int>(rng.uniform_index(6));
    const double gamma = rng.uniform(0.05, 2.0);
    const double step = rng.uniform(0.05, 2.0);
    const double t = gamma * step;
    const Eigen::VectorXd v = 3.0 * rng.normal_vector(sz);
    const GroupPartition part = GroupPartition::contiguous(sz, sz);

    // l1: elementwise soft threshold
    {
      auto spec = RegularizerSpec::uniform(part, GroupNorm::l1(), gamma);
      const Eigen::VectorXd got = prox_step(v, spec, step);
      for (int i = 0; i < sz; ++i) {
        worst_l1 = std::max(worst_l1, std::abs(got[i] - closed_form_l1(v[i], t)));
      }
    }
    // l2: block soft threshold
    {
      auto spec = RegularizerSpec::uniform(part, GroupNorm::l2(), gamma);
      const Eigen::VectorXd got = prox_step(v, spec, step);
      const double scale = v.norm() > t ? 1.0 - t / v.norm() : 0.0;
      worst_l2 = std::max(worst_l2, (got - scale * v).lpNorm<Eigen::Infinity>());
    }
    // elastic: subgradient optimality of the composed prox
    {
      const double beta = rng.uniform(0.05, 0.95);
      auto spec = RegularizerSpec::uniform(part, GroupNorm::elastic(beta), gamma);
      worst_elastic = std::max(worst_elastic, elastic_residual(prox_step(v, spec, step), v, t,
                                                               beta));
    }
  }
  std::ostringstream os;
  os << "l1 err " << worst_l1 << ", l2 err " << worst_l2 << ", elastic residual "
     << worst_elastic;
  detail = os.str();
  return worst_l1 < 1e-10 && worst_l2 < 1e-10 && worst_elastic < 1e-8;
}

// ------------------------------------------------------------- criterion 2

bool criterion_lasso_oracle(std::string& detail) {
  Rng rng(202);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    auto dict = test::random_unit_dictionary(20, 40, rng);
    const double gamma = rng.uniform(0.05, 0.5);
    auto spec = RegularizerSpec::uniform(GroupPartition::singletons(40), GroupNorm::l1(), gamma);
    Eigen::VectorXd truth = Eigen::VectorXd::Zero(40);
    for (int s : rng.sample_without_replacement(40, 5)) truth[s] = rng.uniform(0.5, 2.0);
    const Eigen::VectorXd x = dict.matrix() * truth + 0.05 * rng.normal_vector(20);
    const Eigen::VectorXd oracle = test::lasso_coordinate_descent(x, dict.matrix(), gamma);
    SolveOptions opts;
    opts.max_iter = 50000;
    opts.residual_tol = 1e-9 * (1.0 + x.norm());
    const SolveResult r = solve_gbp(x, dict, spec, opts);
    worst = std::max(worst, (r.code.values() - oracle).lpNorm<Eigen::Infinity>());
  }
  std::ostringstream osd;
  osd << "max linf gap vs coordinate descent " << worst;
  detail = osd.str();
  return worst < 1e-6;
}

// ------------------------------------------------------------- criterion 3

std::vector<GroupNorm> mixed_tags(int n_groups, Rng& rng, bool with_elastic) {
  std::vector<GroupNorm> norms;
  for (int g = 0; g < n_groups; ++g) {
    const double pick = rng.uniform();
    if (with_elastic && pick < 0.3) norms.push_back(GroupNorm::elastic(rng.uniform(0.85, 0.95)));
    else if (pick < 0.6) norms.push_back(GroupNorm::l1());
    else norms.push_back(GroupNorm::l2());
  }
  return norms;
}

bool criterion_theorem2(std::string& detail) {
  const GroupPartition part = GroupPartition::contiguous(100, 2);
  const PackingResult packing = build_low_coherence_dictionary(50, 100, part, 42, 0.0, 400);
  const Dictionary& dict = packing.dictionary;
  const double c = 2.0 / 3.0;

  int with_elastic = 0;
  int pass = 0;
  const int count = 200;
  for (int i = 0; i < count; ++i) {
    Rng tag_rng(500 + i);
    const auto tags = mixed_tags(50, tag_rng, true);
    bool has_elastic = false;
    for (const auto& t : tags) has_elastic = has_elastic || t.tag == NormTag::Elastic;
    with_elastic += has_elastic ? 1 : 0;

    const auto inst = generate_certified_instance(dict, part, tags, 1, 0.05, c, 900 + i);
    if (!inst.certificate.all_conditions()) continue;
    const Eigen::VectorXd y = dict.matrix() * inst.gamma_true.values() + inst.noise;
    Rng start_rng(40 + i);
    SolveOptions a;
    SolveOptions b;
    b.init = (inst.gamma_true.values() + 0.3 * start_rng.normal_vector(100)).eval();
    const auto rep = verify_recovery(solve_gbp(y, dict, inst.spec, a),
                                     solve_gbp(y, dict, inst.spec, b), inst.gamma_true,
                                     inst.certificate, inst.spec);
    if (rep.support_containment.pass && rep.linf_error.pass && rep.threshold_support.pass &&
        rep.uniqueness_two_start.pass) {
      ++pass;
    }
  }

  // the paper's constants at c = 2/3, lambda = 1 (uniform weights, no elastic)
  Rng rng(7);
  const auto plain = generate_certified_instance(dict, part,
                                                 std::vector<GroupNorm>(50, GroupNorm::l2()), 1,
                                                 0.05, c, 77);
  const auto& cert = plain.certificate;
  const double e = cert.e_local;
  const bool constants_ok =
      std::abs(cert.required_gamma_min - 3.0 * e) <= 1e-12 * std::max(1.0, 3.0 * e) &&
      std::abs(cert.weak_linf_bound - 6.0 * e) <= 1e-12 * std::max(1.0, 6.0 * e);
  (void)rng;

  std::ostringstream os;
  os << pass << "/" << count << " instances passed claims 1-4, " << with_elastic
     << " carried elastic groups, constants 3||E||_L/6||E||_L "
     << (constants_ok ? "exact" : "WRONG");
  detail = os.str();
  return pass == count && with_elastic >= 50 && constants_ok;
}

// ------------------------------------------------------------- criterion 4

bool criterion_positive_equivalence(std::string& detail) {
  const GroupPartition part = GroupPartition::contiguous(100, 2);
  const PackingResult packing = build_low_coherence_dictionary(50, 100, part, 43, 0.0, 400);
  const Dictionary& dict = packing.dictionary;

  int qualified = 0;
  double worst = 0.0;
  int attempts = 0;
  while (qualified < 50 && attempts < 150) {
    ++attempts;
    const auto inst =
        generate_certified_instance(dict, part, std::vector<GroupNorm>(50, GroupNorm::l2()), 1,
                                    0.02, 2.0 / 3.0, 4000 + attempts, /*nonnegative=*/true);
    const Eigen::VectorXd y = dict.matrix() * inst.gamma_true.values() + inst.noise;
    const SolveResult plain = solve_gbp(y, dict, inst.spec);
    if ((plain.code.values().array() < 0.0).any()) continue;
    if (characteristic_support(plain.code, inst.spec) != plain.code.support()) continue;
    const SolveResult positive = solve_positive_gbp(y, dict, inst.spec);
    worst = std::max(
        worst, (positive.code.values() - plain.code.values()).lpNorm<Eigen::Infinity>());
    ++qualified;
  }
  std::ostringstream os;
  os << qualified << "/50 qualifying instances, max linf gap " << worst;
  detail = os.str();
  return qualified == 50 && worst < 1e-7;
}

// ------------------------------------------------------------- criterion 5

bool criterion_rewrite(std::string& detail) {
  Rng rng(505);
  double worst_obj = 0.0, worst_mu = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int k = trial < 10 ? 2 : 3;
    std::vector<Dictionary> dicts;
    std::vector<RegularizerSpec> specs;
    std::vector<int> dims{6, 8, 10, 12};
    for (int j = 0; j < k; ++j) {
      dicts.push_back(test::random_unit_dictionary(dims[j], dims[j + 1], rng));
      specs.push_back(test::random_spec(dims[j + 1], 2, rng, 0.1, 0.4));
    }
    LayeredProblem problem(dicts, specs);
    const RewriteResult rw = rewrite_single_layer(problem);

    worst_mu = std::max(worst_mu, std::abs(mutual_coherence(rw.dictionary).absolute_max -
                                           rewrite_coherence_closed_form(problem)));

    // solve the renormalized program, map back, compare objectives
    const Eigen::VectorXd x = rng.normal_vector(dims[0]);
    const Eigen::VectorXd x_stacked = rw.stacked_signal(x);
    SolveOptions opts;
    opts.max_iter = 20000;
    const SolveResult sol = solve_gbp(x_stacked, rw.dictionary, rw.spec, opts);
    const Eigen::VectorXd mapped = rw.recover_original(sol.code.values());

    // original rewritten system: unnormalized blocks and weights
    BlockSystemBuilder builder(
        [&] {
          std::vector<int> rows{dims[0]};
          for (int j = 0; j + 1 < k; ++j) rows.push_back(dims[j + 1]);
          return rows;
        }(),
        [&] {
          std::vector<int> cols;
          for (int j = 0; j < k; ++j) cols.push_back(dims[j + 1]);
          return cols;
        }());
    for (int j = 0; j < k; ++j) {
      builder.set_block(j, j, dicts[j].matrix());
      if (j + 1 < k)
        builder.set_block(j + 1, j,
                          -Eigen::MatrixXd::Identity(dims[j + 1], dims[j + 1]));
    }
    const Eigen::MatrixXd a_orig = builder.assemble();
    double orig_obj = 0.5 * (x_stacked - a_orig * mapped).squaredNorm();
    int offset = 0;
    for (int j = 0; j < k; ++j) {
      orig_obj += specs[j].value(mapped.segment(offset, dims[j + 1]));
      offset += dims[j + 1];
    }
    const double renorm_obj = 0.5 * (x_stacked - rw.dictionary.matrix() * sol.code.values())
                                        .squaredNorm() +
                              rw.spec.value(sol.code.values());
    worst_obj = std::max(worst_obj,
                         std::abs(renorm_obj - orig_obj) / std::max(1.0, std::abs(orig_obj)));
  }
  std::ostringstream os;
  os << "max objective gap " << worst_obj << ", max mu gap " << worst_mu;
  detail = os.str();
  return worst_obj < 1e-8 && worst_mu < 1e-12;
}

// ------------------------------------------------------------- criterion 6

bool criterion_layered_bounds(std::string& detail) {
  int pass = 0;
  const int count = 50;
  SolveOptions opts;
  opts.max_iter = 60000;
  for (int i = 0; i < count; ++i) {
    const auto inst =
        generate_certified_layered_instance(50, 100, 20, 0.02, 2.0 / 3.0, 6000 + i);
    if (!inst.bounds.all_conditions()) continue;
    const auto results = solve_layered_gbp(inst.x + inst.noise, inst.problem, opts);
    bool ok = true;
    for (int layer = 0; layer < 2; ++layer) {
      const Eigen::VectorXd err =
          results[layer].code.values() - inst.gamma_true[layer].values();
      ok = ok && err.lpNorm<Eigen::Infinity>() < inst.bounds.layers[layer].linf_bound;
      const double amp = layer == 0 ? local_amplitude(err, inst.problem.dictionaries[1])
                                    : err.norm();
      ok = ok && amp <= inst.bounds.epsilons[layer + 1];
    }
    pass += ok ? 1 : 0;
  }
  detail = std::to_string(pass) + "/" + std::to_string(count) + " layered instances within bounds";
  return pass == count;
}

// ------------------------------------------------------------- criterion 7

bool pipeline_smooth_at(const Pipeline& p, const Eigen::VectorXd& x, double margin) {
  const SolveResult r = solve_gbp(x, p.dictionary, p.spec, p.solve_opts);
  if (p.loss == LossKind::Hinge) {
    Eigen::VectorXd feat = r.code.values();
    if (p.pooled) feat = pool_groups(feat, p.spec.partition());
    const double f = p.classifier.scores(feat)[0];
    if (std::abs(1.0 - f) < 10 * margin || std::abs(1.0 + f) < 10 * margin) return false;
  }
  const auto& part = p.spec.partition();
  const double step = 1.0 / (p.dictionary.sigma_max() * p.dictionary.sigma_max());
  const Eigen::VectorXd v =
      r.code.values() -
      step * (p.dictionary.matrix().transpose() * (p.dictionary.matrix() * r.code.values() - x));
  for (int g = 0; g < part.n_groups(); ++g) {
    const double t = step * p.spec.weight(g);
    const auto& norm = p.spec.norm(g);
    if (norm.tag == NormTag::L1) {
      for (int i : part.group(g)) {
        if (std::abs(std::abs(v[i]) - t) < margin) return false;
      }
    } else if (norm.tag == NormTag::L2) {
      double sq = 0.0;
      for (int i : part.group(g)) sq += v[i] * v[i];
      if (std::abs(std::sqrt(sq) - t) < margin) return false;
    } else {
      const double t1 = t * norm.beta;
      double sq = 0.0;
      for (int i : part.group(g)) {
        if (std::abs(std::abs(v[i]) - t1) < margin) return false;
        const double w = std::max(0.0, std::abs(v[i]) - t1);
        sq += w * w;
      }
      if (std::abs(std::sqrt(sq) - t * (1.0 - norm.beta)) < margin) return false;
    }
  }
  return true;
}

bool criterion_gradient_checks(std::string& detail) {
  // pipeline gradients vs central differences on the documented smooth set
  const PackingResult packing =
      build_low_coherence_dictionary(12, 24, GroupPartition::singletons(24), 2, 0.0, 150);
  const Dictionary& dict = packing.dictionary;
  const GroupPartition part = GroupPartition::contiguous(24, 3);

  double worst_pipeline = 0.0;
  int tested = 0, attempts = 0;
  while (tested < 50 && attempts < 500) {
    ++attempts;
    Rng local(7000 + attempts);
    auto spec = test::random_spec(24, 3, local, 0.15, 0.5);
    const bool pooled = local.uniform() < 0.5;
    const bool multiclass = local.uniform() < 0.5;
    LinearClassifier clf;
    const int dim = pooled ? part.n_groups() : 24;
    if (multiclass) {
      clf.weights = local.normal_matrix(3, dim);
      clf.bias = 0.1 * local.normal_vector(3);
    } else {
      clf.weights = local.normal_matrix(1, dim);
      clf.bias = Eigen::VectorXd::Zero(1);
    }
    SolveOptions tight;
    tight.max_iter = 20000;
    tight.residual_tol = 1e-11;
    Pipeline p{dict,   spec, tight, clf, multiclass ? LossKind::CrossEntropy
                                                    : LossKind::Hinge,
               pooled, 0.0,  0.0,   2000};
    Eigen::VectorXd truth = Eigen::VectorXd::Zero(24);
    for (int g : local.sample_without_replacement(8, 2)) {
      for (int idx : part.group(g)) truth[idx] = local.uniform(1.0, 2.0);
    }
    const Eigen::VectorXd x = dict.matrix() * truth + 0.05 * local.normal_vector(12);
    if (!pipeline_smooth_at(p, x, 1e-3)) continue;
    const int label = multiclass ? static_cast<int>(local.uniform_index(3))
                                 : (local.uniform() < 0.5 ? 0 : 1);
    if (p.loss == LossKind::Hinge && pipeline_loss(p, x, label) == 0.0) continue;

    const InputGradient g = input_gradient(p, x, label);
    Pipeline longer = p;
    longer.unroll_iterations = 2 * p.unroll_iterations;
    if ((input_gradient(longer, x, label).grad - g.grad).norm() >
        2e-4 * std::max(1.0, g.grad.norm()))
      continue;  // adjoint series not resolved; outside the documented set

    Eigen::VectorXd fd(12);
    const double h = 1e-4;
    bool skip = false;
    for (int i = 0; i < 12; ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      if (!pipeline_smooth_at(p, xp, 1e-4) || !pipeline_smooth_at(p, xm, 1e-4)) {
        skip = true;
        break;
      }
      fd[i] = (pipeline_loss(p, xp, label) - pipeline_loss(p, xm, label)) / (2.0 * h);
    }
    if (skip) continue;
    worst_pipeline =
        std::max(worst_pipeline, (g.grad - fd).norm() / std::max(1e-12, fd.norm()));
    ++tested;
  }

  // layer-wise gradients vs central differences
  Rng rng(71);
  double worst_layer = 0.0;
  const auto layer_loss = [](Layer layer, const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& target) {
    LayerTape tape;
    return 0.5 * (layer_forward_train(layer, x, tape) - target).squaredNorm();
  };
  const auto check_layer = [&](Layer layer, int in_dim) {
    const Eigen::MatrixXd x = rng.normal_matrix(in_dim, 10);
    LayerTape tape;
    Layer work = layer;
    const Eigen::MatrixXd out = layer_forward_train(work, x, tape);
    const Eigen::MatrixXd target = out + rng.normal_matrix(out.rows(), out.cols());
    Eigen::MatrixXd gw, gwq, gwk, gwv;
    Eigen::VectorXd gb;
    const Eigen::MatrixXd gx =
        layer_backward(work, out - target, tape, &gw, &gb, &gwq, &gwk, &gwv);
    const double h = 1e-6;
    const auto fd_block = [&](auto get, const Eigen::MatrixXd& analytic, int rows, int cols) {
      for (int i = 0; i < std::min(rows, 5); ++i) {
        for (int j = 0; j < std::min(cols, 5); ++j) {
          Layer lp = layer, lm = layer;
          get(lp)(i, j) += h;
          get(lm)(i, j) -= h;
          const double fd = (layer_loss(lp, x, target) - layer_loss(lm, x, target)) / (2 * h);
          worst_layer = std::max(worst_layer,
                                 std::abs(fd - analytic(i, j)) / std::max(1.0, std::abs(fd)));
        }
      }
    };
    switch (layer.kind) {
      case LayerKind::Affine:
        fd_block([](Layer& l) -> Eigen::MatrixXd& { return l.w; }, gw,
                 static_cast<int>(layer.w.rows()), static_cast<int>(layer.w.cols()));
        break;
      case LayerKind::BatchNorm:
        fd_block([](Layer& l) -> Eigen::VectorXd& { return l.bn_gamma; }, gw,
                 static_cast<int>(layer.bn_gamma.size()), 1);
        break;
      case LayerKind::LinearAttention:
        fd_block([](Layer& l) -> Eigen::MatrixXd& { return l.wq; }, gwq,
                 static_cast<int>(layer.wq.rows()), static_cast<int>(layer.wq.cols()));
        fd_block([](Layer& l) -> Eigen::MatrixXd& { return l.wk; }, gwk,
                 static_cast<int>(layer.wk.rows()), static_cast<int>(layer.wk.cols()));
        fd_block([](Layer& l) -> Eigen::MatrixXd& { return l.wv; }, gwv,
                 static_cast<int>(layer.wv.rows()), static_cast<int>(layer.wv.cols()));
        break;
      default:
        break;
    }
    for (int i = 0; i < std::min(in_dim, 5); ++i) {
      for (int j = 0; j < 4; ++j) {
        Eigen::MatrixXd xp = x, xm = x;
        xp(i, j) += h;
        xm(i, j) -= h;
        const double fd = (layer_loss(layer, xp, target) - layer_loss(layer, xm, target)) /
                          (2 * h);
        worst_layer =
            std::max(worst_layer, std::abs(fd - gx(i, j)) / std::max(1.0, std::abs(fd)));
      }
    }
  };
  check_layer(Layer::affine(6, 4, rng), 6);
  check_layer(Layer::batch_norm(5), 5);
  check_layer(Layer::relu(5), 5);
  check_layer(Layer::linear_attention(3, 4, 5, rng), 12);
  check_layer(Layer::softmax(5), 5);

  std::ostringstream os;
  os << tested << "/50 pipeline points, worst rel " << worst_pipeline << "; layer worst rel "
     << worst_layer;
  detail = os.str();
  return tested == 50 && worst_pipeline < 1e-3 && worst_layer < 1e-4;
}

// ------------------------------------------------------------- criterion 8

bool criterion_synthetic_stats(std::string& detail) {
  SyntheticSpec spec;
  spec.count = 2000;
  spec.margin = 0.1;
  spec.seed = 1001;
  const GroupPartition part = GroupPartition::contiguous(spec.m, spec.group_size);
  const PackingResult packing =
      build_low_coherence_dictionary(spec.n, spec.m, part, 1001, 0.0, 400);
  const LinearClassifier w_full = make_random_classifier(spec.m, 1102);
  const LinearClassifier w_pooled = make_random_classifier(spec.n_groups, 1103);
  const SyntheticPair pair =
      generate_synthetic_dataset(packing.dictionary, spec, w_full, w_pooled);

  const auto solve_all = [&](const RegularizerSpec& rspec) {
    Eigen::MatrixXd codes(spec.m, pair.no_pool.count());
    SolveOptions opts;
    for (int i = 0; i < pair.no_pool.count(); ++i) {
      codes.col(i) =
          solve_gbp(pair.no_pool.inputs.col(i), packing.dictionary, rspec, opts).code.values();
    }
    return codes;
  };
  const double gamma_bp = 0.05, gamma_gbp = 0.45;
  const GroupStats bp = group_statistics(
      solve_all(RegularizerSpec::uniform(GroupPartition::singletons(spec.m), GroupNorm::l1(),
                                         gamma_bp)),
      pair.no_pool.codes, part, gamma_bp);
  const GroupStats gbp = group_statistics(
      solve_all(RegularizerSpec::uniform(part, GroupNorm::l2(), gamma_gbp)),
      pair.no_pool.codes, part, gamma_gbp);

  std::ostringstream os;
  os << "GBP acc " << 100 * gbp.mean_group_acc << "% (>=95), BP acc " << 100 * bp.mean_group_acc
     << "% (<=75), inactive gap " << 100 * (gbp.inactive_rate - bp.inactive_rate) << "pp (>=20)";
  detail = os.str();
  return gbp.mean_group_acc >= 0.95 && bp.mean_group_acc <= 0.75 &&
         gbp.inactive_rate - bp.inactive_rate >= 0.20;
}

// ------------------------------------------------------------- criterion 9

bool criterion_attack_consistency(std::string& detail) {
  // part (a): monotone accuracy over the sweep grid on the pooled task
  SyntheticSpec spec;
  spec.count = 200;
  spec.margin = 0.1;
  spec.seed = 2001;
  const GroupPartition part = GroupPartition::contiguous(spec.m, spec.group_size);
  const PackingResult packing =
      build_low_coherence_dictionary(spec.n, spec.m, part, 2001, 0.0, 400);
  const LinearClassifier w_full = make_random_classifier(spec.m, 2102);
  const LinearClassifier w_pooled = make_random_classifier(spec.n_groups, 2103);
  const SyntheticPair pair =
      generate_synthetic_dataset(packing.dictionary, spec, w_full, w_pooled);

  SolveOptions opts;
  opts.max_iter = 1500;
  Pipeline pgbp{packing.dictionary,
                RegularizerSpec::uniform(part, GroupNorm::l2(), 0.45),
                opts,
                w_pooled,
                LossKind::Hinge,
                true,
                0.0,
                0.45,
                100};
  SweepDataset data{pair.pooled.inputs, pair.pooled.labels};
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(0.02 * i);
  AttackConfig cfg;
  cfg.steps = 10;
  const auto rows = attack_sweep(pgbp, data, grid, cfg, "PGBP", spec.seed, {}, 1);
  bool monotone = true;
  double worst_bump = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double bump = rows[i].accuracy - rows[i - 1].accuracy;
    worst_bump = std::max(worst_bump, bump);
    monotone = monotone && bump <= 0.02;
  }

  // part (b): certified samples under attack never flip
  const GroupPartition cpart = GroupPartition::contiguous(100, 2);
  const PackingResult cpack = build_low_coherence_dictionary(50, 100, cpart, 2002, 0.0, 400);
  const double noise_budget = 0.06;
  // keep the measured local amplitude well under the budget: the weights are
  // set for condition b) at the budget, and the certified threshold scales
  // with the measured level, so a smaller radius certifies typical margins
  const double eps_attack = noise_budget / (std::sqrt(50.0) * 4.0);
  Rng rng(2900);
  int certified = 0, violations = 0, attempts = 0;
  while (certified < 500 && attempts < 2000) {
    ++attempts;
    const auto inst =
        generate_certified_instance(cpack.dictionary, cpart,
                                    std::vector<GroupNorm>(50, GroupNorm::l2()), 1,
                                    noise_budget, 2.0 / 3.0, 8000 + attempts);
    LinearClassifier clf = make_random_classifier(100, 9000 + attempts);
    const Prediction clean = predict_and_margin(clf, inst.gamma_true.values());

    SolveOptions aopts;
    aopts.max_iter = 1500;
    Pipeline target{cpack.dictionary, inst.spec, aopts,          clf, LossKind::Hinge,
                    false,            0.0,       inst.spec.gamma_min(), 100};
    const Eigen::VectorXd x = cpack.dictionary.matrix() * inst.gamma_true.values();
    AttackConfig acfg;
    acfg.epsilon = eps_attack;
    acfg.steps = 5;
    const Eigen::VectorXd y = ifgsm(target, x, clean.label, acfg);

    // certificate at the measured perturbation level
    const Eigen::VectorXd noise = y - x;
    const auto cert = check_theorem2(cpack.dictionary, inst.spec, inst.gamma_true, noise,
                                     2.0 / 3.0);
    if (!cert.all_conditions()) continue;
    const int chi_l0 =
        static_cast<int>(characteristic_support(inst.gamma_true, inst.spec).size());
    const auto mc = margin_certificate(clean.margin, clf, cert, chi_l0);
    if (!mc.certified) continue;
    ++certified;
    const Prediction attacked = pipeline_predict(target, y);
    if (attacked.label != clean.label) ++violations;
  }

  std::ostringstream os;
  os << "worst accuracy bump " << worst_bump << " (tolerance 0.02), " << certified
     << "/500 certified samples, " << violations << " violations";
  detail = os.str();
  return monotone && certified >= 500 && violations == 0;
}

// ------------------------------------------------------------ criterion 10

bool criterion_feedforward(std::string& detail) {
  SyntheticSpec spec;
  spec.count = 2000;
  spec.margin = 0.1;
  spec.seed = 3001;
  const GroupPartition part = GroupPartition::contiguous(spec.m, spec.group_size);
  const PackingResult packing =
      build_low_coherence_dictionary(spec.n, spec.m, part, 3001, 0.0, 400);
  const LinearClassifier w_full = make_random_classifier(spec.m, 3102);
  const LinearClassifier w_pooled = make_random_classifier(spec.n_groups, 3103);
  const SyntheticPair pair =
      generate_synthetic_dataset(packing.dictionary, spec, w_full, w_pooled);

  const double gamma_gbp = 0.45;
  const auto rspec = RegularizerSpec::uniform(part, GroupNorm::l2(), gamma_gbp);
  Eigen::MatrixXd targets(spec.n_groups, pair.pooled.count());
  SolveOptions opts;
  for (int i = 0; i < pair.pooled.count(); ++i) {
    targets.col(i) = pool_groups(
        solve_gbp(pair.pooled.inputs.col(i), packing.dictionary, rspec, opts).code.values(),
        part);
  }

  TrainConfig cfg;
  cfg.epochs_max = 200;
  cfg.early_stop_patience = 25;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.1;
  cfg.seed = 3001;
  const FeedforwardModel model = train_feedforward_approximator(
      pair.pooled.inputs, targets, make_synthetic_model("DenseShallow", spec.n, spec.n_groups,
                                                        3001),
      cfg);

  // group-activity accuracy with the solver's own gate
  double acc = 0.0;
  for (int i = 0; i < pair.pooled.count(); ++i) {
    const Eigen::VectorXd est = trunk_output(model, pair.pooled.inputs.col(i));
    int correct = 0;
    for (int g = 0; g < spec.n_groups; ++g) {
      const bool got = est[g] > gamma_gbp;
      bool want = false;
      for (int idx : part.group(g)) want = want || pair.pooled.codes(idx, i) != 0.0;
      correct += got == want ? 1 : 0;
    }
    acc += static_cast<double>(correct) / spec.n_groups;
  }
  acc /= pair.pooled.count();
  detail = "dense-shallow group-activity accuracy " + std::to_string(100 * acc) + "% (>=90)";
  return acc >= 0.90;
}

// ------------------------------------------------------------ criterion 11

bool criterion_mnist_ingestion(std::string& detail) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gsc_mnist_fixture";
  fs::create_directories(dir);

  // fixtures in the official container layout, official record counts
  Rng rng(1111);
  MnistData train, test;
  train.images.resize(784, 60000);
  train.labels.resize(60000);
  for (int i = 0; i < 60000; ++i) {
    for (int p = 0; p < 784; ++p)
      train.images(p, i) = static_cast<double>((rng.next_u64() >> 13) % 256);
    train.labels[i] = static_cast<int>(rng.uniform_index(10));
  }
  test.images = train.images.leftCols(10000);
  test.labels = train.labels.head(10000);

  const std::string train_img = (dir / "train-images-idx3-ubyte").string();
  const std::string train_lab = (dir / "train-labels-idx1-ubyte").string();
  const std::string test_img = (dir / "t10k-images-idx3-ubyte").string();
  const std::string test_lab = (dir / "t10k-labels-idx1-ubyte").string();
  write_mnist_idx(train_img, train_lab, train);
  write_mnist_idx(test_img, test_lab, test);

  const MnistData got_train = load_mnist_idx(train_img, train_lab);
  const MnistData got_test = load_mnist_idx(test_img, test_lab);
  bool ok = got_train.images.cols() == 60000 && got_test.images.cols() == 10000 &&
            got_train.images.rows() == 784;
  ok = ok && got_train.images == train.images && got_train.labels == train.labels;
  for (int i = 0; i < got_train.labels.size() && ok; ++i)
    ok = got_train.labels[i] >= 0 && got_train.labels[i] <= 9;

  // standardization invariants on the training split
  const Standardizer st = Standardizer::fit(got_train.images);
  const Eigen::MatrixXd z = st.apply(got_train.images);
  double worst_mean = 0.0, worst_var = 0.0;
  for (int r = 0; r < z.rows(); ++r) {
    worst_mean = std::max(worst_mean, std::abs(z.row(r).mean()));
    if (st.stddev[r] > 1e-6) {
      const double var = z.row(r).array().square().mean() - std::pow(z.row(r).mean(), 2);
      worst_var = std::max(worst_var, std::abs(var - 1.0));
    }
  }
  ok = ok && worst_mean < 1e-9 && worst_var < 1e-6;

  // internal-format round trip is bit identical
  const std::string img2 = (dir / "roundtrip-images").string();
  const std::string lab2 = (dir / "roundtrip-labels").string();
  write_mnist_idx(img2, lab2, got_train);
  const MnistData again = load_mnist_idx(img2, lab2);
  ok = ok && again.images == got_train.images && again.labels == got_train.labels;

  fs::remove_all(dir);
  std::ostringstream os;
  os << "60000/10000 records, worst |mean| " << worst_mean << ", worst |var-1| " << worst_var;
  detail = os.str();
  return ok;
}

struct Criterion {
  int id;
  const char* name;
  std::function<bool(std::string&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);
  }

  const std::vector<Criterion> criteria = {
      {1, "prox oracle equivalence", criterion_prox_oracle},
      {2, "LASSO oracle equivalence", criterion_lasso_oracle},
      {3, "theorem 2 suite", criterion_theorem2},
      {4, "positive coding equivalence", criterion_positive_equivalence},
      {5, "renormalization rewrite", criterion_rewrite},
      {6, "layered error bounds", criterion_layered_bounds},
      {7, "gradient checks", criterion_gradient_checks},
      {8, "synthetic qualitative reproduction", criterion_synthetic_stats},
      {9, "attack monotonicity and certificate consistency", criterion_attack_consistency},
      {10, "feedforward regression sanity", criterion_feedforward},
      {11, "mnist ingestion", criterion_mnist_ingestion},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s — %s (%.1fs)\n", ok ? "PASS" : "FAIL", c.id, c.name,
                detail.c_str(), dt);
    std::fflush(stdout);
    failures += ok ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
