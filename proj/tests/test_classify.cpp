#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>

#include "gsc/classify.hpp"
#include "gsc/rng.hpp"

using namespace gsc;

TEST_CASE("pool_groups examples and invariances") {
  GroupPartition part({{0, 1}, {2, 3}}, 4);
  Eigen::VectorXd g(4);
  g << 3, 4, 0, 0;
  CHECK(pool_groups(g, part).isApprox(Eigen::Vector2d(5, 0)));
  CHECK(pool_groups(Eigen::VectorXd::Zero(4), part).norm() == 0.0);

  GroupPartition singles = GroupPartition::singletons(3);
  Eigen::VectorXd v(3);
  v << -2, 0.5, 0;
  CHECK(pool_groups(v, singles).isApprox(Eigen::Vector3d(2, 0.5, 0)));

  // sign flips and within-group permutations do not change the pooling
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd a = rng.normal_vector(4);
    Eigen::VectorXd b = a;
    b[0] = -a[1];
    b[1] = a[0];
    b[3] = -a[3];
    CHECK(pool_groups(a, part).isApprox(pool_groups(b, part), 1e-12));
  }
}

TEST_CASE("predict_and_margin examples") {
  LinearClassifier clf;
  clf.weights = Eigen::MatrixXd::Identity(2, 2);
  clf.bias = Eigen::VectorXd::Zero(2);

  Prediction p = predict_and_margin(clf, Eigen::Vector2d(1.0, 0.3));
  CHECK(p.label == 0);
  CHECK(p.margin == doctest::Approx(0.7));

  p = predict_and_margin(clf, Eigen::Vector2d(0.5, 0.5));  // tie -> lowest index
  CHECK(p.label == 0);
  CHECK(p.margin == doctest::Approx(0.0));

  // positive rescaling scales the margin and keeps the class
  Rng rng(5);
  LinearClassifier multi;
  multi.weights = rng.normal_matrix(4, 6);
  multi.bias = rng.normal_vector(4);
  const Eigen::VectorXd code = rng.normal_vector(6);
  const Prediction base = predict_and_margin(multi, code);
  LinearClassifier scaled = multi;
  scaled.weights *= 3.5;
  scaled.bias *= 3.5;
  const Prediction after = predict_and_margin(scaled, code);
  CHECK(after.label == base.label);
  CHECK(after.margin == doctest::Approx(3.5 * base.margin));

  // single-score binary margin is |f|
  LinearClassifier bin;
  bin.weights = Eigen::MatrixXd::Constant(1, 2, 1.0);
  bin.bias = Eigen::VectorXd::Zero(1);
  CHECK(predict_and_margin(bin, Eigen::Vector2d(-1, -2)).label == 0);
  CHECK(predict_and_margin(bin, Eigen::Vector2d(-1, -2)).margin == doctest::Approx(3.0));
}

TEST_CASE("classification losses: values and analytic gradients") {
  LinearClassifier bin;
  bin.weights = Eigen::MatrixXd::Constant(1, 3, 1.0);
  bin.bias = Eigen::VectorXd::Zero(1);
  // y*f = 2: hinge flat at zero
  LossValue lv = classification_loss(bin, Eigen::Vector3d(1, 0.5, 0.5), 1, LossKind::Hinge);
  CHECK(lv.value == 0.0);
  CHECK(lv.grad_code.norm() == 0.0);

  // uniform logits over 10 classes: loss ln 10
  LinearClassifier ten;
  ten.weights = Eigen::MatrixXd::Zero(10, 4);
  ten.bias = Eigen::VectorXd::Zero(10);
  lv = classification_loss(ten, Eigen::Vector4d(1, 2, 3, 4), 7, LossKind::CrossEntropy);
  CHECK(lv.value == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  CHECK_THROWS_AS(classification_loss(ten, Eigen::Vector4d(1, 2, 3, 4), 11,
                                      LossKind::CrossEntropy),
                  InvalidInput);
  CHECK_THROWS_AS(classification_loss(ten, Eigen::Vector4d(1, 2, 3, 4), 1, LossKind::Hinge),
                  InvalidInput);

  // gradients vs central finite differences, 100 random cases
  Rng rng(11);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const bool hinge = t % 2 == 0;
    LinearClassifier clf;
    const int dim = 5;
    clf.weights = rng.normal_matrix(hinge ? 1 : 4, dim);
    clf.bias = 0.1 * rng.normal_vector(hinge ? 1 : 4);
    const Eigen::VectorXd code = rng.normal_vector(dim);
    const int label = hinge ? (rng.uniform() < 0.5 ? -1 : 1)
                            : static_cast<int>(rng.uniform_index(4));
    const LossKind kind = hinge ? LossKind::Hinge : LossKind::CrossEntropy;
    const LossValue base = classification_loss(clf, code, label, kind);
    if (hinge && (base.value == 0.0 || std::abs(base.value) < 1e-3)) continue;  // kink
    const double h = 1e-5;
    for (int i = 0; i < dim; ++i) {
      Eigen::VectorXd cp = code, cm = code;
      cp[i] += h;
      cm[i] -= h;
      const double fd = (classification_loss(clf, cp, label, kind).value -
                         classification_loss(clf, cm, label, kind).value) /
                        (2 * h);
      worst = std::max(worst,
                       std::abs(fd - base.grad_code[i]) / std::max(1.0, std::abs(fd)));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("gap regularizer examples and monotonicity") {
  GroupPartition part = GroupPartition::contiguous(4, 2);

  Eigen::VectorXd a(4);
  a << 5, 0, 0.1, 0;  // group norms (5, 0.1), threshold 1
  GapValue gv = gap_regularizer({a}, part, 1.0);
  CHECK(gv.value == doctest::Approx(-4.9));
  CHECK_FALSE(gv.degenerate);

  Eigen::VectorXd b(4);
  b << 3, 0, 1.0, 0;  // gap 2.0
  gv = gap_regularizer({a, b}, part, 1.0);
  CHECK(gv.value == doctest::Approx(-2.0));

  // all groups active in every sample: skipped, degenerate zero
  Eigen::VectorXd c(4);
  c << 5, 0, 4, 0;
  gv = gap_regularizer({c}, part, 1.0);
  CHECK(gv.value == 0.0);
  CHECK(gv.degenerate);

  CHECK_THROWS_AS(gap_regularizer({}, part, 1.0), InvalidInput);

  // widening the separation makes the penalty more negative
  double prev = 1.0;
  for (double active : {2.0, 3.0, 4.0, 6.0}) {
    Eigen::VectorXd v(4);
    v << active, 0, 0.5, 0;
    const double val = gap_regularizer({v}, part, 1.0).value;
    CHECK(val < prev);
    prev = val;
  }

  // subgradient direction: descending the active norm raises the penalty
  gv = gap_regularizer({a}, part, 1.0);
  const double h = 1e-6;
  const Eigen::VectorXd moved = a - h * gv.grads[0];
  CHECK(gap_regularizer({moved}, part, 1.0).value <= gv.value + 1e-9);
}

TEST_CASE("margin protects against code perturbations below margin/phi") {
  Rng rng(17);
  for (int t = 0; t < 100; ++t) {
    LinearClassifier clf;
    clf.weights = rng.normal_matrix(3, 8);
    clf.bias = rng.normal_vector(3);
    const Eigen::VectorXd code = rng.normal_vector(8);
    const Prediction base = predict_and_margin(clf, code);
    if (base.margin <= 0.0) continue;
    double phi = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        phi = std::max(phi, (clf.weights.row(i) - clf.weights.row(j)).norm());
      }
    }
    Eigen::VectorXd delta = rng.normal_vector(8);
    delta *= 0.999 * base.margin / (phi * delta.norm());
    CHECK(predict_and_margin(clf, code + delta).label == base.label);
  }
}

TEST_CASE("classifier container round trip") {
  Rng rng(23);
  LinearClassifier clf;
  clf.weights = rng.normal_matrix(3, 7);
  clf.bias = rng.normal_vector(3);
  save_classifier("test_clf.gbpc", clf);
  const LinearClassifier loaded = load_classifier("test_clf.gbpc");
  CHECK(loaded.weights == clf.weights);
  CHECK(loaded.bias == clf.bias);
  std::remove("test_clf.gbpc");
}
