#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "gsc/dictionary.hpp"
#include "gsc/matrix_io.hpp"
#include "gsc/rng.hpp"
#include "test_util.hpp"

using namespace gsc;

namespace {

Dictionary two_by_three() {
  Eigen::MatrixXd a(2, 3);
  a << 1, 0, 1 / std::sqrt(2.0), 0, 1, 1 / std::sqrt(2.0);
  return Dictionary::from_matrix(a);
}

}  // namespace

TEST_CASE("dictionary construction validates") {
  CHECK_THROWS_AS(Dictionary::from_matrix(Eigen::MatrixXd::Zero(3, 2)), InvalidInput);
  Eigen::MatrixXd bad(2, 2);
  bad << 1, std::nan(""), 0, 1;
  CHECK_THROWS_AS(Dictionary::from_matrix(bad), InvalidInput);

  auto d = Dictionary::from_matrix(Eigen::MatrixXd::Identity(4, 4));
  CHECK(d.unit_normed());
  CHECK(d.atom_supports()[2] == std::vector<int>{2});
}

TEST_CASE("mutual coherence examples") {
  auto id4 = Dictionary::from_matrix(Eigen::MatrixXd::Identity(4, 4));
  CHECK(mutual_coherence(id4).signed_max == doctest::Approx(0.0));
  CHECK(mutual_coherence(id4).absolute_max == doctest::Approx(0.0));

  Eigen::MatrixXd dup(2, 2);
  dup << 1, 1, 0, 0;
  CHECK(mutual_coherence(Dictionary::from_matrix(dup)).signed_max == doctest::Approx(1.0));

  auto d = two_by_three();
  CHECK(mutual_coherence(d).signed_max == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(mutual_coherence(d).absolute_max == doctest::Approx(1.0 / std::sqrt(2.0)));

  // signed vs absolute split: flip one atom's sign
  Eigen::MatrixXd f = d.matrix();
  f.col(2) *= -1.0;
  auto flipped = mutual_coherence(Dictionary::from_matrix(f));
  CHECK(flipped.signed_max == doctest::Approx(0.0));
  CHECK(flipped.absolute_max == doctest::Approx(1.0 / std::sqrt(2.0)));

  Eigen::MatrixXd one(3, 1);
  one << 1, 0, 0;
  CHECK_THROWS_AS(mutual_coherence(Dictionary::from_matrix(one)), InvalidInput);
  CHECK_THROWS_AS(mutual_coherence(Dictionary::from_matrix(2.0 * Eigen::MatrixXd::Identity(3, 3))),
                  InvalidInput);
}

TEST_CASE("mutual coherence invariant under permutation and sign flips") {
  Rng rng(7);
  auto d = test::random_unit_dictionary(6, 10, rng);
  const auto base = mutual_coherence(d).absolute_max;
  Eigen::MatrixXd shuffled(6, 10);
  std::vector<int> perm = rng.sample_without_replacement(10, 10);
  for (int j = 0; j < 10; ++j) {
    shuffled.col(j) = d.matrix().col(perm[j]) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  }
  CHECK(mutual_coherence(Dictionary::from_matrix(shuffled)).absolute_max ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("max stripe examples") {
  CHECK(max_stripe(Dictionary::from_matrix(Eigen::MatrixXd::Identity(4, 4))) == 1);

  Rng rng(3);
  auto dense = test::random_unit_dictionary(5, 8, rng);
  CHECK(max_stripe(dense) == 8);

  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(4, 4);
  block.block(0, 0, 2, 2) << 1, 0.6, 0, 0.8;
  block.block(2, 2, 2, 2) << 1, 0.6, 0, 0.8;
  CHECK(max_stripe(Dictionary::from_matrix(block)) == 2);
}

TEST_CASE("stripe norm examples and bound") {
  auto id4 = Dictionary::from_matrix(Eigen::MatrixXd::Identity(4, 4));
  Eigen::VectorXd g(4);
  g << 1, 0, 2, 0;
  CHECK(stripe_norm(SparseCode(Eigen::VectorXd::Zero(4)), id4) == 0);
  CHECK(stripe_norm(SparseCode(g), id4) == 1);

  Rng rng(11);
  auto dense = test::random_unit_dictionary(6, 9, rng);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(9);
  s[1] = 1.0;
  s[4] = -2.0;
  s[7] = 0.5;
  CHECK(stripe_norm(SparseCode(s), dense) == 3);

  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd v = rng.normal_vector(9);
    for (int i = 0; i < 9; ++i)
      if (rng.uniform() < 0.5) v[i] = 0.0;
    const SparseCode code(v);
    CHECK(stripe_norm(code, dense) <= static_cast<int>(code.support().size()));
  }
}

TEST_CASE("local amplitude examples and bound") {
  auto id2 = Dictionary::from_matrix(Eigen::MatrixXd::Identity(2, 2));
  Eigen::VectorXd e(2);
  e << 3, -4;
  CHECK(local_amplitude(Eigen::VectorXd::Zero(2), id2) == doctest::Approx(0.0));
  CHECK(local_amplitude(e, id2) == doctest::Approx(4.0));

  Rng rng(5);
  auto dense = test::random_unit_dictionary(6, 8, rng);
  Eigen::VectorXd z = rng.normal_vector(6);
  CHECK(local_amplitude(z, dense) == doctest::Approx(z.norm()));
  CHECK_THROWS_AS(local_amplitude(rng.normal_vector(5), dense), InvalidInput);
}

TEST_CASE("characteristic vector spreads only l2 groups") {
  GroupPartition part({{0, 1}, {2, 3}}, 4);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(4);
  g[0] = 1.0;

  RegularizerSpec both_l2(part, {GroupNorm::l2(), GroupNorm::l2()}, Eigen::Vector2d(1, 1));
  Eigen::VectorXd chi = characteristic_vector(SparseCode(g, part), both_l2);
  CHECK(chi.isApprox(Eigen::Vector4d(1, 1, 0, 0)));

  RegularizerSpec first_l1(part, {GroupNorm::l1(), GroupNorm::l2()}, Eigen::Vector2d(1, 1));
  chi = characteristic_vector(SparseCode(g, part), first_l1);
  CHECK(chi.isApprox(Eigen::Vector4d(1, 0, 0, 0)));

  RegularizerSpec first_elastic(part, {GroupNorm::elastic(0.5), GroupNorm::l2()},
                                Eigen::Vector2d(1, 1));
  chi = characteristic_vector(SparseCode(g, part), first_elastic);
  CHECK(chi.isApprox(Eigen::Vector4d(1, 0, 0, 0)));

  CHECK(characteristic_vector(SparseCode(Eigen::VectorXd::Zero(4), part), both_l2).norm() == 0.0);

  // characteristic support is group-full by construction
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    auto spec = test::random_spec(12, 3, rng);
    Eigen::VectorXd v = rng.normal_vector(12);
    for (int i = 0; i < 12; ++i)
      if (rng.uniform() < 0.6) v[i] = 0.0;
    SparseCode code(v, spec.partition());
    CHECK(is_group_full(characteristic_support(code, spec), spec));
    // supp(code) is always inside supp(chi)
    const auto chi_sup = characteristic_support(code, spec);
    for (int idx : code.support()) {
      CHECK(std::binary_search(chi_sup.begin(), chi_sup.end(), idx));
    }
  }
}

TEST_CASE("is_group_full examples") {
  GroupPartition part({{0, 1}, {2, 3}}, 4);
  RegularizerSpec spec(part, {GroupNorm::l2(), GroupNorm::l2()}, Eigen::Vector2d(1, 1));
  CHECK(is_group_full({}, spec));
  CHECK(is_group_full({0, 1}, spec));
  CHECK_FALSE(is_group_full({0, 2}, spec));

  RegularizerSpec l1spec(part, {GroupNorm::l1(), GroupNorm::l1()}, Eigen::Vector2d(1, 1));
  CHECK(is_group_full({0, 2}, l1spec));  // no l2 groups, vacuously full
}

TEST_CASE("erc examples") {
  auto id4 = Dictionary::from_matrix(Eigen::MatrixXd::Identity(4, 4));
  CHECK(erc({0, 1}, id4, 1.0) == doctest::Approx(1.0));
  CHECK(erc({0, 1, 2, 3}, id4, 0.5) == doctest::Approx(0.5));

  auto d = two_by_three();
  CHECK(erc({0, 1}, d, 1.0) == doctest::Approx(1.0 - std::sqrt(2.0)));

  Eigen::MatrixXd rankdef(3, 3);
  rankdef.col(0) = Eigen::Vector3d(1, 0, 0);
  rankdef.col(1) = Eigen::Vector3d(1, 0, 0);
  rankdef.col(2) = Eigen::Vector3d(0, 1, 0);
  try {
    erc({0, 1}, Dictionary::from_matrix(rankdef), 1.0);
    CHECK(false);
  } catch (const RankDeficiencyError& e) {
    CHECK(e.rank() == 1);
    CHECK(e.expected() == 2);
  }
}

TEST_CASE("erc monotone in lambda") {
  Rng rng(17);
  auto d = test::random_unit_dictionary(8, 12, rng);
  const std::vector<int> support{1, 5, 9};
  double prev = -1e9;
  for (double lam : {0.2, 0.5, 0.8, 1.0}) {
    const double val = erc(support, d, lam);
    CHECK(val >= prev);
    prev = val;
  }
}

TEST_CASE("regularizer spec derived constants and value") {
  GroupPartition part({{0, 1}, {2, 3}}, 4);
  RegularizerSpec spec(part, {GroupNorm::elastic(0.4), GroupNorm::l2()},
                       Eigen::Vector2d(0.5, 2.0));
  CHECK(spec.lambda() == doctest::Approx(0.4));
  CHECK(spec.gamma_min() == doctest::Approx(0.5));
  CHECK(spec.gamma_max() == doctest::Approx(2.0));
  CHECK(spec.theta() == doctest::Approx(0.4 * 0.5 / 2.0));

  Eigen::VectorXd v(4);
  v << 3, -4, 1, 1;
  // elastic: 0.4*7 + 0.6*5 = 5.8 weighted 0.5 ; l2: sqrt(2) weighted 2
  CHECK(spec.value(v) == doctest::Approx(0.5 * 5.8 + 2.0 * std::sqrt(2.0)));
  CHECK(spec.value(Eigen::VectorXd::Zero(4)) == doctest::Approx(0.0));

  CHECK_THROWS_AS(RegularizerSpec(part, {GroupNorm::l1(), GroupNorm::l1()},
                                  Eigen::Vector2d(1.0, 0.0)),
                  InvalidInput);
  CHECK_THROWS_AS(GroupNorm::elastic(1.0), InvalidInput);
}

TEST_CASE("partition validation") {
  CHECK_THROWS_AS(GroupPartition({{0, 1}, {1, 2}}, 3), InvalidInput);
  CHECK_THROWS_AS(GroupPartition({{0, 1}}, 3), InvalidInput);
  CHECK_THROWS_AS(GroupPartition({{0}, {}}, 1), InvalidInput);
  auto p = GroupPartition::contiguous(6, 3);
  CHECK(p.n_groups() == 2);
  CHECK(p.group_of(4) == 1);
}

TEST_CASE("sparse code support and group norms") {
  GroupPartition part = GroupPartition::contiguous(4, 2);
  Eigen::VectorXd v(4);
  v << 3, 4, 0, 0;
  SparseCode code(v, part);
  CHECK(code.support() == std::vector<int>{0, 1});
  CHECK(code.group_norms()[0] == doctest::Approx(5.0));
  CHECK(code.group_norms()[1] == doctest::Approx(0.0));
}

TEST_CASE("dictionary binary and csv round trip") {
  Rng rng(29);
  auto d = test::random_unit_dictionary(5, 7, rng);
  const std::string bin = "test_dict_roundtrip.gbpd";
  save_dictionary(bin, d);
  auto loaded = load_dictionary(bin);
  CHECK(loaded.matrix() == d.matrix());  // bit exact

  const std::string csv = "test_dict_roundtrip.csv";
  save_dictionary_csv(csv, d);
  auto from_csv = load_dictionary_csv(csv);
  CHECK(from_csv.matrix() == d.matrix());  // %.17g round-trips doubles

  CHECK_THROWS_AS(load_dictionary(csv), FormatError);
  std::remove(bin.c_str());
  std::remove(csv.c_str());
}
