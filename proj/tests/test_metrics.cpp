#include <doctest.h>

#include <random>

#include "cohiclust/metrics.hpp"
#include "oracles.hpp"

using namespace cohiclust;

namespace {

LabeledAssignment make(const std::vector<int>& leaf, const std::vector<int>& label, int depth) {
  LabeledAssignment a;
  a.leaf = leaf;
  a.label = label;
  a.topo = TreeTopology::complete(depth);
  return a;
}

}  // namespace

TEST_CASE("nmi") {
  // perfect clustering up to relabeling
  auto perfect = make({3, 3, 0, 0, 1, 1}, {0, 0, 1, 1, 2, 2}, 2);
  CHECK(nmi(perfect) == doctest::Approx(1.0));

  auto collapsed = make({1, 1, 1, 1}, {0, 0, 1, 1}, 2);
  CHECK(nmi(collapsed) == doctest::Approx(0.0));

  // contingency [[2,1],[1,2]]
  auto mixed = make({0, 0, 1, 0, 1, 1}, {0, 0, 0, 1, 1, 1}, 2);
  CHECK(nmi(mixed) == doctest::Approx(oracle::nmi_from_labels(mixed.leaf, mixed.label))
                          .epsilon(1e-12));
}

TEST_CASE("acc via optimal assignment") {
  auto perfect = make({3, 3, 0, 0, 1, 1}, {0, 0, 1, 1, 2, 2}, 2);
  CHECK(acc(perfect) == doctest::Approx(1.0));

  // contingency [[3,1],[1,3]]
  auto swapped = make({0, 0, 0, 1, 1, 1, 1, 0}, {1, 1, 1, 1, 0, 0, 0, 0}, 1);
  CHECK(acc(swapped) == doctest::Approx(0.75));
  CHECK(acc(swapped) == doctest::Approx(oracle::acc_exhaustive(swapped.leaf, swapped.label)));

  // 3 clusters onto 2 classes: unmatched cluster scores zero
  auto padded = make({0, 0, 1, 1, 2, 2}, {0, 0, 1, 1, 1, 0}, 2);
  CHECK(acc(padded) == doctest::Approx(oracle::acc_exhaustive(padded.leaf, padded.label)));

  SUBCASE("largest-cell lower bound on random assignments") {
    // One-to-one assignment can always claim the biggest contingency cell.
    // (The majority-class bound only holds for many-to-one mappings; with a
    // single predicted cluster the two coincide, checked below.)
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> leaf(30), label(30);
      std::map<std::pair<int, int>, double> cells;
      for (int i = 0; i < 30; ++i) {
        leaf[i] = int(rng() % 4);
        label[i] = int(rng() % 3);
        cells[{leaf[i], label[i]}] += 1;
      }
      double biggest = 0;
      for (auto& [k, v] : cells) biggest = std::max(biggest, v);
      CHECK(acc(make(leaf, label, 2)) >= biggest / 30.0 - 1e-12);
    }
    // single cluster: one-to-one maps it to the majority class
    auto one_cluster = make({2, 2, 2, 2, 2}, {0, 0, 0, 1, 2}, 2);
    CHECK(acc(one_cluster) == doctest::Approx(3.0 / 5.0));
  }
}

TEST_CASE("hungarian equals exhaustive search on small random instances") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> dist(0, 10);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + int(rng() % 4);
    MatXd cost(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) cost(r, c) = dist(rng);
    const auto match = hungarian_min_cost(cost);
    double got = 0;
    for (int r = 0; r < n; ++r) got += cost(r, match[r]);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double total = 0;
      for (int r = 0; r < n; ++r) total += cost(r, perm[r]);
      best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("ari") {
  auto identical = make({0, 0, 1, 1, 2, 2}, {0, 0, 1, 1, 2, 2}, 2);
  CHECK(ari(identical) == doctest::Approx(1.0));

  // singletons against one block sit at chance level
  auto chance = make({0, 1, 2, 3}, {0, 0, 0, 0}, 2);
  CHECK(ari(chance) == doctest::Approx(0.0));

  auto random_case = make({0, 1, 0, 1, 2, 2}, {0, 0, 1, 1, 1, 0}, 2);
  CHECK(ari(random_case) ==
        doctest::Approx(oracle::ari_from_pairs(random_case.leaf, random_case.label))
            .epsilon(1e-12));
}

TEST_CASE("dendrogram purity") {
  SUBCASE("classes isolated in pure subtrees reach exactly 1") {
    auto pure = make({0, 0, 1, 1, 2, 2, 3, 3}, {0, 0, 0, 0, 1, 1, 1, 1}, 2);
    CHECK(dendrogram_purity_exact(pure) == doctest::Approx(1.0));
  }
  SUBCASE("uniformly mixed classes approach the class prior") {
    std::vector<int> leaf, label;
    for (int l = 0; l < 16; ++l)
      for (int c = 0; c < 2; ++c)
        for (int rep = 0; rep < 4; ++rep) {
          leaf.push_back(l);
          label.push_back(c);
        }
    const double dp = dendrogram_purity_exact(make(leaf, label, 4));
    CHECK(dp > 0.45);
    CHECK(dp < 0.55);
  }
  SUBCASE("hand-laid assignment equals the pairwise oracle") {
    auto a = make({0, 0, 1, 2, 3, 3}, {0, 1, 0, 1, 1, 0}, 2);
    CHECK(dendrogram_purity_exact(a) ==
          doctest::Approx(oracle::dendrogram_purity_pairs(a.topo, a.leaf, a.label))
              .epsilon(1e-12));
  }
  SUBCASE("random assignments equal the pairwise oracle, pruned topology too") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
      LabeledAssignment a;
      a.topo = TreeTopology::complete(3);
      if (trial % 2) a.topo = prune_leaf(a.topo, int(rng() % 8));
      std::vector<int> active;
      for (int l = 0; l < 8; ++l)
        if (a.topo.leaf_active(l)) active.push_back(l);
      for (int i = 0; i < 40; ++i) {
        a.leaf.push_back(active[rng() % active.size()]);
        a.label.push_back(int(rng() % 3));
      }
      CHECK(dendrogram_purity_exact(a) ==
            doctest::Approx(oracle::dendrogram_purity_pairs(a.topo, a.leaf, a.label))
                .epsilon(1e-12));
    }
  }
  SUBCASE("sampled estimator tracks the exact value") {
    std::mt19937_64 rng(99);
    LabeledAssignment a;
    a.topo = TreeTopology::complete(4);
    for (int i = 0; i < 2000; ++i) {
      a.leaf.push_back(int(rng() % 16));
      a.label.push_back(int(rng() % 4) == 0 ? 0 : 1);
    }
    const double exact = dendrogram_purity_exact(a);
    const double sampled = dendrogram_purity_sampled(a, 1000000, 17);
    CHECK(std::abs(exact - sampled) < 0.01);
  }
  SUBCASE("no same-class pair is rejected") {
    CHECK_THROWS_AS(dendrogram_purity_exact(make({0, 1}, {0, 1}, 1)), std::invalid_argument);
  }
}

TEST_CASE("class distance matrix") {
  SUBCASE("classes in sibling leaves") {
    auto a = make({0, 0, 1, 1}, {0, 0, 1, 1}, 2);
    auto matrix = class_distance_matrix(a);
    CHECK(matrix.distances(0, 0) == doctest::Approx(0.0));
    CHECK(matrix.distances(1, 1) == doctest::Approx(0.0));
    CHECK(matrix.distances(0, 1) == doctest::Approx(2.0));
    CHECK(matrix.distances(1, 0) == doctest::Approx(2.0));
  }
  SUBCASE("two classes uniformly over the same sibling leaves") {
    // n samples per (class, leaf) cell: off-diagonal mean is exactly 1 edge
    // pair-average; self-pair exclusion leaves the diagonal at 2n/(2n-1),
    // which converges to the same value.
    const int n = 50;
    std::vector<int> leaf, label;
    for (int c = 0; c < 2; ++c)
      for (int l = 0; l < 2; ++l)
        for (int i = 0; i < n; ++i) {
          leaf.push_back(l);
          label.push_back(c);
        }
    auto matrix = class_distance_matrix(make(leaf, label, 2));
    CHECK(matrix.distances(0, 1) == doctest::Approx(1.0));
    CHECK(matrix.distances(0, 0) == doctest::Approx(2.0 * n / (2.0 * n - 1)));
    CHECK(matrix.distances(0, 0) == doctest::Approx(matrix.distances(1, 1)));
    CHECK(matrix.distances(0, 0) == doctest::Approx(matrix.distances(0, 1)).epsilon(0.02));
  }
  SUBCASE("random instances match the pair-enumeration oracle and stay symmetric") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
      LabeledAssignment a;
      a.topo = TreeTopology::complete(3);
      for (int i = 0; i < 30; ++i) {
        a.leaf.push_back(int(rng() % 8));
        a.label.push_back(int(rng() % 3));
      }
      auto matrix = class_distance_matrix(a);
      auto expect = oracle::class_distances_pairs(a.topo, a.leaf, a.label, 3);
      CHECK((matrix.distances - expect).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((matrix.distances - matrix.distances.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("singleton class gets a flagged zero diagonal") {
    auto a = make({0, 1, 2}, {0, 0, 1}, 2);
    auto matrix = class_distance_matrix(a);
    CHECK(matrix.diagonal_flagged[1] == 1);
    CHECK(matrix.distances(1, 1) == 0.0);
    CHECK(matrix.diagonal_flagged[0] == 0);
  }
  SUBCASE("perfect separation keeps the diagonal dominant") {
    auto a = make({0, 0, 0, 3, 3, 3, 5, 5, 5}, {0, 0, 0, 1, 1, 1, 2, 2, 2}, 3);
    auto matrix = class_distance_matrix(a);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        if (r != c) CHECK(matrix.distances(r, r) < matrix.distances(r, c));
  }
}

TEST_CASE("metric scores are invariant under relabeling") {
  std::mt19937_64 rng(21);
  LabeledAssignment a;
  a.topo = TreeTopology::complete(3);
  for (int i = 0; i < 60; ++i) {
    a.leaf.push_back(int(rng() % 8));
    a.label.push_back(int(rng() % 3));
  }
  // relabel clusters by reflecting leaves and classes by a permutation
  LabeledAssignment b = a;
  for (auto& l : b.leaf) l = 7 - l;
  const int class_perm[3] = {2, 0, 1};
  for (auto& c : b.label) c = class_perm[c];

  CHECK(nmi(a) == doctest::Approx(nmi(b)).epsilon(1e-12));
  CHECK(acc(a) == doctest::Approx(acc(b)).epsilon(1e-12));
  CHECK(ari(a) == doctest::Approx(ari(b)).epsilon(1e-12));
  // reflection preserves tree distances, so purity is unchanged as well
  CHECK(dendrogram_purity_exact(a) == doctest::Approx(dendrogram_purity_exact(b)).epsilon(1e-12));
}

TEST_CASE("distance csv round-trips") {
  auto a = make({0, 0, 1, 2, 3, 3}, {0, 1, 0, 1, 1, 0}, 2);
  auto matrix = class_distance_matrix(a, {"alpha", "beta, with comma"});
  const std::string path = "/tmp/cohiclust_test_dist.csv";
  write_distance_csv(path, matrix);
  auto back = read_distance_csv(path);
  CHECK(back.class_names == matrix.class_names);
  CHECK((back.distances - matrix.distances).cwiseAbs().maxCoeff() < 1e-9);
}
