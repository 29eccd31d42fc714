#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "ctos/error.hpp"
#include "ctos/ordersel.hpp"

using namespace ctos;

namespace {

ScoreMatrix from_rows(const Matrix& a) {
  ScoreMatrix s{a, {}};
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    s.task_ids.push_back(static_cast<int>(i));
    s.scores(i, i) = NAN;
  }
  return s;
}

TaskBatch small_batch(int n, std::uint64_t seed) {
  SuiteConfig c;
  c.task_count = std::max(n, 2);
  c.samples_per_class = 20;
  c.seed = seed;
  auto b = generate_synthetic_suite(c);
  b.tasks.resize(static_cast<std::size_t>(n));
  return b;
}

ProbeConfig quick_probe(std::uint64_t seed = 3) {
  ProbeConfig p;
  p.epochs = 3;
  p.samples_per_class = 5;
  p.seed = seed;
  return p;
}

}  // namespace

TEST_CASE("hand-executed 3x3 trace") {
  Matrix a(3, 3);
  a << 0, 1, 2, 3, 0, 4, 0, 1, 0;
  const auto sel = greedy_order(from_rows(a));
  CHECK(sel.order == std::vector<int>{2, 0, 1});
  REQUIRE(sel.steps.size() == 2);
  CHECK(sel.steps[0].candidates == std::vector<int>{0, 1, 2});
  CHECK(sel.steps[0].totals == std::vector<double>{3, 7, 1});
  CHECK(sel.steps[0].chosen == 2);
  CHECK(sel.steps[1].candidates == std::vector<int>{0, 1});
  CHECK(sel.steps[1].totals == std::vector<double>{1, 3});
  CHECK(sel.steps[1].chosen == 0);
}

TEST_CASE("singleton and all-equal matrices") {
  CHECK(greedy_order(from_rows(Matrix::Zero(1, 1))).order == std::vector<int>{0});
  CHECK(greedy_order(from_rows(Matrix::Constant(5, 5, 0.7))).order == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("matches an independent re-implementation on random matrices") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(1, 5);
  std::uniform_int_distribution<int> coarse(-3, 3);  // integer entries make ties common
  std::normal_distribution<double> fine;
  for (int draw = 0; draw < 100; ++draw) {
    const int n = size(rng);
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = draw % 2 ? coarse(rng) : fine(rng);
    Matrix clean = a;
    clean.diagonal().setZero();
    const auto sel = greedy_order(from_rows(a));
    CHECK(sel.order == oracle::greedy_reference(clean));
    auto sorted = sel.order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> iota(static_cast<std::size_t>(n));
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
  }
}

TEST_CASE("relabeling equivariance without ties") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int draw = 0; draw < 20; ++draw) {
    const int n = 5;
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = nd(rng);
    std::vector<int> pi(n);
    std::iota(pi.begin(), pi.end(), 0);
    std::shuffle(pi.begin(), pi.end(), rng);
    Matrix b(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) b(pi[i], pi[j]) = a(i, j);
    const auto oa = greedy_order(from_rows(a)).order;
    const auto ob = greedy_order(from_rows(b)).order;
    for (int k = 0; k < n; ++k) CHECK(ob[k] == pi[oa[k]]);
    // First pick is the row with the smallest off-diagonal sum.
    Matrix clean = a;
    clean.diagonal().setZero();
    Eigen::Index first;
    clean.rowwise().sum().minCoeff(&first);
    CHECK(oa[0] == first);
  }
}

TEST_CASE("pairwise score matrix: count, stub, determinism") {
  const auto batch = small_batch(3, 2);
  const auto scorer = make_scorer({});
  const auto m = pairwise_score_matrix(batch, scorer, quick_probe());
  int populated = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) {
        CHECK(std::isnan(m.scores(i, j)));
      } else {
        CHECK(std::isfinite(m.scores(i, j)));
        ++populated;
      }
    }
  CHECK(populated == 6);
  const auto again = pairwise_score_matrix(batch, scorer, quick_probe());
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(m.scores(i, j) == again.scores(i, j));
  const auto stub = pairwise_score_matrix(batch, constant_scorer(4.0), quick_probe());
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(stub.scores(i, j) == 4.0);
}

TEST_CASE("probes never read eval splits") {
  auto batch = small_batch(3, 4);
  const auto scorer = make_scorer({});
  const auto base = pairwise_score_matrix(batch, scorer, quick_probe());
  for (auto& t : batch.tasks) t.eval.inputs.setConstant(1e6);
  const auto poisoned = pairwise_score_matrix(batch, scorer, quick_probe());
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(base.scores(i, j) == poisoned.scores(i, j));
}

TEST_CASE("selection is equivariant to task permutation within a batch") {
  const auto batch = small_batch(4, 8);
  auto shuffled = batch;
  std::reverse(shuffled.tasks.begin(), shuffled.tasks.end());
  const auto scorer = make_scorer({});
  const std::vector<TaskBatch> one = {batch}, two = {shuffled};
  const auto a = hctos_multibatch(one, scorer, MetricId::LogME, quick_probe());
  const auto b = hctos_multibatch(two, scorer, MetricId::LogME, quick_probe());
  CHECK(a[0].task_ids == b[0].task_ids);
}

TEST_CASE("multi-batch selections follow batch sizes") {
  SuiteConfig c;
  c.task_count = 5;
  c.samples_per_class = 20;
  const auto batches = partition_batches(generate_synthetic_suite(c), std::vector<int>{3, 2});
  const auto scorer = make_scorer({});
  const auto sels = hctos_multibatch(batches, scorer, MetricId::LogME, quick_probe());
  REQUIRE(sels.size() == 2);
  CHECK(sels[0].order.size() == 3);
  CHECK(sels[1].order.size() == 2);
  CHECK(sels[1].task_ids[0] >= 3);
  const std::vector<TaskBatch> first = {batches[0]};
  const auto single = hctos_multibatch(first, scorer, MetricId::LogME, quick_probe());
  CHECK(single[0].order == greedy_order(pairwise_score_matrix(batches[0], scorer, quick_probe())).order);
  const auto csv = format_score_csv(sels[0].scores);
  CHECK(csv.rfind("t,i,score\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
}

TEST_CASE("probe config validation") {
  auto p = quick_probe();
  p.samples_per_class = 0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = quick_probe();
  p.epochs = 0;
  CHECK_THROWS_AS(p.validate(), Error);
}
