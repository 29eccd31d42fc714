#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "ctos/error.hpp"
#include "ctos/metrics.hpp"

using namespace ctos;

namespace {

Matrix random_stochastic(int n, int z, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Matrix p(n, z);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < z; ++k) p(i, k) = u(rng);
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

struct Labeled {
  Matrix x;
  std::vector<int> y;
};

Labeled blobs(int n, int h, int c, double sep, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Labeled out{Matrix(n, h), {}};
  for (int i = 0; i < n; ++i) {
    const int y = i % c;
    out.y.push_back(y);
    for (int j = 0; j < h; ++j) out.x(i, j) = (j == y % h ? sep * (y + 1) : 0.0) + nd(rng);
  }
  return out;
}

Labeled permuted(const Labeled& a, std::mt19937_64& rng) {
  std::vector<int> idx(a.y.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Labeled out{Matrix(a.x.rows(), a.x.cols()), {}};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = a.x.row(idx[i]);
    out.y.push_back(a.y[static_cast<std::size_t>(idx[i])]);
  }
  return out;
}

}  // namespace

TEST_CASE("LogME matches the grid-search evidence oracle") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 5; ++i) {
    const auto inst = oracle::random_logme_instance(rng);
    bool boundary = false;
    const double expected = oracle::grid_logme(inst.features, inst.labels, &boundary);
    CHECK_FALSE(boundary);
    CHECK(std::abs(logme(inst.features, inst.labels) - expected) <= 1e-3);
  }
}

TEST_CASE("LogME evidence agrees with the oracle at fixed precisions") {
  std::mt19937_64 rng(5);
  const auto inst = oracle::random_logme_instance(rng);
  Vector y(inst.features.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = inst.labels[static_cast<std::size_t>(i)] == 0;
  const auto g = oracle::grid_evidence(inst.features, y, std::log(0.7), std::log(0.7), 1.0);
  CHECK(logme_evidence(inst.features, y, 0.7, 0.7) == doctest::Approx(g.best).epsilon(1e-10));
}

TEST_CASE("LogME stability under row duplication") {
  // The per-sample score moves by O(h log n / n) when n doubles, so the
  // instances need n well above h for the bound to be meaningful.
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    const auto a = blobs(100, 2, 3, 2.0, rng);
    Matrix twice(200, 2);
    twice << a.x, a.x;
    auto y2 = a.y;
    y2.insert(y2.end(), a.y.begin(), a.y.end());
    CHECK(std::abs(logme(twice, y2) - logme(a.x, a.y)) < 0.05);
  }
}

TEST_CASE("LogME rejects non-finite features") {
  Matrix x = Matrix::Ones(4, 2);
  x(1, 1) = NAN;
  CHECK_THROWS_AS(logme(x, std::vector<int>{0, 1, 0, 1}), Error);
}

TEST_CASE("LEEP closed-form cases") {
  Matrix onehot = Matrix::Zero(6, 3);
  std::vector<int> y = {0, 1, 2, 0, 1, 2};
  for (int i = 0; i < 6; ++i) onehot(i, y[static_cast<std::size_t>(i)]) = 1.0;
  CHECK(std::abs(leep(onehot, y)) <= 1e-12);
  const Matrix uniform = Matrix::Constant(8, 4, 0.25);
  CHECK(std::abs(leep(uniform, std::vector<int>{0, 1, 0, 1, 0, 1, 0, 1}) + std::log(2.0)) <= 1e-12);
}

TEST_CASE("LEEP matches the definitional oracle") {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    const auto p = random_stochastic(30, 4, rng);
    std::vector<int> y;
    for (int i = 0; i < 30; ++i) y.push_back(static_cast<int>(rng() % 3));
    const double v = leep(p, y);
    CHECK(std::abs(v - oracle::leep_definition(p, y)) <= 1e-12);
    CHECK(v <= 0.0);
  }
}

TEST_CASE("LEEP excludes empty source columns and rejects bad rows") {
  Matrix p(4, 3);
  p << 0.5, 0.5, 0, 0.2, 0.8, 0, 0.9, 0.1, 0, 0.3, 0.7, 0;
  const std::vector<int> y = {0, 1, 0, 1};
  CHECK(std::isfinite(leep(p, y)));
  CHECK(std::abs(leep(p, y) - oracle::leep_definition(p, y)) <= 1e-12);
  p(0, 0) = 0.7;
  CHECK_THROWS_AS(leep(p, y), Error);
}

TEST_CASE("TransRate cases") {
  std::mt19937_64 rng(3);
  const auto a = blobs(30, 3, 1, 0.0, rng);
  CHECK(std::abs(transrate(a.x, a.y)) <= 1e-10);
  CHECK(transrate(Matrix::Zero(10, 3), std::vector<int>{0, 1, 0, 1, 0, 1, 0, 1, 0, 1}) == 0.0);
  const auto far = blobs(60, 2, 2, 8.0, rng);
  const auto near = blobs(60, 2, 2, 0.2, rng);
  CHECK(transrate(far.x, far.y) > transrate(near.x, near.y));
  for (int rep = 0; rep < 10; ++rep) {
    const auto b = blobs(25, 4, 3, 1.0, rng);
    CHECK(transrate(b.x, b.y, 0.05) >= -1e-10);
  }
}

TEST_CASE("GBC cases") {
  Matrix same(4, 2);
  same << 0, 0, 1, 1, 0, 0, 1, 1;
  CHECK(std::abs(gbc(same, std::vector<int>{0, 0, 1, 1}) + 1.0) <= 1e-12);
  Matrix apart(4, 1);
  apart << 0, 1, 200, 201;  // 400 sigma apart
  CHECK(gbc(apart, std::vector<int>{0, 0, 1, 1}) > -1e-6);
  CHECK_THROWS_AS(gbc(apart, std::vector<int>{0, 0, 0, 1}), Error);
}

TEST_CASE("GBC matches the definitional oracle on three classes") {
  Matrix x(9, 2);
  x << 0, 0, 1, 0.5, 2, -0.5,  //
      3, 1, 4, 1.5, 5, 0.5,    //
      1, 3, 1.2, 4, 0.8, 5;
  const std::vector<int> y = {0, 0, 0, 1, 1, 1, 2, 2, 2};
  const double v = gbc(x, y);
  CHECK(std::abs(v - oracle::gbc_definition(x, y)) <= 1e-12);
  CHECK(v > -3.0);
  CHECK(v <= 0.0);
}

TEST_CASE("all metrics are invariant to joint row permutation") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 5; ++rep) {
    const auto a = blobs(30, 3, 3, 1.5, rng);
    const auto b = permuted(a, rng);
    CHECK(std::abs(logme(a.x, a.y) - logme(b.x, b.y)) <= 1e-10);
    CHECK(std::abs(transrate(a.x, a.y) - transrate(b.x, b.y)) <= 1e-10);
    CHECK(std::abs(gbc(a.x, a.y) - gbc(b.x, b.y)) <= 1e-10);
    Matrix p = random_stochastic(30, 3, rng);
    Labeled pa{p, a.y};
    std::mt19937_64 r2(rep);
    const auto pb = permuted(pa, r2);
    CHECK(std::abs(leep(pa.x, pa.y) - leep(pb.x, pb.y)) <= 1e-10);
  }
}

TEST_CASE("ranking sanity: near-duplicate beats label-shuffled target") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> jitter(0.0, 0.01);
  auto model = init_model(2, 8, 3);
  // A head that reads the first feature so LEEP sees class structure.
  model.heads[0] = Dense{Matrix::Zero(8, 2), Vector::Zero(2)};
  model.heads[0].weight.row(0) << -6.0, 6.0;
  const auto src = blobs(60, 2, 2, 3.0, rng);
  LabeledSet near{src.x, src.y, 2};
  for (Eigen::Index i = 0; i < near.inputs.size(); ++i) near.inputs.data()[i] += jitter(rng);
  LabeledSet shuffled{src.x, src.y, 2};
  std::shuffle(shuffled.labels.begin(), shuffled.labels.end(), rng);
  for (auto id : {MetricId::LogME, MetricId::LEEP, MetricId::TransRate, MetricId::GBC}) {
    CAPTURE(to_string(id));
    MetricOptions opts{id};
    CHECK(tr(opts, model, near, 0).value > tr(opts, model, shuffled, 0).value);
  }
}

TEST_CASE("tr dispatch") {
  std::mt19937_64 rng(1);
  auto model = init_model(3, 6, 2);
  model.heads[4] = Dense{Matrix::Random(6, 2), Vector::Zero(2)};
  const auto d = blobs(20, 3, 2, 1.0, rng);
  const LabeledSet target{d.x, d.y, 2};
  const auto score = tr({MetricId::LogME}, model, target, 4);
  CHECK(score.value == logme(forward_features(model, d.x), d.y));
  CHECK(score.metric == MetricId::LogME);
  CHECK(tr({MetricId::LogME}, model, target, 4).value == score.value);
  CHECK(tr({MetricId::LEEP}, model, target, 4).value == leep(head_probabilities(model, d.x, 4), d.y));
  CHECK_THROWS_AS(tr({MetricId::LEEP}, model, target, 5), Error);
  CHECK(constant_scorer(2.5)(model, target, 0) == 2.5);
  CHECK(make_scorer({MetricId::GBC})(model, target, 4) == gbc(forward_features(model, d.x), d.y));
  CHECK(parse_metric("transrate") == MetricId::TransRate);
  CHECK_THROWS_AS(parse_metric("nce"), Error);
}
