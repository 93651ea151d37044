#include "tranclr/random.hpp"
#include "tranclr/softalign.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace tranclr;
using Vec = Vector<double>;
using Mat = Matrix<double>;

namespace {

Vec random_unit(Rng& rng, int dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(dim);
  for (int k = 0; k < dim; ++k) v(k) = gauss(rng);
  return v.normalized();
}

Mat random_keys(Rng& rng, int dim, int count) {
  Mat m(dim, count);
  for (int j = 0; j < count; ++j) m.col(j) = random_unit(rng, dim);
  return m;
}

MemoryQueue<double> filled_queue(const Mat& keys, int capacity = -1) {
  MemoryQueue<double> q(capacity < 0 ? static_cast<int>(keys.cols()) : capacity, static_cast<int>(keys.rows()));
  q.enqueue(keys);
  return q;
}

long double cosine_ld(const Vec& a, const Vec& b) {
  long double dot = 0, na = 0, nb = 0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    dot += static_cast<long double>(a(k)) * b(k);
    na += static_cast<long double>(a(k)) * a(k);
    nb += static_cast<long double>(b(k)) * b(k);
  }
  return dot / std::sqrt(na * nb);
}

// Reference KL(softmax(pk/tk) || softmax(pq/tq)) in extended precision, written from the formula.
long double kl_reference(const std::vector<long double>& pk, const std::vector<long double>& pq, long double tk,
                         long double tq) {
  auto softmax = [](const std::vector<long double>& s, long double t) {
    std::vector<long double> e(s.size());
    const long double top = *std::max_element(s.begin(), s.end());
    long double z = 0;
    for (std::size_t j = 0; j < s.size(); ++j) z += e[j] = std::exp((s[j] - top) / t);
    for (auto& x : e) x /= z;
    return e;
  };
  const auto a = softmax(pk, tk), b = softmax(pq, tq);
  long double kl = 0;
  for (std::size_t j = 0; j < a.size(); ++j) kl += a[j] * std::log(a[j] / b[j]);
  return kl;
}

long double infonce_reference(const Vec& q, const Vec& k, const Mat& negatives, long double tau) {
  const long double pos = std::exp(cosine_ld(q, k) / tau);
  long double denom = pos;
  for (Eigen::Index j = 0; j < negatives.cols(); ++j) denom += std::exp(cosine_ld(q, negatives.col(j)) / tau);
  return -std::log(pos / denom);
}

template <typename F>
Vec central_difference(const Vec& x, F&& f, double h = 1e-6) {
  Vec g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vec plus = x, minus = x;
    plus(k) += h;
    minus(k) -= h;
    g(k) = (f(plus) - f(minus)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(MemoryQueue, EmptyPlusBatchKeepsInsertionOrder) {
  Rng rng = make_stream(1);
  const Mat keys = random_keys(rng, 4, 3);
  MemoryQueue<double> q(8, 4);
  q.enqueue(keys);
  EXPECT_EQ(q.fill(), 3);
  EXPECT_EQ(q.entries(), keys);
}

TEST(MemoryQueue, OverCapacityKeepsLastInOrder) {
  Rng rng = make_stream(2);
  const Mat keys = random_keys(rng, 4, 6);
  MemoryQueue<double> q(4, 4);
  q.enqueue(keys);
  EXPECT_EQ(q.fill(), 4);
  EXPECT_EQ(q.entries(), keys.rightCols(4));
}

TEST(MemoryQueue, SplitEnqueueMatchesConcatenatedReplay) {
  Rng rng = make_stream(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int cap = 1 + trial % 9;
    const int a = trial % 7, b = (trial * 3) % 11;
    const Mat keys = random_keys(rng, 3, a + b);
    MemoryQueue<double> split(cap, 3), joined(cap, 3);
    split.enqueue(keys.leftCols(a));
    split.enqueue(keys.rightCols(b));
    joined.enqueue(keys);
    EXPECT_TRUE(split == joined);
    // Oracle: survivors are the last min(cap, a+b) keys in order.
    const int keep = std::min(cap, a + b);
    EXPECT_EQ(split.entries(), keys.rightCols(keep));
  }
}

TEST(MemoryQueue, NonUnitKeyIsContractViolation) {
  MemoryQueue<double> q(4, 2);
  Mat bad(2, 1);
  bad << 1.0, 1.0;
  EXPECT_THROW(q.enqueue(bad), ContractViolation);
  EXPECT_EQ(q.fill(), 0);
  Mat wrong_dim = Mat::Identity(3, 1);
  EXPECT_THROW(q.enqueue(wrong_dim), std::invalid_argument);
}

TEST(TopK, EmptyQueueIsStateError) {
  MemoryQueue<double> q(4, 2);
  EXPECT_THROW(top_k(Vec::Ones(2).eval(), q, 1), StateError);
}

TEST(TopK, LargeKReturnsAllSorted) {
  Rng rng = make_stream(4);
  const auto q = filled_queue(random_keys(rng, 5, 10));
  const Vec t = random_unit(rng, 5);
  const auto set = top_k(t, q, 50);
  ASSERT_EQ(set.size(), 10);
  for (int j = 1; j < 10; ++j) EXPECT_GE(q.entry(set.indices[j - 1]).dot(t), q.entry(set.indices[j]).dot(t));
}

TEST(TopK, ArgmaxOfTwo) {
  Mat keys(2, 2);
  keys.col(0) << 0.9, std::sqrt(1 - 0.81);
  keys.col(1) << 0.1, std::sqrt(1 - 0.01);
  const auto q = filled_queue(keys);
  Vec t(2);
  t << 1.0, 0.0;
  EXPECT_EQ(top_k(t, q, 1).indices, std::vector<int>{0});
}

TEST(TopK, MatchesExhaustiveSortOracle) {
  Rng rng = make_stream(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat keys = random_keys(rng, 16, 64);
    const auto q = filled_queue(keys);
    const Vec t = random_unit(rng, 16);
    std::vector<std::pair<long double, int>> all;
    for (int j = 0; j < 64; ++j) all.emplace_back(-cosine_ld(t, keys.col(j)), j);
    std::sort(all.begin(), all.end());
    std::vector<int> expected;
    for (int j = 0; j < 8; ++j) expected.push_back(all[j].second);
    EXPECT_EQ(top_k(t, q, 8).indices, expected);
  }
}

TEST(TopK, TiesGoToSmallerPosition) {
  Mat keys(2, 4);
  keys.col(0) << 0, 1;
  keys.col(1) << 1, 0;
  keys.col(2) << 0, 1;
  keys.col(3) << 1, 0;
  const auto q = filled_queue(keys);
  Vec t(2);
  t << 1, 0;
  EXPECT_EQ(top_k(t, q, 2).indices, (std::vector<int>{1, 3}));
}

TEST(TopK, PermutationEquivariant) {
  Rng rng = make_stream(6);
  const Mat keys = random_keys(rng, 8, 40);
  std::vector<int> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Mat permuted(8, 40);
  for (int j = 0; j < 40; ++j) permuted.col(j) = keys.col(perm[j]);
  const Vec t = random_unit(rng, 8);
  const auto a = top_k(t, filled_queue(keys), 10);
  const auto b = top_k(t, filled_queue(permuted), 10);
  for (int j = 0; j < 10; ++j) EXPECT_EQ(perm[b.indices[j]], a.indices[j]);
}

TEST(SoftAlign, UniformSimilaritiesGiveZero) {
  Mat keys(2, 2);
  keys.col(0) << 1, 0;
  keys.col(1) << -1, 0;
  const auto q = filled_queue(keys);
  Vec x(2);
  x << 0, 1;
  EXPECT_EQ(soft_align_loss<double>(x, x, q, 2, 0.1, 0.05).value, 0.0);
}

TEST(SoftAlign, IdenticalQueryAndKeyAtEqualTemperatureGiveZero) {
  Rng rng = make_stream(7);
  const auto q = filled_queue(random_keys(rng, 6, 30));
  const Vec x = random_unit(rng, 6);
  EXPECT_NEAR(soft_align_loss<double>(x, x, q, 8, 0.07, 0.07).value, 0.0, 1e-15);
}

TEST(SoftAlign, TwoNeighbourHandCase) {
  // Keys arranged so cos(k, m) = (0.2, 0.1) and cos(q, m) = (0.1, 0.2) in 3-d.
  Mat m(3, 2);
  m.col(0) << 1, 0, 0;
  m.col(1) << 0, 1, 0;
  const auto queue = filled_queue(m);
  auto with_cos = [](double a, double b) {
    Vec v(3);
    v << a, b, std::sqrt(1 - a * a - b * b);
    return v;
  };
  const auto out = soft_align_loss<double>(with_cos(0.1, 0.2), with_cos(0.2, 0.1), queue, 2, 0.1, 0.05);
  const long double ref = kl_reference({0.2L, 0.1L}, {0.1L, 0.2L}, 0.05L, 0.1L);
  EXPECT_GT(out.value, 0.0);
  EXPECT_NEAR(out.value, static_cast<double>(ref), 1e-14);
}

TEST(SoftAlign, ZeroKIsConfigError) {
  Rng rng = make_stream(8);
  const auto q = filled_queue(random_keys(rng, 4, 4));
  const Vec x = random_unit(rng, 4);
  EXPECT_THROW(soft_align_loss<double>(x, x, q, 0, 0.1, 0.05), ConfigError);
  EXPECT_THROW(soft_align_loss<double>(x, x, q, 2, 0.0, 0.05), ConfigError);
}

TEST(SoftAlign, MatchesReferenceAndIsNonNegative) {
  Rng rng = make_stream(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat keys = random_keys(rng, 12, 50);
    const auto queue = filled_queue(keys);
    const Vec qv = random_unit(rng, 12), kv = random_unit(rng, 12);
    const auto out = soft_align_loss<double>(qv, kv, queue, 8, 0.1, 0.05);
    std::vector<long double> pk, pq;
    for (int j : out.neighbors.indices) {
      pk.push_back(cosine_ld(kv, keys.col(j)));
      pq.push_back(cosine_ld(qv, keys.col(j)));
    }
    EXPECT_GE(out.value, 0.0);
    EXPECT_NEAR(out.value, static_cast<double>(kl_reference(pk, pq, 0.05L, 0.1L)), 1e-12);
  }
}

TEST(SoftAlign, QueryGradientMatchesCentralDifferences) {
  Rng rng = make_stream(10);
  for (int trial = 0; trial < 30; ++trial) {
    const auto queue = filled_queue(random_keys(rng, 10, 40));
    const Vec kv = random_unit(rng, 10);
    const Vec qv = random_unit(rng, 10) * (0.5 + uniform01(rng));
    const auto out = soft_align_loss<double>(qv, kv, queue, 8, 0.1, 0.05);
    const Vec fd = central_difference(qv, [&](const Vec& x) {
      return soft_align_loss<double>(x, kv, queue, out.neighbors, 0.1, 0.05).value;
    });
    EXPECT_LE((fd - out.d_query).norm(), 1e-4 * std::max(1e-8, fd.norm()));
  }
}

TEST(SoftAlign, TargetAndQueueGradientsAreExactlyZero) {
  Rng rng = make_stream(11);
  const auto queue = filled_queue(random_keys(rng, 10, 40));
  const Vec kv = random_unit(rng, 10), qv = random_unit(rng, 10);
  const auto out = soft_align_loss<double>(qv, kv, queue, 8, 0.1, 0.05);
  EXPECT_TRUE(out.d_target.isZero(0.0));
  const auto inf = infonce_loss<double>(qv, kv, queue, 0.07);
  EXPECT_TRUE(inf.d_target.isZero(0.0));
}

TEST(InfoNce, EmptyQueueIsZero) {
  Rng rng = make_stream(12);
  MemoryQueue<double> q(4, 5);
  const Vec a = random_unit(rng, 5), b = random_unit(rng, 5);
  EXPECT_EQ(infonce_loss<double>(a, b, q, 0.07).value, 0.0);
}

TEST(InfoNce, OneOrthogonalNegativeHandCase) {
  Mat neg(2, 1);
  neg << 0, 1;
  const auto q = filled_queue(neg);
  Vec x(2);
  x << 1, 0;
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  EXPECT_NEAR(infonce_loss<double>(x, x, q, 1.0).value, expected, 1e-15);
  EXPECT_NEAR(expected, 0.3133, 5e-5);
}

TEST(InfoNce, DecreasesAsPositiveSimilarityGrows) {
  Rng rng = make_stream(13);
  const auto q = filled_queue(random_keys(rng, 3, 20));
  Vec x(3);
  x << 1, 0, 0;
  double previous = std::numeric_limits<double>::infinity();
  for (int s = 0; s <= 20; ++s) {
    const double angle = M_PI * (1.0 - s / 20.0);
    Vec k(3);
    k << std::cos(angle), std::sin(angle), 0;
    const double value = infonce_loss<double>(x, k, q, 0.2).value;
    EXPECT_LT(value, previous);
    previous = value;
  }
}

TEST(InfoNce, MatchesReferenceAndGradient) {
  Rng rng = make_stream(14);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat keys = random_keys(rng, 8, 30);
    const auto queue = filled_queue(keys, 40);
    const Vec qv = random_unit(rng, 8) * 1.3, kv = random_unit(rng, 8);
    const auto out = infonce_loss<double>(qv, kv, queue, 0.07);
    EXPECT_NEAR(out.value, static_cast<double>(infonce_reference(qv, kv, keys, 0.07L)), 1e-10);
    const Vec fd = central_difference(qv, [&](const Vec& x) { return infonce_loss<double>(x, kv, queue, 0.07).value; });
    EXPECT_LE((fd - out.d_query).norm(), 1e-4 * std::max(1e-8, fd.norm()));
  }
}
