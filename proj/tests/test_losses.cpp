#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "tcl/error.hpp"
#include "tcl/gradcheck.hpp"
#include "tcl/losses.hpp"

using namespace tcl;

namespace {

EmbeddingBatch batch_of(std::vector<std::vector<double>> rows, std::vector<int> labels) {
  return {Matrix::from_rows(rows), std::move(labels), {}};
}

CenterBank bank_of(std::vector<std::vector<double>> rows) { return {Matrix::from_rows(rows)}; }

// The 1-d configuration used throughout: c0 = 0, c1 = 2, f = 0.5 of class 0, m = 5.
EmbeddingBatch one_sample() { return batch_of({{0.5}}, {0}); }
CenterBank two_centers() { return bank_of({{0.0}, {2.0}}); }

}  // namespace

TEST(HalfSqDist, HandValues) {
  const std::vector<double> a{1, 2};
  EXPECT_EQ(half_sq_dist(a, a), 0.0);
  EXPECT_DOUBLE_EQ(half_sq_dist(std::vector<double>{0}, std::vector<double>{2}), 2.0);
  EXPECT_DOUBLE_EQ(half_sq_dist(std::vector<double>{1, 1}, std::vector<double>{4, 5}), 12.5);
}

TEST(HalfSqDist, SymmetricAndRejectsMismatch) {
  const std::vector<double> a{0.3, -1.2, 4.0}, b{2.0, 0.5, -1.0};
  EXPECT_EQ(half_sq_dist(a, b), half_sq_dist(b, a));
  EXPECT_THROW(half_sq_dist(a, std::vector<double>{1.0}), ContractError);
}

TEST(TclForward, SingleActiveSample) {
  const auto r = tcl_forward(one_sample(), two_centers(), 5.0);
  EXPECT_DOUBLE_EQ(r.loss, 4.0);
  ASSERT_EQ(r.nearest_negative.size(), 1u);
  EXPECT_EQ(r.nearest_negative[0], 1);
  EXPECT_TRUE(r.active[0]);
}

TEST(TclForward, HingeExactlyZeroIsInactive) {
  const auto r = tcl_forward(batch_of({{0.0}}, {0}), bank_of({{0.0}, {std::sqrt(10.0)}}), 5.0);
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
  EXPECT_FALSE(r.active[0]);
  const auto g = tcl_backward(r, batch_of({{0.0}}, {0}), bank_of({{0.0}, {std::sqrt(10.0)}}));
  EXPECT_EQ(g(0, 0), 0.0);
}

TEST(TclForward, SumVersusMean) {
  const auto b = batch_of({{0.5}, {0.5}}, {0, 0});
  EXPECT_DOUBLE_EQ(tcl_forward(b, two_centers(), 5.0, Reduction::kSum).loss, 8.0);
  EXPECT_DOUBLE_EQ(tcl_forward(b, two_centers(), 5.0, Reduction::kMean).loss, 4.0);
}

TEST(TclForward, NeedsANegativeCenter) {
  try {
    tcl_forward(one_sample(), bank_of({{0.0}}), 5.0);
    FAIL() << "expected a contract error";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("TCL undefined without a negative center"),
              std::string::npos);
  }
}

TEST(TclForward, NearestNegativeTiesGoToLowestIndex) {
  // Class 2 sample equidistant from centers 0 and 1.
  const auto r = tcl_forward(batch_of({{0.0, 0.0}}, {2}),
                             bank_of({{1.0, 0.0}, {-1.0, 0.0}, {0.0, 3.0}}), 1.0);
  EXPECT_EQ(r.nearest_negative[0], 0);
}

TEST(TclBackward, HandGradientAndMeanScaling) {
  const auto c = two_centers();
  const auto r = tcl_forward(one_sample(), c, 5.0);
  EXPECT_DOUBLE_EQ(tcl_backward(r, one_sample(), c)(0, 0), 2.0);

  const auto b = batch_of({{0.5}, {0.5}}, {0, 0});
  const auto rm = tcl_forward(b, c, 5.0, Reduction::kMean);
  const auto gm = tcl_backward(rm, b, c);
  EXPECT_DOUBLE_EQ(gm(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(gm(1, 0), 1.0);
}

TEST(TclBackward, ActiveRowsAreExactCenterDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = sample_tcl(rng);
    const auto r = tcl_forward(s.batch, s.centers, s.margin);
    const auto g = tcl_backward(r, s.batch, s.centers);
    for (std::size_t i = 0; i < s.batch.size(); ++i) {
      for (std::size_t k = 0; k < s.centers.dim(); ++k) {
        const double expected =
            r.active[i] ? s.centers.centers(r.nearest_negative[i], k) -
                              s.centers.centers(s.batch.labels[i], k)
                        : 0.0;
        EXPECT_EQ(g(i, k), expected);
      }
    }
  }
}

TEST(TclCenterUpdate, HandValues) {
  const auto c = two_centers();
  const auto r = tcl_forward(one_sample(), c, 5.0);
  const auto dc = tcl_center_update(r, one_sample(), c);
  EXPECT_DOUBLE_EQ(dc(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(dc(1, 0), 0.75);
}

TEST(TclCenterUpdate, ZeroWithoutActiveSamples) {
  const auto b = batch_of({{0.0}}, {0});
  const auto c = bank_of({{0.0}, {10.0}});
  const auto r = tcl_forward(b, c, 1.0);
  ASSERT_FALSE(r.active[0]);
  const auto dc = tcl_center_update(r, b, c);
  for (double v : dc.flat()) EXPECT_EQ(v, 0.0);
}

TEST(TclCenterUpdate, SmallStepNeverIncreasesLoss) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = sample_tcl(rng, 1e-3, true);
    const auto r = tcl_forward(s.batch, s.centers, s.margin);
    const auto dc = tcl_center_update(r, s.batch, s.centers);
    CenterBank moved = s.centers;
    axpy(1e-3, dc.flat(), moved.centers.flat());
    EXPECT_LE(tcl_forward(s.batch, moved, s.margin).loss, r.loss);
  }
}

TEST(TclProperties, TranslationInvariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 4.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = sample_tcl(rng);
    const double before = tcl_forward(s.batch, s.centers, s.margin).loss;
    std::vector<double> t(s.centers.dim());
    for (double& v : t) v = normal(rng);
    for (std::size_t i = 0; i < s.batch.size(); ++i) axpy(1.0, t, s.batch.features.row(i));
    for (std::size_t j = 0; j < s.centers.num_classes(); ++j) axpy(1.0, t, s.centers.centers.row(j));
    EXPECT_NEAR(tcl_forward(s.batch, s.centers, s.margin).loss, before, 1e-9);
  }
}

TEST(TclProperties, ZeroLossCharacterisation) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = sample_tcl(rng);
    const auto r = tcl_forward(s.batch, s.centers, s.margin);
    bool all_satisfied = true;
    for (std::size_t i = 0; i < s.batch.size(); ++i) {
      const int y = s.batch.labels[i];
      double nearest = INFINITY;
      for (std::size_t j = 0; j < s.centers.num_classes(); ++j) {
        if (static_cast<int>(j) == y) continue;
        nearest = std::min(nearest, half_sq_dist(s.batch.features.row(i), s.centers.centers.row(j)));
      }
      const double pos = half_sq_dist(s.batch.features.row(i), s.centers.centers.row(y));
      if (pos + s.margin > nearest) all_satisfied = false;
      EXPECT_GE(r.per_sample_loss[i], 0.0);
      EXPECT_EQ(r.active[i], r.per_sample_loss[i] > 0.0);
      EXPECT_NE(r.nearest_negative[i], y);
    }
    EXPECT_EQ(r.loss == 0.0, all_satisfied);
  }
}

TEST(TclProperties, PermutingSamplesPermutesOutputs) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = sample_tcl(rng);
    const std::size_t m = s.batch.size();
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    EmbeddingBatch p{Matrix(m, s.centers.dim()), std::vector<int>(m), {}};
    for (std::size_t i = 0; i < m; ++i) {
      std::copy(s.batch.features.row(perm[i]).begin(), s.batch.features.row(perm[i]).end(),
                p.features.row(i).begin());
      p.labels[i] = s.batch.labels[perm[i]];
    }
    const auto a = tcl_forward(s.batch, s.centers, s.margin);
    const auto b = tcl_forward(p, s.centers, s.margin);
    EXPECT_NEAR(a.loss, b.loss, 1e-12);
    for (std::size_t i = 0; i < m; ++i) {
      EXPECT_EQ(b.per_sample_loss[i], a.per_sample_loss[perm[i]]);
      EXPECT_EQ(b.nearest_negative[i], a.nearest_negative[perm[i]]);
    }
  }
}

TEST(TclProperties, DistanceCountsAreLinearInBatchAndClasses) {
  for (std::size_t m : {1u, 5u, 16u}) {
    for (std::size_t k : {2u, 7u, 20u}) {
      EmbeddingBatch b{Matrix(m, 3, 0.1), std::vector<int>(m, 0), {}};
      CenterBank c{Matrix(k, 3)};
      for (std::size_t j = 0; j < k; ++j) c.centers(j, 0) = static_cast<double>(j);
      OpCounts counts;
      tcl_forward(b, c, 1.0, Reduction::kSum, &counts);
      EXPECT_EQ(counts.positive_distances, m);
      EXPECT_EQ(counts.negative_distances, m * (k - 1));
    }
  }
}

TEST(TclGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = sample_tcl(rng);
    EXPECT_LT(tcl_feature_error(s, Reduction::kSum, 1e-5), 1e-5);
    EXPECT_LT(tcl_feature_error(s, Reduction::kMean, 1e-5), 1e-5);
  }
}

TEST(CenterLoss, HandValues) {
  const auto r = center_loss(batch_of({{3.0}}, {0}), bank_of({{1.0}, {9.0}}));
  EXPECT_DOUBLE_EQ(r.loss, 2.0);
  EXPECT_DOUBLE_EQ((*r.grad_features)(0, 0), 2.0);

  const auto z = center_loss(batch_of({{1.0}}, {0}), bank_of({{1.0}, {9.0}}));
  EXPECT_EQ(z.loss, 0.0);
  EXPECT_EQ((*z.grad_features)(0, 0), 0.0);
  EXPECT_EQ((*z.center_update)(0, 0), 0.0);

  const auto two = center_loss(batch_of({{1.0}, {3.0}}, {0, 0}), bank_of({{0.0}, {9.0}}));
  EXPECT_DOUBLE_EQ((*two.center_update)(0, 0), 4.0 / 3.0);
  EXPECT_EQ((*two.center_update)(1, 0), 0.0);
}

TEST(CenterLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = sample_tcl(rng);
    EXPECT_LT(center_feature_error(s.batch, s.centers, 1e-5), 1e-5);
  }
}

TEST(TripletLoss, HandValue) {
  const auto b = batch_of({{0.0}, {1.0}, {3.0}}, {0, 0, 1});
  // Anchor 0 (p=1, n=3): 5 + 0.5 - 4.5 = 1. Anchor 1 (p=0, n=3): 5 + 0.5 - 2 = 3.5.
  const auto all = triplet_loss(b, 5.0, TripletStrategy::kBatchAll);
  EXPECT_DOUBLE_EQ(all.loss, (1.0 + 3.5) / 2.0);

  const auto single = triplet_loss(batch_of({{0.0}, {1.0}, {3.0}}, {0, 0, 1}), 5.0,
                                   TripletStrategy::kBatchHard);
  EXPECT_DOUBLE_EQ(single.loss, (1.0 + 3.5) / 2.0);
}

TEST(TripletLoss, SatisfiedMarginsGiveZero) {
  const auto b = batch_of({{0.0}, {0.1}, {10.0}, {10.2}}, {0, 0, 1, 1});
  for (auto strategy : {TripletStrategy::kBatchAll, TripletStrategy::kBatchHard}) {
    const auto r = triplet_loss(b, 1.0, strategy);
    EXPECT_EQ(r.loss, 0.0);
    for (double v : r.grad_features->flat()) EXPECT_EQ(v, 0.0);
  }
}

TEST(TripletLoss, DegenerateBatchThrows) {
  EXPECT_THROW(triplet_loss(batch_of({{0.0}, {1.0}}, {0, 0}), 1.0, TripletStrategy::kBatchAll),
               DegenerateBatch);
  EXPECT_THROW(triplet_loss(batch_of({{0.0}, {1.0}}, {0, 1}), 1.0, TripletStrategy::kBatchHard),
               DegenerateBatch);
}

TEST(TripletLoss, EnumerationCounts) {
  const std::size_t m = 16;
  EmbeddingBatch b{Matrix(m, 2), std::vector<int>(m), {}};
  for (std::size_t i = 0; i < m; ++i) {
    b.labels[i] = static_cast<int>(i % 4);
    b.features(i, 0) = static_cast<double>(i);
  }
  OpCounts counts;
  triplet_loss(b, 1.0, TripletStrategy::kBatchAll, &counts);
  EXPECT_EQ(counts.triples_enumerated, m * (m - 1) * m);
  // 4 classes of 4: each anchor has 3 positives and 12 negatives.
  EXPECT_EQ(counts.valid_triples, m * 3 * 12);
}

TEST(TripletLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (auto strategy : {TripletStrategy::kBatchAll, TripletStrategy::kBatchHard}) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto b = sample_triplet_batch(rng, 2.0, strategy);
      EXPECT_LT(triplet_feature_error(b, 2.0, strategy, 1e-5), 1e-5);
    }
  }
}

TEST(SoftmaxCe, UniformLogits) {
  const std::vector<int> y{0};
  const auto r = softmax_ce(Matrix::from_rows({{0.0, 0.0}}), y);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ((*r.grad_logits)(0, 0), -0.5);
  EXPECT_DOUBLE_EQ((*r.grad_logits)(0, 1), 0.5);

  const std::vector<int> y2{0, 0};
  const auto r2 = softmax_ce(Matrix::from_rows({{0.0, 0.0}, {0.0, 0.0}}), y2);
  EXPECT_DOUBLE_EQ((*r2.grad_logits)(0, 0), -0.25);
  EXPECT_DOUBLE_EQ((*r2.grad_logits)(1, 1), 0.25);
}

TEST(SoftmaxCe, LargeLogitsStayFinite) {
  const std::vector<int> y{0};
  const auto r = softmax_ce(Matrix::from_rows({{1000.0, 0.0}}), y);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
}

TEST(SoftmaxCe, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::uniform_int_distribution<std::size_t> dim(2, 6), rows(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix logits(rows(rng), dim(rng));
    for (double& v : logits.flat()) v = normal(rng);
    std::vector<int> labels(logits.rows());
    for (int& y : labels) y = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, logits.cols() - 1)(rng));
    EXPECT_LT(softmax_logit_error(logits, labels, 1e-5), 1e-6);
  }
}

TEST(CombinedLoss, WeightedSum) {
  LossConfig cfg;  // tcl+softmax, lambda 0.01, m 5
  const auto r = combined_loss(one_sample(), Matrix::from_rows({{0.0, 0.0}}), two_centers(), cfg);
  EXPECT_NEAR(r.loss, 0.01 * 4.0 + std::log(2.0), 1e-15);
  EXPECT_NEAR(r.loss, 0.7331, 5e-5);
  EXPECT_DOUBLE_EQ((*r.grad_features)(0, 0), 0.01 * 2.0);
  ASSERT_TRUE(r.center_update.has_value());
  EXPECT_DOUBLE_EQ((*r.center_update)(0, 0), 0.25);
}

TEST(CombinedLoss, ZeroLambdaIsPureSoftmax) {
  LossConfig cfg;
  cfg.lambda = 0.0;
  const Matrix logits = Matrix::from_rows({{0.3, -1.0}});
  const std::vector<int> y{0};
  const auto r = combined_loss(one_sample(), logits, two_centers(), cfg);
  EXPECT_EQ(r.loss, softmax_ce(logits, y).loss);
  EXPECT_EQ(*r.grad_logits, *softmax_ce(logits, y).grad_logits);
  for (double v : r.grad_features->flat()) EXPECT_EQ(v, 0.0);
}

TEST(CombinedLoss, FeatureGradientIsScaledTclTerm) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = sample_tcl(rng);
    Matrix logits(s.batch.size(), s.centers.num_classes(), 0.1);
    LossConfig cfg;
    cfg.margin = s.margin;
    cfg.lambda = 0.37;
    const auto joint = combined_loss(s.batch, logits, s.centers, cfg);
    const auto tr = tcl_forward(s.batch, s.centers, s.margin);
    const auto g = tcl_backward(tr, s.batch, s.centers);
    for (std::size_t k = 0; k < g.size(); ++k) {
      EXPECT_DOUBLE_EQ(joint.grad_features->flat()[k], 0.37 * g.flat()[k]);
    }
  }
}

TEST(CombinedLoss, StandaloneKindsHaveNoLogitGradient) {
  LossConfig cfg;
  cfg.kind = LossKind::kTcl;
  const auto r = combined_loss(one_sample(), Matrix::from_rows({{0.0, 0.0}}), two_centers(), cfg);
  EXPECT_DOUBLE_EQ(r.loss, 4.0);
  EXPECT_FALSE(r.grad_logits.has_value());
}

TEST(LossKinds, ParseRoundTrip) {
  for (auto k : {LossKind::kSoftmax, LossKind::kTriplet, LossKind::kCenter, LossKind::kTcl,
                 LossKind::kTclSoftmax, LossKind::kCenterSoftmax}) {
    EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_loss_kind("softmax+center"), LossKind::kCenterSoftmax);
  EXPECT_THROW(parse_loss_kind("contrastive"), ConfigError);
  LossConfig bad;
  bad.margin = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(FiniteDiff, QuadraticIsExact) {
  const ScalarFunction f = [](std::span<const double> x) { return 0.5 * dot(x, x); };
  const std::vector<double> x{0.3, -2.0, 7.5, 1e-3};
  EXPECT_LT(finite_diff_check(f, x, x, 1e-5), 1e-10);
}

TEST(FiniteDiff, NonFiniteEvaluationThrows) {
  const ScalarFunction f = [](std::span<const double> x) { return std::log(x[0]); };
  const std::vector<double> x{0.0}, g{1.0};
  EXPECT_THROW(finite_diff_check(f, x, g, 1e-5), NumericError);
}
