#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mgaze/errors.hpp"
#include "mgaze/losses.hpp"
#include "mgaze/manifold.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace mgaze;
using testing_support::away_from_zero;
using testing_support::grad_or_zero;
using testing_support::max_abs;
using testing_support::random_matrix;

TEST(GazeLoss, ZeroWhenEqual) {
  const Tensor y = Tensor::matrix(2, 2, {0.1, 0.2, -0.3, 0.4});
  EXPECT_EQ(gaze_loss(y, y).item(), 0.0);
}

TEST(GazeLoss, HandExample) {
  const Tensor pred = Tensor::matrix(1, 2, {0.6, -0.1});
  const Tensor label = Tensor::matrix(1, 2, {0.5, -0.3});
  EXPECT_NEAR(gaze_loss(pred, label).item(), 0.15, 1e-15);
}

TEST(GazeLoss, OrderInvariantAndShapeChecked) {
  const Tensor p = Tensor::matrix(2, 2, {0.1, 0.2, 0.3, 0.4});
  const Tensor y = Tensor::matrix(2, 2, {0.0, 0.0, 1.0, 1.0});
  const Tensor ps = Tensor::matrix(2, 2, {0.3, 0.4, 0.1, 0.2});
  const Tensor ys = Tensor::matrix(2, 2, {1.0, 1.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(gaze_loss(p, y).item(), gaze_loss(ps, ys).item());
  EXPECT_THROW(gaze_loss(p, Tensor::zeros({2, 3})), ShapeError);
}

TEST(CleanAlign, ZeroWhenEqual) {
  std::mt19937_64 rng(1);
  const Tensor a = affinity_square(random_matrix(5, 3, rng));
  EXPECT_EQ(clean_align_loss(a, a).item(), 0.0);
}

TEST(CleanAlign, TwoByTwoHandExample) {
  const Tensor ag = Tensor::matrix(2, 2, {1.0, 0.5, 0.5, 1.0});
  const Tensor am = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  EXPECT_NEAR(clean_align_loss(ag, am).item(), 0.5, 1e-15);
}

TEST(CleanAlign, DiagonalIsIgnoredAndBoundHolds) {
  const Tensor ag = Tensor::matrix(2, 2, {5.0, 1.0, 1.0, -5.0});
  const Tensor am = Tensor::matrix(2, 2, {-5.0, -1.0, -1.0, 5.0});
  EXPECT_NEAR(clean_align_loss(ag, am).item(), 2.0, 1e-15);
}

TEST(CleanAlign, SymmetricInArguments) {
  std::mt19937_64 rng(2);
  const Tensor a = affinity_square(random_matrix(6, 3, rng));
  const Tensor b = affinity_square(random_matrix(6, 4, rng));
  EXPECT_DOUBLE_EQ(clean_align_loss(a, b).item(), clean_align_loss(b, a).item());
  EXPECT_LE(clean_align_loss(a, b).item(), 2.0);
}

TEST(CleanAlign, Errors) {
  EXPECT_THROW(clean_align_loss(Tensor::zeros({1, 1}), Tensor::zeros({1, 1})), InvalidArgument);
  EXPECT_THROW(clean_align_loss(Tensor::zeros({2, 2}), Tensor::zeros({3, 3})), ShapeError);
}

TEST(NoisyAlign, ParallelAntiparallelOrthogonal) {
  const Tensor am = Tensor::matrix(2, 2, {0.5, 0.2, -0.3, 0.9});
  EXPECT_NEAR(noisy_align_loss(scale(am, 3.0), am).item(), -1.0, 1e-15);
  EXPECT_NEAR(noisy_align_loss(scale(am, -2.0), am).item(), 1.0, 1e-15);
  const Tensor af = Tensor::matrix(2, 2, {-0.2, 0.5, 0.9, 0.3});
  EXPECT_NEAR(noisy_align_loss(af, am).item(), 0.0, 1e-15);
}

TEST(NoisyAlign, RowScaleInvariance) {
  std::mt19937_64 rng(3);
  const Tensor af = away_from_zero(3, 4, rng);
  const Tensor am = away_from_zero(3, 4, rng);
  std::vector<double> scaled(af.values().begin(), af.values().end());
  for (std::size_t k = 0; k < 4; ++k) scaled[4 + k] *= 7.5;
  EXPECT_NEAR(noisy_align_loss(af, am).item(), noisy_align_loss(Tensor::matrix(3, 4, scaled), am).item(), 1e-14);
}

TEST(NoisyAlign, Errors) {
  EXPECT_THROW(noisy_align_loss(Tensor::matrix(1, 2, {0, 0}), Tensor::matrix(1, 2, {1, 0})), DegenerateInputError);
  EXPECT_THROW(noisy_align_loss(Tensor::matrix(1, 2, {1, 0}), Tensor::matrix(1, 2, {0, 0})), DegenerateInputError);
  EXPECT_THROW(noisy_align_loss(Tensor::zeros({1, 2}), Tensor::zeros({2, 2})), ShapeError);
}

TEST(NoisyAlign, TargetIsDetachedByDefault) {
  std::mt19937_64 rng(4);
  Tensor af = away_from_zero(3, 4, rng, true);
  Tensor am = away_from_zero(3, 4, rng, true);
  backward(noisy_align_loss(af, am));
  EXPECT_EQ(max_abs(grad_or_zero(am)), 0.0);
  EXPECT_GT(max_abs(grad_or_zero(af)), 0.0);

  backward(noisy_align_loss(af, am, false));
  EXPECT_GT(max_abs(grad_or_zero(am)), 0.0);
}

TEST(Losses, MatchNaiveOracles) {
  std::mt19937_64 rng(50);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t bc = 2 + trial % 7, bn = 1 + trial % 5;
    const Tensor ag = affinity_square(random_matrix(bc, 3, rng));
    const Tensor am = affinity_square(random_matrix(bc, 6, rng));
    EXPECT_NEAR(clean_align_loss(ag, am).item(), oracle::clean_align(oracle::to_matrix(ag), oracle::to_matrix(am)),
                1e-8);
    const Tensor af = affinity_cross(random_matrix(bn, 8, rng), random_matrix(bc, 8, rng));
    const Tensor amc = affinity_cross(random_matrix(bn, 6, rng), random_matrix(bc, 6, rng));
    EXPECT_NEAR(noisy_align_loss(af, amc).item(), oracle::noisy_align(oracle::to_matrix(af), oracle::to_matrix(amc)),
                1e-8);
  }
}

TEST(TotalLoss, HandExample) {
  const Tensor t = total_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), Tensor::scalar(3.0), 0.1);
  EXPECT_NEAR(t.item(), 3.3, 1e-15);
}

TEST(TotalLoss, ReductionsAndBreakdown) {
  const Tensor lg = Tensor::scalar(0.7), lc = Tensor::scalar(0.2), ln = Tensor::scalar(-0.4);
  EXPECT_DOUBLE_EQ(total_loss(lg, lc, ln, 0.0).item(), 0.7 + 0.2);
  const Tensor z = Tensor::scalar(0.0);
  EXPECT_EQ(total_loss(z, z, z, 0.1).item(), 0.0);
  const Tensor t = total_loss(lg, lc, ln, 0.1);
  const LossBreakdown b = breakdown(lg, lc, ln, t, 0.1);
  EXPECT_NEAR(b.l_total, b.l_gaze + b.l_align_clean + b.lambda * b.l_align_noisy, 1e-12);
  EXPECT_THROW(total_loss(lg, lc, ln, -0.1), ConfigError);
}

TEST(LossGradients, CleanAlignFiniteDifferences) {
  std::mt19937_64 rng(60);
  Tensor z = random_matrix(4, 8, rng, -1, 1, true);
  const Tensor ag = affinity_square(random_matrix(4, 3, rng));
  std::vector<Tensor> params{z};
  const double err = grad_check([&] { return clean_align_loss(ag, affinity_square(z)); }, params, 1e-6);
  EXPECT_LT(err, 1e-4);
}

TEST(LossGradients, NoisyAlignFiniteDifferences) {
  std::mt19937_64 rng(61);
  Tensor fn = random_matrix(3, 8, rng, -1, 1, true);
  Tensor fc = random_matrix(4, 8, rng, -1, 1, true);
  const Tensor amc = affinity_cross(random_matrix(3, 5, rng), random_matrix(4, 5, rng));
  std::vector<Tensor> params{fn, fc};
  const double err = grad_check([&] { return noisy_align_loss(affinity_cross(fn, fc), amc); }, params, 1e-6);
  EXPECT_LT(err, 1e-4);
}

TEST(LossGradients, EachLossThroughSmallModel) {
  ModelDims dims;
  dims.backbone_widths = {24, 16};
  dims.projection_widths = {16, 8};
  const ModelState model = ModelState::init(dims, 5);
  const PrototypeBank bank = PrototypeBank::random(4, 8, 5);
  const Dataset data = generate_domain(testing_support::small_domain(10, 3));
  const std::vector<std::size_t> cidx{0, 1, 2, 3, 4, 5}, nidx{6, 7, 8, 9};
  const Tensor xc = data.inputs(cidx), xn = data.inputs(nidx), yc = data.labels(cidx);
  const Tensor ag = affinity_square(data.label_vectors(cidx));
  std::vector<Tensor> params = model.parameters();

  auto embed = [&](const Tensor& x) { return manifold_embed(project(feature_extract(x, model), model), bank); };
  auto lg = [&] { return gaze_loss(regress(feature_extract(xc, model), model), yc); };
  auto lc = [&] { return clean_align_loss(ag, affinity_square(embed(xc))); };
  auto ln = [&] {
    return noisy_align_loss(affinity_cross(feature_extract(xn, model), feature_extract(xc, model)),
                            affinity_cross(embed(xn), embed(xc)), false);
  };
  EXPECT_LT(grad_check(lg, params, 1e-5), 1e-4);
  EXPECT_LT(grad_check(lc, params, 1e-5), 1e-4);
  EXPECT_LT(grad_check(ln, params, 1e-5), 1e-4);
  EXPECT_LT(grad_check([&] { return total_loss(lg(), lc(), ln(), 0.1); }, params, 1e-5), 1e-4);
}
