#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sacrf/crf.hpp"

using namespace sacrf;

namespace {

struct Instance {
  MultiScaleFeatures x;
  LatentFeatures y;
  AttentionMaps a;
  KernelBank kb;
};

Instance random_instance(std::mt19937_64& rng, std::size_t S, std::size_t C,
                         std::size_t H, std::size_t W) {
  std::vector<Tensor> xs, ys;
  Instance in;
  for (std::size_t s = 0; s < S; ++s) {
    xs.push_back(oracle::random_tensor({C, H, W}, rng));
    ys.push_back(oracle::random_tensor({C, H, W}, rng));
  }
  in.x = MultiScaleFeatures(xs);
  in.y.scales = ys;
  for (std::size_t s = 0; s + 1 < S; ++s) {
    in.a.maps.push_back(oracle::random_tensor({1, H, W}, rng, 0.0, 1.0));
    in.kb.K.push_back(oracle::random_tensor({C, C, 3, 3}, rng));
    in.kb.beta.push_back(oracle::random_tensor({1, 1, 3, 3}, rng));
  }
  return in;
}

}  // namespace

TEST(MultiScaleFeatures, EnforcesInvariants) {
  EXPECT_THROW(MultiScaleFeatures({Tensor({1, 2, 2})}), ShapeError);
  EXPECT_THROW(MultiScaleFeatures({Tensor({1, 2, 2}), Tensor({2, 2, 2})}), ShapeError);
  EXPECT_THROW(MultiScaleFeatures({Tensor({2, 2}), Tensor({2, 2})}), ShapeError);
  const MultiScaleFeatures x({Tensor({2, 3, 4}), Tensor({2, 3, 4}), Tensor({2, 3, 4})});
  EXPECT_EQ(x.num_scales(), 3u);
  EXPECT_EQ(x.channels(), 2u);
  EXPECT_EQ(x.height(), 3u);
  EXPECT_EQ(x.width(), 4u);
}

TEST(KernelBank, ShapeChecks) {
  KernelBank kb = KernelBank::zeros(3, 2);
  EXPECT_NO_THROW(check_kernels(kb, 3, 2));
  EXPECT_THROW(check_kernels(kb, 2, 2), ShapeError);
  kb.beta[0] = Tensor({1, 1, 5, 5});
  EXPECT_THROW(check_kernels(kb, 3, 2), ShapeError);
}

TEST(UnaryEnergy, Examples) {
  std::mt19937_64 rng(1);
  auto in = random_instance(rng, 2, 2, 3, 3);
  LatentFeatures same{in.x.scales()};
  EXPECT_EQ(unary_energy(same, in.x), 0.0);

  const MultiScaleFeatures x1({Tensor({1, 1, 1}, 0.0), Tensor({1, 1, 1}, 0.0)});
  LatentFeatures y1{{Tensor({1, 1, 1}, 2.0), Tensor({1, 1, 1}, 0.0)}};
  EXPECT_DOUBLE_EQ(unary_energy(y1, x1), -2.0);

  EXPECT_NEAR(unary_energy(in.y, in.x), oracle::unary(in.y.scales, in.x.scales()), 1e-10);

  LatentFeatures wrong{{Tensor({2, 3, 2}), Tensor({2, 3, 2})}};
  EXPECT_THROW(unary_energy(wrong, in.x), ShapeError);
}

TEST(PairwiseEnergy, VanishesWhenGateOrKernelIsZero) {
  std::mt19937_64 rng(2);
  auto in = random_instance(rng, 3, 2, 4, 4);
  EXPECT_EQ(pairwise_energy(in.y, constant_attention(in.x, 0.0), in.kb), 0.0);
  EXPECT_EQ(pairwise_energy(in.y, in.a, KernelBank::zeros(3, 2)), 0.0);
}

TEST(PairwiseEnergy, HandSetTwoByTwo) {
  // Single channel, 2 scales, 2x2 grid. Every pair of pixels is within the
  // 3x3 footprint, so the sum runs over all 16 ordered pairs.
  const Tensor ys({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor yr({1, 2, 2}, std::vector<double>{-1, 0.5, 2, 1});
  const Tensor a({1, 2, 2}, std::vector<double>{0.2, 0.4, 0.6, 0.8});
  Tensor K({1, 1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) K[i] = 0.1 * static_cast<double>(i + 1);
  LatentFeatures y{{ys, yr}};
  AttentionMaps am{{a}};
  KernelBank kb{{K}, {Tensor({1, 1, 3, 3})}};

  // hand expansion: sum_i a_i y_i sum_j K[j-i+1] yr_j
  double expected = 0.0;
  for (int iy = 0; iy < 2; ++iy)
    for (int ix = 0; ix < 2; ++ix)
      for (int jy = 0; jy < 2; ++jy)
        for (int jx = 0; jx < 2; ++jx)
          expected += a[iy * 2 + ix] * ys[iy * 2 + ix] *
                      K.at(0, 0, jy - iy + 1, jx - ix + 1) * yr[jy * 2 + jx];
  EXPECT_NEAR(pairwise_energy(y, am, kb), expected, 1e-12);
  EXPECT_NEAR(pairwise_energy(y, am, kb), oracle::pairwise(y.scales, am.maps, kb.K), 1e-12);
}

TEST(PairwiseEnergy, LinearInAttentionAndBilinearInFeatures) {
  std::mt19937_64 rng(3);
  auto in = random_instance(rng, 2, 2, 5, 5);
  const double base = pairwise_energy(in.y, in.a, in.kb);
  AttentionMaps scaled = in.a;
  scaled.maps[0] = scale(scaled.maps[0], 2.5);
  EXPECT_NEAR(pairwise_energy(in.y, scaled, in.kb), 2.5 * base, 1e-12);

  LatentFeatures zero_s = in.y;
  zero_s.scales[0] = Tensor::zeros(zero_s.scales[0].shape());
  EXPECT_EQ(pairwise_energy(zero_s, in.a, in.kb), 0.0);
  LatentFeatures zero_ref = in.y;
  zero_ref.scales[1] = Tensor::zeros(zero_ref.scales[1].shape());
  EXPECT_EQ(pairwise_energy(zero_ref, in.a, in.kb), 0.0);
}

TEST(AttentionSmoothing, Examples) {
  const MultiScaleFeatures x({Tensor({1, 3, 3}), Tensor({1, 3, 3})});
  KernelBank ones{{Tensor({1, 1, 3, 3})}, {Tensor::full({1, 1, 3, 3}, 1.0)}};
  EXPECT_EQ(attention_smoothing_energy(constant_attention(x, 0.0), ones), 0.0);
  EXPECT_EQ(attention_smoothing_energy(constant_attention(x, 1.0), KernelBank::zeros(2, 1)), 0.0);
  // corners see 4 neighbours, edges 6, the centre 9
  EXPECT_DOUBLE_EQ(attention_smoothing_energy(constant_attention(x, 1.0), ones), 49.0);
}

TEST(TotalEnergy, Examples) {
  std::mt19937_64 rng(4);
  auto in = random_instance(rng, 3, 2, 4, 4);
  LatentFeatures same{in.x.scales()};
  const auto zero = total_energy(same, constant_attention(in.x, 0.0), in.x, in.kb);
  EXPECT_EQ(zero.unary, 0.0);
  EXPECT_EQ(zero.pairwise, 0.0);
  EXPECT_EQ(zero.attention_smoothing, 0.0);
  EXPECT_EQ(zero.total, 0.0);

  const auto e = total_energy(in.y, in.a, in.x, in.kb);
  EXPECT_EQ(e.total, e.unary + e.pairwise + e.attention_smoothing);
  const double oracle_total = oracle::unary(in.y.scales, in.x.scales()) +
                              oracle::pairwise(in.y.scales, in.a.maps, in.kb.K) +
                              oracle::smoothing(in.a.maps, in.kb.beta);
  EXPECT_NEAR(e.total, oracle_total, 1e-10);
}

TEST(Energy, MatchesOraclesOnRandomInstances) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t C = 1 + trial % 2;
    const std::size_t H = 1 + trial % 5, W = 1 + (trial / 5) % 5;
    auto in = random_instance(rng, 2, C, H, W);
    EXPECT_NEAR(unary_energy(in.y, in.x), oracle::unary(in.y.scales, in.x.scales()), 1e-10);
    EXPECT_NEAR(pairwise_energy(in.y, in.a, in.kb),
                oracle::pairwise(in.y.scales, in.a.maps, in.kb.K), 1e-10);
    EXPECT_NEAR(attention_smoothing_energy(in.a, in.kb),
                oracle::smoothing(in.a.maps, in.kb.beta), 1e-10);
  }
}

TEST(Energy, BinaryAttentionEvaluation) {
  // exact 0/1 gates are valid inputs for brute-force checks
  std::mt19937_64 rng(6);
  auto in = random_instance(rng, 2, 1, 3, 3);
  for (auto& v : in.a.maps[0].data()) v = v > 0.5 ? 1.0 : 0.0;
  EXPECT_NEAR(attention_smoothing_energy(in.a, in.kb),
              oracle::smoothing(in.a.maps, in.kb.beta), 1e-12);
}
