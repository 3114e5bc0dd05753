#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sacrf/io.hpp"
#include "sacrf/tensor.hpp"

using namespace sacrf;

namespace {

Tensor identity_kernel() {
  Tensor k({1, 1, 3, 3});
  k.at(0, 0, 1, 1) = 1.0;
  return k;
}

}  // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(t.size(), 6u);
  EXPECT_DOUBLE_EQ(t.sum(), 6.0);
  EXPECT_DOUBLE_EQ(Tensor::scalar(4.5).item(), 4.5);
}

TEST(Conv2d, ZeroKernelAnnihilates) {
  std::mt19937_64 rng(1);
  const Tensor in = oracle::random_tensor({2, 4, 5}, rng);
  const Tensor out = conv2d(in, Tensor::zeros({3, 2, 3, 3}));
  EXPECT_EQ(out.shape(), (Shape{3, 4, 5}));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(2);
  const Tensor in = oracle::random_tensor({1, 6, 3}, rng);
  EXPECT_EQ(conv2d(in, identity_kernel()), in);
}

TEST(Conv2d, OnesOverOnesCountsPaddedWindow) {
  const Tensor out = conv2d(Tensor::full({1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0));
  EXPECT_DOUBLE_EQ(out.at(0, 1, 1), 9.0);
  for (auto [y, x] : {std::pair{0, 0}, {0, 2}, {2, 0}, {2, 2}}) {
    EXPECT_DOUBLE_EQ(out.at(0, y, x), 4.0);
  }
  for (auto [y, x] : {std::pair{0, 1}, {1, 0}, {1, 2}, {2, 1}}) {
    EXPECT_DOUBLE_EQ(out.at(0, y, x), 6.0);
  }
}

TEST(Conv2d, RejectsShapeMismatch) {
  EXPECT_THROW(conv2d(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3})), ShapeError);
  EXPECT_THROW(conv2d(Tensor({1, 4, 4}), Tensor({1, 1, 5, 5})), ShapeError);
  EXPECT_THROW(conv2d(Tensor({4, 4}), Tensor({1, 1, 3, 3})), ShapeError);
}

TEST(Conv2d, MatchesLoopOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor in = oracle::random_tensor({2, 5, 5}, rng);
    const Tensor k = oracle::random_tensor({3, 2, 3, 3}, rng);
    EXPECT_LT(max_abs_diff(conv2d(in, k), oracle::conv3x3(in, k)), 1e-12);
  }
}

TEST(Conv2d, IsLinear) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> coef(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = oracle::random_tensor({2, 5, 4}, rng);
    const Tensor b = oracle::random_tensor({2, 5, 4}, rng);
    const Tensor k = oracle::random_tensor({2, 2, 3, 3}, rng);
    const double alpha = coef(rng), beta = coef(rng);
    const Tensor lhs = conv2d(add(scale(a, alpha), scale(b, beta)), k);
    const Tensor rhs = add(scale(conv2d(a, k), alpha), scale(conv2d(b, k), beta));
    EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
  }
}

TEST(Conv2d, DeterministicAcrossThreadCounts) {
  std::mt19937_64 rng(5);
  const Tensor in = oracle::random_tensor({4, 17, 13}, rng);
  const Tensor k = oracle::random_tensor({6, 4, 3, 3}, rng);
  const Tensor g = oracle::random_tensor({6, 17, 13}, rng);
  set_num_threads(1);
  const Tensor a = conv2d(in, k);
  const Tensor ga = conv2d_backward_input(g, k);
  const Tensor ka = conv2d_backward_kernel(g, in);
  set_num_threads(4);
  const Tensor b = conv2d(in, k);
  const Tensor gb = conv2d_backward_input(g, k);
  const Tensor kb = conv2d_backward_kernel(g, in);
  set_num_threads(1);
  EXPECT_EQ(a, b);
  EXPECT_EQ(ga, gb);
  EXPECT_EQ(ka, kb);
}

TEST(Conv2d, BackwardIsAdjoint) {
  // <conv(x, k), g> == <x, conv^T(g, k)> == <k, dK(g, x)>
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor({3, 6, 5}, rng);
  const Tensor k = oracle::random_tensor({2, 3, 3, 3}, rng);
  const Tensor g = oracle::random_tensor({2, 6, 5}, rng);
  const double lhs = mul(conv2d(x, k), g).sum();
  const double via_input = mul(x, conv2d_backward_input(g, k)).sum();
  const Tensor dk = conv2d_backward_kernel(g, x);
  double via_kernel = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) via_kernel += k[i] * dk[i];
  EXPECT_NEAR(lhs, via_input, 1e-12);
  EXPECT_NEAR(lhs, via_kernel, 1e-12);
}

TEST(Upsample2x, ConstantStaysConstant) {
  for (Align al : {Align::corners, Align::half_pixel}) {
    const Tensor out = upsample2x(Tensor::full({2, 3, 5}, 1.75), al);
    EXPECT_EQ(out.shape(), (Shape{2, 6, 10}));
    for (double v : out.data()) EXPECT_EQ(v, 1.75);
  }
}

TEST(Upsample2x, DegenerateGrid) {
  const Tensor out = upsample2x(Tensor::full({1, 1, 1}, -3.0));
  EXPECT_EQ(out, Tensor::full({1, 2, 2}, -3.0));
}

TEST(Upsample2x, TwoSampleRamp) {
  const Tensor in({1, 2, 1}, std::vector<double>{0.0, 1.0});
  const Tensor c = upsample2x(in, Align::corners);
  const Tensor h = upsample2x(in, Align::half_pixel);
  // scalar interpolation oracle at the source positions of each output row
  const std::vector<double> ramp{0.0, 1.0};
  for (std::size_t d = 0; d < 4; ++d) {
    const double pc = static_cast<double>(d) / 3.0;
    const double ph = std::clamp((d + 0.5) / 2.0 - 0.5, 0.0, 1.0);
    EXPECT_NEAR(c.at(0, d, 0), oracle::lerp_at(ramp, pc), 1e-15);
    EXPECT_NEAR(h.at(0, d, 0), oracle::lerp_at(ramp, ph), 1e-15);
  }
  EXPECT_NEAR(c.at(0, 1, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(c.at(0, 2, 0), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(h.at(0, 1, 0), 0.25);
  EXPECT_DOUBLE_EQ(h.at(0, 2, 0), 0.75);
}

TEST(Upsample2x, BackwardIsAdjoint) {
  std::mt19937_64 rng(7);
  for (Align al : {Align::corners, Align::half_pixel}) {
    const Tensor x = oracle::random_tensor({2, 3, 4}, rng);
    const Tensor g = oracle::random_tensor({2, 6, 8}, rng);
    EXPECT_NEAR(mul(upsample2x(x, al), g).sum(),
                mul(x, upsample2x_backward(g, x.shape(), al)).sum(), 1e-12);
  }
}

TEST(Deconv2x, ShapeContractAndAdjoint) {
  std::mt19937_64 rng(8);
  const Tensor x = oracle::random_tensor({3, 4, 5}, rng);
  const Tensor k = oracle::random_tensor({3, 2, 4, 4}, rng);
  const Tensor y = deconv2x(x, k);
  EXPECT_EQ(y.shape(), (Shape{2, 8, 10}));
  const Tensor g = oracle::random_tensor(y.shape(), rng);
  const double lhs = mul(y, g).sum();
  EXPECT_NEAR(lhs, mul(x, deconv2x_backward_input(g, k)).sum(), 1e-12);
  const Tensor dk = deconv2x_backward_kernel(g, x);
  double via_kernel = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) via_kernel += k[i] * dk[i];
  EXPECT_NEAR(lhs, via_kernel, 1e-12);
  EXPECT_THROW(deconv2x(x, Tensor({2, 2, 4, 4})), ShapeError);
}

TEST(Deconv2x, BilinearWeightsReproduceUpsampleInInterior) {
  // The half-pixel bilinear filter is the separable tap [1,3,3,1]/4.
  const double taps[4] = {0.25, 0.75, 0.75, 0.25};
  Tensor k({1, 1, 4, 4});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) k.at(0, 0, y, x) = taps[y] * taps[x];
  std::mt19937_64 rng(9);
  const Tensor in = oracle::random_tensor({1, 5, 5}, rng);
  const Tensor a = deconv2x(in, k);
  const Tensor b = upsample2x(in, Align::half_pixel);
  for (std::size_t y = 1; y + 1 < 10; ++y)
    for (std::size_t x = 1; x + 1 < 10; ++x) EXPECT_NEAR(a.at(0, y, x), b.at(0, y, x), 1e-12);
}

TEST(Avgpool2x, AveragesAndAdjoint) {
  const Tensor in({1, 2, 2}, std::vector<double>{1, 2, 3, 6});
  EXPECT_DOUBLE_EQ(avgpool2x(in).item(), 3.0);
  EXPECT_THROW(avgpool2x(Tensor({1, 3, 2})), ShapeError);
  std::mt19937_64 rng(10);
  const Tensor x = oracle::random_tensor({2, 4, 6}, rng);
  const Tensor g = oracle::random_tensor({2, 2, 3}, rng);
  EXPECT_NEAR(mul(avgpool2x(x), g).sum(), mul(x, avgpool2x_backward(g)).sum(), 1e-12);
}

TEST(Elementwise, SigmoidAndIdentities) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::zeros({1, 2, 2}))[3], 0.5);
  std::mt19937_64 rng(11);
  const Tensor a = oracle::random_tensor({2, 3, 3}, rng);
  EXPECT_EQ(add(a, Tensor::zeros(a.shape())), a);
  EXPECT_EQ(negate(negate(a)), a);
  EXPECT_EQ(scale(a, 1.0), a);
}

TEST(Elementwise, SigmoidStaysInsideOpenInterval) {
  for (double x : {-1e4, -800.0, -40.0, 40.0, 800.0, 1e4}) {
    const double s = sigmoid(x);
    EXPECT_GT(s, 0.0) << x;
    EXPECT_LT(s, 1.0) << x;
  }
  EXPECT_NEAR(sigmoid(-30.0), std::exp(-30.0) / (1.0 + std::exp(-30.0)), 1e-28);
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
}

TEST(Elementwise, ChannelBroadcastMask) {
  const Tensor mask({1, 1, 2}, std::vector<double>{0.0, 1.0});
  const Tensor map({2, 1, 2}, std::vector<double>{3.0, 4.0, 5.0, 6.0});
  const Tensor out = mul(map, mask);
  EXPECT_EQ(out, Tensor({2, 1, 2}, std::vector<double>{0.0, 4.0, 0.0, 6.0}));
  EXPECT_EQ(add(map, mask), Tensor({2, 1, 2}, std::vector<double>{3.0, 5.0, 5.0, 7.0}));
  EXPECT_THROW(mul(map, Tensor({1, 2, 1})), ShapeError);
  EXPECT_THROW(add(map, Tensor({2, 1, 3})), ShapeError);
}

TEST(Elementwise, ChannelHelpers) {
  const Tensor map({2, 1, 2}, std::vector<double>{3.0, 4.0, 5.0, 6.0});
  EXPECT_EQ(channel_sum(map), Tensor({1, 1, 2}, std::vector<double>{8.0, 10.0}));
  EXPECT_EQ(channel_broadcast(channel_sum(map), 2),
            Tensor({2, 1, 2}, std::vector<double>{8.0, 10.0, 8.0, 10.0}));
  const Tensor parts[] = {map, channel_sum(map)};
  EXPECT_EQ(concat_channels(parts).shape(), (Shape{3, 1, 2}));
  const Tensor bias({2}, std::vector<double>{1.0, -1.0});
  EXPECT_EQ(add_channel_bias(map, bias),
            Tensor({2, 1, 2}, std::vector<double>{4.0, 5.0, 4.0, 5.0}));
}

TEST(Elementwise, SoftplusIsStable) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_GT(softplus(-800.0), -1e-300);
  EXPECT_TRUE(std::isfinite(softplus(-800.0)));
}

TEST(TenFormat, RoundTripsBitExactly) {
  std::mt19937_64 rng(12);
  const Tensor t = oracle::random_tensor({2, 3, 4}, rng, -1e6, 1e6);
  std::stringstream ss;
  write_ten(ss, t);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 4 + 4 + 3 * 4 + 24 * 8u);
  EXPECT_EQ(bytes.substr(0, 4), "TEN1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 3);  // little-endian rank
  EXPECT_EQ(read_ten(ss), t);
}

TEST(TenFormat, KnownEncoding) {
  std::stringstream ss;
  write_ten(ss, Tensor({1}, std::vector<double>{1.0}));
  const std::string b = ss.str();
  // 1.0 = 0x3FF0000000000000, little-endian
  EXPECT_EQ(static_cast<unsigned char>(b[12 + 6]), 0xF0);
  EXPECT_EQ(static_cast<unsigned char>(b[12 + 7]), 0x3F);
}

TEST(TenFormat, RejectsGarbage) {
  std::stringstream bad_magic("TENX\0\0\0\0");
  EXPECT_THROW(read_ten(bad_magic), FormatError);
  std::stringstream ss;
  write_ten(ss, Tensor({4}, 1.0));
  std::string truncated = ss.str();
  truncated.resize(truncated.size() - 3);
  std::stringstream tr(truncated);
  EXPECT_THROW(read_ten(tr), FormatError);
}

TEST(KeyValues, ParsesCommentsAndOverrides) {
  std::stringstream ss("# header\niterations = 4\n\n  update_intermediate_scales=true # c\niterations=5\n");
  const auto kv = parse_key_values(ss);
  EXPECT_EQ(kv.at("iterations"), "5");
  EXPECT_EQ(kv.at("update_intermediate_scales"), "true");
  std::stringstream bad("no equals sign\n");
  EXPECT_THROW(parse_key_values(bad), FormatError);
}
