#include "ignd/model.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ignd/errors.hpp"

namespace ignd {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(Mlp, ParameterCounts) {
  EXPECT_EQ(Mlp(3, {{1, Activation::identity}}).param_count(), 4);
  const Mlp big(8, relu_network({32, 64, 32}));
  EXPECT_EQ(big.param_count(), 8 * 32 + 32 + 32 * 64 + 64 + 64 * 32 + 32 + 32 * 1 + 1);
  EXPECT_EQ(big.param_count(), 4513);
  EXPECT_EQ(mlp_param_count(8, relu_network({32, 64, 32})), 4513);
}

TEST(Mlp, RejectsNonScalarOutput) {
  EXPECT_ANY_THROW(Mlp(2, {{3, Activation::relu}}));
  EXPECT_ANY_THROW(Mlp(2, {{1, Activation::relu}}));
}

TEST(Mlp, InitDeterministic) {
  const Mlp net(4, relu_network({5}));
  Rng a(9), b(9);
  EXPECT_EQ(net.init(a), net.init(b));
}

TEST(Mlp, FlattenRoundTripIsBitwise) {
  const Mlp net(3, relu_network({4, 2}));
  Rng rng(1);
  Vector w = net.init(rng);
  for (Index i = 0; i < w.size(); ++i) w[i] += rng.normal();
  const Vector back = net.flatten(net.unflatten(w));
  ASSERT_EQ(back.size(), w.size());
  for (Index i = 0; i < w.size(); ++i) EXPECT_EQ(back[i], w[i]);
}

TEST(Mlp, DimensionChecks) {
  const Mlp net(3, relu_network({2}));
  EXPECT_THROW(net.predict(Vector::Zero(net.param_count()), Vector::Zero(2)), DimensionMismatch);
  EXPECT_THROW(net.predict(Vector::Zero(3), Vector::Zero(3)), DimensionMismatch);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  const Mlp net(4, relu_network({8}));
  Rng rng(21);
  Vector w = net.init(rng);
  for (Index i = 0; i < w.size(); ++i) w[i] += rng.normal(0.0, 0.1);
  const Vector x = vec({0.3, -1.2, 0.8, 2.0});
  const GradEval ev = net.eval(w, x, 1.5);
  const double h = 1e-6;
  for (Index i = 0; i < w.size(); ++i) {
    Vector wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    const double fd = (net.predict(wp, x) - net.predict(wm, x)) / (2 * h);
    EXPECT_LE(std::abs(fd - ev.gradient[i]), 1e-5 * std::max(1.0, std::abs(ev.gradient[i])));
  }
  EXPECT_NEAR(ev.grad_sq_norm, ev.gradient.squaredNorm(), 1e-12 * ev.grad_sq_norm);
  EXPECT_EQ(ev.residual, 1.5 - ev.value);
}

TEST(Mlp, ReluSubgradientAtZeroIsZero) {
  // Single hidden unit with pre-activation exactly 0.
  const Mlp net(1, relu_network({1}));
  // layer 0: W (1x1), b (1); layer 1: W (1x1), b (1)
  const Vector w = vec({1.0, 0.0, 2.0, 0.5});
  const GradEval ev = net.eval(w, vec({0.0}), 0.0);
  EXPECT_EQ(ev.value, 0.5);
  EXPECT_EQ(ev.gradient[0], 0.0);
  EXPECT_EQ(ev.gradient[1], 0.0);
}

TEST(LinearModel, ValueGradientResidual) {
  const LinearModel m(2);
  const GradEval ev = m.eval(vec({1, 2}), vec({3, 4}), 0.0);
  EXPECT_EQ(ev.value, 11.0);
  EXPECT_EQ(ev.gradient, vec({3, 4}));
  EXPECT_EQ(ev.residual, -11.0);
  EXPECT_EQ(ev.grad_sq_norm, 25.0);
}

TEST(LinearModel, Homogeneity) {
  const LinearModel m(3);
  const Vector w = vec({0.5, -1.0, 2.0});
  const Vector x = vec({1.0, 3.0, -0.25});
  EXPECT_DOUBLE_EQ(m.predict(Vector(3.0 * w), x), 3.0 * m.predict(w, x));
}

TEST(TabularFeatures, OneHotIndices) {
  Vector e0 = Vector::Zero(64);
  e0[0] = 1;
  EXPECT_EQ(tabular_features(0, 0, 16, 4), e0);
  Vector e6 = Vector::Zero(64);
  e6[6] = 1;
  EXPECT_EQ(tabular_features(1, 2, 16, 4), e6);
}

TEST(TabularFeatures, GradientIsUnitVector) {
  const LinearModel m(64);
  const GradEval ev = m.eval(Vector::Zero(64), tabular_features(3, 1, 16, 4), 1.0);
  EXPECT_EQ(ev.grad_sq_norm, 1.0);
  EXPECT_EQ(ev.gradient[13], 1.0);
}

TEST(TabularFeatures, ScaledEntry) {
  Vector phi = Vector::Ones(64);
  phi[6] = -7;
  const Vector x = tabular_features(1, 2, 16, 4, phi);
  EXPECT_EQ(x[6], -7.0);
  EXPECT_EQ(x.squaredNorm(), 49.0);
}

TEST(TabularFeatures, Errors) {
  EXPECT_THROW(tabular_features(16, 0, 16, 4), IndexOutOfRange);
  EXPECT_THROW(tabular_features(0, -1, 16, 4), IndexOutOfRange);
  Vector phi = Vector::Ones(64);
  phi[0] = 0;
  EXPECT_THROW(tabular_features(0, 0, 16, 4, phi), ZeroScale);
  EXPECT_THROW(tabular_features(0, 0, 16, 4, Vector(Vector::Ones(3))), DimensionMismatch);
}

TEST(Checkpoint, RoundTrip) {
  const Mlp net(5, relu_network({7, 3}));
  Rng rng(4);
  const Vector w = net.init(rng);
  const auto path = std::filesystem::temp_directory_path() / "ignd_model_test.ignw";
  save_checkpoint(path, net, w);
  const auto [loaded, lw] = load_checkpoint(path);
  EXPECT_EQ(loaded.input_dim(), 5);
  EXPECT_EQ(loaded.param_count(), net.param_count());
  EXPECT_EQ(lw, w);
  std::filesystem::remove(path);
}

TEST(Checkpoint, BadMagic) {
  const auto path = std::filesystem::temp_directory_path() / "ignd_model_test_bad.ignw";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE0000";
  }
  EXPECT_THROW(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace ignd
