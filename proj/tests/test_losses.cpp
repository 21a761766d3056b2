#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "filmrec/error.hpp"
#include "filmrec/losses.hpp"
#include "oracles.hpp"

using namespace filmrec;
using namespace filmrec::loss;

namespace {

ShapeMaps random_shape(std::mt19937_64& rng, int n) {
  return {oracle::random_map(rng, Role::kCoord3D, n, n), oracle::random_map(rng, Role::kNormal, n, n),
          oracle::random_map(rng, Role::kDepth, n, n, 0.5, 3.0),
          oracle::random_map(rng, Role::kMask, n, n, 0.0, 1.0)};
}

DewarpMaps random_dewarp(std::mt19937_64& rng, int n) {
  return {random_shape(rng, n), oracle::random_map(rng, Role::kUV, n, n),
          oracle::random_map(rng, Role::kDeform, n, n)};
}

}  // namespace

TEST(L1MapLoss, Examples) {
  const MapField m = oracle::full_mask(1, 2);
  const MapField g(1, 2, Role::kDepth, {1.0, 1.0});
  EXPECT_DOUBLE_EQ(l1_map_loss(g, g, m), 0.0);
  const MapField p(1, 2, Role::kDepth, {1.2, 0.6});
  EXPECT_NEAR(l1_map_loss(p, g, m), 0.3, 1e-12);
  const MapField q(1, 2, Role::kDepth, {1.1, 1.1});
  EXPECT_NEAR(l1_map_loss(q, g, m), 0.1, 1e-12);
}

TEST(L1MapLoss, EmptyMaskRejected) {
  const MapField none(1, 2, Role::kMask, {0.0, 0.0});
  const MapField g(1, 2, Role::kDepth, {1.0, 1.0});
  EXPECT_THROW(l1_map_loss(g, g, none), ArgumentError);
}

TEST(L1MapLoss, OnlyValidFilmPixelsCount) {
  const MapField mask(1, 3, Role::kMask, {1.0, 1.0, 0.0});
  const MapField g(1, 3, Role::kDepth, {1.0, 1.0, 1.0});
  const MapField p(1, 3, Role::kDepth, {1.5, -1.0, 9.0});  // middle invalid (depth <= 0)
  EXPECT_EQ(loss_pixel_count(p, g, mask), 1);
  EXPECT_NEAR(l1_map_loss(p, g, mask), 0.5, 1e-12);
}

TEST(ShapeLoss, ZeroAndDepthOnly) {
  std::mt19937_64 rng(1);
  const ShapeMaps gt = random_shape(rng, 4);
  const MapField mask = oracle::full_mask(4, 4);
  const LossReport z = shape_loss(gt, gt, mask);
  EXPECT_EQ(z.lshape, 0.0);
  ShapeMaps pred = gt;
  pred.depth = oracle::add_constant(gt.depth, {0.05});
  const LossReport r = shape_loss(pred, gt, mask);
  EXPECT_NEAR(r.ldp, 0.05, 1e-12);
  EXPECT_NEAR(r.lshape, 0.05, 1e-12);
}

TEST(ShapeLoss, RoleMismatchRejected) {
  std::mt19937_64 rng(1);
  ShapeMaps gt = random_shape(rng, 3);
  ShapeMaps bad = gt;
  bad.normal = gt.coord3d;
  EXPECT_THROW(shape_loss(bad, gt, oracle::full_mask(3, 3)), ArgumentError);
}

TEST(ShapeLoss, BackgroundUsesWholeFrame) {
  std::mt19937_64 rng(4);
  const ShapeMaps gt = random_shape(rng, 4);
  ShapeMaps pred = gt;
  pred.bgmask = oracle::random_map(rng, Role::kMask, 4, 4, 0.0, 1.0);
  const MapField half(4, 4, Role::kMask, {1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0});
  EXPECT_NEAR(shape_loss(pred, gt, half).lbg, oracle::mean_abs_diff(pred.bgmask, gt.bgmask), 1e-12);
}

TEST(ShiftDisturbDiff, MatchesScalarOracle) {
  std::mt19937_64 rng(12);
  const MapField mask = oracle::full_mask(4, 4);
  for (int i = 0; i < 50; ++i) {
    const MapField p = oracle::random_map(rng, Role::kDeform, 4, 4);
    const MapField g = oracle::random_map(rng, Role::kDeform, 4, 4);
    const ShiftTerms a = shift_disturb_diff(p, g, mask);
    const ShiftTerms b = oracle::shift_terms(p, g);
    EXPECT_NEAR(a.lshift, b.lshift, 1e-9);
    EXPECT_NEAR(a.ldisturb, b.ldisturb, 1e-9);
    EXPECT_NEAR(a.ldiff, b.ldiff, 1e-9);
  }
}

TEST(ShiftDisturbDiff, TwoPixelWorkedExample) {
  // Channel 0 carries delta (0.3, 0.1); channel 1 has no error.
  const MapField g(2, 1, Role::kDeform, {0.0, 0.0, 0.0, 0.0});
  const MapField p = MapField::unchecked(2, 1, Role::kDeform, {0.3, 0.0, 0.1, 0.0}, {1, 1});
  const ShiftTerms t = shift_disturb_diff(p, g, oracle::full_mask(2, 1));
  EXPECT_NEAR(t.lshift, 0.2, 1e-12);
  EXPECT_NEAR(t.ldisturb, 0.1, 1e-12);
  // Gated contributions (0.1, 0) average to 0.05 over the active channel;
  // ldiff averages over both channels' elements.
  EXPECT_NEAR(t.ldiff * 2.0, 0.05, 1e-12);
}

TEST(ShiftDisturbDiff, ConstantShift) {
  std::mt19937_64 rng(3);
  const MapField g = oracle::random_map(rng, Role::kDeform, 5, 5);
  const MapField p = oracle::add_constant(g, {0.7, -0.2});
  const ShiftTerms t = shift_disturb_diff(p, g, oracle::full_mask(5, 5));
  EXPECT_NEAR(t.lshift, 0.9, 1e-12);
  EXPECT_NEAR(t.ldisturb, 0.0, 1e-12);
  EXPECT_NEAR(t.ldiff, 0.0, 1e-12);
  EXPECT_NEAR(df_loss(p, g, oracle::full_mask(5, 5)), 0.9, 1e-12);
}

TEST(ShiftDisturbDiff, IdentityIsZero) {
  std::mt19937_64 rng(3);
  const MapField g = oracle::random_map(rng, Role::kDeform, 3, 3);
  const ShiftTerms t = shift_disturb_diff(g, g, oracle::full_mask(3, 3));
  EXPECT_EQ(t.total(), 0.0);
}

TEST(UvLoss, PlainL1Mode) {
  std::mt19937_64 rng(9);
  const MapField g = oracle::random_map(rng, Role::kUV, 4, 4);
  const MapField p = oracle::random_map(rng, Role::kUV, 4, 4);
  EXPECT_NEAR(uv_loss(p, g, oracle::full_mask(4, 4), UvLossMode::kPlainL1),
              oracle::mean_abs_diff(p, g), 1e-12);
  EXPECT_THROW(uv_loss(p.with_role(Role::kDeform), g, oracle::full_mask(4, 4)), ArgumentError);
}

TEST(DewarpLoss, AdditivityAndZero) {
  std::mt19937_64 rng(21);
  const MapField mask = oracle::full_mask(6, 6);
  const DewarpMaps gt = random_dewarp(rng, 6);
  const LossReport zero = dewarp_loss(gt, gt, mask);
  EXPECT_EQ(zero.ldewarp, 0.0);
  for (int i = 0; i < 10; ++i) {
    const LossReport r = dewarp_loss(random_dewarp(rng, 6), gt, mask);
    EXPECT_NEAR(r.lshape, r.l3d + r.lnor + r.ldp + r.lbg, 1e-9);
    EXPECT_NEAR(r.ltrans, r.ldf + r.luv, 1e-9);
    EXPECT_NEAR(r.ldewarp, r.lshape + r.ltrans, 1e-9);
    EXPECT_NEAR(r.ldf, r.lshift + r.ldisturb + r.ldiff, 1e-12);
  }
}

TEST(DewarpLoss, UvOnlyPerturbation) {
  std::mt19937_64 rng(22);
  const MapField mask = oracle::full_mask(5, 5);
  const DewarpMaps gt = random_dewarp(rng, 5);
  DewarpMaps pred = gt;
  pred.uv = oracle::random_map(rng, Role::kUV, 5, 5);
  const LossReport r = dewarp_loss(pred, gt, mask);
  EXPECT_GT(r.luv, 0.0);
  EXPECT_EQ(r.ldewarp, r.luv);
}

TEST(RecoverLoss, Examples) {
  const ImageGrid gt(2, 2, 1, {0.1, 0.2, 0.3, 0.4});
  EXPECT_EQ(recover_loss({gt, gt}, gt), 0.0);
  EXPECT_NEAR(recover_loss({ImageGrid(2, 2, 1, {0.3, 0.4, 0.5, 0.6})}, gt), 0.02, 1e-12);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a(4), b(4);
  for (int k = 0; k < 4; ++k) {
    a[k] = u(rng);
    b[k] = u(rng);
  }
  const ImageGrid s1(2, 2, 1, a), s2(2, 2, 1, b);
  EXPECT_NEAR(recover_loss({s1, s2}, gt), 0.5 * (oracle::mse(s1, gt) + oracle::mse(s2, gt)), 1e-12);
  EXPECT_THROW(recover_loss({}, gt), ArgumentError);
}

TEST(FiniteDiff, Examples) {
  const Objective sq = [](const std::vector<double>& p) { return p[0] * p[0] + p[1] * p[1]; };
  const auto g = finite_diff_grad(sq, {1.0, 2.0}, 1e-4);
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], 4.0, 1e-6);
  const auto z = finite_diff_grad([](const std::vector<double>&) { return 3.0; }, {1.0, 2.0}, 1e-4);
  EXPECT_EQ(z[0], 0.0);
  EXPECT_EQ(z[1], 0.0);
}

TEST(FiniteDiff, NonFiniteNamesCoordinate) {
  const Objective f = [](const std::vector<double>& p) {
    return p[1] > 0.5 ? std::numeric_limits<double>::infinity() : 0.0;
  };
  try {
    finite_diff_grad(f, {0.0, 0.5}, 1e-3);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos);
  }
}

TEST(FitConfig, JsonRoundTripAndUnknownKeys) {
  FitConfig c;
  c.free = {"curl", "sine0.amplitude"};
  c.uv_mode = UvLossMode::kPlainL1;
  const FitConfig back = fit_config_from_json(to_json(c));
  EXPECT_EQ(back.free, c.free);
  EXPECT_EQ(back.uv_mode, UvLossMode::kPlainL1);
  EXPECT_THROW(fit_config_from_json({{"free", {"curl"}}, {"learning_rate", 1}}), ArgumentError);
}

TEST(Params, NamedAccess) {
  synth::WarpParams p;
  p.sine_terms.resize(2);
  set_param(p, "sine1.phase", 0.7);
  set_param(p, "rigid.rot_y", -0.1);
  set_param(p, "camera.distance", 2.4);
  EXPECT_DOUBLE_EQ(get_param(p, "sine1.phase"), 0.7);
  EXPECT_DOUBLE_EQ(p.rigid.rotation[1], -0.1);
  EXPECT_DOUBLE_EQ(p.camera.distance, 2.4);
  EXPECT_THROW(get_param(p, "sine5.phase"), ArgumentError);
  EXPECT_THROW(get_param(p, "focal"), ArgumentError);
}

TEST(Fitter, InitAtTruthConvergesImmediately) {
  const synth::GenConfig cfg;
  const auto seed = synth::sample_seed(7, 0);
  const auto b = synth::generate_sample(cfg, seed);
  FitConfig fc;
  fc.free = {"curl"};
  const FitResult r = fit_warp_params(b, fc, {b.params.curl});
  EXPECT_LT(r.loss_trace.front().second, 0.02);
  EXPECT_NEAR(r.values[0], b.params.curl, 0.01 * std::max(1.0, std::abs(b.params.curl)));
}

TEST(Fitter, OneParameterCurl) {
  const synth::GenConfig cfg;
  const auto seed = synth::sample_seed(7, 1);
  auto p = synth::draw_params(cfg, seed);
  p.curl = 0.8;
  const auto b = synth::generate_sample(cfg, seed, p);
  FitConfig fc;
  fc.free = {"curl"};
  const FitResult r = fit_warp_params(b, fc, {0.0});
  EXPECT_NEAR(r.values[0], 0.8, 0.04);
  for (std::size_t k = 1; k < r.loss_trace.size(); ++k)
    EXPECT_LE(r.loss_trace[k].second, r.loss_trace[k - 1].second);
}

TEST(Fitter, RejectsBadConfig) {
  const auto b = synth::generate_sample(synth::GenConfig{}, synth::sample_seed(7, 2));
  FitConfig fc;
  EXPECT_THROW(fit_warp_params(b, fc, {}), ArgumentError);
  fc.free = {"curl"};
  EXPECT_THROW(fit_warp_params(b, fc, {0.0, 1.0}), ArgumentError);
}
