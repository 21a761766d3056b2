#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "filmrec/error.hpp"
#include "filmrec/synthgen.hpp"
#include "oracles.hpp"

using namespace filmrec;
using namespace filmrec::synth;

namespace {

// Front-parallel unit sheet whose projection exactly fills an n x n frame.
WarpParams flat_filling(int n) {
  WarpParams p;
  p.camera.distance = 2.5;
  p.camera.focal = n * 2.5;
  p.camera.cx = n / 2.0;
  p.camera.cy = n / 2.0;
  return p;
}

}  // namespace

TEST(Phantom, EmptyBodiesIsAir) {
  PhantomSpec spec;
  spec.canvas = 32;
  const HuGrid g = make_phantom_slice(spec, 1);
  for (auto v : g.data) EXPECT_EQ(v, kHuMin);
}

TEST(Phantom, FullCanvasEllipse) {
  PhantomSpec spec;
  spec.canvas = 64;
  spec.noise_hu = 20.0;
  spec.bodies.push_back({0.5, 0.5, 0.5, 0.5, 0.0, 0});
  const HuGrid g = make_phantom_slice(spec, 3);
  EXPECT_EQ(g.at(0, 0), kHuMin);
  EXPECT_EQ(g.at(63, 63), kHuMin);
  for (int y = 24; y < 40; ++y)
    for (int x = 24; x < 40; ++x) EXPECT_LE(std::abs(g.at(y, x)), 20);
}

TEST(Phantom, SeededDeterminism) {
  const PhantomSpec spec = random_head_phantom(64, 20.0, 9);
  EXPECT_EQ(make_phantom_slice(spec, 5).data, make_phantom_slice(spec, 5).data);
}

TEST(Window, Examples) {
  const HuGrid g{1, 3, {40, 0, 60}};
  const ImageGrid d = window_map(g, 80.0, 40.0);
  EXPECT_DOUBLE_EQ(d.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(d.at(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(d.at(0, 2), 0.75);
  EXPECT_THROW(window_map(g, 0.0, 40.0), ArgumentError);
}

TEST(ComposeTexture, SingleCellNoMargin) {
  FilmLayout layout;
  layout.rows = layout.cols = 1;
  layout.cell = 16;
  layout.margin = 0;
  std::vector<double> d(16 * 16);
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = (k % 7) / 7.0;
  const ImageGrid slice(16, 16, 1, d);
  const ImageGrid tex = compose_film_texture({slice}, layout);
  ASSERT_EQ(tex.height(), 16);
  for (std::size_t k = 0; k < d.size(); ++k) EXPECT_NEAR(tex.data()[k], d[k], 1e-12);
}

TEST(ComposeTexture, NoSlicesIsBackground) {
  FilmLayout layout;
  layout.background_level = 0.25;
  const ImageGrid tex = compose_film_texture({}, layout);
  EXPECT_EQ(tex.height(), layout.texture_height());
  for (double v : tex.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(ComposeTexture, TooManySlices) {
  FilmLayout layout;
  layout.rows = layout.cols = 1;
  const ImageGrid s = ImageGrid::filled(8, 8, 1, 0.5);
  EXPECT_THROW(compose_film_texture({s, s}, layout), ArgumentError);
}

TEST(Surface, FlatUnitSquare) {
  const Mesh m = build_surface(WarpParams{}, 9);
  for (const auto& v : m.vertices) EXPECT_DOUBLE_EQ(v.z, 0.0);
  EXPECT_NEAR(m.surface_area(), 1.0, 1e-12);
}

TEST(Surface, SinePeakAtQuarter) {
  WarpParams p;
  p.sine_terms.push_back({0.05, 1.0, 0.0, {1.0, 0.0}});
  const Mesh m = build_surface(p, 9);  // column 2 sits at u = 0.25
  for (int r = 0; r < 9; ++r) EXPECT_NEAR(m.vertices[r * 9 + 2].z, 0.05, 1e-12);
}

TEST(Surface, SlopeBoundRejected) {
  WarpParams p;
  p.sine_terms.push_back({0.2, 1.0, 0.0, {1.0, 0.0}});
  EXPECT_THROW(build_surface(p, 9), RenderError);
}

TEST(Render, FlatSheetIsIdentityWarp) {
  const int n = 64;
  const WarpParams p = flat_filling(n);
  const GeometryMaps g = rasterize_geometry(build_surface(p, 17), p, n, n);
  int film = 0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (!g.bgmask.is_film(y, x)) continue;
      ++film;
      EXPECT_NEAR(g.uv.at(y, x, 0) * n, x + 0.5, 0.75);
      EXPECT_NEAR(g.uv.at(y, x, 1) * n, y + 0.5, 0.75);
      EXPECT_NEAR(g.deform.at(y, x, 0), 0.0, 0.75);
      EXPECT_NEAR(g.deform.at(y, x, 1), 0.0, 0.75);
    }
  }
  EXPECT_GT(film, n * n * 9 / 10);
}

TEST(Render, OffScreenSheetFails) {
  WarpParams p = flat_filling(32);
  p.rigid.translation = {50.0, 0.0, 0.0};
  const ImageGrid tex = ImageGrid::filled(16, 16, 1, 0.5);
  try {
    render_bundle(build_surface(p, 9), tex, p, 32, 32);
    FAIL() << "expected RenderError";
  } catch (const RenderError& e) {
    EXPECT_NE(std::string(e.what()).find("coverage"), std::string::npos);
  }
}

TEST(Generate, BundlesSatisfyInvariants) {
  const GenConfig cfg;
  for (int i = 0; i < 4; ++i) {
    const SampleBundle b = generate_sample(cfg, sample_seed(21, i));
    EXPECT_TRUE(validate_bundle(b).empty()) << "sample " << i;
    EXPECT_EQ(b.hu_slices.size(), 4u);
    EXPECT_EQ(b.texture.height(), cfg.layout.texture_height());
    // Deform definition, recomputed per pixel.
    for (int y = 0; y < b.height(); y += 5) {
      for (int x = 0; x < b.width(); x += 5) {
        if (!b.bgmask.is_film(y, x)) continue;
        EXPECT_NEAR(b.deform.at(y, x, 0), b.uv.at(y, x, 0) * b.width() - (x + 0.5), 1e-6);
        EXPECT_NEAR(b.deform.at(y, x, 1), b.uv.at(y, x, 1) * b.height() - (y + 0.5), 1e-6);
      }
    }
  }
}

TEST(Generate, ExplicitParamsOverload) {
  const GenConfig cfg;
  const auto seed = sample_seed(2, 0);
  WarpParams p = draw_params(cfg, seed);
  const SampleBundle a = generate_sample(cfg, seed);
  const SampleBundle b = generate_sample(cfg, seed, p);
  EXPECT_EQ(a.warped.data().size(), b.warped.data().size());
  EXPECT_TRUE(std::equal(a.warped.data().begin(), a.warped.data().end(), b.warped.data().begin()));
}

TEST(Generate, ConfigRejectsUnknownKeys) {
  EXPECT_THROW(gen_config_from_json({{"bogus", 1}}), ArgumentError);
  const GenConfig c = gen_config_from_json(to_json(GenConfig{}));
  EXPECT_EQ(c.out_h, 256);
  EXPECT_DOUBLE_EQ(c.focal_scale, 2.2);
}

TEST(Generate, ParamsJsonRoundTrip) {
  const WarpParams p = draw_params(GenConfig{}, 77);
  const WarpParams q = warp_params_from_json(to_json(p));
  EXPECT_EQ(to_json(p), to_json(q));
}

TEST(Dataset, EmptyAndDeterministic) {
  const auto root = oracle::scratch_dir("ds");
  const auto m0 = generate_dataset(GenConfig{}, 7, 0, root / "empty");
  EXPECT_TRUE(m0["samples"].empty());
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(root / "empty"))
    files += e.path().filename() != "manifest.json";
  EXPECT_EQ(files, 0u);

  generate_dataset(GenConfig{}, 7, 2, root / "a", 1);
  generate_dataset(GenConfig{}, 7, 2, root / "b", 2);
  EXPECT_TRUE(oracle::same_tree(root / "a", root / "b"));
  const SampleBundle loaded = load_sample(root / "a", 1);
  EXPECT_TRUE(validate_bundle(loaded).empty());
  std::filesystem::remove_all(root);
}
