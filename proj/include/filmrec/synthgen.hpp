#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "filmrec/image.hpp"
#include "filmrec/io.hpp"

namespace filmrec::synth {

constexpr int kHuMin = -1024;
constexpr int kHuMax = 3071;

struct Ellipse {
  double cx = 0.5;     // fractional canvas coordinates
  double cy = 0.5;
  double ax = 0.25;    // fractional semi-axes
  double ay = 0.25;
  double angle = 0.0;  // radians
  int hu = 0;
};

struct PhantomSpec {
  int canvas = 128;
  std::vector<Ellipse> bodies;
  // Peak amplitude of the smooth in-body texture noise, in HU.
  double noise_hu = 0.0;
};

struct FilmLayout {
  int rows = 2;
  int cols = 2;
  int cell = 116;
  int margin = 8;
  double background_level = 0.0;

  int texture_height() const { return rows * cell + (rows + 1) * margin; }
  int texture_width() const { return cols * cell + (cols + 1) * margin; }
  // Top-left pixel (x, y) of cell (r, c).
  std::array<int, 2> cell_origin(int r, int c) const {
    return {margin + c * (cell + margin), margin + r * (cell + margin)};
  }
};

struct WindowSpec {
  double ww = 80.0;
  double wl = 40.0;
};

struct SineTerm {
  double amplitude = 0.0;  // texture units
  double freq = 1.0;       // cycles per unit
  double phase = 0.0;      // radians
  std::array<double, 2> direction{1.0, 0.0};
};

struct RigidTransform {
  std::array<double, 3> rotation{0.0, 0.0, 0.0};  // radians about x, y, z
  std::array<double, 3> translation{0.0, 0.0, 0.0};
};

// Pinhole camera on the -z side of the sheet looking along +z; image x is
// world x, image y is world y.
struct Camera {
  double focal = 512.0;
  double cx = 128.0;
  double cy = 128.0;
  double distance = 2.5;
};

struct Light {
  std::array<double, 3> direction{0.0, 0.0, -1.0};  // surface -> light
  double ambient = 0.4;
  double diffuse = 0.5;
};

struct WarpParams {
  std::vector<SineTerm> sine_terms;
  double curl = 0.0;  // 1/length, bending about the v axis
  RigidTransform rigid;
  Camera camera;
  Light light;
  std::array<double, 3> background{0.1, 0.1, 0.1};

  // Sum over terms of |amplitude| * 2*pi*freq: an upper bound on |dz/ds|.
  double max_slope_bound() const;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct Mesh {
  int grid_n = 0;
  std::vector<Vec3> vertices;
  std::vector<std::array<double, 2>> texcoords;
  std::vector<std::array<int, 3>> triangles;

  double surface_area() const;
};

// Image-frame geometry maps only (no shading); what the fitter needs.
struct GeometryMaps {
  MapField uv;
  MapField deform;
  MapField coord3d;
  MapField normal;
  MapField depth;
  MapField bgmask;
  double coverage = 0.0;  // fraction of pixels covered by the film
};

struct SampleBundle {
  ImageGrid warped;  // RGB photo
  MapField coord3d;
  MapField normal;
  MapField depth;
  MapField uv;
  MapField deform;
  MapField bgmask;
  MapField albedo;
  ImageGrid texture;  // gray, texture frame
  std::vector<HuGrid> hu_slices;
  WarpParams params;
  WindowSpec window;
  FilmLayout layout;
  std::uint64_t seed = 0;

  int height() const { return warped.height(); }
  int width() const { return warped.width(); }
};

HuGrid make_phantom_slice(const PhantomSpec& spec, std::uint64_t seed);
// A head-like phantom (skull, brain, ventricles, lesions) with seeded jitter.
PhantomSpec random_head_phantom(int canvas, double noise_hu, std::uint64_t seed);

ImageGrid window_map(const HuGrid& hu, double ww, double wl);
ImageGrid compose_film_texture(const std::vector<ImageGrid>& slices, const FilmLayout& layout);

// Throws RenderError when the slope bound is violated (sheet could fold).
void validate_params(const WarpParams& params);
// Height field before curl/rigid, exposed for tests.
double height_field(const WarpParams& params, double u, double v);
Mesh build_surface(const WarpParams& params, int grid_n);

GeometryMaps rasterize_geometry(const Mesh& mesh, const WarpParams& params, int out_h,
                                int out_w);
SampleBundle render_bundle(const Mesh& mesh, const ImageGrid& texture, const WarpParams& params,
                           int out_h, int out_w);

// Names of violated bundle invariants; empty when the bundle is consistent.
std::vector<std::string> validate_bundle(const SampleBundle& bundle);

// ------------------------------------------------------------ generation

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct GenConfig {
  int out_h = 256;
  int out_w = 256;
  int grid_n = 65;
  FilmLayout layout;
  WindowSpec window;
  int phantom_canvas = 64;
  double phantom_noise_hu = 20.0;

  int sine_terms_max = 3;
  double amplitude_max = 0.08;
  Range freq{0.5, 1.5};
  double curl_max = 1.5;
  double rotation_max_deg = 25.0;
  double translation_max = 0.05;
  Range distance{2.3, 2.7};
  // Focal length as a multiple of out_w; 2.2 frames a flat unit sheet at
  // distance 2.5 to about 88% of the image width.
  double focal_scale = 2.2;
  double light_cone_deg = 35.0;
  Range ambient{0.3, 0.5};
  Range diffuse{0.35, 0.5};
  Range background{0.0, 0.35};
};

GenConfig gen_config_from_json(const nlohmann::json& doc);  // unknown keys -> ArgumentError
nlohmann::json to_json(const GenConfig& config);
nlohmann::json to_json(const WarpParams& params);
WarpParams warp_params_from_json(const nlohmann::json& doc);

std::uint64_t sample_seed(std::uint64_t seed, int index);
WarpParams draw_params(const GenConfig& config, std::uint64_t seed);
SampleBundle generate_sample(const GenConfig& config, std::uint64_t seed);
// Same texture as the seeded sample, rendered with explicit params.
SampleBundle generate_sample(const GenConfig& config, std::uint64_t seed,
                             const WarpParams& params);

void write_sample(const std::filesystem::path& dir, int index, const SampleBundle& bundle);
SampleBundle load_sample(const std::filesystem::path& dir, int index);

// Writes n samples plus manifest.json; returns the manifest. jobs <= 0 uses
// all logical cores.
nlohmann::json generate_dataset(const GenConfig& config, std::uint64_t seed, int n,
                                const std::filesystem::path& out_dir, int jobs = 0);

}  // namespace filmrec::synth
