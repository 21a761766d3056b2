#include "filmrec/synthgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>

#include "filmrec/error.hpp"
#include "rng.hpp"

namespace filmrec::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNearPlane = 1e-3;
constexpr double kConsistencyTolPx = 0.75;

Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 rotation_matrix(const std::array<double, 3>& angles) {
  const double cx = std::cos(angles[0]), sx = std::sin(angles[0]);
  const double cy = std::cos(angles[1]), sy = std::sin(angles[1]);
  const double cz = std::cos(angles[2]), sz = std::sin(angles[2]);
  // Rz * Ry * Rx
  return {{{cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx},
           {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx},
           {-sy, cy * sx, cy * cx}}};
}

Vec3 transform(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
          m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

bool inside_ellipse(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double c = std::cos(e.angle);
  const double s = std::sin(e.angle);
  const double a = (dx * c + dy * s) / e.ax;
  const double b = (-dx * s + dy * c) / e.ay;
  return a * a + b * b <= 1.0;
}

// ------------------------------------------------------------- json helpers

void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> keys,
                    const std::string& where) {
  if (!obj.is_object()) throw ArgumentError(where + ": expected an object");
  std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) throw ArgumentError(where + ": unknown key '" + key + "'");
  }
}

Range range_from(const nlohmann::json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2) throw ArgumentError(where + ": expected [lo, hi]");
  Range r{v[0].get<double>(), v[1].get<double>()};
  if (r.hi < r.lo) throw ArgumentError(where + ": hi < lo");
  return r;
}

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

// ------------------------------------------------------------------ phantom

HuGrid make_phantom_slice(const PhantomSpec& spec, std::uint64_t seed) {
  if (spec.canvas < 1) throw ArgumentError("phantom canvas must be positive");
  for (const auto& b : spec.bodies) {
    if (b.hu < kHuMin || b.hu > kHuMax) throw ArgumentError("phantom hu outside [-1024, 3071]");
    if (!(b.ax > 0.0) || !(b.ay > 0.0)) throw ArgumentError("phantom axes must be positive");
  }
  const int n = spec.canvas;
  std::vector<double> hu(static_cast<std::size_t>(n) * n, kHuMin);
  std::vector<std::uint8_t> body(hu.size(), 0);
  for (const auto& e : spec.bodies) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (inside_ellipse(e, (x + 0.5) / n, (y + 0.5) / n)) {
          hu[static_cast<std::size_t>(y) * n + x] = e.hu;
          body[static_cast<std::size_t>(y) * n + x] = 1;
        }
      }
    }
  }

  if (spec.noise_hu > 0.0) {
    // Value noise on an 8-pixel lattice, bilinearly interpolated.
    constexpr int kCell = 8;
    const int g = n / kCell + 2;
    detail::Rng rng(detail::splitmix64(seed ^ 0x6e6f697365ULL));
    std::vector<double> lattice(static_cast<std::size_t>(g) * g);
    for (double& v : lattice) v = rng.uniform(-1.0, 1.0);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const std::size_t k = static_cast<std::size_t>(y) * n + x;
        if (!body[k]) continue;
        const double fx = (x + 0.5) / kCell;
        const double fy = (y + 0.5) / kCell;
        const int x0 = static_cast<int>(fx);
        const int y0 = static_cast<int>(fy);
        const double ax = fx - x0;
        const double ay = fy - y0;
        auto L = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * g + xx]; };
        const double v = (L(y0, x0) * (1 - ax) + L(y0, x0 + 1) * ax) * (1 - ay) +
                         (L(y0 + 1, x0) * (1 - ax) + L(y0 + 1, x0 + 1) * ax) * ay;
        hu[k] += spec.noise_hu * v;
      }
    }
  }

  HuGrid out{n, n, std::vector<std::int16_t>(hu.size())};
  for (std::size_t k = 0; k < hu.size(); ++k) {
    out.data[k] = static_cast<std::int16_t>(
        std::clamp(static_cast<long>(std::lround(hu[k])), static_cast<long>(kHuMin),
                   static_cast<long>(kHuMax)));
  }
  return out;
}

PhantomSpec random_head_phantom(int canvas, double noise_hu, std::uint64_t seed) {
  detail::Rng rng(seed);
  PhantomSpec spec;
  spec.canvas = canvas;
  spec.noise_hu = noise_hu;
  const double cx = 0.5 + rng.uniform(-0.03, 0.03);
  const double cy = 0.5 + rng.uniform(-0.03, 0.03);
  const double ax = rng.uniform(0.34, 0.40);
  const double ay = rng.uniform(0.40, 0.46);
  const double tilt = rng.uniform(-0.15, 0.15);
  spec.bodies.push_back({cx, cy, ax, ay, tilt, rng.uniform_int(900, 1300)});
  spec.bodies.push_back({cx, cy, ax - 0.035, ay - 0.035, tilt, rng.uniform_int(28, 34)});
  spec.bodies.push_back({cx, cy, ax - 0.11, ay - 0.11, tilt, rng.uniform_int(38, 44)});
  // Ventricles.
  const double vx = rng.uniform(0.05, 0.08);
  for (int side : {-1, 1}) {
    spec.bodies.push_back({cx + side * vx, cy + rng.uniform(-0.04, 0.02), rng.uniform(0.03, 0.05),
                           rng.uniform(0.08, 0.12), side * rng.uniform(0.1, 0.4),
                           rng.uniform_int(2, 10)});
  }
  const int lesions = rng.uniform_int(0, 2);
  for (int i = 0; i < lesions; ++i) {
    const double r = rng.uniform(0.03, 0.07);
    const double ang = rng.uniform(0.0, kTwoPi);
    const double rad = rng.uniform(0.05, 0.2);
    const bool dense = rng.uniform() < 0.5;
    spec.bodies.push_back({cx + rad * std::cos(ang), cy + rad * std::sin(ang), r,
                           r * rng.uniform(0.7, 1.3), rng.uniform(0.0, std::numbers::pi),
                           dense ? rng.uniform_int(60, 75) : rng.uniform_int(10, 20)});
  }
  return spec;
}

ImageGrid window_map(const HuGrid& hu, double ww, double wl) {
  if (!(ww > 0.0)) throw ArgumentError("window width must be positive");
  std::vector<double> out(hu.data.size());
  const double lo = wl - ww / 2.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = std::clamp((hu.data[k] - lo) / ww, 0.0, 1.0);
  }
  return ImageGrid(hu.height, hu.width, 1, std::move(out));
}

ImageGrid compose_film_texture(const std::vector<ImageGrid>& slices, const FilmLayout& layout) {
  if (layout.rows < 1 || layout.cols < 1 || layout.cell < 16 || layout.margin < 0) {
    throw ArgumentError("film layout needs rows, cols >= 1, cell >= 16, margin >= 0");
  }
  if (slices.size() > static_cast<std::size_t>(layout.rows) * layout.cols) {
    throw ArgumentError("too many slices for a " + std::to_string(layout.rows) + "x" +
                        std::to_string(layout.cols) + " layout");
  }
  const int h = layout.texture_height();
  const int w = layout.texture_width();
  std::vector<double> out(static_cast<std::size_t>(h) * w, layout.background_level);
  for (std::size_t s = 0; s < slices.size(); ++s) {
    const ImageGrid cell = resize_bilinear(to_gray(slices[s]), layout.cell, layout.cell);
    const int r = static_cast<int>(s) / layout.cols;
    const int c = static_cast<int>(s) % layout.cols;
    const auto [ox, oy] = layout.cell_origin(r, c);
    for (int y = 0; y < layout.cell; ++y) {
      for (int x = 0; x < layout.cell; ++x) {
        out[static_cast<std::size_t>(oy + y) * w + ox + x] = cell.at(y, x);
      }
    }
  }
  return ImageGrid(h, w, 1, std::move(out));
}

// ------------------------------------------------------------------ surface

double WarpParams::max_slope_bound() const {
  double bound = 0.0;
  for (const auto& t : sine_terms) bound += std::abs(t.amplitude) * kTwoPi * std::abs(t.freq);
  return bound;
}

void validate_params(const WarpParams& params) {
  for (const auto& t : params.sine_terms) {
    const double len = std::hypot(t.direction[0], t.direction[1]);
    if (std::abs(len - 1.0) > 1e-6) throw RenderError("sine direction must be a unit vector");
  }
  const double bound = params.max_slope_bound();
  if (!(bound < 1.0)) {
    throw RenderError("height-field slope bound " + std::to_string(bound) +
                      " >= 1: sheet may self-intersect");
  }
  if (!(params.camera.focal > 0.0) || !(params.camera.distance > 0.0)) {
    throw RenderError("camera focal length and distance must be positive");
  }
}

double height_field(const WarpParams& params, double u, double v) {
  double z = 0.0;
  for (const auto& t : params.sine_terms) {
    const double s = t.direction[0] * u + t.direction[1] * v;
    z += t.amplitude * std::sin(kTwoPi * t.freq * s + t.phase);
  }
  return z;
}

double Mesh::surface_area() const {
  double area = 0.0;
  for (const auto& t : triangles) {
    area += 0.5 * norm(cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]));
  }
  return area;
}

Mesh build_surface(const WarpParams& params, int grid_n) {
  if (grid_n < 2) throw ArgumentError("grid_n must be >= 2");
  validate_params(params);
  Mesh mesh;
  mesh.grid_n = grid_n;
  const Mat3 rot = rotation_matrix(params.rigid.rotation);
  const double k = params.curl;
  mesh.vertices.reserve(static_cast<std::size_t>(grid_n) * grid_n);
  for (int r = 0; r < grid_n; ++r) {
    const double v = static_cast<double>(r) / (grid_n - 1);
    for (int c = 0; c < grid_n; ++c) {
      const double u = static_cast<double>(c) / (grid_n - 1);
      const double x = u - 0.5;
      const double y = v - 0.5;
      const double z = height_field(params, u, v);
      Vec3 p{x, y, z};
      if (std::abs(k) > 1e-9) {
        // Wrap x onto a cylinder of radius 1/k whose axis is parallel to y;
        // z is an offset along the (bent) sheet normal.
        const double radius = 1.0 / k;
        const double theta = k * x;
        p.x = (radius - z) * std::sin(theta);
        p.z = radius - (radius - z) * std::cos(theta);
      }
      p = transform(rot, p);
      p.x += params.rigid.translation[0];
      p.y += params.rigid.translation[1];
      p.z += params.rigid.translation[2];
      mesh.vertices.push_back(p);
      mesh.texcoords.push_back({u, v});
    }
  }
  for (int r = 0; r + 1 < grid_n; ++r) {
    for (int c = 0; c + 1 < grid_n; ++c) {
      const int a = r * grid_n + c;
      const int b = a + 1;
      const int d = a + grid_n;
      const int e = d + 1;
      mesh.triangles.push_back({a, b, e});
      mesh.triangles.push_back({a, e, d});
    }
  }
  return mesh;
}

// --------------------------------------------------------------- rasterizer

GeometryMaps rasterize_geometry(const Mesh& mesh, const WarpParams& params, int out_h,
                                int out_w) {
  if (out_h < 1 || out_w < 1) throw ArgumentError("output size must be positive");
  const Camera& cam = params.camera;
  const std::size_t nv = mesh.vertices.size();
  std::vector<double> sx(nv), sy(nv), sz(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec3& p = mesh.vertices[i];
    sz[i] = p.z + cam.distance;
    sx[i] = cam.cx + cam.focal * p.x / sz[i];
    sy[i] = cam.cy + cam.focal * p.y / sz[i];
  }

  const std::size_t pixels = static_cast<std::size_t>(out_h) * out_w;
  std::vector<double> zbuf(pixels, std::numeric_limits<double>::infinity());
  std::vector<int> tri_id(pixels, -1);
  std::vector<std::array<double, 3>> bary(pixels);

  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const int i0 = tri[0], i1 = tri[1], i2 = tri[2];
    if (sz[i0] <= kNearPlane || sz[i1] <= kNearPlane || sz[i2] <= kNearPlane) continue;
    const double area = (sx[i1] - sx[i0]) * (sy[i2] - sy[i0]) - (sx[i2] - sx[i0]) * (sy[i1] - sy[i0]);
    if (std::abs(area) < 1e-12) continue;
    const double min_x = std::min({sx[i0], sx[i1], sx[i2]});
    const double max_x = std::max({sx[i0], sx[i1], sx[i2]});
    const double min_y = std::min({sy[i0], sy[i1], sy[i2]});
    const double max_y = std::max({sy[i0], sy[i1], sy[i2]});
    const int x_begin = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int x_end = std::min(out_w - 1, static_cast<int>(std::floor(max_x - 0.5)));
    const int y_begin = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int y_end = std::min(out_h - 1, static_cast<int>(std::floor(max_y - 0.5)));
    const double inv_area = 1.0 / area;
    for (int y = y_begin; y <= y_end; ++y) {
      const double py = y + 0.5;
      for (int x = x_begin; x <= x_end; ++x) {
        const double px = x + 0.5;
        const double l0 = ((sx[i1] - px) * (sy[i2] - py) - (sx[i2] - px) * (sy[i1] - py)) * inv_area;
        const double l1 = ((sx[i2] - px) * (sy[i0] - py) - (sx[i0] - px) * (sy[i2] - py)) * inv_area;
        const double l2 = 1.0 - l0 - l1;
        constexpr double kEdgeEps = -1e-9;
        if (l0 < kEdgeEps || l1 < kEdgeEps || l2 < kEdgeEps) continue;
        // Perspective-correct weights: screen barycentrics divided by depth.
        const double w0 = l0 / sz[i0], w1 = l1 / sz[i1], w2 = l2 / sz[i2];
        const double inv_z = w0 + w1 + w2;
        const double z = 1.0 / inv_z;
        const std::size_t k = static_cast<std::size_t>(y) * out_w + x;
        if (z < zbuf[k]) {
          zbuf[k] = z;
          tri_id[k] = static_cast<int>(t);
          bary[k] = {w0 * z, w1 * z, w2 * z};
        }
      }
    }
  }

  std::vector<double> uv(pixels * 2, 0.0), deform(pixels * 2, 0.0), coord(pixels * 3, 0.0),
      normal(pixels * 3, 0.0), depth(pixels, 0.0), mask(pixels, 0.0);
  std::vector<std::uint8_t> valid(pixels, 0), all_valid(pixels, 1);
  const Vec3 eye{0.0, 0.0, -cam.distance};
  std::size_t covered = 0;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * out_w + x;
      if (tri_id[k] < 0) continue;
      ++covered;
      const auto& tri = mesh.triangles[tri_id[k]];
      const auto& b = bary[k];
      double u = 0.0, v = 0.0;
      Vec3 p;
      for (int j = 0; j < 3; ++j) {
        u += b[j] * mesh.texcoords[tri[j]][0];
        v += b[j] * mesh.texcoords[tri[j]][1];
        p.x += b[j] * mesh.vertices[tri[j]].x;
        p.y += b[j] * mesh.vertices[tri[j]].y;
        p.z += b[j] * mesh.vertices[tri[j]].z;
      }
      const Vec3& a0 = mesh.vertices[tri[0]];
      Vec3 n = cross(mesh.vertices[tri[1]] - a0, mesh.vertices[tri[2]] - a0);
      const double len = norm(n);
      n = {n.x / len, n.y / len, n.z / len};
      if (dot(n, eye - p) < 0.0) n = {-n.x, -n.y, -n.z};

      valid[k] = 1;
      mask[k] = 1.0;
      uv[2 * k] = std::clamp(u, 0.0, 1.0);
      uv[2 * k + 1] = std::clamp(v, 0.0, 1.0);
      deform[2 * k] = uv[2 * k] * out_w - (x + 0.5);
      deform[2 * k + 1] = uv[2 * k + 1] * out_h - (y + 0.5);
      coord[3 * k] = p.x;
      coord[3 * k + 1] = p.y;
      coord[3 * k + 2] = p.z;
      normal[3 * k] = n.x;
      normal[3 * k + 1] = n.y;
      normal[3 * k + 2] = n.z;
      depth[k] = zbuf[k];
    }
  }
  GeometryMaps maps;
  maps.coverage = static_cast<double>(covered) / pixels;
  if (covered == 0) {
    throw RenderError("film sheet is fully off-screen (coverage fraction 0)");
  }
  maps.uv = MapField(out_h, out_w, Role::kUV, std::move(uv), valid);
  maps.deform = MapField(out_h, out_w, Role::kDeform, std::move(deform), valid);
  maps.coord3d = MapField(out_h, out_w, Role::kCoord3D, std::move(coord), valid);
  maps.normal = MapField(out_h, out_w, Role::kNormal, std::move(normal), valid);
  maps.depth = MapField(out_h, out_w, Role::kDepth, std::move(depth), valid);
  maps.bgmask = MapField(out_h, out_w, Role::kMask, std::move(mask), std::move(all_valid));
  return maps;
}

SampleBundle render_bundle(const Mesh& mesh, const ImageGrid& texture, const WarpParams& params,
                           int out_h, int out_w) {
  if (texture.empty()) throw ArgumentError("render_bundle needs a texture");
  GeometryMaps geo = rasterize_geometry(mesh, params, out_h, out_w);
  const ImageGrid tex = to_gray(texture);
  const std::size_t pixels = static_cast<std::size_t>(out_h) * out_w;
  std::vector<double> albedo(pixels * 3, 0.5), warped(pixels * 3);
  const auto& light = params.light;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * out_w + x;
      if (!geo.bgmask.is_film(y, x)) {
        for (int c = 0; c < 3; ++c) warped[3 * k + c] = params.background[c];
        continue;
      }
      const double a =
          tex.sample(geo.uv.at(y, x, 0) * tex.width(), geo.uv.at(y, x, 1) * tex.height());
      double ndotl = 0.0;
      for (int c = 0; c < 3; ++c) ndotl += geo.normal.at(y, x, c) * light.direction[c];
      const double shade = light.ambient + light.diffuse * std::max(0.0, ndotl);
      for (int c = 0; c < 3; ++c) {
        albedo[3 * k + c] = a;
        warped[3 * k + c] = std::clamp(a * shade, 0.0, 1.0);
      }
    }
  }
  SampleBundle b;
  b.warped = ImageGrid(out_h, out_w, 3, std::move(warped));
  b.albedo = MapField(out_h, out_w, Role::kAlbedo, std::move(albedo),
                      std::vector<std::uint8_t>(geo.uv.valid_mask().begin(),
                                                geo.uv.valid_mask().end()));
  b.coord3d = std::move(geo.coord3d);
  b.normal = std::move(geo.normal);
  b.depth = std::move(geo.depth);
  b.uv = std::move(geo.uv);
  b.deform = std::move(geo.deform);
  b.bgmask = std::move(geo.bgmask);
  b.texture = tex;
  b.params = params;
  return b;
}

std::vector<std::string> validate_bundle(const SampleBundle& b) {
  std::vector<std::string> out;
  const int h = b.warped.height();
  const int w = b.warped.width();
  for (const MapField* m : {&b.coord3d, &b.normal, &b.depth, &b.uv, &b.deform, &b.bgmask, &b.albedo}) {
    if (m->height() != h || m->width() != w) {
      out.push_back(std::string(role_name(m->role())) + ": frame differs from photo");
      return out;
    }
  }
  for (const MapField* m : {&b.normal, &b.depth, &b.uv, &b.bgmask}) {
    for (auto& v : invariant_violations(*m)) out.push_back(v);
  }
  std::size_t uv_missing = 0;
  std::size_t inconsistent = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!b.bgmask.is_film(y, x)) continue;
      if (!b.uv.valid(y, x) || !b.deform.valid(y, x)) {
        ++uv_missing;
        continue;
      }
      const double ex = b.uv.at(y, x, 0) * w - (x + 0.5 + b.deform.at(y, x, 0));
      const double ey = b.uv.at(y, x, 1) * h - (y + 0.5 + b.deform.at(y, x, 1));
      if (std::abs(ex) > kConsistencyTolPx || std::abs(ey) > kConsistencyTolPx) ++inconsistent;
    }
  }
  if (uv_missing) out.push_back("uv: " + std::to_string(uv_missing) + " film pixels without uv");
  if (inconsistent) {
    out.push_back("uv/deform: " + std::to_string(inconsistent) + " pixels disagree > 0.75 px");
  }
  return out;
}

// --------------------------------------------------------------- generation

GenConfig gen_config_from_json(const nlohmann::json& doc) {
  GenConfig c;
  try {
    reject_unknown(doc, {"out_h", "out_w", "grid_n", "layout", "window", "phantom", "warp",
                         "camera", "light", "background"},
                   "gen config");
    read_opt(doc, "out_h", c.out_h);
    read_opt(doc, "out_w", c.out_w);
    read_opt(doc, "grid_n", c.grid_n);
    if (doc.contains("layout")) {
      const auto& l = doc["layout"];
      reject_unknown(l, {"rows", "cols", "cell", "margin", "background_level"}, "layout");
      read_opt(l, "rows", c.layout.rows);
      read_opt(l, "cols", c.layout.cols);
      read_opt(l, "cell", c.layout.cell);
      read_opt(l, "margin", c.layout.margin);
      read_opt(l, "background_level", c.layout.background_level);
    }
    if (doc.contains("window")) {
      const auto& l = doc["window"];
      reject_unknown(l, {"ww", "wl"}, "window");
      read_opt(l, "ww", c.window.ww);
      read_opt(l, "wl", c.window.wl);
    }
    if (doc.contains("phantom")) {
      const auto& l = doc["phantom"];
      reject_unknown(l, {"canvas", "noise_hu"}, "phantom");
      read_opt(l, "canvas", c.phantom_canvas);
      read_opt(l, "noise_hu", c.phantom_noise_hu);
    }
    if (doc.contains("warp")) {
      const auto& l = doc["warp"];
      reject_unknown(l, {"sine_terms_max", "amplitude_max", "freq", "curl_max",
                         "rotation_max_deg", "translation_max"},
                     "warp");
      read_opt(l, "sine_terms_max", c.sine_terms_max);
      read_opt(l, "amplitude_max", c.amplitude_max);
      if (l.contains("freq")) c.freq = range_from(l["freq"], "warp.freq");
      read_opt(l, "curl_max", c.curl_max);
      read_opt(l, "rotation_max_deg", c.rotation_max_deg);
      read_opt(l, "translation_max", c.translation_max);
    }
    if (doc.contains("camera")) {
      const auto& l = doc["camera"];
      reject_unknown(l, {"distance", "focal_scale"}, "camera");
      if (l.contains("distance")) c.distance = range_from(l["distance"], "camera.distance");
      read_opt(l, "focal_scale", c.focal_scale);
    }
    if (doc.contains("light")) {
      const auto& l = doc["light"];
      reject_unknown(l, {"cone_deg", "ambient", "diffuse"}, "light");
      read_opt(l, "cone_deg", c.light_cone_deg);
      if (l.contains("ambient")) c.ambient = range_from(l["ambient"], "light.ambient");
      if (l.contains("diffuse")) c.diffuse = range_from(l["diffuse"], "light.diffuse");
    }
    if (doc.contains("background")) c.background = range_from(doc["background"], "background");
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("gen config: ") + e.what());
  }
  if (c.out_h < 1 || c.out_w < 1 || c.grid_n < 2) {
    throw ArgumentError("gen config: out_h/out_w must be >= 1 and grid_n >= 2");
  }
  if (c.layout.rows < 1 || c.layout.cols < 1 || c.layout.cell < 16) {
    throw ArgumentError("gen config: layout needs rows, cols >= 1 and cell >= 16");
  }
  if (!(c.window.ww > 0.0)) throw ArgumentError("gen config: window.ww must be positive");
  if (c.sine_terms_max < 0) throw ArgumentError("gen config: sine_terms_max must be >= 0");
  return c;
}

nlohmann::json to_json(const GenConfig& c) {
  return {
      {"out_h", c.out_h},
      {"out_w", c.out_w},
      {"grid_n", c.grid_n},
      {"layout",
       {{"rows", c.layout.rows},
        {"cols", c.layout.cols},
        {"cell", c.layout.cell},
        {"margin", c.layout.margin},
        {"background_level", c.layout.background_level}}},
      {"window", {{"ww", c.window.ww}, {"wl", c.window.wl}}},
      {"phantom", {{"canvas", c.phantom_canvas}, {"noise_hu", c.phantom_noise_hu}}},
      {"warp",
       {{"sine_terms_max", c.sine_terms_max},
        {"amplitude_max", c.amplitude_max},
        {"freq", range_json(c.freq)},
        {"curl_max", c.curl_max},
        {"rotation_max_deg", c.rotation_max_deg},
        {"translation_max", c.translation_max}}},
      {"camera", {{"distance", range_json(c.distance)}, {"focal_scale", c.focal_scale}}},
      {"light",
       {{"cone_deg", c.light_cone_deg},
        {"ambient", range_json(c.ambient)},
        {"diffuse", range_json(c.diffuse)}}},
      {"background", range_json(c.background)},
  };
}

nlohmann::json to_json(const WarpParams& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : p.sine_terms) {
    terms.push_back({{"amplitude", t.amplitude},
                     {"freq", t.freq},
                     {"phase", t.phase},
                     {"direction", {t.direction[0], t.direction[1]}}});
  }
  return {
      {"sine_terms", terms},
      {"curl", p.curl},
      {"rigid",
       {{"rotation", {p.rigid.rotation[0], p.rigid.rotation[1], p.rigid.rotation[2]}},
        {"translation",
         {p.rigid.translation[0], p.rigid.translation[1], p.rigid.translation[2]}}}},
      {"camera",
       {{"focal", p.camera.focal},
        {"cx", p.camera.cx},
        {"cy", p.camera.cy},
        {"distance", p.camera.distance}}},
      {"light",
       {{"direction", {p.light.direction[0], p.light.direction[1], p.light.direction[2]}},
        {"ambient", p.light.ambient},
        {"diffuse", p.light.diffuse}}},
      {"background", {p.background[0], p.background[1], p.background[2]}},
  };
}

WarpParams warp_params_from_json(const nlohmann::json& doc) {
  WarpParams p;
  try {
    reject_unknown(doc, {"sine_terms", "curl", "rigid", "camera", "light", "background"},
                   "warp params");
    for (const auto& t : doc.at("sine_terms")) {
      SineTerm s;
      s.amplitude = t.at("amplitude").get<double>();
      s.freq = t.at("freq").get<double>();
      s.phase = t.at("phase").get<double>();
      s.direction = t.at("direction").get<std::array<double, 2>>();
      p.sine_terms.push_back(s);
    }
    p.curl = doc.at("curl").get<double>();
    p.rigid.rotation = doc.at("rigid").at("rotation").get<std::array<double, 3>>();
    p.rigid.translation = doc.at("rigid").at("translation").get<std::array<double, 3>>();
    const auto& cam = doc.at("camera");
    p.camera = {cam.at("focal").get<double>(), cam.at("cx").get<double>(),
                cam.at("cy").get<double>(), cam.at("distance").get<double>()};
    const auto& light = doc.at("light");
    p.light.direction = light.at("direction").get<std::array<double, 3>>();
    p.light.ambient = light.at("ambient").get<double>();
    p.light.diffuse = light.at("diffuse").get<double>();
    p.background = doc.at("background").get<std::array<double, 3>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("warp params: ") + e.what());
  }
  return p;
}

std::uint64_t sample_seed(std::uint64_t seed, int index) {
  return detail::splitmix64(seed * 0x100000001b3ULL + static_cast<std::uint64_t>(index));
}

WarpParams draw_params(const GenConfig& config, std::uint64_t seed) {
  detail::Rng rng(detail::splitmix64(seed ^ 0x77617270ULL));
  WarpParams p;
  const int terms = config.sine_terms_max > 0 ? rng.uniform_int(1, config.sine_terms_max) : 0;
  for (int i = 0; i < terms; ++i) {
    SineTerm t;
    t.amplitude = rng.uniform(-config.amplitude_max, config.amplitude_max);
    t.freq = rng.uniform(config.freq.lo, config.freq.hi);
    t.phase = rng.uniform(0.0, kTwoPi);
    const double ang = rng.uniform(0.0, kTwoPi);
    t.direction = {std::cos(ang), std::sin(ang)};
    p.sine_terms.push_back(t);
  }
  constexpr double kSlopeCap = 0.9;
  const double bound = p.max_slope_bound();
  if (bound > kSlopeCap) {
    for (auto& t : p.sine_terms) t.amplitude *= kSlopeCap / bound;
  }
  p.curl = rng.uniform(-config.curl_max, config.curl_max);
  const double rot = config.rotation_max_deg * std::numbers::pi / 180.0;
  for (double& a : p.rigid.rotation) a = rng.uniform(-rot, rot);
  for (double& t : p.rigid.translation) t = rng.uniform(-config.translation_max, config.translation_max);
  p.camera.distance = rng.uniform(config.distance.lo, config.distance.hi);
  p.camera.focal = config.focal_scale * config.out_w;
  p.camera.cx = config.out_w / 2.0;
  p.camera.cy = config.out_h / 2.0;
  const double cone = config.light_cone_deg * std::numbers::pi / 180.0;
  const double theta = rng.uniform(0.0, cone);
  const double phi = rng.uniform(0.0, kTwoPi);
  p.light.direction = {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                       -std::cos(theta)};
  p.light.ambient = rng.uniform(config.ambient.lo, config.ambient.hi);
  p.light.diffuse = rng.uniform(config.diffuse.lo, config.diffuse.hi);
  for (double& c : p.background) c = rng.uniform(config.background.lo, config.background.hi);
  return p;
}

SampleBundle generate_sample(const GenConfig& config, std::uint64_t seed) {
  return generate_sample(config, seed, draw_params(config, seed));
}

SampleBundle generate_sample(const GenConfig& config, std::uint64_t seed,
                             const WarpParams& params) {
  const int slices = config.layout.rows * config.layout.cols;
  std::vector<HuGrid> hu;
  std::vector<ImageGrid> display;
  for (int s = 0; s < slices; ++s) {
    const std::uint64_t slice_seed = detail::splitmix64(seed + 0x51ULL * (s + 1));
    hu.push_back(make_phantom_slice(
        random_head_phantom(config.phantom_canvas, config.phantom_noise_hu, slice_seed),
        slice_seed));
    display.push_back(window_map(hu.back(), config.window.ww, config.window.wl));
  }
  const ImageGrid texture = compose_film_texture(display, config.layout);
  const Mesh mesh = build_surface(params, config.grid_n);
  SampleBundle bundle = render_bundle(mesh, texture, params, config.out_h, config.out_w);
  bundle.hu_slices = std::move(hu);
  bundle.window = config.window;
  bundle.layout = config.layout;
  bundle.seed = seed;
  return bundle;
}

namespace {

std::string prefix(int index) { return std::to_string(index) + "_"; }

const char* const kSampleFiles[] = {"warped.png",   "texture.png", "albedo.fmap",
                                    "uv.fmap",      "deform.fmap", "coord3d.fmap",
                                    "normal.fmap",  "depth.fmap",  "mask.fmap",
                                    "hu.raw",       "meta.json"};

nlohmann::json layout_json(const FilmLayout& l) {
  return {{"rows", l.rows},
          {"cols", l.cols},
          {"cell", l.cell},
          {"margin", l.margin},
          {"background_level", l.background_level}};
}

}  // namespace

void write_sample(const std::filesystem::path& dir, int index, const SampleBundle& b) {
  const std::string p = prefix(index);
  write_png(dir / (p + "warped.png"), b.warped);
  write_png(dir / (p + "texture.png"), b.texture);
  write_fmap(dir / (p + "albedo.fmap"), b.albedo);
  write_fmap(dir / (p + "uv.fmap"), b.uv);
  write_fmap(dir / (p + "deform.fmap"), b.deform);
  write_fmap(dir / (p + "coord3d.fmap"), b.coord3d);
  write_fmap(dir / (p + "normal.fmap"), b.normal);
  write_fmap(dir / (p + "depth.fmap"), b.depth);
  write_fmap(dir / (p + "mask.fmap"), b.bgmask);
  HuStack stack{b.hu_slices, {{"window", {{"ww", b.window.ww}, {"wl", b.window.wl}}}}};
  write_hu_raw(dir / (p + "hu.raw"), stack);
  write_json(dir / (p + "meta.json"),
             {{"id", index},
              {"seed", b.seed},
              {"out_h", b.height()},
              {"out_w", b.width()},
              {"window", {{"ww", b.window.ww}, {"wl", b.window.wl}}},
              {"layout", layout_json(b.layout)},
              {"params", to_json(b.params)}});
}

SampleBundle load_sample(const std::filesystem::path& dir, int index) {
  const std::string p = prefix(index);
  SampleBundle b;
  const auto meta = read_json(dir / (p + "meta.json"));
  try {
    b.seed = meta.at("seed").get<std::uint64_t>();
    b.window = {meta.at("window").at("ww").get<double>(), meta.at("window").at("wl").get<double>()};
    const auto& l = meta.at("layout");
    b.layout = {l.at("rows").get<int>(), l.at("cols").get<int>(), l.at("cell").get<int>(),
                l.at("margin").get<int>(), l.at("background_level").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / (p + "meta.json")).string() + ": " + e.what());
  }
  b.params = warp_params_from_json(meta.at("params"));
  b.warped = read_png(dir / (p + "warped.png"));
  b.texture = read_png(dir / (p + "texture.png"));
  b.albedo = read_fmap(dir / (p + "albedo.fmap"));
  b.uv = read_fmap(dir / (p + "uv.fmap"));
  b.deform = read_fmap(dir / (p + "deform.fmap"));
  b.coord3d = read_fmap(dir / (p + "coord3d.fmap"));
  b.normal = read_fmap(dir / (p + "normal.fmap"));
  b.depth = read_fmap(dir / (p + "depth.fmap"));
  b.bgmask = read_fmap(dir / (p + "mask.fmap"));
  b.hu_slices = read_hu_raw(dir / (p + "hu.raw")).slices;
  return b;
}

nlohmann::json generate_dataset(const GenConfig& config, std::uint64_t seed, int n,
                                const std::filesystem::path& out_dir, int jobs) {
  if (n < 0) throw ArgumentError("sample count must be >= 0");
  std::error_code ec;
  if (!std::filesystem::is_directory(out_dir)) {
    std::filesystem::create_directory(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  }
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  jobs = std::min(jobs, std::max(n, 1));

  std::vector<nlohmann::json> entries(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        const std::uint64_t s = sample_seed(seed, i);
        const SampleBundle bundle = generate_sample(config, s);
        write_sample(out_dir, i, bundle);
        nlohmann::json files = nlohmann::json::array();
        for (const char* f : kSampleFiles) files.push_back(prefix(i) + f);
        entries[i] = {{"id", i}, {"seed", s}, {"files", files}, {"params", to_json(bundle.params)}};
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  nlohmann::json manifest = {{"seed", seed},
                             {"n", n},
                             {"config", to_json(config)},
                             {"samples", nlohmann::json(entries)}};
  if (n == 0) manifest["samples"] = nlohmann::json::array();
  write_json(out_dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace filmrec::synth
