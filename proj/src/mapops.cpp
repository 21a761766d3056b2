#include "filmrec/mapops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "filmrec/error.hpp"

namespace filmrec::maps {
namespace {

constexpr double kPsnrCap = 99.0;

using Point = std::array<double, 2>;

double cross(const Point& o, const Point& a, const Point& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

// Andrew's monotone chain; counter-clockwise, no collinear points.
std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

// Inside or on the boundary of a CCW hull (degenerate hulls cover nothing).
bool in_hull(const std::vector<Point>& hull, const Point& p) {
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    if (cross(hull[i], hull[(i + 1) % hull.size()], p) < -1e-9) return false;
  }
  return true;
}

void check_mask(const MapField& field, const MapField& mask, const char* what) {
  if (!field.same_frame(mask)) {
    throw ArgumentError(std::string(what) + ": map and mask frames differ");
  }
  if (mask.channels() != 1) throw ContractError(std::string(what) + ": mask must be 1-channel");
}

}  // namespace

double BackwardMap::fraction(Coverage c) const {
  if (coverage.empty()) return 0.0;
  return static_cast<double>(std::count(coverage.begin(), coverage.end(), c)) / coverage.size();
}

nlohmann::json BackwardMap::summary() const {
  return {{"height", height()},
          {"width", width()},
          {"observed_fraction", fraction(Coverage::kObserved)},
          {"filled_fraction", fraction(Coverage::kFilled)},
          {"empty_fraction", fraction(Coverage::kEmpty)},
          {"fill_iterations", fill_iterations}};
}

BackwardMap uv_to_backward(const MapField& uv, const MapField& mask, int tex_h, int tex_w,
                           const InversionOptions& options) {
  check_mask(uv, mask, "uv_to_backward");
  if (tex_h < 1 || tex_w < 1) throw ArgumentError("uv_to_backward: texture size must be positive");
  const std::size_t cells = static_cast<std::size_t>(tex_h) * tex_w;
  std::vector<double> wsum(cells, 0.0), acc(cells * 2, 0.0);
  std::vector<Point> targets;

  // Bilinear splat of each film pixel's own position into the texture cells
  // around its target.
  for (int y = 0; y < uv.height(); ++y) {
    for (int x = 0; x < uv.width(); ++x) {
      if (!mask.is_film(y, x) || !uv.valid(y, x)) continue;
      const double tx = uv.at(y, x, 0) * tex_w;
      const double ty = uv.at(y, x, 1) * tex_h;
      targets.push_back({tx, ty});
      const double fx = tx - 0.5;
      const double fy = ty - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const int y0 = static_cast<int>(std::floor(fy));
      const double ax = fx - x0;
      const double ay = fy - y0;
      const double px = x + 0.5;
      const double py = y + 0.5;
      const std::array<std::array<double, 3>, 4> taps{{{0, 0, (1 - ax) * (1 - ay)},
                                                       {1, 0, ax * (1 - ay)},
                                                       {0, 1, (1 - ax) * ay},
                                                       {1, 1, ax * ay}}};
      for (const auto& [ox, oy, w] : taps) {
        const int cx = x0 + static_cast<int>(ox);
        const int cy = y0 + static_cast<int>(oy);
        if (w <= 0.0 || cx < 0 || cy < 0 || cx >= tex_w || cy >= tex_h) continue;
        const std::size_t k = static_cast<std::size_t>(cy) * tex_w + cx;
        wsum[k] += w;
        acc[2 * k] += w * px;
        acc[2 * k + 1] += w * py;
      }
    }
  }
  if (targets.empty()) {
    throw ArgumentError("uv_to_backward: no film pixels with valid uv");
  }

  const std::vector<Point> hull = convex_hull(targets);
  std::vector<Coverage> cov(cells, Coverage::kEmpty);
  std::vector<double> val(cells * 2, 0.0);
  double mean_x = 0.0, mean_y = 0.0;
  std::size_t observed = 0;
  for (std::size_t k = 0; k < cells; ++k) {
    if (wsum[k] > 0.0) {
      cov[k] = Coverage::kObserved;
      val[2 * k] = acc[2 * k] / wsum[k];
      val[2 * k + 1] = acc[2 * k + 1] / wsum[k];
      mean_x += val[2 * k];
      mean_y += val[2 * k + 1];
      ++observed;
    }
  }
  mean_x /= observed;
  mean_y /= observed;

  std::vector<std::size_t> holes;
  for (int y = 0; y < tex_h; ++y) {
    for (int x = 0; x < tex_w; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * tex_w + x;
      if (cov[k] == Coverage::kEmpty && in_hull(hull, {x + 0.5, y + 0.5})) {
        cov[k] = Coverage::kFilled;
        val[2 * k] = mean_x;
        val[2 * k + 1] = mean_y;
        holes.push_back(k);
      }
    }
  }

  // Synchronous Jacobi diffusion over the holes; observed cells are fixed.
  int iterations = 0;
  if (!holes.empty()) {
    std::vector<double> next(val);
    for (; iterations < options.max_fill_iterations; ++iterations) {
      double max_update = 0.0;
      for (std::size_t k : holes) {
        const int y = static_cast<int>(k / tex_w);
        const int x = static_cast<int>(k % tex_w);
        double sx = 0.0, sy = 0.0;
        int count = 0;
        const std::array<std::array<int, 2>, 4> nbrs{{{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}};
        for (const auto& [nx, ny] : nbrs) {
          if (nx < 0 || ny < 0 || nx >= tex_w || ny >= tex_h) continue;
          const std::size_t n = static_cast<std::size_t>(ny) * tex_w + nx;
          if (cov[n] == Coverage::kEmpty) continue;
          sx += val[2 * n];
          sy += val[2 * n + 1];
          ++count;
        }
        if (count == 0) continue;
        next[2 * k] = sx / count;
        next[2 * k + 1] = sy / count;
        max_update = std::max({max_update, std::abs(next[2 * k] - val[2 * k]),
                               std::abs(next[2 * k + 1] - val[2 * k + 1])});
      }
      for (std::size_t k : holes) {
        val[2 * k] = next[2 * k];
        val[2 * k + 1] = next[2 * k + 1];
      }
      if (max_update < options.fill_tolerance_px) {
        ++iterations;
        break;
      }
    }
  }

  std::vector<std::uint8_t> valid(cells);
  for (std::size_t k = 0; k < cells; ++k) valid[k] = cov[k] != Coverage::kEmpty;
  BackwardMap out;
  out.field = MapField(tex_h, tex_w, Role::kBackward, std::move(val), std::move(valid));
  out.coverage = std::move(cov);
  out.fill_iterations = iterations;
  return out;
}

MapField deformation_to_uv(const MapField& deform, const MapField& mask, int out_w, int out_h) {
  check_mask(deform, mask, "deformation_to_uv");
  if (out_w < 1 || out_h < 1) throw ArgumentError("deformation_to_uv: frame must be positive");
  const std::size_t pixels = deform.pixel_count();
  std::vector<double> uv(pixels * 2, 0.0);
  std::vector<std::uint8_t> valid(pixels, 0);
  for (int y = 0; y < deform.height(); ++y) {
    for (int x = 0; x < deform.width(); ++x) {
      if (!mask.is_film(y, x) || !deform.valid(y, x)) continue;
      const std::size_t k = static_cast<std::size_t>(y) * deform.width() + x;
      uv[2 * k] = (x + 0.5 + deform.at(y, x, 0)) / out_w;
      uv[2 * k + 1] = (y + 0.5 + deform.at(y, x, 1)) / out_h;
      valid[k] = 1;
    }
  }
  return MapField(deform.height(), deform.width(), Role::kUV, std::move(uv), std::move(valid));
}

MapField merge_uv(const MapField& primary_uv, const MapField& aux_uv, const MapField& mask) {
  check_mask(primary_uv, mask, "merge_uv");
  if (!primary_uv.same_frame(aux_uv)) throw ArgumentError("merge_uv: frames differ");
  const std::size_t pixels = primary_uv.pixel_count();
  std::vector<double> uv(pixels * 2, 0.0);
  std::vector<std::uint8_t> valid(pixels, 0);
  auto usable = [](const MapField& m, int y, int x) {
    if (!m.valid(y, x)) return false;
    const double u = m.at(y, x, 0);
    const double v = m.at(y, x, 1);
    return u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0;
  };
  for (int y = 0; y < primary_uv.height(); ++y) {
    for (int x = 0; x < primary_uv.width(); ++x) {
      if (!mask.is_film(y, x)) continue;
      const std::size_t k = static_cast<std::size_t>(y) * primary_uv.width() + x;
      const MapField* src = usable(primary_uv, y, x) ? &primary_uv
                            : usable(aux_uv, y, x)   ? &aux_uv
                                                     : nullptr;
      if (!src) continue;
      uv[2 * k] = src->at(y, x, 0);
      uv[2 * k + 1] = src->at(y, x, 1);
      valid[k] = 1;
    }
  }
  return MapField(primary_uv.height(), primary_uv.width(), Role::kUV, std::move(uv),
                  std::move(valid));
}

ImageGrid backward_sample(const ImageGrid& img, const BackwardMap& bmap, double fill_value) {
  const int h = bmap.height();
  const int w = bmap.width();
  const int ch = img.channels();
  std::vector<double> out(static_cast<std::size_t>(h) * w * ch, fill_value);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (bmap.at(y, x) == Coverage::kEmpty) continue;
      const double sx = bmap.field.at(y, x, 0);
      const double sy = bmap.field.at(y, x, 1);
      for (int c = 0; c < ch; ++c) {
        out[(static_cast<std::size_t>(y) * w + x) * ch + c] = img.sample(sx, sy, c);
      }
    }
  }
  return ImageGrid(h, w, ch, std::move(out), img.range());
}

MapField deshift_map(const MapField& pred, const MapField& gt, const MapField& mask) {
  check_mask(pred, mask, "deshift_map");
  if (!pred.same_frame(gt) || pred.channels() != gt.channels() || pred.role() != gt.role()) {
    throw ArgumentError("deshift_map: pred and gt differ in shape or role");
  }
  const int ch = pred.channels();
  std::vector<double> mean(ch, 0.0);
  std::size_t n = 0;
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      if (!mask.is_film(y, x) || !pred.valid(y, x) || !gt.valid(y, x)) continue;
      for (int c = 0; c < ch; ++c) mean[c] += pred.at(y, x, c) - gt.at(y, x, c);
      ++n;
    }
  }
  if (n == 0) throw ArgumentError("deshift_map: no valid film pixels");
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<double> out(pred.data().begin(), pred.data().end());
  for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
    for (int c = 0; c < ch; ++c) out[p * ch + c] -= mean[c];
  }
  return MapField::unchecked(pred.height(), pred.width(), pred.role(), std::move(out),
                             std::vector<std::uint8_t>(pred.valid_mask().begin(),
                                                       pred.valid_mask().end()));
}

Translation best_translation(const ImageGrid& a, const ImageGrid& b, int radius) {
  if (!a.same_shape(b)) throw ArgumentError("best_translation: shapes differ");
  if (radius < 0 || radius > 16) throw ArgumentError("best_translation: radius must be in [0,16]");
  const int h = a.height();
  const int w = a.width();
  const int ch = a.channels();
  Translation best{0, 0, -std::numeric_limits<double>::infinity()};
  int best_l1 = std::numeric_limits<int>::max();
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
      const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
      if (y1 <= y0 || x1 <= x0) continue;
      double sse = 0.0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          for (int c = 0; c < ch; ++c) {
            const double d = a.at(y, x, c) - b.at(y + dy, x + dx, c);
            sse += d * d;
          }
        }
      }
      const double mse = sse / (static_cast<double>(y1 - y0) * (x1 - x0) * ch);
      const double psnr = mse <= 0.0 ? kPsnrCap : std::min(kPsnrCap, -10.0 * std::log10(mse));
      const int l1 = std::abs(dy) + std::abs(dx);
      // Candidates arrive in lexicographic (dy, dx) order, so the first of
      // equal (psnr, l1) is already the lexicographic minimum.
      if (psnr > best.psnr || (psnr == best.psnr && l1 < best_l1)) {
        best = {dy, dx, psnr};
        best_l1 = l1;
      }
    }
  }
  return best;
}

ImageGrid shift_image(const ImageGrid& b, int dy, int dx) {
  const int h = b.height(), w = b.width(), ch = b.channels();
  std::vector<double> out(static_cast<std::size_t>(h) * w * ch);
  for (int y = 0; y < h; ++y) {
    const int sy = std::clamp(y + dy, 0, h - 1);
    for (int x = 0; x < w; ++x) {
      const int sx = std::clamp(x + dx, 0, w - 1);
      for (int c = 0; c < ch; ++c) out[(static_cast<std::size_t>(y) * w + x) * ch + c] = b.at(sy, sx, c);
    }
  }
  return ImageGrid(h, w, ch, std::move(out), b.range());
}

}  // namespace filmrec::maps
