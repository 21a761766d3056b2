#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "filmrec/image.hpp"

namespace filmrec::maps {

enum class Coverage : std::uint8_t { kEmpty = 0, kObserved = 1, kFilled = 2 };

// Texture-frame map of source positions (pixel units, pixel-centre
// convention) in the warped photo. EMPTY pixels are invalid in `field`.
struct BackwardMap {
  MapField field;
  std::vector<Coverage> coverage;
  int fill_iterations = 0;

  int height() const { return field.height(); }
  int width() const { return field.width(); }
  Coverage at(int y, int x) const {
    return coverage[static_cast<std::size_t>(y) * field.width() + x];
  }
  double fraction(Coverage c) const;
  // Sidecar written next to backward.fmap.
  nlohmann::json summary() const;
};

struct InversionOptions {
  int max_fill_iterations = 500;
  double fill_tolerance_px = 0.01;
};

BackwardMap uv_to_backward(const MapField& uv, const MapField& mask, int tex_h, int tex_w,
                           const InversionOptions& options = {});

MapField deformation_to_uv(const MapField& deform, const MapField& mask, int out_w, int out_h);

// Primary pixels that are valid and inside [0,1]^2 are kept bit-for-bit;
// other film pixels take aux when aux is valid there.
MapField merge_uv(const MapField& primary_uv, const MapField& aux_uv, const MapField& mask);

ImageGrid backward_sample(const ImageGrid& img, const BackwardMap& bmap, double fill_value = 0.0);

// pred minus the per-channel mean of (pred - gt) over valid film pixels.
// The result is built unchecked so a shifted UV keeps its values.
MapField deshift_map(const MapField& pred, const MapField& gt, const MapField& mask);

struct Translation {
  int dy = 0;
  int dx = 0;
  double psnr = 0.0;
};

// Exhaustive integer search maximising PSNR of a(i,j) against
// b(i+dy, j+dx) over the overlap. Ties go to the smallest |dy|+|dx|, then
// lexicographic (dy, dx).
Translation best_translation(const ImageGrid& a, const ImageGrid& b, int radius);

// Applies the offset found by best_translation: out(i,j) = b(i+dy, j+dx),
// edge-clamped.
ImageGrid shift_image(const ImageGrid& b, int dy, int dx);

}  // namespace filmrec::maps
