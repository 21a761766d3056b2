#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace filmrec {

// Value interval a float image declares. SIGNED_UNIT is only used as a
// loss-computation view; everything exchanged between modules is UNIT.
enum class RangeTag { kUnit, kSignedUnit };

// Role codes double as the FMAP on-disk role byte.
enum class Role : std::uint8_t {
  kUV = 0,
  kDeform = 1,
  kBackward = 2,
  kCoord3D = 3,
  kNormal = 4,
  kDepth = 5,
  kAlbedo = 6,
  kMask = 7,
};

std::string_view role_name(Role role);
// Channel count required by a role.
int role_channels(Role role);

// Dense H x W x C float image, row-major, channel-interleaved.
//
// Samples outside the declared range are clamped on construction and counted
// in clamped_count(); rendering and interpolation routinely overshoot by an
// epsilon and rejecting those would make every producer carry its own clamp.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(int height, int width, int channels, std::vector<double> data,
            RangeTag range = RangeTag::kUnit);

  static ImageGrid filled(int height, int width, int channels, double value,
                          RangeTag range = RangeTag::kUnit);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  RangeTag range() const { return range_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t clamped_count() const { return clamped_; }

  double at(int y, int x, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::span<const double> data() const { return data_; }

  // Bilinear sample at continuous position (x, y), pixel (i, j) centred at
  // (j + 0.5, i + 0.5). Edges clamp.
  double sample(double x, double y, int c = 0) const;

  bool same_shape(const ImageGrid& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  RangeTag range_ = RangeTag::kUnit;
  std::vector<double> data_;
  std::size_t clamped_ = 0;
};

// H x W x C map with a role tag and a per-pixel validity mask.
//
// Construction normalises a few role-specific cases:
//   UV      valid samples within 1e-3 of [0,1] are clamped; valid pixels
//           further out are marked invalid (data kept).
//   ALBEDO  clamped to [0,1].
//   MASK    clamped to [0,1].
//   DEPTH   valid pixels with depth <= 0 are marked invalid.
// adjusted_count() reports how many samples/pixels were touched.
class MapField {
 public:
  MapField() = default;
  MapField(int height, int width, Role role, std::vector<double> data,
           std::vector<std::uint8_t> valid);
  // All pixels valid.
  MapField(int height, int width, Role role, std::vector<double> data);

  // Skips the role normalisation above. Used for loss views whose values
  // intentionally leave the role's natural range.
  static MapField unchecked(int height, int width, Role role, std::vector<double> data,
                            std::vector<std::uint8_t> valid);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  Role role() const { return role_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t adjusted_count() const { return adjusted_; }

  double at(int y, int x, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  bool valid(int y, int x) const {
    return valid_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  std::span<const double> data() const { return data_; }
  std::span<const std::uint8_t> valid_mask() const { return valid_; }
  std::size_t valid_count() const;

  // Film test for MASK-role fields: valid and >= 0.5.
  bool is_film(int y, int x) const { return valid(y, x) && at(y, x) >= 0.5; }

  bool same_frame(const MapField& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  // Returns a copy with the role replaced (channel count must still match).
  MapField with_role(Role role) const;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  Role role_ = Role::kMask;
  std::vector<double> data_;
  std::vector<std::uint8_t> valid_;
  std::size_t adjusted_ = 0;
};

// Role invariants that are checked rather than enforced on construction
// (normal unit length, binary mask, positive depth, UV range).
std::vector<std::string> invariant_violations(const MapField& field);

ImageGrid normalize_signed(const ImageGrid& img);
ImageGrid denormalize(const ImageGrid& img);
ImageGrid resize_bilinear(const ImageGrid& img, int out_h, int out_w);
MapField threshold_mask(const MapField& field, double thresh);

// Channel mean, one output channel.
ImageGrid to_gray(const ImageGrid& img);
ImageGrid gray_to_rgb(const ImageGrid& img);
// Image <-> map conversions (UNIT images only).
MapField image_to_map(const ImageGrid& img, Role role);
ImageGrid map_to_image(const MapField& field);

// [-1,1] view used for loss computation. UV, MASK and ALBEDO map x -> 2x-1;
// DEFORM (pixel units) is scaled by 2/frame_width and 2/frame_height; the
// remaining roles already live on an O(1) world scale and pass through.
// The result keeps its role tag but is built unchecked.
MapField signed_view(const MapField& field, int frame_w, int frame_h);

// Box-downsample by an integer factor. A pixel is valid only if its whole
// block is valid; DEFORM values are divided by the factor.
MapField downsample_map(const MapField& field, int factor);

}  // namespace filmrec
