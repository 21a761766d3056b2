#include "filmrec/image.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "filmrec/error.hpp"

namespace filmrec {
namespace {

constexpr double kRangeSlack = 1e-6;
constexpr double kUvOvershoot = 1e-3;

std::pair<double, double> range_bounds(RangeTag tag) {
  return tag == RangeTag::kUnit ? std::pair{0.0, 1.0} : std::pair{-1.0, 1.0};
}

void check_dims(int height, int width, int channels, std::size_t size) {
  if (height < 0 || width < 0 || channels < 1) {
    throw ArgumentError("image dimensions must be non-negative with >= 1 channel");
  }
  if (size != static_cast<std::size_t>(height) * width * channels) {
    throw ArgumentError("data length " + std::to_string(size) + " != " + std::to_string(height) +
                        "x" + std::to_string(width) + "x" + std::to_string(channels));
  }
}

}  // namespace

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kUV: return "UV";
    case Role::kDeform: return "DEFORM";
    case Role::kBackward: return "BACKWARD";
    case Role::kCoord3D: return "COORD3D";
    case Role::kNormal: return "NORMAL";
    case Role::kDepth: return "DEPTH";
    case Role::kAlbedo: return "ALBEDO";
    case Role::kMask: return "MASK";
  }
  return "UNKNOWN";
}

int role_channels(Role role) {
  switch (role) {
    case Role::kUV:
    case Role::kDeform:
    case Role::kBackward: return 2;
    case Role::kCoord3D:
    case Role::kNormal:
    case Role::kAlbedo: return 3;
    case Role::kDepth:
    case Role::kMask: return 1;
  }
  throw ArgumentError("unknown role code");
}

// ---------------------------------------------------------------- ImageGrid

ImageGrid::ImageGrid(int height, int width, int channels, std::vector<double> data,
                     RangeTag range)
    : height_(height), width_(width), channels_(channels), range_(range), data_(std::move(data)) {
  check_dims(height, width, channels, data_.size());
  const auto [lo, hi] = range_bounds(range);
  for (double& v : data_) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite sample in image");
    }
    if (v < lo || v > hi) {
      if (v < lo - kRangeSlack || v > hi + kRangeSlack) {
        ++clamped_;
      }
      v = std::clamp(v, lo, hi);
    }
  }
}

ImageGrid ImageGrid::filled(int height, int width, int channels, double value, RangeTag range) {
  return ImageGrid(height, width, channels,
                   std::vector<double>(static_cast<std::size_t>(height) * width * channels, value),
                   range);
}

double ImageGrid::sample(double x, double y, int c) const {
  const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(width_ - 1));
  const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(height_ - 1));
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const int x1 = std::min(x0 + 1, width_ - 1);
  const int y1 = std::min(y0 + 1, height_ - 1);
  const double ax = fx - x0;
  const double ay = fy - y0;
  const double top = at(y0, x0, c) * (1.0 - ax) + at(y0, x1, c) * ax;
  const double bottom = at(y1, x0, c) * (1.0 - ax) + at(y1, x1, c) * ax;
  return top * (1.0 - ay) + bottom * ay;
}

// ----------------------------------------------------------------- MapField

MapField::MapField(int height, int width, Role role, std::vector<double> data,
                   std::vector<std::uint8_t> valid)
    : height_(height),
      width_(width),
      channels_(role_channels(role)),
      role_(role),
      data_(std::move(data)),
      valid_(std::move(valid)) {
  check_dims(height, width, channels_, data_.size());
  if (valid_.size() != pixel_count()) {
    throw ArgumentError("validity mask size does not match map frame");
  }
  for (auto& v : valid_) v = v ? 1 : 0;

  for (std::size_t p = 0; p < pixel_count(); ++p) {
    double* px = data_.data() + p * channels_;
    for (int c = 0; c < channels_; ++c) {
      if (std::isnan(px[c]) && valid_[p]) {
        valid_[p] = 0;
        ++adjusted_;
      }
    }
    switch (role_) {
      case Role::kUV: {
        if (!valid_[p]) break;
        bool out_of_range = false;
        for (int c = 0; c < 2; ++c) {
          if (px[c] < -kUvOvershoot || px[c] > 1.0 + kUvOvershoot) out_of_range = true;
        }
        if (out_of_range) {
          valid_[p] = 0;
          ++adjusted_;
        } else {
          for (int c = 0; c < 2; ++c) {
            if (px[c] < 0.0 || px[c] > 1.0) {
              px[c] = std::clamp(px[c], 0.0, 1.0);
              ++adjusted_;
            }
          }
        }
        break;
      }
      case Role::kAlbedo:
      case Role::kMask:
        for (int c = 0; c < channels_; ++c) {
          if (px[c] < 0.0 || px[c] > 1.0) {
            px[c] = std::clamp(px[c], 0.0, 1.0);
            ++adjusted_;
          }
        }
        break;
      case Role::kDepth:
        if (valid_[p] && !(px[0] > 0.0)) {
          valid_[p] = 0;
          ++adjusted_;
        }
        break;
      default:
        break;
    }
  }
}

MapField MapField::unchecked(int height, int width, Role role, std::vector<double> data,
                             std::vector<std::uint8_t> valid) {
  MapField out;
  out.height_ = height;
  out.width_ = width;
  out.channels_ = role_channels(role);
  out.role_ = role;
  out.data_ = std::move(data);
  out.valid_ = std::move(valid);
  check_dims(height, width, out.channels_, out.data_.size());
  if (out.valid_.size() != out.pixel_count()) {
    throw ArgumentError("validity mask size does not match map frame");
  }
  return out;
}

MapField::MapField(int height, int width, Role role, std::vector<double> data)
    : MapField(height, width, role, std::move(data),
               std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(height, 0)) *
                                             std::max(width, 0),
                                         1)) {}

std::size_t MapField::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), 1));
}

MapField MapField::with_role(Role role) const {
  if (role_channels(role) != channels_) {
    throw ContractError("role " + std::string(role_name(role)) + " needs " +
                        std::to_string(role_channels(role)) + " channels");
  }
  return MapField(height_, width_, role, data_, valid_);
}

std::vector<std::string> invariant_violations(const MapField& field) {
  std::vector<std::string> out;
  std::size_t bad = 0;
  for (int y = 0; y < field.height(); ++y) {
    for (int x = 0; x < field.width(); ++x) {
      switch (field.role()) {
        case Role::kUV:
          if (field.valid(y, x)) {
            for (int c = 0; c < 2; ++c) {
              const double v = field.at(y, x, c);
              if (v < 0.0 || v > 1.0) ++bad;
            }
          }
          break;
        case Role::kNormal:
          if (field.valid(y, x)) {
            double n2 = 0.0;
            for (int c = 0; c < 3; ++c) n2 += field.at(y, x, c) * field.at(y, x, c);
            if (std::abs(std::sqrt(n2) - 1.0) > 1e-4) ++bad;
          }
          break;
        case Role::kMask: {
          const double v = field.at(y, x);
          if (v != 0.0 && v != 1.0) ++bad;
          break;
        }
        case Role::kDepth:
          if (field.valid(y, x) && !(field.at(y, x) > 0.0)) ++bad;
          break;
        default:
          break;
      }
    }
  }
  if (bad > 0) {
    out.push_back(std::string(role_name(field.role())) + ": " + std::to_string(bad) +
                  " samples violate the role invariant");
  }
  return out;
}

// --------------------------------------------------------------- operations

ImageGrid normalize_signed(const ImageGrid& img) {
  if (img.range() != RangeTag::kUnit) {
    throw ContractError("normalize_signed expects a UNIT image");
  }
  std::vector<double> out(img.data().begin(), img.data().end());
  for (double& v : out) v = 2.0 * v - 1.0;
  return ImageGrid(img.height(), img.width(), img.channels(), std::move(out),
                   RangeTag::kSignedUnit);
}

ImageGrid denormalize(const ImageGrid& img) {
  if (img.range() != RangeTag::kSignedUnit) {
    throw ContractError("denormalize expects a SIGNED_UNIT image");
  }
  std::vector<double> out(img.data().begin(), img.data().end());
  for (double& v : out) v = (v + 1.0) * 0.5;
  return ImageGrid(img.height(), img.width(), img.channels(), std::move(out), RangeTag::kUnit);
}

ImageGrid resize_bilinear(const ImageGrid& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ArgumentError("resize target must be at least 1x1");
  }
  if (img.empty()) {
    throw ArgumentError("cannot resize an empty image");
  }
  if (out_h == img.height() && out_w == img.width()) {
    return img;
  }
  const double sy = static_cast<double>(img.height()) / out_h;
  const double sx = static_cast<double>(img.width()) / out_w;
  const int ch = img.channels();
  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w * ch);
  for (int i = 0; i < out_h; ++i) {
    const double y = (i + 0.5) * sy;
    for (int j = 0; j < out_w; ++j) {
      const double x = (j + 0.5) * sx;
      for (int c = 0; c < ch; ++c) {
        out[(static_cast<std::size_t>(i) * out_w + j) * ch + c] = img.sample(x, y, c);
      }
    }
  }
  return ImageGrid(out_h, out_w, ch, std::move(out), img.range());
}

MapField threshold_mask(const MapField& field, double thresh) {
  if (field.channels() != 1) {
    throw ContractError("threshold_mask expects a single-channel field");
  }
  std::vector<double> out(field.pixel_count());
  for (int y = 0; y < field.height(); ++y) {
    for (int x = 0; x < field.width(); ++x) {
      out[static_cast<std::size_t>(y) * field.width() + x] = field.at(y, x) >= thresh ? 1.0 : 0.0;
    }
  }
  return MapField(field.height(), field.width(), Role::kMask, std::move(out),
                  std::vector<std::uint8_t>(field.valid_mask().begin(), field.valid_mask().end()));
}

ImageGrid to_gray(const ImageGrid& img) {
  if (img.channels() == 1) return img;
  std::vector<double> out(img.pixel_count());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < img.channels(); ++c) s += img.at(y, x, c);
      out[static_cast<std::size_t>(y) * img.width() + x] = s / img.channels();
    }
  }
  return ImageGrid(img.height(), img.width(), 1, std::move(out), img.range());
}

ImageGrid gray_to_rgb(const ImageGrid& img) {
  if (img.channels() != 1) {
    throw ContractError("gray_to_rgb expects a single-channel image");
  }
  std::vector<double> out(img.pixel_count() * 3);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    out[3 * p] = out[3 * p + 1] = out[3 * p + 2] = img.data()[p];
  }
  return ImageGrid(img.height(), img.width(), 3, std::move(out), img.range());
}

MapField image_to_map(const ImageGrid& img, Role role) {
  if (img.channels() != role_channels(role)) {
    throw ContractError("image channel count does not match role " +
                        std::string(role_name(role)));
  }
  return MapField(img.height(), img.width(), role,
                  std::vector<double>(img.data().begin(), img.data().end()));
}

ImageGrid map_to_image(const MapField& field) {
  return ImageGrid(field.height(), field.width(), field.channels(),
                   std::vector<double>(field.data().begin(), field.data().end()), RangeTag::kUnit);
}

MapField signed_view(const MapField& field, int frame_w, int frame_h) {
  std::vector<double> out(field.data().begin(), field.data().end());
  const int ch = field.channels();
  switch (field.role()) {
    case Role::kUV:
    case Role::kMask:
    case Role::kAlbedo:
      for (double& v : out) v = 2.0 * v - 1.0;
      break;
    case Role::kDeform:
      if (frame_w < 1 || frame_h < 1) throw ArgumentError("signed_view needs a frame size");
      for (std::size_t p = 0; p < field.pixel_count(); ++p) {
        out[p * ch] *= 2.0 / frame_w;
        out[p * ch + 1] *= 2.0 / frame_h;
      }
      break;
    default:
      break;
  }
  return MapField::unchecked(
      field.height(), field.width(), field.role(), std::move(out),
      std::vector<std::uint8_t>(field.valid_mask().begin(), field.valid_mask().end()));
}

MapField downsample_map(const MapField& field, int factor) {
  if (factor < 1 || field.height() % factor != 0 || field.width() % factor != 0) {
    throw ArgumentError("downsample factor must divide the map frame");
  }
  if (factor == 1) return field;
  const int oh = field.height() / factor;
  const int ow = field.width() / factor;
  const int ch = field.channels();
  std::vector<double> out(static_cast<std::size_t>(oh) * ow * ch, 0.0);
  std::vector<std::uint8_t> valid(static_cast<std::size_t>(oh) * ow, 1);
  const double inv = 1.0 / (factor * factor);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      const std::size_t o = static_cast<std::size_t>(i) * ow + j;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) {
          const int y = i * factor + dy;
          const int x = j * factor + dx;
          if (!field.valid(y, x)) valid[o] = 0;
          for (int c = 0; c < ch; ++c) out[o * ch + c] += field.at(y, x, c) * inv;
        }
      }
      if (field.role() == Role::kDeform) {
        for (int c = 0; c < ch; ++c) out[o * ch + c] /= factor;
      }
    }
  }
  if (field.role() == Role::kMask) {
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = out[o] >= 0.5 ? 1.0 : 0.0;
  }
  return MapField(oh, ow, field.role(), std::move(out), std::move(valid));
}

}  // namespace filmrec
