#include "filmrec/quality.hpp"

#include <algorithm>
#include <cmath>

#include "filmrec/error.hpp"
#include "filmrec/metrics.hpp"

namespace filmrec::quality {
namespace {

void require_frame(const ImageGrid& img, const MapField& m, const char* what) {
  if (img.height() != m.height() || img.width() != m.width()) {
    throw ArgumentError(std::string(what) + ": " + std::string(role_name(m.role())) +
                        " frame " + std::to_string(m.height()) + "x" +
                        std::to_string(m.width()) + " does not match image " +
                        std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
}

// Separable Gaussian with zero padding, truncated at 3 sigma.
std::vector<double> blur(const std::vector<double>& in, int h, int w, double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  for (int i = -r; i <= r; ++i) k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = std::max(-r, -x); i <= std::min(r, w - 1 - x); ++i) {
        s += k[i + r] * in[static_cast<std::size_t>(y) * w + x + i];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = std::max(-r, -y); i <= std::min(r, h - 1 - y); ++i) {
        s += k[i + r] * tmp[static_cast<std::size_t>(y + i) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  return out;
}

}  // namespace

ImageGrid de_illuminate_oracle(const ImageGrid& warped, const MapField& albedo,
                               const MapField& mask) {
  require_frame(warped, albedo, "de_illuminate_oracle");
  require_frame(warped, mask, "de_illuminate_oracle");
  if (albedo.role() != Role::kAlbedo) throw ArgumentError("de_illuminate_oracle: expected ALBEDO");
  const int ch = warped.channels();
  std::vector<double> out(warped.data().begin(), warped.data().end());
  for (int y = 0; y < warped.height(); ++y) {
    for (int x = 0; x < warped.width(); ++x) {
      if (!mask.is_film(y, x)) continue;
      for (int c = 0; c < ch; ++c) {
        const int ac = std::min(c, albedo.channels() - 1);
        out[(static_cast<std::size_t>(y) * warped.width() + x) * ch + c] = albedo.at(y, x, ac);
      }
    }
  }
  return ImageGrid(warped.height(), warped.width(), ch, std::move(out), warped.range());
}

double default_flatfield_sigma(int height, int width) {
  return std::max(height, width) / 8.0;
}

FlatField estimate_flatfield(const ImageGrid& warped, const MapField& mask, double sigma) {
  require_frame(warped, mask, "estimate_flatfield");
  if (sigma <= 0.0) sigma = default_flatfield_sigma(warped.height(), warped.width());
  if (sigma < 4.0) throw ArgumentError("estimate_flatfield: sigma must be >= 4 pixels");
  const int h = warped.height();
  const int w = warped.width();
  const int ch = warped.channels();
  const std::size_t n = static_cast<std::size_t>(h) * w;

  std::vector<double> lum(n, 0.0), m(n, 0.0);
  std::size_t film = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * w + x;
      if (!mask.is_film(y, x)) continue;
      double s = 0.0;
      for (int c = 0; c < ch; ++c) s += warped.at(y, x, c);
      lum[k] = s / ch;
      m[k] = 1.0;
      ++film;
    }
  }
  if (film == 0) throw ArgumentError("estimate_flatfield: empty mask");

  const auto num = blur(lum, h, w, sigma);
  const auto den = blur(m, h, w, sigma);
  std::vector<double> shading(n, 0.0);
  double mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (m[k] == 0.0) continue;
    shading[k] = num[k] / den[k];
    mean += shading[k];
  }
  mean /= static_cast<double>(film);

  std::vector<double> out(warped.data().begin(), warped.data().end());
  for (std::size_t k = 0; k < n; ++k) {
    if (m[k] == 0.0) continue;
    const double gain = mean / std::max(shading[k], kShadingFloor);
    for (int c = 0; c < ch; ++c) out[k * ch + c] = std::clamp(out[k * ch + c] * gain, 0.0, 1.0);
  }
  return {ImageGrid(h, w, 1, std::move(shading)),
          ImageGrid(h, w, ch, std::move(out), warped.range())};
}

double gain_matched_psnr(const ImageGrid& img, const ImageGrid& reference, const MapField& mask) {
  if (!img.same_shape(reference)) throw ArgumentError("gain_matched_psnr: shape mismatch");
  require_frame(img, mask, "gain_matched_psnr");
  const int ch = img.channels();
  double xy = 0.0, xx = 0.0;
  std::vector<std::uint8_t> sel(img.pixel_count(), 0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!mask.is_film(y, x)) continue;
      sel[static_cast<std::size_t>(y) * img.width() + x] = 1;
      for (int c = 0; c < ch; ++c) {
        xy += img.at(y, x, c) * reference.at(y, x, c);
        xx += img.at(y, x, c) * img.at(y, x, c);
      }
    }
  }
  const double g = xx > 0.0 ? xy / xx : 1.0;
  std::vector<double> scaled(img.data().begin(), img.data().end());
  for (double& v : scaled) v *= g;
  return analysis::psnr_masked(ImageGrid(img.height(), img.width(), ch, std::move(scaled)),
                               reference, sel);
}

HuGrid ct_restore(const ImageGrid& display, const synth::WindowSpec& window) {
  if (!(window.ww > 0.0)) throw ArgumentError("ct_restore: window width must be positive");
  if (display.channels() != 1) throw ArgumentError("ct_restore: expected a grayscale image");
  HuGrid out{display.height(), display.width(),
             std::vector<std::int16_t>(display.pixel_count())};
  const double lo = window.wl - window.ww / 2.0;
  for (std::size_t k = 0; k < out.data.size(); ++k) {
    const double hu = std::round(display.data()[k] * window.ww + lo);
    out.data[k] = static_cast<std::int16_t>(
        std::clamp(hu, static_cast<double>(synth::kHuMin), static_cast<double>(synth::kHuMax)));
  }
  return out;
}

int ct_roundtrip_bound(const synth::WindowSpec& window) {
  return static_cast<int>(std::ceil(window.ww / 510.0));
}

IdentityRestorer::IdentityRestorer(int stages) : stages_(stages) {
  if (stages < 1) throw ArgumentError("restorer needs at least one stage");
}

std::vector<ImageGrid> IdentityRestorer::apply(const ImageGrid& input) const {
  return std::vector<ImageGrid>(static_cast<std::size_t>(stages_), input);
}

}  // namespace filmrec::quality
