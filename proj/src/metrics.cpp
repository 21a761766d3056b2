#include "filmrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "filmrec/error.hpp"

namespace filmrec::analysis {
namespace {

void require_same(const ImageGrid& a, const ImageGrid& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ArgumentError(std::string(what) + ": shape mismatch (" + std::to_string(a.height()) +
                        "x" + std::to_string(a.width()) + "x" + std::to_string(a.channels()) +
                        " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()) +
                        "x" + std::to_string(b.channels()) + ")");
  }
}

double psnr_from_mse(double mse, double peak) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Single-channel plane as a flat vector.
struct Plane {
  int h = 0;
  int w = 0;
  std::vector<double> v;
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane channel_plane(const ImageGrid& img, int c) {
  Plane p{img.height(), img.width(), std::vector<double>(img.pixel_count())};
  for (int y = 0; y < p.h; ++y) {
    for (int x = 0; x < p.w; ++x) p.v[static_cast<std::size_t>(y) * p.w + x] = img.at(y, x, c);
  }
  return p;
}

// Separable 'valid' filtering: output is (h-k+1) x (w-k+1).
Plane filter_valid(const Plane& in, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = in.h - n + 1;
  const int ow = in.w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(in.h) * ow, 0.0);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * in.at(y, x + i);
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  Plane out{oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow, 0.0)};
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out.v[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

struct SsimTerms {
  double ssim = 0.0;  // mean of l*cs
  double cs = 0.0;    // mean of contrast-structure
};

SsimTerms ssim_plane(const Plane& a, const Plane& b, const SsimParams& p) {
  const auto k = gaussian_kernel(p.window, p.sigma);
  const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
  const double c2 = (p.k2 * p.peak) * (p.k2 * p.peak);
  Plane aa = a, bb = b, ab = a;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    aa.v[i] = a.v[i] * a.v[i];
    bb.v[i] = b.v[i] * b.v[i];
    ab.v[i] = a.v[i] * b.v[i];
  }
  const Plane mu_a = filter_valid(a, k);
  const Plane mu_b = filter_valid(b, k);
  const Plane e_aa = filter_valid(aa, k);
  const Plane e_bb = filter_valid(bb, k);
  const Plane e_ab = filter_valid(ab, k);
  double sum_ssim = 0.0;
  double sum_cs = 0.0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = e_aa.v[i] - ma * ma;
    const double vb = e_bb.v[i] - mb * mb;
    const double cov = e_ab.v[i] - ma * mb;
    const double cs = (2.0 * cov + c2) / (va + vb + c2);
    const double l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    sum_ssim += l * cs;
    sum_cs += cs;
  }
  const double n = static_cast<double>(mu_a.v.size());
  return {sum_ssim / n, sum_cs / n};
}

}  // namespace

double psnr(const ImageGrid& a, const ImageGrid& b, double peak) {
  require_same(a, b, "psnr");
  if (a.empty()) throw ArgumentError("psnr: empty image");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sse += d * d;
  }
  return psnr_from_mse(sse / static_cast<double>(a.data().size()), peak);
}

double psnr_masked(const ImageGrid& a, const ImageGrid& b, std::span<const std::uint8_t> mask,
                   double peak) {
  require_same(a, b, "psnr_masked");
  if (mask.size() != a.pixel_count()) throw ArgumentError("psnr_masked: mask size mismatch");
  double sse = 0.0;
  std::size_t n = 0;
  const int ch = a.channels();
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < ch; ++c) {
      const double d = a.data()[p * ch + c] - b.data()[p * ch + c];
      sse += d * d;
    }
    n += ch;
  }
  if (n == 0) throw ArgumentError("psnr_masked: empty mask");
  return psnr_from_mse(sse / static_cast<double>(n), peak);
}

double ssim(const ImageGrid& a, const ImageGrid& b, const SsimParams& params) {
  require_same(a, b, "ssim");
  if (a.height() < params.window || a.width() < params.window) {
    throw ArgumentError("ssim: image smaller than the " + std::to_string(params.window) +
                        "x" + std::to_string(params.window) + " window (minimum size " +
                        std::to_string(params.window) + ")");
  }
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    total += ssim_plane(channel_plane(a, c), channel_plane(b, c), params).ssim;
  }
  return total / a.channels();
}

int ms_ssim_min_side(const SsimParams& params) { return params.window * 16; }

ImageGrid downsample2(const ImageGrid& img) {
  const int h = img.height() / 2;
  const int w = img.width() / 2;
  const int ch = img.channels();
  std::vector<double> out(static_cast<std::size_t>(h) * w * ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        out[(static_cast<std::size_t>(y) * w + x) * ch + c] =
            0.25 * (img.at(2 * y, 2 * x, c) + img.at(2 * y, 2 * x + 1, c) +
                    img.at(2 * y + 1, 2 * x, c) + img.at(2 * y + 1, 2 * x + 1, c));
      }
    }
  }
  return ImageGrid(h, w, ch, std::move(out), img.range());
}

double ms_ssim(const ImageGrid& a, const ImageGrid& b, const SsimParams& params) {
  require_same(a, b, "ms_ssim");
  const int min_side = ms_ssim_min_side(params);
  if (a.height() < min_side || a.width() < min_side) {
    throw ArgumentError("ms_ssim: image is " + std::to_string(a.height()) + "x" +
                        std::to_string(a.width()) + ", minimum size is " +
                        std::to_string(min_side) + "x" + std::to_string(min_side));
  }
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    ImageGrid pa = ImageGrid(a.height(), a.width(), 1,
                             channel_plane(a, c).v, a.range());
    ImageGrid pb = ImageGrid(b.height(), b.width(), 1,
                             channel_plane(b, c).v, b.range());
    double product = 1.0;
    for (int s = 0; s < 5; ++s) {
      const SsimTerms t = ssim_plane(channel_plane(pa, 0), channel_plane(pb, 0), params);
      // Negative contrast-structure terms are clamped to 0 so the weighted
      // product stays real and inside [0, 1].
      const double term = s < 4 ? t.cs : t.ssim;
      product *= std::pow(std::clamp(term, 0.0, 1.0), kMsSsimWeights[s]);
      if (s < 4) {
        pa = downsample2(pa);
        pb = downsample2(pb);
      }
    }
    total += product;
  }
  return total / a.channels();
}

}  // namespace filmrec::analysis
