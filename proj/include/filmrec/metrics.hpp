#pragma once

#include <optional>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "filmrec/image.hpp"

namespace filmrec::analysis {

inline constexpr double kPsnrCap = 99.0;

double psnr(const ImageGrid& a, const ImageGrid& b, double peak = 1.0);
// PSNR over pixels whose mask sample is nonzero.
double psnr_masked(const ImageGrid& a, const ImageGrid& b, std::span<const std::uint8_t> mask,
                   double peak = 1.0);

// Gaussian-window SSIM and 5-scale MS-SSIM with the standard published
// constants. Multi-channel inputs are averaged over channels.
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

double ssim(const ImageGrid& a, const ImageGrid& b, const SsimParams& params = {});
double ms_ssim(const ImageGrid& a, const ImageGrid& b, const SsimParams& params = {});
// Smallest side accepted by ms_ssim for the given window.
int ms_ssim_min_side(const SsimParams& params = {});

// 2x2 mean downsample (odd trailing row/column dropped).
ImageGrid downsample2(const ImageGrid& img);

}  // namespace filmrec::analysis
