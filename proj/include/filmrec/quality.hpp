#pragma once

#include <memory>
#include <vector>

#include "filmrec/image.hpp"
#include "filmrec/io.hpp"
#include "filmrec/synthgen.hpp"

namespace filmrec::quality {

// Ideal de-illumination: albedo on film pixels, warped elsewhere.
ImageGrid de_illuminate_oracle(const ImageGrid& warped, const MapField& albedo,
                               const MapField& mask);

struct FlatField {
  ImageGrid shading;  // single channel, 0 off the film
  ImageGrid output;
};

// sigma <= 0 selects max(h, w) / 8.
double default_flatfield_sigma(int height, int width);
inline constexpr double kShadingFloor = 0.02;

// Mask-normalized Gaussian estimate of the shading; film pixels are divided
// by it and rescaled by its film mean, background pixels pass through.
FlatField estimate_flatfield(const ImageGrid& warped, const MapField& mask, double sigma = 0.0);

// PSNR over film pixels after the least-squares gain that best maps `img`
// onto `reference`. Scores de-illumination up to the global exposure a
// mean-preserving estimator cannot recover.
double gain_matched_psnr(const ImageGrid& img, const ImageGrid& reference, const MapField& mask);

// Inverse display window: round(d * ww + wl - ww / 2), clamped to the HU range.
HuGrid ct_restore(const ImageGrid& display, const synth::WindowSpec& window);

// Largest round-trip error for in-window HU after 8-bit display quantization.
int ct_roundtrip_bound(const synth::WindowSpec& window);

class Restorer {
 public:
  virtual ~Restorer() = default;
  virtual int stages() const = 0;
  // One output per stage, in cascade order.
  virtual std::vector<ImageGrid> apply(const ImageGrid& input) const = 0;
};

class IdentityRestorer : public Restorer {
 public:
  explicit IdentityRestorer(int stages);
  int stages() const override { return stages_; }
  std::vector<ImageGrid> apply(const ImageGrid& input) const override;

 private:
  int stages_;
};

}  // namespace filmrec::quality
