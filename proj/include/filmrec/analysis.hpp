#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "filmrec/image.hpp"
#include "filmrec/io.hpp"
#include "filmrec/mapops.hpp"
#include "filmrec/metrics.hpp"
#include "filmrec/synthgen.hpp"

namespace filmrec::analysis {

// ------------------------------------------------------------ recovery

enum class EvalMode { kPlain, kMapDeshift, kImageDeshift };

std::string_view mode_name(EvalMode mode);
EvalMode mode_from_name(std::string_view name);  // "plain", "map", "image"

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> ms_ssim;  // absent when the texture is below the MS-SSIM minimum
  EvalMode mode = EvalMode::kPlain;
  double foreground_fraction = 0.0;
  std::optional<std::pair<int, int>> translation;  // (dy, dx) for image de-shift
  std::shared_ptr<MetricReport> deshifted;

  nlohmann::json to_json() const;
};

struct RecoveryOptions {
  int translation_radius = 8;
  maps::InversionOptions inversion;
  // Texture-frame image to score against instead of the bundle texture.
  std::optional<ImageGrid> reference;
};

// Everything the metrics were computed from, for callers that write images.
struct Recovery {
  MetricReport report;
  MapField merged_uv;
  maps::BackwardMap backward;
  ImageGrid dewarped;  // texture frame, gray
};

// Dewarps the de-illuminated photo (albedo on film) with maps built from the
// predictions and scores it against the bundle texture over the recovered
// support. `mode` selects the nested de-shifted report; kPlain adds none.
Recovery recover(const synth::SampleBundle& bundle, const MapField& pred_uv,
                 const MapField& pred_df, EvalMode mode, const RecoveryOptions& options = {});

MetricReport evaluate_recovery(const synth::SampleBundle& bundle, const MapField& pred_uv,
                               const MapField& pred_df, EvalMode mode,
                               const RecoveryOptions& options = {});

// --------------------------------------------------------------- features

struct NamedFeatures {
  std::vector<std::string> names;
  std::vector<double> values;

  void add(std::string name, double value) {
    names.push_back(std::move(name));
    values.push_back(value);
  }
  double get(std::string_view name) const;
};

// Masks are one byte per pixel, nonzero = inside.
NamedFeatures first_order_features(const HuGrid& hu, std::span<const std::uint8_t> mask);

using Offset = std::pair<int, int>;  // (dy, dx)
inline const std::vector<Offset> kDefaultOffsets{{0, 1}, {1, 0}, {1, 1}, {1, -1}};

// Uniform quantization of the in-mask range to [0, levels). A flat region
// maps to level 0.
std::vector<int> quantize_levels(const HuGrid& hu, std::span<const std::uint8_t> mask,
                                 int levels);

// Symmetric co-occurrence over `offsets`, normalized so all entries sum to 1.
std::vector<double> glcm_matrix(std::span<const int> level_grid, int height, int width,
                                std::span<const std::uint8_t> mask, int levels,
                                const std::vector<Offset>& offsets = kDefaultOffsets);
NamedFeatures glcm_from_matrix(std::span<const double> p, int levels);
NamedFeatures glcm_features(const HuGrid& hu, std::span<const std::uint8_t> mask,
                            int levels = 32,
                            const std::vector<Offset>& offsets = kDefaultOffsets);

// Per-pixel count of in-mask 8-neighbours within `alpha` levels.
std::vector<int> dependence_counts(std::span<const int> level_grid, int height, int width,
                                   std::span<const std::uint8_t> mask, int alpha);
NamedFeatures gldm_features(const HuGrid& hu, std::span<const std::uint8_t> mask,
                            int levels = 32, int alpha = 0);

// first-order + GLCM + GLDM in a fixed order.
NamedFeatures radiomics_features(const HuGrid& hu, std::span<const std::uint8_t> mask);

// ------------------------------------------------------------- statistics

struct TScore {
  double t = 0.0;  // +inf when d has zero variance and nonzero mean
  int dof = 0;
};
TScore paired_t_score(std::span<const double> x, std::span<const double> y);

struct ChiSquare {
  double chi2 = 0.0;
  int dof = 0;
};
ChiSquare chi_square_stat(std::span<const double> x, std::span<const double> y, int bins = 16);

inline constexpr std::array<double, 3> kTThresholds{1.660, 2.364, 3.390};

enum class Source { kPred, kGt };

struct FeatureRow {
  std::string sample_id;
  Source source = Source::kGt;
  std::vector<double> values;
};

struct FeatureTable {
  std::vector<std::string> names;
  std::vector<FeatureRow> rows;

  void add_row(std::string sample_id, Source source, const NamedFeatures& features);
  std::vector<double> column(std::size_t index) const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

struct FeatureSignificance {
  std::string name;
  TScore t;
  ChiSquare chi;
};

struct SignificanceReport {
  std::vector<FeatureSignificance> features;  // sorted by name
  std::array<double, 3> thresholds = kTThresholds;
  std::array<int, 3> below{0, 0, 0};  // features with |t| below each threshold
  int samples = 0;

  nlohmann::json to_json() const;
};

SignificanceReport significance_report(const FeatureTable& pred, const FeatureTable& gt);

}  // namespace filmrec::analysis
