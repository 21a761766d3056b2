#include <algorithm>

#include "filmrec/analysis.hpp"
#include "filmrec/error.hpp"
#include "filmrec/quality.hpp"

namespace filmrec::analysis {
namespace {

struct Scored {
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> ms_ssim;
  double fraction = 0.0;
};

// EMPTY pixels take the reference value so full-frame SSIM only measures
// the recovered support.
Scored score(const ImageGrid& dewarped, std::span<const std::uint8_t> support,
             const ImageGrid& reference) {
  std::vector<double> comp(dewarped.data().begin(), dewarped.data().end());
  std::size_t n = 0;
  for (std::size_t k = 0; k < support.size(); ++k) {
    if (support[k]) {
      ++n;
    } else {
      comp[k] = reference.data()[k];
    }
  }
  if (n == 0) throw ArgumentError("evaluate_recovery: backward map has no support");
  const ImageGrid composite(dewarped.height(), dewarped.width(), 1, std::move(comp));
  Scored s;
  s.psnr = psnr_masked(dewarped, reference, support);
  s.ssim = ssim(composite, reference);
  if (std::min(reference.height(), reference.width()) >= ms_ssim_min_side()) {
    s.ms_ssim = ms_ssim(composite, reference);
  }
  s.fraction = static_cast<double>(n) / static_cast<double>(support.size());
  return s;
}

MetricReport to_report(const Scored& s, EvalMode mode) {
  MetricReport r;
  r.psnr = s.psnr;
  r.ssim = s.ssim;
  r.ms_ssim = s.ms_ssim;
  r.mode = mode;
  r.foreground_fraction = s.fraction;
  return r;
}

std::vector<std::uint8_t> support_of(const maps::BackwardMap& b) {
  std::vector<std::uint8_t> s(b.coverage.size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = b.coverage[k] != maps::Coverage::kEmpty;
  return s;
}

struct Dewarp {
  MapField uv;
  maps::BackwardMap backward;
  ImageGrid image;
};

Dewarp dewarp(const synth::SampleBundle& bundle, const ImageGrid& source, const MapField& uv,
              const RecoveryOptions& options) {
  const int th = bundle.texture.height();
  const int tw = bundle.texture.width();
  maps::BackwardMap bmap = maps::uv_to_backward(uv, bundle.bgmask, th, tw, options.inversion);
  ImageGrid img = maps::backward_sample(source, bmap);
  return {uv, std::move(bmap), std::move(img)};
}

}  // namespace

std::string_view mode_name(EvalMode mode) {
  switch (mode) {
    case EvalMode::kPlain:
      return "PLAIN";
    case EvalMode::kMapDeshift:
      return "MAP_DESHIFT";
    case EvalMode::kImageDeshift:
      return "IMAGE_DESHIFT";
  }
  return "PLAIN";
}

EvalMode mode_from_name(std::string_view name) {
  if (name == "plain" || name == "PLAIN") return EvalMode::kPlain;
  if (name == "map" || name == "MAP_DESHIFT") return EvalMode::kMapDeshift;
  if (name == "image" || name == "IMAGE_DESHIFT") return EvalMode::kImageDeshift;
  throw ArgumentError("unknown evaluation mode '" + std::string(name) +
                      "' (expected plain, map or image)");
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["mode"] = mode_name(mode);
  j["psnr"] = psnr;
  j["ssim"] = ssim;
  j["ms_ssim"] = ms_ssim ? nlohmann::json(*ms_ssim) : nlohmann::json(nullptr);
  j["foreground_fraction"] = foreground_fraction;
  if (translation) j["translation"] = {{"dy", translation->first}, {"dx", translation->second}};
  if (deshifted) j["deshifted"] = deshifted->to_json();
  return j;
}

Recovery recover(const synth::SampleBundle& bundle, const MapField& pred_uv,
                 const MapField& pred_df, EvalMode mode, const RecoveryOptions& options) {
  const int h = bundle.bgmask.height();
  const int w = bundle.bgmask.width();
  if (pred_uv.role() != Role::kUV || pred_df.role() != Role::kDeform) {
    throw ArgumentError("evaluate_recovery: expected UV and DEFORM predictions");
  }
  if (pred_uv.height() != h || pred_uv.width() != w || pred_df.height() != h ||
      pred_df.width() != w) {
    throw ArgumentError("evaluate_recovery: predictions must match the photo frame " +
                        std::to_string(h) + "x" + std::to_string(w));
  }
  const MapField aux = maps::deformation_to_uv(pred_df, bundle.bgmask, w, h);
  const MapField merged = maps::merge_uv(pred_uv, aux, bundle.bgmask);
  const ImageGrid source =
      to_gray(quality::de_illuminate_oracle(bundle.warped, bundle.albedo, bundle.bgmask));
  const ImageGrid& reference = options.reference ? *options.reference : bundle.texture;
  if (!reference.same_shape(bundle.texture)) {
    throw ArgumentError("evaluate_recovery: reference image must match the texture shape");
  }

  Dewarp plain = dewarp(bundle, source, merged, options);
  const auto support = support_of(plain.backward);
  Recovery out{to_report(score(plain.image, support, reference), EvalMode::kPlain), merged,
               plain.backward, plain.image};

  if (mode == EvalMode::kMapDeshift) {
    const MapField shifted = maps::deshift_map(merged, bundle.uv, bundle.bgmask);
    Dewarp d = dewarp(bundle, source, shifted, options);
    out.report.deshifted = std::make_shared<MetricReport>(
        to_report(score(d.image, support_of(d.backward), reference), EvalMode::kMapDeshift));
  } else if (mode == EvalMode::kImageDeshift) {
    std::vector<double> filled(plain.image.data().begin(), plain.image.data().end());
    for (std::size_t k = 0; k < filled.size(); ++k) {
      if (!support[k]) filled[k] = reference.data()[k];
    }
    const ImageGrid composite(plain.image.height(), plain.image.width(), 1, std::move(filled));
    const maps::Translation t =
        maps::best_translation(reference, composite, options.translation_radius);
    const ImageGrid moved = maps::shift_image(plain.image, t.dy, t.dx);
    std::vector<double> sup(support.begin(), support.end());
    const ImageGrid moved_sup = maps::shift_image(
        ImageGrid(plain.image.height(), plain.image.width(), 1, std::move(sup)), t.dy, t.dx);
    std::vector<std::uint8_t> moved_mask(support.size());
    for (std::size_t k = 0; k < moved_mask.size(); ++k) {
      moved_mask[k] = moved_sup.data()[k] > 0.5;
    }
    MetricReport r = to_report(score(moved, moved_mask, reference), EvalMode::kImageDeshift);
    r.translation = std::make_pair(t.dy, t.dx);
    out.report.deshifted = std::make_shared<MetricReport>(std::move(r));
  }
  return out;
}

MetricReport evaluate_recovery(const synth::SampleBundle& bundle, const MapField& pred_uv,
                               const MapField& pred_df, EvalMode mode,
                               const RecoveryOptions& options) {
  return recover(bundle, pred_uv, pred_df, mode, options).report;
}

}  // namespace filmrec::analysis
