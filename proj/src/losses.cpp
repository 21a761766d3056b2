#include "filmrec/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "filmrec/error.hpp"

namespace filmrec::loss {
namespace {

void require_frame(const MapField& pred, const MapField& gt, const MapField& mask,
                   const char* what) {
  if (pred.empty() || gt.empty()) throw ArgumentError(std::string(what) + ": empty map");
  if (pred.height() != gt.height() || pred.width() != gt.width() ||
      pred.channels() != gt.channels()) {
    throw ArgumentError(std::string(what) + ": pred and gt differ in shape");
  }
  if (mask.height() != gt.height() || mask.width() != gt.width()) {
    throw ArgumentError(std::string(what) + ": mask frame differs from the maps");
  }
  if (mask.role() != Role::kMask) throw ArgumentError(std::string(what) + ": mask must have role MASK");
}

void require_role(const MapField& m, Role role, const char* what) {
  if (m.role() != role) {
    throw ArgumentError(std::string(what) + ": expected role " + std::string(role_name(role)) +
                        ", got " + std::string(role_name(m.role())));
  }
}

bool counted(const MapField& pred, const MapField& gt, const MapField& mask, int y, int x) {
  return pred.valid(y, x) && gt.valid(y, x) && mask.is_film(y, x);
}

// Mean |pred - gt| over pixels selected by `use`.
template <typename Use>
double mean_abs(const MapField& pred, const MapField& gt, Use use, const char* what) {
  double sum = 0.0;
  long long n = 0;
  const int ch = pred.channels();
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      if (!use(y, x)) continue;
      for (int c = 0; c < ch; ++c) sum += std::abs(pred.at(y, x, c) - gt.at(y, x, c));
      n += ch;
    }
  }
  if (n == 0) throw ArgumentError(std::string(what) + ": empty mask (no valid film pixels)");
  return sum / static_cast<double>(n);
}

}  // namespace

nlohmann::json LossReport::to_json() const {
  return {{"l3d", l3d},       {"lnor", lnor},         {"ldp", ldp},       {"lbg", lbg},
          {"lshape", lshape}, {"lshift", lshift},     {"ldisturb", ldisturb},
          {"ldiff", ldiff},   {"ldf", ldf},           {"luv", luv},       {"ltrans", ltrans},
          {"ldewarp", ldewarp}, {"valid_pixel_count", valid_pixel_count}};
}

long long loss_pixel_count(const MapField& pred, const MapField& gt, const MapField& mask) {
  require_frame(pred, gt, mask, "loss_pixel_count");
  long long n = 0;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) n += counted(pred, gt, mask, y, x);
  }
  return n;
}

double l1_map_loss(const MapField& pred, const MapField& gt, const MapField& mask) {
  require_frame(pred, gt, mask, "l1_map_loss");
  return mean_abs(pred, gt, [&](int y, int x) { return counted(pred, gt, mask, y, x); },
                  "l1_map_loss");
}

LossReport shape_loss(const ShapeMaps& pred, const ShapeMaps& gt, const MapField& mask) {
  require_role(pred.coord3d, Role::kCoord3D, "shape_loss");
  require_role(gt.coord3d, Role::kCoord3D, "shape_loss");
  require_role(pred.normal, Role::kNormal, "shape_loss");
  require_role(gt.normal, Role::kNormal, "shape_loss");
  require_role(pred.depth, Role::kDepth, "shape_loss");
  require_role(gt.depth, Role::kDepth, "shape_loss");
  require_role(pred.bgmask, Role::kMask, "shape_loss");
  require_role(gt.bgmask, Role::kMask, "shape_loss");
  LossReport r;
  r.l3d = l1_map_loss(pred.coord3d, gt.coord3d, mask);
  r.lnor = l1_map_loss(pred.normal, gt.normal, mask);
  r.ldp = l1_map_loss(pred.depth, gt.depth, mask);
  require_frame(pred.bgmask, gt.bgmask, mask, "shape_loss");
  r.lbg = mean_abs(pred.bgmask, gt.bgmask,
                   [&](int y, int x) { return pred.bgmask.valid(y, x) && gt.bgmask.valid(y, x); },
                   "shape_loss background");
  r.lshape = r.l3d + r.lnor + r.ldp + r.lbg;
  r.valid_pixel_count = loss_pixel_count(pred.coord3d, gt.coord3d, mask);
  return r;
}

ShiftTerms shift_disturb_diff(const MapField& pred, const MapField& gt, const MapField& mask) {
  require_frame(pred, gt, mask, "shift_disturb_diff");
  if (pred.channels() != 2) throw ArgumentError("shift_disturb_diff: expected 2 channels");
  const int ch = 2;
  std::vector<std::size_t> pixels;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (counted(pred, gt, mask, y, x)) pixels.push_back(static_cast<std::size_t>(y) * gt.width() + x);
    }
  }
  if (pixels.empty()) throw ArgumentError("shift_disturb_diff: empty mask (no valid film pixels)");
  const auto p = pred.data();
  const auto g = gt.data();
  const double n = static_cast<double>(pixels.size());

  ShiftTerms out;
  double diff_sum = 0.0;
  for (int c = 0; c < ch; ++c) {
    double mu = 0.0;
    for (std::size_t k : pixels) mu += p[k * ch + c] - g[k * ch + c];
    mu /= n;
    double var = 0.0;
    for (std::size_t k : pixels) {
      const double e = p[k * ch + c] - g[k * ch + c] - mu;
      var += e * e;
    }
    out.lshift += std::abs(mu);
    out.ldisturb += std::sqrt(var / n);
    for (std::size_t k : pixels) {
      const double d = p[k * ch + c] - g[k * ch + c];
      const double e = d - mu;
      if (d * e > 0.0) diff_sum += std::min(std::abs(d), std::abs(e));
    }
  }
  out.ldiff = diff_sum / (n * ch);
  return out;
}

double df_loss(const MapField& pred, const MapField& gt, const MapField& mask) {
  require_role(pred, Role::kDeform, "df_loss");
  require_role(gt, Role::kDeform, "df_loss");
  return shift_disturb_diff(pred, gt, mask).total();
}

double uv_loss(const MapField& pred, const MapField& gt, const MapField& mask, UvLossMode mode) {
  require_role(pred, Role::kUV, "uv_loss");
  require_role(gt, Role::kUV, "uv_loss");
  if (mode == UvLossMode::kPlainL1) return l1_map_loss(pred, gt, mask);
  return shift_disturb_diff(pred, gt, mask).total();
}

double trans_loss(const MapField& pred_uv, const MapField& pred_df, const MapField& gt_uv,
                  const MapField& gt_df, const MapField& mask, UvLossMode mode) {
  return df_loss(pred_df, gt_df, mask) + uv_loss(pred_uv, gt_uv, mask, mode);
}

LossReport dewarp_loss(const DewarpMaps& pred, const DewarpMaps& gt, const MapField& mask,
                       UvLossMode mode) {
  LossReport r = shape_loss(pred.shape, gt.shape, mask);
  require_role(pred.deform, Role::kDeform, "dewarp_loss");
  require_role(gt.deform, Role::kDeform, "dewarp_loss");
  require_role(pred.uv, Role::kUV, "dewarp_loss");
  require_role(gt.uv, Role::kUV, "dewarp_loss");
  const ShiftTerms df = shift_disturb_diff(pred.deform, gt.deform, mask);
  r.lshift = df.lshift;
  r.ldisturb = df.ldisturb;
  r.ldiff = df.ldiff;
  r.ldf = df.total();
  r.luv = uv_loss(pred.uv, gt.uv, mask, mode);
  r.ltrans = r.ldf + r.luv;
  r.ldewarp = r.lshape + r.ltrans;
  return r;
}

double recover_loss(const std::vector<ImageGrid>& stages, const ImageGrid& gt) {
  if (stages.empty()) throw ArgumentError("recover_loss: no stage outputs");
  double total = 0.0;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!stages[i].same_shape(gt)) {
      throw ArgumentError("recover_loss: stage " + std::to_string(i) + " shape differs from gt");
    }
    double sse = 0.0;
    for (std::size_t k = 0; k < gt.data().size(); ++k) {
      const double d = stages[i].data()[k] - gt.data()[k];
      sse += d * d;
    }
    total += sse / static_cast<double>(gt.data().size());
  }
  return 0.5 * total;
}

std::vector<double> finite_diff_grad(const Objective& f, const std::vector<double>& params,
                                     double eps) {
  if (!(eps > 0.0)) throw ArgumentError("finite_diff_grad: eps must be positive");
  std::vector<double> grad(params.size());
  std::vector<double> probe = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    probe[k] = params[k] + eps;
    const double hi = f(probe);
    probe[k] = params[k] - eps;
    const double lo = f(probe);
    probe[k] = params[k];
    if (!std::isfinite(hi) || !std::isfinite(lo)) {
      throw NumericError("finite_diff_grad: objective is not finite at coordinate " +
                         std::to_string(k));
    }
    grad[k] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

}  // namespace filmrec::loss
