#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "filmrec/image.hpp"
#include "filmrec/synthgen.hpp"

namespace filmrec::loss {

// All map losses expect signed views (see signed_view) and reduce with a
// mean over valid film pixels, so magnitudes do not depend on resolution.

struct LossReport {
  double l3d = 0.0;
  double lnor = 0.0;
  double ldp = 0.0;
  double lbg = 0.0;
  double lshape = 0.0;
  double lshift = 0.0;
  double ldisturb = 0.0;
  double ldiff = 0.0;
  double ldf = 0.0;
  double luv = 0.0;
  double ltrans = 0.0;
  double ldewarp = 0.0;
  long long valid_pixel_count = 0;

  nlohmann::json to_json() const;
};

struct ShiftTerms {
  double lshift = 0.0;
  double ldisturb = 0.0;
  double ldiff = 0.0;
  double total() const { return lshift + ldisturb + ldiff; }
};

enum class UvLossMode { kShiftDisturbDiff, kPlainL1 };

struct ShapeMaps {
  MapField coord3d;
  MapField normal;
  MapField depth;
  MapField bgmask;
};

struct DewarpMaps {
  ShapeMaps shape;
  MapField uv;
  MapField deform;
};

// Pixels where pred, gt are valid and mask marks film.
long long loss_pixel_count(const MapField& pred, const MapField& gt, const MapField& mask);

double l1_map_loss(const MapField& pred, const MapField& gt, const MapField& mask);

// Fills l3d, lnor, ldp, lbg, lshape. The background term ignores `mask`.
LossReport shape_loss(const ShapeMaps& pred, const ShapeMaps& gt, const MapField& mask);

ShiftTerms shift_disturb_diff(const MapField& pred, const MapField& gt, const MapField& mask);

double df_loss(const MapField& pred, const MapField& gt, const MapField& mask);
double uv_loss(const MapField& pred, const MapField& gt, const MapField& mask,
               UvLossMode mode = UvLossMode::kShiftDisturbDiff);
double trans_loss(const MapField& pred_uv, const MapField& pred_df, const MapField& gt_uv,
                  const MapField& gt_df, const MapField& mask,
                  UvLossMode mode = UvLossMode::kShiftDisturbDiff);

LossReport dewarp_loss(const DewarpMaps& pred, const DewarpMaps& gt, const MapField& mask,
                       UvLossMode mode = UvLossMode::kShiftDisturbDiff);

// Half the sum of per-stage pixel-mean squared errors.
double recover_loss(const std::vector<ImageGrid>& stages, const ImageGrid& gt);

using Objective = std::function<double(const std::vector<double>&)>;

// Central differences. Probes run sequentially; objectives must be pure.
std::vector<double> finite_diff_grad(const Objective& f, const std::vector<double>& params,
                                     double eps);

// ------------------------------------------------------------------ fitter

struct FitConfig {
  std::vector<std::string> free;  // e.g. "curl", "sine0.amplitude", "rigid.rot_x"
  int max_iters = 60;
  double eps = 1e-4;
  double step0 = 0.05;
  double step_floor = 1e-8;
  double grad_tol = 1e-6;
  // Per-parameter step scale; empty picks default_scale for each name.
  std::vector<double> scales;
  int fit_size = 128;  // longest side of the render used by the objective
  UvLossMode uv_mode = UvLossMode::kShiftDisturbDiff;
};

FitConfig fit_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const FitConfig& config);

struct FitResult {
  synth::WarpParams params;
  std::vector<double> values;  // final free-parameter values
  std::vector<std::pair<int, double>> loss_trace;
  bool converged = false;
  int evaluations = 0;
  std::string stop_reason;

  nlohmann::json to_json(const std::vector<std::string>& names) const;
};

// Read and write a named scalar of WarpParams. Unknown names throw
// ArgumentError listing the accepted forms.
double get_param(const synth::WarpParams& params, const std::string& name);
// Typical magnitude of a parameter, used to precondition the descent.
double default_scale(const std::string& name);
void set_param(synth::WarpParams& params, const std::string& name, double value);

// ltrans between maps rendered from `params` and the bundle's ground truth,
// both at the fitting resolution.
class TransObjective {
 public:
  TransObjective(const synth::SampleBundle& bundle, const FitConfig& config, int grid_n = 65);
  double operator()(const synth::WarpParams& params) const;
  int height() const { return gt_uv_.height(); }
  int width() const { return gt_uv_.width(); }

 private:
  int factor_ = 1;
  int grid_n_ = 65;
  UvLossMode mode_;
  MapField gt_uv_;
  MapField gt_df_;
  MapField mask_;
};

FitResult fit_warp_params(const synth::SampleBundle& bundle, const FitConfig& config,
                          const std::vector<double>& init, int grid_n = 65);

}  // namespace filmrec::loss
