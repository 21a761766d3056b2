#include <algorithm>
#include <cmath>
#include <limits>
#include <regex>
#include <set>

#include "filmrec/error.hpp"
#include "filmrec/losses.hpp"

namespace filmrec::loss {
namespace {

constexpr int kMaxFree = 12;

[[noreturn]] void unknown_param(const std::string& name) {
  throw ArgumentError("unknown warp parameter '" + name +
                      "' (accepted: curl, sine<k>.amplitude|freq|phase, "
                      "rigid.rot_x|rot_y|rot_z|tx|ty|tz, camera.distance)");
}

double* param_slot(synth::WarpParams& p, const std::string& name) {
  static const std::regex sine_re(R"(sine(\d+)\.(amplitude|freq|phase))");
  std::smatch m;
  if (name == "curl") return &p.curl;
  if (name == "camera.distance") return &p.camera.distance;
  if (name == "rigid.rot_x") return &p.rigid.rotation[0];
  if (name == "rigid.rot_y") return &p.rigid.rotation[1];
  if (name == "rigid.rot_z") return &p.rigid.rotation[2];
  if (name == "rigid.tx") return &p.rigid.translation[0];
  if (name == "rigid.ty") return &p.rigid.translation[1];
  if (name == "rigid.tz") return &p.rigid.translation[2];
  if (std::regex_match(name, m, sine_re)) {
    const std::size_t k = std::stoul(m[1].str());
    if (k >= p.sine_terms.size()) {
      throw ArgumentError("warp parameter '" + name + "' refers to sine term " +
                          std::to_string(k) + " but only " +
                          std::to_string(p.sine_terms.size()) + " exist");
    }
    auto& t = p.sine_terms[k];
    if (m[2] == "amplitude") return &t.amplitude;
    if (m[2] == "freq") return &t.freq;
    return &t.phase;
  }
  unknown_param(name);
}

// Treat every pixel as observed so that losing film coverage costs loss
// instead of silently shrinking the averaging set.
MapField all_valid(const MapField& m) {
  std::vector<double> data(m.data().begin(), m.data().end());
  return MapField::unchecked(m.height(), m.width(), m.role(), std::move(data),
                             std::vector<std::uint8_t>(m.pixel_count(), 1));
}

}  // namespace

double default_scale(const std::string& name) {
  if (name == "curl") return 0.2;
  if (name == "camera.distance") return 0.1;
  if (name.rfind("rigid.rot_", 0) == 0) return 0.05;
  if (name.rfind("rigid.t", 0) == 0) return 0.02;
  if (name.ends_with(".amplitude")) return 0.02;
  if (name.ends_with(".freq")) return 0.2;
  if (name.ends_with(".phase")) return 0.5;
  unknown_param(name);
}

double get_param(const synth::WarpParams& params, const std::string& name) {
  synth::WarpParams copy = params;
  return *param_slot(copy, name);
}

void set_param(synth::WarpParams& params, const std::string& name, double value) {
  *param_slot(params, name) = value;
}

FitConfig fit_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ArgumentError("fit config: expected an object");
  static const std::set<std::string> known{"free",       "max_iters", "eps",      "step0",
                                           "step_floor", "grad_tol",  "scales",   "fit_size",
                                           "uv_loss"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw ArgumentError("fit config: unknown key '" + key + "'");
  }
  FitConfig c;
  if (doc.contains("free")) c.free = doc.at("free").get<std::vector<std::string>>();
  if (doc.contains("max_iters")) c.max_iters = doc.at("max_iters").get<int>();
  if (doc.contains("eps")) c.eps = doc.at("eps").get<double>();
  if (doc.contains("step0")) c.step0 = doc.at("step0").get<double>();
  if (doc.contains("step_floor")) c.step_floor = doc.at("step_floor").get<double>();
  if (doc.contains("grad_tol")) c.grad_tol = doc.at("grad_tol").get<double>();
  if (doc.contains("scales")) c.scales = doc.at("scales").get<std::vector<double>>();
  if (doc.contains("fit_size")) c.fit_size = doc.at("fit_size").get<int>();
  if (doc.contains("uv_loss")) {
    const auto s = doc.at("uv_loss").get<std::string>();
    if (s == "shift_disturb_diff") {
      c.uv_mode = UvLossMode::kShiftDisturbDiff;
    } else if (s == "l1") {
      c.uv_mode = UvLossMode::kPlainL1;
    } else {
      throw ArgumentError("fit config: uv_loss must be 'shift_disturb_diff' or 'l1'");
    }
  }
  return c;
}

nlohmann::json to_json(const FitConfig& c) {
  return {{"free", c.free},         {"max_iters", c.max_iters},   {"eps", c.eps},
          {"step0", c.step0},       {"step_floor", c.step_floor}, {"grad_tol", c.grad_tol},
          {"scales", c.scales},     {"fit_size", c.fit_size},
          {"uv_loss", c.uv_mode == UvLossMode::kPlainL1 ? "l1" : "shift_disturb_diff"}};
}

nlohmann::json FitResult::to_json(const std::vector<std::string>& names) const {
  nlohmann::json free = nlohmann::json::object();
  for (std::size_t k = 0; k < names.size() && k < values.size(); ++k) free[names[k]] = values[k];
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& [it, l] : loss_trace) trace.push_back({{"iteration", it}, {"ltrans", l}});
  return {{"free", free},
          {"params", synth::to_json(params)},
          {"loss_trace", trace},
          {"converged", converged},
          {"evaluations", evaluations},
          {"stop_reason", stop_reason}};
}

TransObjective::TransObjective(const synth::SampleBundle& bundle, const FitConfig& config,
                               int grid_n)
    : grid_n_(grid_n), mode_(config.uv_mode) {
  const int side = std::max(bundle.uv.height(), bundle.uv.width());
  if (config.fit_size <= 0 || config.fit_size >= side) {
    factor_ = 1;
  } else {
    factor_ = side / config.fit_size;
    if (bundle.uv.height() % factor_ != 0 || bundle.uv.width() % factor_ != 0) factor_ = 1;
  }
  MapField uv = factor_ > 1 ? downsample_map(bundle.uv, factor_) : bundle.uv;
  MapField df = factor_ > 1 ? downsample_map(bundle.deform, factor_) : bundle.deform;
  mask_ = factor_ > 1 ? downsample_map(bundle.bgmask, factor_) : bundle.bgmask;
  gt_uv_ = signed_view(uv, uv.width(), uv.height());
  gt_df_ = signed_view(df, df.width(), df.height());
}

double TransObjective::operator()(const synth::WarpParams& params) const {
  synth::WarpParams p = params;
  p.camera.focal /= factor_;
  p.camera.cx /= factor_;
  p.camera.cy /= factor_;
  const int h = gt_uv_.height();
  const int w = gt_uv_.width();
  const synth::Mesh mesh = synth::build_surface(p, grid_n_);
  const synth::GeometryMaps geo = synth::rasterize_geometry(mesh, p, h, w);
  const MapField uv = signed_view(all_valid(geo.uv), w, h);
  const MapField df = signed_view(all_valid(geo.deform), w, h);
  return trans_loss(uv, df, gt_uv_, gt_df_, mask_, mode_);
}

FitResult fit_warp_params(const synth::SampleBundle& bundle, const FitConfig& config,
                          const std::vector<double>& init, int grid_n) {
  const std::size_t n = config.free.size();
  if (n == 0) throw ArgumentError("fit: no free parameters");
  if (n > static_cast<std::size_t>(kMaxFree)) {
    throw ArgumentError("fit: at most " + std::to_string(kMaxFree) + " free parameters, got " +
                        std::to_string(n));
  }
  if (init.size() != n) {
    throw ArgumentError("fit: init has " + std::to_string(init.size()) + " values for " +
                        std::to_string(n) + " free parameters");
  }
  std::vector<double> scales = config.scales;
  if (scales.empty()) {
    for (const auto& name : config.free) scales.push_back(default_scale(name));
  }
  if (scales.size() != n) throw ArgumentError("fit: scales must match the free parameters");
  for (double s : scales) {
    if (!(s > 0.0)) throw ArgumentError("fit: scales must be positive");
  }
  if (!(config.step0 > 0.0) || !(config.eps > 0.0)) {
    throw ArgumentError("fit: step0 and eps must be positive");
  }

  const TransObjective objective(bundle, config, grid_n);
  FitResult result;
  synth::WarpParams base = bundle.params;
  for (const auto& name : config.free) param_slot(base, name);  // validate names early

  auto params_at = [&](const std::vector<double>& z) {
    synth::WarpParams p = base;
    for (std::size_t k = 0; k < n; ++k) set_param(p, config.free[k], z[k] * scales[k]);
    return p;
  };
  // Objective over scaled coordinates; invalid geometry scores +inf so the
  // line search rejects it.
  auto f = [&](const std::vector<double>& z) {
    ++result.evaluations;
    try {
      return objective(params_at(z));
    } catch (const RenderError&) {
      return std::numeric_limits<double>::infinity();
    } catch (const ArgumentError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<double> z(n);
  for (std::size_t k = 0; k < n; ++k) z[k] = init[k] / scales[k];
  double loss = f(z);
  if (!std::isfinite(loss)) throw NumericError("fit: objective is not finite at the initial point");
  result.loss_trace.emplace_back(0, loss);

  double step = config.step0;
  result.stop_reason = "max_iters";
  for (int it = 1; it <= config.max_iters; ++it) {
    if (loss == 0.0) {
      result.converged = true;
      result.stop_reason = "zero_loss";
      break;
    }
    std::vector<double> g;
    try {
      g = finite_diff_grad(f, z, config.eps);
    } catch (const NumericError&) {
      result.stop_reason = "gradient_not_finite";
      break;
    }
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    if (gmax < config.grad_tol) {
      result.converged = true;
      result.stop_reason = "gradient_tol";
      break;
    }
    bool accepted = false;
    while (step >= config.step_floor) {
      std::vector<double> trial(n);
      for (std::size_t k = 0; k < n; ++k) trial[k] = z[k] - step * g[k];
      const double l = f(trial);
      if (l < loss) {
        z = std::move(trial);
        loss = l;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.converged = true;
      result.stop_reason = "step_floor";
      break;
    }
    result.loss_trace.emplace_back(it, loss);
    step *= 2.0;
  }
  result.params = params_at(z);
  result.values.resize(n);
  for (std::size_t k = 0; k < n; ++k) result.values[k] = z[k] * scales[k];
  return result;
}

}  // namespace filmrec::loss
