#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "filmrec/analysis.hpp"
#include "filmrec/error.hpp"
#include "filmrec/io.hpp"
#include "filmrec/losses.hpp"
#include "filmrec/mapops.hpp"
#include "filmrec/metrics.hpp"
#include "filmrec/quality.hpp"
#include "filmrec/synthgen.hpp"

namespace filmrec::cli {
namespace {

using nlohmann::json;

constexpr const char* kConfigEcho = "config.resolved.json";

json opt_path(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

// Output directories may be new, but their parent must exist.
void ensure_out_dir(const fs::path& dir) {
  if (fs::is_directory(dir)) return;
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) {
    throw IoError("directory does not exist: " + parent.string());
  }
  std::error_code ec;
  fs::create_directory(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ArgumentError("missing " + what + ": " + p.string());
}

void emit(bool as_json, const json& doc) {
  if (as_json) std::cout << doc.dump(2) << '\n';
}

std::string prefix(int index) { return std::to_string(index) + "_"; }

synth::FilmLayout layout_from(const json& meta) {
  const auto& l = meta.at("layout");
  return {l.at("rows").get<int>(), l.at("cols").get<int>(), l.at("cell").get<int>(),
          l.at("margin").get<int>(), l.at("background_level").get<double>()};
}

synth::WindowSpec window_from(const json& meta, const fs::path& where) {
  if (!meta.contains("window") || !meta.at("window").is_object() ||
      !meta.at("window").contains("ww") || !meta.at("window").contains("wl")) {
    throw ArgumentError(where.string() + ": no window {ww, wl} in meta");
  }
  synth::WindowSpec w{meta.at("window").at("ww").get<double>(),
                      meta.at("window").at("wl").get<double>()};
  if (!(w.ww > 0.0)) throw ArgumentError(where.string() + ": window width must be positive");
  return w;
}

MapField read_role(const fs::path& p, Role role, const std::string& what) {
  require_file(p, what);
  MapField m = read_fmap(p);
  if (m.role() != role) {
    throw ArgumentError(p.string() + ": expected role " + std::string(role_name(role)) +
                        ", found " + std::string(role_name(m.role())));
  }
  return m;
}

// Deformation map with no valid pixel, for inputs that only carry UV.
MapField empty_deform(int h, int w) {
  return MapField(h, w, Role::kDeform, std::vector<double>(static_cast<std::size_t>(h) * w * 2, 0.0),
                  std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0));
}

std::vector<std::uint8_t> support_of(const maps::BackwardMap& b) {
  std::vector<std::uint8_t> s(b.coverage.size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = b.coverage[k] != maps::Coverage::kEmpty;
  return s;
}

json quick_metrics(const ImageGrid& img, const ImageGrid& reference,
                   std::span<const std::uint8_t> support) {
  std::vector<double> comp(img.data().begin(), img.data().end());
  for (std::size_t k = 0; k < support.size(); ++k) {
    if (!support[k]) comp[k] = reference.data()[k];
  }
  const ImageGrid composite(img.height(), img.width(), 1, std::move(comp));
  json j = {{"psnr", analysis::psnr_masked(img, reference, support)},
            {"ssim", analysis::ssim(composite, reference)}};
  if (std::min(img.height(), img.width()) >= analysis::ms_ssim_min_side()) {
    j["ms_ssim"] = analysis::ms_ssim(composite, reference);
  } else {
    j["ms_ssim"] = nullptr;
  }
  return j;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

json summarize(const std::vector<double>& v) {
  if (v.empty()) return nullptr;
  double s = 0.0;
  for (double x : v) s += x;
  return {{"mean", s / v.size()}, {"median", median(v)}, {"count", v.size()}};
}

// Indices for files named <i><suffix> in `dir`, sorted.
std::vector<int> scan_indices(const fs::path& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) throw IoError("directory does not exist: " + dir.string());
  const std::regex re("(\\d+)" + std::regex_replace(suffix, std::regex(R"([.])"), R"(\.)"));
  std::vector<int> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, re)) ids.push_back(std::stoi(m[1].str()));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

ImageGrid dewarp_with_params(const synth::SampleBundle& b, const synth::WarpParams& p,
                             const ImageGrid& source, maps::BackwardMap* out_map = nullptr) {
  const synth::Mesh mesh = synth::build_surface(p, 65);
  const synth::GeometryMaps geo = synth::rasterize_geometry(mesh, p, b.height(), b.width());
  maps::BackwardMap bm =
      maps::uv_to_backward(geo.uv, geo.bgmask, b.texture.height(), b.texture.width());
  ImageGrid img = maps::backward_sample(source, bm);
  if (out_map) *out_map = std::move(bm);
  return img;
}

}  // namespace

// ------------------------------------------------------------------- gen

int cmd_gen(const GenArgs& a) {
  const synth::GenConfig config =
      a.config ? synth::gen_config_from_json(read_json(*a.config)) : synth::GenConfig{};
  if (a.n < 0) throw ArgumentError("--n must be >= 0");
  const json manifest = synth::generate_dataset(config, a.seed, a.n, a.out, a.jobs);
  // Worker count is left out so the tree is identical for any --jobs.
  write_json(a.out / kConfigEcho, {{"command", "gen"},
                                   {"seed", a.seed},
                                   {"n", a.n},
                                   {"config_file", opt_path(a.config)},
                                   {"config", synth::to_json(config)}});
  log("gen: wrote " + std::to_string(a.n) + " samples to " + a.out.string());
  emit(a.json, manifest);
  return kOk;
}

// ---------------------------------------------------------------- dewarp

int cmd_dewarp(const DewarpArgs& a) {
  fs::path uv_path, deform_path, mask_path, image_path;
  std::optional<fs::path> texture_path = a.texture;
  std::optional<fs::path> albedo_path;
  int tex_h = a.tex_h, tex_w = a.tex_w;
  if (a.sample) {
    const fs::path base = *a.sample;
    const std::string p = prefix(a.index);
    uv_path = base / (p + "uv.fmap");
    deform_path = base / (p + "deform.fmap");
    mask_path = base / (p + "mask.fmap");
    image_path = base / (p + "warped.png");
    albedo_path = base / (p + "albedo.fmap");
    if (!texture_path && fs::exists(base / (p + "texture.png"))) {
      texture_path = base / (p + "texture.png");
    }
    const fs::path meta_path = base / (p + "meta.json");
    require_file(meta_path, "sample meta");
    const synth::FilmLayout layout = layout_from(read_json(meta_path));
    if (tex_h <= 0) tex_h = layout.texture_height();
    if (tex_w <= 0) tex_w = layout.texture_width();
  } else if (a.source != "warped") {
    throw ArgumentError("--source albedo needs --sample");
  }
  if (a.uv) uv_path = *a.uv;
  if (a.deform) deform_path = *a.deform;
  if (a.mask) mask_path = *a.mask;
  if (a.image) image_path = *a.image;
  if (uv_path.empty()) throw ArgumentError("missing UV map: pass --sample or --uv");
  if (image_path.empty()) throw ArgumentError("missing image: pass --sample or --image");

  const MapField uv = read_role(uv_path, Role::kUV, "UV map");
  const int h = uv.height(), w = uv.width();
  MapField mask;
  if (!mask_path.empty()) {
    mask = read_role(mask_path, Role::kMask, "mask");
  } else {
    std::vector<double> m(uv.pixel_count());
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = uv.valid_mask()[k] ? 1.0 : 0.0;
    mask = MapField(h, w, Role::kMask, std::move(m));
  }
  require_file(image_path, "image");
  ImageGrid image = read_png(image_path);
  if (a.source == "albedo") {
    require_file(*albedo_path, "albedo map");
    image = map_to_image(read_role(*albedo_path, Role::kAlbedo, "albedo map"));
  }
  if (image.height() != h || image.width() != w) {
    throw ArgumentError("image " + image_path.string() + " does not match the UV frame");
  }
  if (tex_h <= 0) tex_h = h;
  if (tex_w <= 0) tex_w = w;

  MapField merged = uv;
  const bool have_deform = !deform_path.empty() && fs::exists(deform_path);
  if (!a.no_merge) {
    if (!deform_path.empty() && !have_deform && a.deform) {
      throw ArgumentError("missing deformation map: " + deform_path.string());
    }
    const MapField df = have_deform ? read_role(deform_path, Role::kDeform, "deformation map")
                                    : empty_deform(h, w);
    merged = maps::merge_uv(uv, maps::deformation_to_uv(df, mask, w, h), mask);
  }
  const maps::BackwardMap bmap = maps::uv_to_backward(merged, mask, tex_h, tex_w);
  const ImageGrid out = maps::backward_sample(image, bmap, a.fill);

  ensure_out_dir(a.out);
  write_png(a.out / "dewarped.png", out);
  write_fmap(a.out / "backward.fmap", bmap.field);
  write_json(a.out / "backward.json", bmap.summary());

  json report = {{"coverage", bmap.summary()}, {"merged", !a.no_merge}};
  if (texture_path) {
    require_file(*texture_path, "texture");
    const ImageGrid tex = to_gray(read_png(*texture_path));
    if (tex.height() == tex_h && tex.width() == tex_w) {
      const auto support = support_of(bmap);
      report["image"] = quick_metrics(to_gray(out), tex, support);
      if (albedo_path && fs::exists(*albedo_path)) {
        // Geometry-only score: the same maps applied to the shading-free photo.
        const ImageGrid alb = to_gray(map_to_image(read_fmap(*albedo_path)));
        report["geometry"] = quick_metrics(maps::backward_sample(alb, bmap), tex, support);
      }
    }
  }
  write_json(a.out / "report.json", report);
  write_json(a.out / kConfigEcho, {{"command", "dewarp"},
                                   {"sample", opt_path(a.sample)},
                                   {"index", a.index},
                                   {"uv", uv_path.string()},
                                   {"deform", have_deform ? json(deform_path.string()) : json(nullptr)},
                                   {"mask", mask_path.empty() ? json(nullptr) : json(mask_path.string())},
                                   {"image", image_path.string()},
                                   {"texture", opt_path(texture_path)},
                                   {"source", a.source},
                                   {"tex_h", tex_h},
                                   {"tex_w", tex_w},
                                   {"no_merge", a.no_merge},
                                   {"fill", a.fill}});
  log("dewarp: wrote " + (a.out / "dewarped.png").string());
  emit(a.json, report);
  return kOk;
}

// ------------------------------------------------------------------ eval

int cmd_eval(const EvalArgs& a) {
  const analysis::EvalMode mode =
      a.deshift == "none" ? analysis::EvalMode::kPlain : analysis::mode_from_name(a.deshift);
  const std::vector<int> pred_ids = scan_indices(a.pred, "_uv.fmap");
  const std::vector<int> gt_ids = scan_indices(a.gt, "_meta.json");
  if (pred_ids != gt_ids) {
    throw ArgumentError("sample ids differ: pred [" + join(pred_ids) + "] vs gt [" +
                        join(gt_ids) + "]");
  }
  if (pred_ids.empty()) throw ArgumentError("no samples found in " + a.gt.string());

  const int n = static_cast<int>(pred_ids.size());
  std::vector<json> rows(n);
  std::vector<analysis::MetricReport> vs_tex(n), vs_gt(n);
  parallel_for(n, a.jobs, [&](int i) {
    const int id = pred_ids[i];
    const std::string p = prefix(id);
    const synth::SampleBundle b = synth::load_sample(a.gt, id);
    const MapField uv = read_role(a.pred / (p + "uv.fmap"), Role::kUV, "UV map");
    const fs::path dpath = a.pred / (p + "deform.fmap");
    const MapField df = fs::exists(dpath) ? read_role(dpath, Role::kDeform, "deformation map")
                                          : empty_deform(uv.height(), uv.width());
    analysis::RecoveryOptions opts;
    opts.translation_radius = a.radius;
    vs_tex[i] = analysis::evaluate_recovery(b, uv, df, mode, opts);
    // Same pipeline against the dewarp produced by the GT maps.
    opts.reference = analysis::recover(b, b.uv, b.deform, analysis::EvalMode::kPlain).dewarped;
    vs_gt[i] = analysis::evaluate_recovery(b, uv, df, mode, opts);
    rows[i] = {{"id", id}, {"vs_texture", vs_tex[i].to_json()}, {"vs_gt_maps", vs_gt[i].to_json()}};
  });

  auto aggregate = [&](const std::vector<analysis::MetricReport>& reps) {
    auto collect = [&](bool nested) {
      std::vector<double> ps, ss, ms;
      for (const auto& r0 : reps) {
        const analysis::MetricReport* r = nested ? r0.deshifted.get() : &r0;
        if (!r) continue;
        ps.push_back(r->psnr);
        ss.push_back(r->ssim);
        if (r->ms_ssim) ms.push_back(*r->ms_ssim);
      }
      return json{{"psnr", summarize(ps)}, {"ssim", summarize(ss)}, {"ms_ssim", summarize(ms)}};
    };
    json j = collect(false);
    if (mode != analysis::EvalMode::kPlain) j["deshifted"] = collect(true);
    return j;
  };
  const json report = {{"mode", analysis::mode_name(mode)},
                       {"samples", rows},
                       {"aggregate", {{"vs_texture", aggregate(vs_tex)},
                                      {"vs_gt_maps", aggregate(vs_gt)}}}};
  if (a.out) {
    ensure_out_dir(*a.out);
    write_json(*a.out / "eval.json", report);
    write_json(*a.out / kConfigEcho, {{"command", "eval"},
                                      {"pred", a.pred.string()},
                                      {"gt", a.gt.string()},
                                      {"deshift", a.deshift},
                                      {"radius", a.radius}});
  }
  log("eval: " + std::to_string(n) + " samples, mode " + std::string(analysis::mode_name(mode)));
  emit(a.json, report);
  return kOk;
}

// ------------------------------------------------------------------- fit

int cmd_fit(const FitArgs& a) {
  loss::FitConfig config;
  if (a.config) config = loss::fit_config_from_json(read_json(*a.config));
  if (config.free.empty()) config.free = {"curl"};
  require_file(a.sample / (prefix(a.index) + "meta.json"), "sample meta");
  const synth::SampleBundle b = synth::load_sample(a.sample, a.index);
  std::vector<double> init = a.init;
  if (init.empty()) {
    for (const auto& name : config.free) init.push_back(loss::get_param(b.params, name));
  }
  const loss::FitResult result = loss::fit_warp_params(b, config, init);

  synth::WarpParams start = b.params;
  for (std::size_t k = 0; k < init.size() && k < config.free.size(); ++k) {
    loss::set_param(start, config.free[k], init[k]);
  }
  const ImageGrid photo = to_gray(b.warped);
  const ImageGrid fitted = dewarp_with_params(b, result.params, photo);

  // Geometry score of init and fit on the shading-free photo, over the
  // support of the ground-truth inversion.
  const ImageGrid alb = to_gray(map_to_image(b.albedo));
  const auto support =
      support_of(maps::uv_to_backward(b.uv, b.bgmask, b.texture.height(), b.texture.width()));
  const ImageGrid tex = to_gray(b.texture);
  json doc = result.to_json(config.free);
  doc["init"] = init;
  doc["dewarp_psnr"] = {
      {"init", analysis::psnr_masked(dewarp_with_params(b, start, alb), tex, support)},
      {"fitted", analysis::psnr_masked(dewarp_with_params(b, result.params, alb), tex, support)}};

  ensure_out_dir(a.out);
  write_json(a.out / "fit.json", doc);
  write_png(a.out / "fitted_dewarp.png", fitted);
  write_json(a.out / kConfigEcho, {{"command", "fit"},
                                   {"sample", a.sample.string()},
                                   {"index", a.index},
                                   {"init", init},
                                   {"fit", loss::to_json(config)}});
  log("fit: " + std::to_string(result.loss_trace.size()) + " accepted iterates, stop " +
      result.stop_reason);
  emit(a.json, doc);
  return kOk;
}

// --------------------------------------------------------------- restore

int cmd_restore(const RestoreArgs& a) {
  require_file(a.meta, "meta");
  const json meta = read_json(a.meta);
  const synth::WindowSpec window = window_from(meta, a.meta);
  require_file(a.image, "image");
  const ImageGrid img = read_png(a.image);
  MapField mask;
  if (a.mask) {
    mask = read_role(*a.mask, Role::kMask, "mask");
    if (mask.height() != img.height() || mask.width() != img.width()) {
      throw ArgumentError("mask does not match the image frame");
    }
  } else {
    mask = MapField(img.height(), img.width(), Role::kMask,
                    std::vector<double>(img.pixel_count(), 1.0));
  }
  double sigma = a.sigma > 0.0 ? a.sigma : quality::default_flatfield_sigma(img.height(), img.width());
  ImageGrid deillum = img;
  if (!a.no_flatfield) deillum = quality::estimate_flatfield(img, mask, sigma).output;
  const ImageGrid gray = to_gray(deillum);

  // Cut per-slice cells when the image is a whole film texture.
  HuStack stack;
  json layout_doc = nullptr;
  if (meta.contains("layout")) {
    const synth::FilmLayout layout = layout_from(meta);
    if (layout.texture_height() == img.height() && layout.texture_width() == img.width()) {
      layout_doc = meta.at("layout");
      for (int r = 0; r < layout.rows; ++r) {
        for (int c = 0; c < layout.cols; ++c) {
          const auto [ox, oy] = layout.cell_origin(r, c);
          std::vector<double> cell(static_cast<std::size_t>(layout.cell) * layout.cell);
          for (int y = 0; y < layout.cell; ++y) {
            for (int x = 0; x < layout.cell; ++x) {
              cell[static_cast<std::size_t>(y) * layout.cell + x] = gray.at(oy + y, ox + x);
            }
          }
          stack.slices.push_back(
              quality::ct_restore(ImageGrid(layout.cell, layout.cell, 1, std::move(cell)), window));
        }
      }
    }
  }
  if (stack.slices.empty()) stack.slices.push_back(quality::ct_restore(gray, window));
  stack.extra = {{"window", {{"ww", window.ww}, {"wl", window.wl}}},
                 {"layout", layout_doc},
                 {"source", a.image.filename().string()}};

  ensure_out_dir(a.out);
  write_png(a.out / "deilluminated.png", deillum);
  write_hu_raw(a.out / "hu.raw", stack);
  write_json(a.out / kConfigEcho, {{"command", "restore"},
                                   {"image", a.image.string()},
                                   {"meta", a.meta.string()},
                                   {"mask", opt_path(a.mask)},
                                   {"flatfield", !a.no_flatfield},
                                   {"sigma", sigma},
                                   {"window", {{"ww", window.ww}, {"wl", window.wl}}}});
  const json summary = {{"slices", stack.slices.size()},
                        {"window", {{"ww", window.ww}, {"wl", window.wl}}},
                        {"flatfield", !a.no_flatfield},
                        {"sigma", sigma}};
  log("restore: " + std::to_string(stack.slices.size()) + " HU slices");
  emit(a.json, summary);
  return kOk;
}

// ------------------------------------------------------------- radiomics

int cmd_radiomics(const RadiomicsArgs& a) {
  if (!fs::is_directory(a.gt)) throw IoError("directory does not exist: " + a.gt.string());
  if (!fs::is_directory(a.pred)) throw IoError("directory does not exist: " + a.pred.string());
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(a.gt)) {
    if (entry.path().extension() == ".raw") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  std::vector<std::string> missing;
  for (const auto& n : names) {
    if (!fs::exists(a.pred / n)) missing.push_back(n);
  }
  if (!missing.empty()) {
    std::string s;
    for (const auto& m : missing) s += (s.empty() ? "" : ", ") + m;
    throw ArgumentError("pred directory lacks HU stacks: " + s);
  }

  analysis::FeatureTable pred_table, gt_table, all;
  for (const auto& n : names) {
    const HuStack gt = read_hu_raw(a.gt / n);
    const HuStack pr = read_hu_raw(a.pred / n);
    if (gt.slices.size() != pr.slices.size()) {
      throw ArgumentError(n + ": slice counts differ (" + std::to_string(pr.slices.size()) +
                          " vs " + std::to_string(gt.slices.size()) + ")");
    }
    for (std::size_t s = 0; s < gt.slices.size(); ++s) {
      const auto& g = gt.slices[s];
      const auto& p = pr.slices[s];
      if (g.height != p.height || g.width != p.width) {
        throw ArgumentError(n + ": slice " + std::to_string(s) + " shapes differ");
      }
      const std::vector<std::uint8_t> mask(g.data.size(), 1);
      const std::string id = n + "#" + std::to_string(s);
      const auto fp = analysis::radiomics_features(p, mask);
      const auto fg = analysis::radiomics_features(g, mask);
      pred_table.add_row(id, analysis::Source::kPred, fp);
      gt_table.add_row(id, analysis::Source::kGt, fg);
      all.add_row(id, analysis::Source::kPred, fp);
      all.add_row(id, analysis::Source::kGt, fg);
    }
  }
  const std::size_t n = gt_table.rows.size();
  if (n < 2) {
    throw ArgumentError("radiomics needs at least 2 paired slices for a paired t-test, found " +
                        std::to_string(n));
  }
  const analysis::SignificanceReport rep = analysis::significance_report(pred_table, gt_table);
  ensure_out_dir(a.out);
  write_text_atomic(a.out / "features.csv", all.to_csv());
  write_json(a.out / "significance.json", rep.to_json());
  write_json(a.out / kConfigEcho, {{"command", "radiomics"},
                                   {"pred", a.pred.string()},
                                   {"gt", a.gt.string()},
                                   {"levels", 32},
                                   {"alpha", 0},
                                   {"chi_square_bins", std::min<std::size_t>(16, n)}});
  log("radiomics: " + std::to_string(n) + " paired slices, " +
      std::to_string(rep.features.size()) + " features");
  emit(a.json, rep.to_json());
  return kOk;
}

// -------------------------------------------------------------- selftest

int cmd_selftest(const SelftestArgs& a) {
  const auto suites = selftest_suites();
  for (const auto& name : a.inject) {
    if (std::find(suites.begin(), suites.end(), name) == suites.end()) {
      std::string known;
      for (const auto& s : suites) known += (known.empty() ? "" : ", ") + s;
      throw ArgumentError("unknown suite '" + name + "' (suites: " + known + ")");
    }
  }
  const auto results = run_selftest(a.inject);
  json doc = json::array();
  bool ok = true;
  for (const auto& r : results) {
    const bool pass = r.failures.empty();
    ok = ok && pass;
    char line[160];
    std::snprintf(line, sizeof line, "%-4s %-18s %3d checks  %.2fs", pass ? "ok" : "FAIL",
                  r.suite.c_str(), r.checks, r.seconds);
    log(line);
    for (const auto& f : r.failures) log("     " + f);
    doc.push_back({{"suite", r.suite},
                   {"pass", pass},
                   {"checks", r.checks},
                   {"failures", r.failures},
                   {"seconds", r.seconds}});
  }
  emit(a.json, doc);
  if (!ok) {
    std::string failed;
    for (const auto& r : results) {
      if (!r.failures.empty()) failed += (failed.empty() ? "" : ", ") + r.suite;
    }
    std::cerr << "selftest failed: " << failed << '\n';
    return kSelftestFailed;
  }
  return kOk;
}

}  // namespace filmrec::cli
