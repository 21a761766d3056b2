#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "filmrec/error.hpp"

namespace filmrec::cli {

void log(const std::string& line) {
  static const bool quiet = std::getenv("FILMREC_QUIET") != nullptr;
  if (!quiet) std::cerr << line << '\n';
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  jobs = std::min(jobs, n);
  std::atomic<int> next{0};
  std::mutex m;
  std::exception_ptr first;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!first) first = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

namespace {

int fail(int code, const std::string& what) {
  std::cerr << "error: " << what << '\n';
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Film photo dewarping, restoration and evaluation toolkit", "filmrec"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a seeded synthetic dataset");
  g->add_option("--config", gen.config, "Generation config JSON")->check(CLI::ExistingFile);
  g->add_option("--seed", gen.seed, "Dataset seed");
  g->add_option("--n", gen.n, "Number of samples")->check(CLI::NonNegativeNumber);
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--jobs", gen.jobs, "Worker threads (0 = all cores)");
  g->add_flag("--json", gen.json, "Print the manifest to stdout");

  DewarpArgs dw;
  auto* d = app.add_subcommand("dewarp", "Invert UV/deformation maps and dewarp an image");
  d->add_option("--sample", dw.sample, "Sample directory");
  d->add_option("--index", dw.index, "Sample index inside --sample");
  d->add_option("--uv", dw.uv, "UV map (FMAP)");
  d->add_option("--deform", dw.deform, "Deformation map (FMAP)");
  d->add_option("--mask", dw.mask, "Foreground mask (FMAP)");
  d->add_option("--image", dw.image, "Image to dewarp (PNG)");
  d->add_option("--texture", dw.texture, "Flat reference for the report (PNG)");
  d->add_option("--tex-h", dw.tex_h, "Output height (default: layout or image)");
  d->add_option("--tex-w", dw.tex_w, "Output width (default: layout or image)");
  d->add_option("--source", dw.source, "Sample image to dewarp")
      ->check(CLI::IsMember({"warped", "albedo"}));
  d->add_flag("--no-merge", dw.no_merge, "Use the UV map alone");
  d->add_option("--fill", dw.fill, "Value for pixels with no backward support");
  d->add_option("--out", dw.out, "Output directory")->required();
  d->add_flag("--json", dw.json, "Print the report to stdout");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predicted maps against a generated dataset");
  e->add_option("--pred", ev.pred, "Directory with <i>_uv.fmap [and <i>_deform.fmap]")
      ->required();
  e->add_option("--gt", ev.gt, "Generated dataset directory")->required();
  e->add_option("--deshift", ev.deshift, "De-shift mode")
      ->check(CLI::IsMember({"none", "map", "image"}));
  e->add_option("--radius", ev.radius, "Image de-shift search radius (px)");
  e->add_option("--out", ev.out, "Output directory for eval.json");
  e->add_option("--jobs", ev.jobs, "Worker threads (0 = all cores)");
  e->add_flag("--json", ev.json, "Print the report to stdout");

  FitArgs ft;
  auto* f = app.add_subcommand("fit", "Fit warp parameters to a sample's maps");
  f->add_option("--sample", ft.sample, "Sample directory")->required();
  f->add_option("--index", ft.index, "Sample index");
  f->add_option("--config", ft.config, "Fit config JSON")->check(CLI::ExistingFile);
  f->add_option("--init", ft.init, "Initial values, one per free parameter")->delimiter(',');
  f->add_option("--out", ft.out, "Output directory")->required();
  f->add_flag("--json", ft.json, "Print the result to stdout");

  RestoreArgs rs;
  auto* r = app.add_subcommand("restore", "De-illuminate a dewarped film and restore HU");
  r->add_option("--image", rs.image, "Dewarped PNG")->required();
  r->add_option("--meta", rs.meta, "Sample meta JSON carrying the window")->required();
  r->add_option("--mask", rs.mask, "Film mask in the image frame (FMAP)");
  r->add_option("--flatfield", rs.sigma, "Flat-field sigma in pixels (0 = max side / 8)");
  r->add_flag("--no-flatfield", rs.no_flatfield, "Skip de-illumination");
  r->add_option("--out", rs.out, "Output directory")->required();
  r->add_flag("--json", rs.json, "Print a summary to stdout");

  RadiomicsArgs rd;
  auto* rad = app.add_subcommand("radiomics", "Feature tables and significance tests");
  rad->add_option("--pred", rd.pred, "Directory of predicted *.raw HU stacks")->required();
  rad->add_option("--gt", rd.gt, "Directory of ground-truth *.raw HU stacks")->required();
  rad->add_option("--out", rd.out, "Output directory")->required();
  rad->add_flag("--json", rd.json, "Print the significance report to stdout");

  SelftestArgs st;
  auto* s = app.add_subcommand("selftest", "Run the cross-module invariant suite");
  s->add_option("--inject-failure", st.inject, "Force the named suite to fail");
  s->add_flag("--json", st.json, "Print results to stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*d) return cmd_dewarp(dw);
    if (*e) return cmd_eval(ev);
    if (*f) return cmd_fit(ft);
    if (*r) return cmd_restore(rs);
    if (*rad) return cmd_radiomics(rd);
    if (*s) return cmd_selftest(st);
  } catch (const IoError& err) {
    return fail(kIo, err.what());
  } catch (const NumericError& err) {
    return fail(kNumeric, err.what());
  } catch (const FormatError& err) {
    return fail(kUsage, err.what());
  } catch (const RenderError& err) {
    return fail(kUsage, err.what());
  } catch (const ArgumentError& err) {
    return fail(kUsage, err.what());
  } catch (const ContractError& err) {
    return fail(kUsage, err.what());
  } catch (const nlohmann::json::exception& err) {
    return fail(kUsage, std::string("config: ") + err.what());
  } catch (const std::filesystem::filesystem_error& err) {
    return fail(kIo, err.what());
  } catch (const std::exception& err) {
    return fail(kUsage, err.what());
  }
  return kUsage;
}

}  // namespace filmrec::cli
