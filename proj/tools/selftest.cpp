#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "filmrec/analysis.hpp"
#include "filmrec/io.hpp"
#include "filmrec/losses.hpp"
#include "filmrec/mapops.hpp"
#include "filmrec/metrics.hpp"
#include "filmrec/quality.hpp"
#include "filmrec/synthgen.hpp"

namespace filmrec::cli {
namespace {

class Checker {
 public:
  Checker(SelftestResult& r, bool inject) : r_(r), inject_(inject) {}

  void near(double got, double want, double tol, const std::string& what) {
    ++r_.checks;
    const double t = inject_ ? -1.0 : tol;
    if (!(std::abs(got - want) <= t)) {
      std::ostringstream os;
      os << what << ": got " << got << ", want " << want << " +/- " << t;
      r_.failures.push_back(os.str());
    }
  }
  void at_least(double got, double floor, const std::string& what) {
    near(std::max(0.0, floor - got), 0.0, 0.0, what + " (floor " + std::to_string(floor) + ")");
  }
  void truth(bool cond, const std::string& what) { near(cond ? 0.0 : 1.0, 0.0, 0.0, what); }

 private:
  SelftestResult& r_;
  bool inject_;
};

MapField random_map(std::mt19937_64& rng, Role role, int h, int w) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> d(static_cast<std::size_t>(h) * w * role_channels(role));
  for (double& v : d) v = u(rng);
  return MapField::unchecked(h, w, role, std::move(d),
                             std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 1));
}

MapField full_mask(int h, int w) {
  return MapField(h, w, Role::kMask, std::vector<double>(static_cast<std::size_t>(h) * w, 1.0));
}

// Loop-based reading of the shift/disturb/diff definition.
loss::ShiftTerms brute_force(const MapField& p, const MapField& g) {
  loss::ShiftTerms t;
  const int n = p.height() * p.width();
  double diff = 0.0;
  for (int c = 0; c < 2; ++c) {
    double mu = 0.0;
    for (int y = 0; y < p.height(); ++y)
      for (int x = 0; x < p.width(); ++x) mu += p.at(y, x, c) - g.at(y, x, c);
    mu /= n;
    double var = 0.0;
    for (int y = 0; y < p.height(); ++y) {
      for (int x = 0; x < p.width(); ++x) {
        const double d = p.at(y, x, c) - g.at(y, x, c);
        var += (d - mu) * (d - mu);
        if (d * (d - mu) > 0.0) diff += std::min(std::abs(d), std::abs(d - mu));
      }
    }
    t.lshift += std::abs(mu);
    t.ldisturb += std::sqrt(var / n);
  }
  t.ldiff = diff / (2.0 * n);
  return t;
}

void suite_round_trips(Checker& c) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> d(16 * 16 * 3);
  for (double& v : d) v = u(rng);
  const ImageGrid img(16, 16, 3, d);
  const ImageGrid back = denormalize(normalize_signed(img));
  double err = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) err = std::max(err, std::abs(back.data()[k] - d[k]));
  c.near(err, 0.0, 1e-6, "normalize/denormalize");

  const MapField m = random_map(rng, Role::kDeform, 9, 7);
  const MapField m2 = decode_fmap(encode_fmap(m));
  double ferr = 0.0;
  for (std::size_t k = 0; k < m.data().size(); ++k) {
    ferr = std::max(ferr, std::abs(m.data()[k] - m2.data()[k]));
  }
  c.near(ferr, 0.0, 1e-6, "FMAP encode/decode");

  const synth::WindowSpec win{80.0, 40.0};
  int worst = 0;
  for (int hu = 0; hu <= 80; ++hu) {
    const HuGrid g{1, 1, {static_cast<std::int16_t>(hu)}};
    const ImageGrid disp = synth::window_map(g, win.ww, win.wl);
    const double q = std::round(disp.at(0, 0) * 255.0) / 255.0;
    const HuGrid r = quality::ct_restore(ImageGrid(1, 1, 1, {q}), win);
    worst = std::max(worst, std::abs(r.data[0] - hu));
  }
  c.near(worst, 0.0, quality::ct_roundtrip_bound(win), "window/ct_restore round trip");

  // Identity UV inverts to the pixel grid.
  const int n = 48;
  std::vector<double> uvd(static_cast<std::size_t>(n) * n * 2);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      uvd[(static_cast<std::size_t>(y) * n + x) * 2] = (x + 0.5) / n;
      uvd[(static_cast<std::size_t>(y) * n + x) * 2 + 1] = (y + 0.5) / n;
    }
  }
  const MapField uv(n, n, Role::kUV, uvd);
  const auto bm = maps::uv_to_backward(uv, full_mask(n, n), n, n);
  double berr = 0.0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (bm.at(y, x) == maps::Coverage::kEmpty) continue;
      berr = std::max(berr, std::hypot(bm.field.at(y, x, 0) - (x + 0.5),
                                       bm.field.at(y, x, 1) - (y + 0.5)));
    }
  }
  c.near(berr, 0.0, 0.75, "identity warp inversion (px)");
}

void suite_loss_oracles(Checker& c) {
  std::mt19937_64 rng(5);
  const MapField mask = full_mask(4, 4);
  double worst = 0.0;
  for (int i = 0; i < 25; ++i) {
    const MapField p = random_map(rng, Role::kDeform, 4, 4);
    const MapField g = random_map(rng, Role::kDeform, 4, 4);
    const auto a = loss::shift_disturb_diff(p, g, mask);
    const auto b = brute_force(p, g);
    worst = std::max({worst, std::abs(a.lshift - b.lshift), std::abs(a.ldisturb - b.ldisturb),
                      std::abs(a.ldiff - b.ldiff)});
  }
  c.near(worst, 0.0, 1e-9, "shift/disturb/diff vs brute force");

  const MapField g = random_map(rng, Role::kDeform, 4, 4);
  std::vector<double> shifted(g.data().begin(), g.data().end());
  for (std::size_t k = 0; k < shifted.size(); ++k) shifted[k] += (k % 2 ? -0.25 : 0.125);
  const MapField p = MapField::unchecked(4, 4, Role::kDeform, shifted,
                                         std::vector<std::uint8_t>(16, 1));
  const auto t = loss::shift_disturb_diff(p, g, mask);
  c.near(t.lshift, 0.375, 1e-9, "constant shift lshift");
  c.near(t.ldisturb, 0.0, 1e-9, "constant shift ldisturb");
  c.near(t.ldiff, 0.0, 1e-9, "constant shift ldiff");

  const ImageGrid gt(2, 2, 1, {0.1, 0.2, 0.3, 0.4});
  const ImageGrid off(2, 2, 1, {0.3, 0.4, 0.5, 0.6});
  c.near(loss::recover_loss({off}, gt), 0.02, 1e-12, "recover_loss uniform 0.2");
}

void suite_metric_identities(Checker& c) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> d(176 * 176);
  for (double& v : d) v = u(rng);
  const ImageGrid a(176, 176, 1, d);
  c.near(analysis::ssim(a, a), 1.0, 1e-9, "ssim identity");
  c.near(analysis::ms_ssim(a, a), 1.0, 1e-9, "ms_ssim identity");
  std::vector<double> e = d;
  for (double& v : e) v = v > 0.5 ? v - 0.1 : v + 0.1;
  c.near(analysis::psnr(a, ImageGrid(176, 176, 1, e)), 20.0, 1e-9, "psnr uniform error 0.1");
  c.near(analysis::psnr(a, a), analysis::kPsnrCap, 0.0, "psnr cap");
}

void suite_statistics(Checker& c) {
  std::vector<double> x(20), y(20);
  for (int i = 0; i < 20; ++i) {
    x[i] = std::sin(i * 0.7);
    y[i] = x[i] + 10.0;
  }
  c.near(analysis::paired_t_score(x, x).t, 0.0, 0.0, "t on identical samples");
  c.near(analysis::chi_square_stat(x, x).chi2, 0.0, 0.0, "chi2 on identical samples");
  c.near(analysis::chi_square_stat(x, y).chi2, 40.0, 1e-9, "chi2 on disjoint samples");
}

void suite_geometry(Checker& c) {
  const synth::GenConfig cfg;
  for (int i = 0; i < 2; ++i) {
    const auto b = synth::generate_sample(cfg, synth::sample_seed(99, i));
    c.truth(synth::validate_bundle(b).empty(), "bundle invariants, sample " + std::to_string(i));
    const MapField uv2 = maps::deformation_to_uv(b.deform, b.bgmask, b.width(), b.height());
    double worst = 0.0;
    for (int y = 0; y < b.height(); ++y) {
      for (int x = 0; x < b.width(); ++x) {
        if (!b.bgmask.is_film(y, x)) continue;
        worst = std::max(worst, std::hypot((uv2.at(y, x, 0) - b.uv.at(y, x, 0)) * b.width(),
                                           (uv2.at(y, x, 1) - b.uv.at(y, x, 1)) * b.height()));
      }
    }
    c.near(worst, 0.0, 0.75, "deformation_to_uv vs uv (px), sample " + std::to_string(i));
  }
}

struct Suite {
  const char* name;
  void (*run)(Checker&);
};

constexpr Suite kSuites[] = {
    {"round_trips", suite_round_trips},   {"loss_oracles", suite_loss_oracles},
    {"metric_identities", suite_metric_identities}, {"statistics", suite_statistics},
    {"geometry", suite_geometry},
};

}  // namespace

std::vector<std::string> selftest_suites() {
  std::vector<std::string> out;
  for (const auto& s : kSuites) out.emplace_back(s.name);
  return out;
}

std::vector<SelftestResult> run_selftest(const std::vector<std::string>& inject) {
  std::vector<SelftestResult> results;
  for (const auto& s : kSuites) {
    SelftestResult r;
    r.suite = s.name;
    const bool forced = std::find(inject.begin(), inject.end(), s.name) != inject.end();
    Checker c(r, forced);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      s.run(c);
    } catch (const std::exception& e) {
      r.failures.push_back(std::string("exception: ") + e.what());
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace filmrec::cli
