#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "filmrec/analysis.hpp"
#include "filmrec/error.hpp"

namespace filmrec::analysis {
namespace {

constexpr int kEntropyBins = 64;

void require_mask(const HuGrid& hu, std::span<const std::uint8_t> mask, const char* what) {
  if (mask.size() != hu.data.size()) {
    throw ArgumentError(std::string(what) + ": mask has " + std::to_string(mask.size()) +
                        " entries for a " + std::to_string(hu.height) + "x" +
                        std::to_string(hu.width) + " grid");
  }
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw ArgumentError(std::string(what) + ": empty mask");
  }
}

bool in(std::span<const std::uint8_t> mask, int h, int w, int y, int x) {
  return y >= 0 && x >= 0 && y < h && x < w && mask[static_cast<std::size_t>(y) * w + x];
}

double plogp(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

}  // namespace

double NamedFeatures::get(std::string_view name) const {
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name) return values[k];
  }
  throw ArgumentError("no feature named '" + std::string(name) + "'");
}

NamedFeatures first_order_features(const HuGrid& hu, std::span<const std::uint8_t> mask) {
  require_mask(hu, mask, "first_order_features");
  double sum = 0.0, sq = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t n = 0;
  std::array<std::size_t, kEntropyBins> hist{};
  const double width = (synth::kHuMax - synth::kHuMin + 1) / static_cast<double>(kEntropyBins);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    const double v = hu.data[k];
    sum += v;
    sq += v * v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    const int bin = std::clamp(static_cast<int>(std::floor((v - synth::kHuMin) / width)), 0,
                               kEntropyBins - 1);
    ++hist[bin];
    ++n;
  }
  const double mean = sum / n;
  double var = 0.0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) var += (hu.data[k] - mean) * (hu.data[k] - mean);
  }
  double entropy = 0.0;
  for (std::size_t c : hist) entropy -= plogp(static_cast<double>(c) / n);

  NamedFeatures f;
  f.add("firstorder_mean", mean);
  f.add("firstorder_std", std::sqrt(var / n));
  f.add("firstorder_min", lo);
  f.add("firstorder_max", hi);
  f.add("firstorder_energy", sq);
  f.add("firstorder_entropy", entropy == 0.0 ? 0.0 : entropy);
  return f;
}

std::vector<int> quantize_levels(const HuGrid& hu, std::span<const std::uint8_t> mask,
                                 int levels) {
  require_mask(hu, mask, "quantize_levels");
  if (levels < 1) throw ArgumentError("quantize_levels: levels must be positive");
  int lo = std::numeric_limits<int>::max();
  int hi = std::numeric_limits<int>::min();
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    lo = std::min<int>(lo, hu.data[k]);
    hi = std::max<int>(hi, hu.data[k]);
  }
  std::vector<int> out(mask.size(), 0);
  if (hi == lo) return out;
  // Integer floor so bin edges are exact.
  const long long span = static_cast<long long>(hi) - lo;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    const long long b = (static_cast<long long>(hu.data[k]) - lo) * levels / span;
    out[k] = static_cast<int>(std::min<long long>(levels - 1, b));
  }
  return out;
}

std::vector<double> glcm_matrix(std::span<const int> level_grid, int height, int width,
                                std::span<const std::uint8_t> mask, int levels,
                                const std::vector<Offset>& offsets) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (level_grid.size() != n || mask.size() != n) {
    throw ArgumentError("glcm_matrix: grid and mask sizes must equal height*width");
  }
  std::vector<double> p(static_cast<std::size_t>(levels) * levels, 0.0);
  double total = 0.0;
  for (const auto& [dy, dx] : offsets) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (!in(mask, height, width, y, x) || !in(mask, height, width, y + dy, x + dx)) continue;
        const int a = level_grid[static_cast<std::size_t>(y) * width + x];
        const int b = level_grid[static_cast<std::size_t>(y + dy) * width + x + dx];
        if (a < 0 || b < 0 || a >= levels || b >= levels) {
          throw ArgumentError("glcm_matrix: level outside [0, levels)");
        }
        p[static_cast<std::size_t>(a) * levels + b] += 1.0;
        p[static_cast<std::size_t>(b) * levels + a] += 1.0;
        total += 2.0;
      }
    }
  }
  if (total > 0.0) {
    for (double& v : p) v /= total;
  }
  return p;
}

NamedFeatures glcm_from_matrix(std::span<const double> p, int levels) {
  double contrast = 0.0, asm_ = 0.0, homogeneity = 0.0, mu = 0.0;
  for (int i = 0; i < levels; ++i) {
    for (int j = 0; j < levels; ++j) {
      const double v = p[static_cast<std::size_t>(i) * levels + j];
      contrast += (i - j) * (i - j) * v;
      asm_ += v * v;
      homogeneity += v / (1.0 + (i - j) * (i - j));
      mu += i * v;
    }
  }
  // Symmetric matrix: row and column marginals coincide.
  double var = 0.0, cov = 0.0;
  for (int i = 0; i < levels; ++i) {
    for (int j = 0; j < levels; ++j) {
      const double v = p[static_cast<std::size_t>(i) * levels + j];
      var += (i - mu) * (i - mu) * v;
      cov += (i - mu) * (j - mu) * v;
    }
  }
  NamedFeatures f;
  f.add("glcm_contrast", contrast);
  f.add("glcm_correlation", var > 1e-12 ? cov / var : 0.0);
  f.add("glcm_asm", asm_);
  f.add("glcm_homogeneity", homogeneity);
  return f;
}

NamedFeatures glcm_features(const HuGrid& hu, std::span<const std::uint8_t> mask, int levels,
                            const std::vector<Offset>& offsets) {
  const auto q = quantize_levels(hu, mask, levels);
  const auto p = glcm_matrix(q, hu.height, hu.width, mask, levels, offsets);
  // A mask with no in-mask pairs has no texture: treat it as a flat region.
  if (std::all_of(p.begin(), p.end(), [](double v) { return v == 0.0; })) {
    std::vector<double> flat(p.size(), 0.0);
    flat[0] = 1.0;
    return glcm_from_matrix(flat, levels);
  }
  return glcm_from_matrix(p, levels);
}

std::vector<int> dependence_counts(std::span<const int> level_grid, int height, int width,
                                   std::span<const std::uint8_t> mask, int alpha) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (level_grid.size() != n || mask.size() != n) {
    throw ArgumentError("dependence_counts: grid and mask sizes must equal height*width");
  }
  std::vector<int> out(n, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * width + x;
      if (!mask[k]) continue;
      int count = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dy == 0 && dx == 0) || !in(mask, height, width, y + dy, x + dx)) continue;
          const int other = level_grid[static_cast<std::size_t>(y + dy) * width + x + dx];
          if (std::abs(other - level_grid[k]) <= alpha) ++count;
        }
      }
      out[k] = count;
    }
  }
  return out;
}

NamedFeatures gldm_features(const HuGrid& hu, std::span<const std::uint8_t> mask, int levels,
                            int alpha) {
  const auto q = quantize_levels(hu, mask, levels);
  const auto dep = dependence_counts(q, hu.height, hu.width, mask, alpha);
  constexpr int kMaxDep = 9;  // 0..8 neighbours
  std::vector<double> p(static_cast<std::size_t>(levels) * kMaxDep, 0.0);
  double nz = 0.0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    p[static_cast<std::size_t>(q[k]) * kMaxDep + dep[k]] += 1.0;
    nz += 1.0;
  }
  double dn = 0.0, gln = 0.0, de = 0.0;
  for (int d = 0; d < kMaxDep; ++d) {
    double col = 0.0;
    for (int i = 0; i < levels; ++i) col += p[static_cast<std::size_t>(i) * kMaxDep + d];
    dn += col * col;
  }
  for (int i = 0; i < levels; ++i) {
    double row = 0.0;
    for (int d = 0; d < kMaxDep; ++d) {
      const double v = p[static_cast<std::size_t>(i) * kMaxDep + d];
      row += v;
      de -= plogp(v / nz);
    }
    gln += row * row;
  }
  NamedFeatures f;
  f.add("gldm_dependence_nonuniformity", dn / nz);
  f.add("gldm_dependence_nonuniformity_normalized", dn / (nz * nz));
  f.add("gldm_gray_level_nonuniformity", gln / nz);
  f.add("gldm_dependence_entropy", de == 0.0 ? 0.0 : de);
  return f;
}

NamedFeatures radiomics_features(const HuGrid& hu, std::span<const std::uint8_t> mask) {
  NamedFeatures all = first_order_features(hu, mask);
  for (const auto& part : {glcm_features(hu, mask), gldm_features(hu, mask)}) {
    for (std::size_t k = 0; k < part.names.size(); ++k) all.add(part.names[k], part.values[k]);
  }
  return all;
}

TScore paired_t_score(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("paired_t_score: lengths differ");
  const std::size_t n = x.size();
  if (n < 2) throw ArgumentError("paired_t_score: need at least 2 pairs");
  double mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean += x[k] - y[k];
  mean /= n;
  double ss = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = x[k] - y[k] - mean;
    ss += e * e;
  }
  const double sd = std::sqrt(ss / (n - 1));
  TScore t;
  t.dof = static_cast<int>(n) - 1;
  if (sd == 0.0) {
    t.t = mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    t.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  }
  return t;
}

ChiSquare chi_square_stat(std::span<const double> x, std::span<const double> y, int bins) {
  if (bins < 1) throw ArgumentError("chi_square_stat: bins must be positive");
  if (x.size() < static_cast<std::size_t>(bins) || y.size() < static_cast<std::size_t>(bins)) {
    throw ArgumentError("chi_square_stat: need at least " + std::to_string(bins) +
                        " samples per side");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (auto s : {x, y}) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::vector<double> ox(bins, 0.0), oy(bins, 0.0);
  auto bin_of = [&](double v) {
    if (hi == lo) return 0;
    return std::min(bins - 1, static_cast<int>(std::floor((v - lo) / (hi - lo) * bins)));
  };
  for (double v : x) ox[bin_of(v)] += 1.0;
  for (double v : y) oy[bin_of(v)] += 1.0;
  ChiSquare c;
  int occupied = 0;
  for (int b = 0; b < bins; ++b) {
    const double s = ox[b] + oy[b];
    if (s <= 0.0) continue;
    ++occupied;
    c.chi2 += (ox[b] - oy[b]) * (ox[b] - oy[b]) / s;
  }
  c.dof = std::max(0, occupied - 1);
  return c;
}

void FeatureTable::add_row(std::string sample_id, Source source, const NamedFeatures& features) {
  if (names.empty()) names = features.names;
  if (features.names != names) {
    throw ArgumentError("FeatureTable: feature names of row '" + sample_id +
                        "' differ from the table header");
  }
  for (double v : features.values) {
    if (!std::isfinite(v)) throw NumericError("FeatureTable: non-finite value in row '" + sample_id + "'");
  }
  rows.push_back({std::move(sample_id), source, features.values});
}

std::vector<double> FeatureTable::column(std::size_t index) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.values.at(index));
  return out;
}

std::string FeatureTable::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "sample_id,source";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (const auto& r : rows) {
    os << r.sample_id << ',' << (r.source == Source::kPred ? "PRED" : "GT");
    for (double v : r.values) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

nlohmann::json FeatureTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"sample_id", r.sample_id},
                         {"source", r.source == Source::kPred ? "PRED" : "GT"},
                         {"values", r.values}});
  }
  return {{"names", names}, {"rows", rows_json}};
}

nlohmann::json SignificanceReport::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : features) {
    // JSON has no infinity; the sentinel is written as a string.
    const nlohmann::json t = std::isinf(f.t.t) ? nlohmann::json("inf") : nlohmann::json(f.t.t);
    feats.push_back({{"name", f.name},
                     {"t_score", t},
                     {"dof", f.t.dof},
                     {"chi_square", f.chi.chi2},
                     {"chi_square_dof", f.chi.dof}});
  }
  nlohmann::json counts = nlohmann::json::array();
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    counts.push_back({{"threshold", thresholds[k]}, {"below", below[k]}});
  }
  return {{"samples", samples}, {"features", feats}, {"counts", counts}};
}

SignificanceReport significance_report(const FeatureTable& pred, const FeatureTable& gt) {
  if (pred.names != gt.names) {
    std::set<std::string> a(pred.names.begin(), pred.names.end());
    std::set<std::string> b(gt.names.begin(), gt.names.end());
    std::string bad;
    for (const auto& n : a) {
      if (!b.count(n)) bad += (bad.empty() ? "" : ", ") + n;
    }
    for (const auto& n : b) {
      if (!a.count(n)) bad += (bad.empty() ? "" : ", ") + n;
    }
    if (bad.empty()) bad = "(same names, different order)";
    throw ArgumentError("significance_report: feature names differ: " + bad);
  }
  std::map<std::string, std::size_t> gt_index;
  for (std::size_t k = 0; k < gt.rows.size(); ++k) gt_index[gt.rows[k].sample_id] = k;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::string missing;
  for (std::size_t k = 0; k < pred.rows.size(); ++k) {
    auto it = gt_index.find(pred.rows[k].sample_id);
    if (it == gt_index.end()) {
      missing += (missing.empty() ? "" : ", ") + pred.rows[k].sample_id;
    } else {
      pairs.emplace_back(k, it->second);
    }
  }
  if (!missing.empty() || pairs.size() != gt.rows.size()) {
    throw ArgumentError("significance_report: sample ids do not match" +
                        (missing.empty() ? std::string() : ": " + missing));
  }

  SignificanceReport rep;
  rep.samples = static_cast<int>(pairs.size());
  const int bins = std::min<int>(16, static_cast<int>(pairs.size()));
  for (std::size_t f = 0; f < pred.names.size(); ++f) {
    std::vector<double> x, y;
    for (const auto& [p, g] : pairs) {
      x.push_back(pred.rows[p].values[f]);
      y.push_back(gt.rows[g].values[f]);
    }
    FeatureSignificance s{pred.names[f], paired_t_score(x, y),
                          bins > 0 ? chi_square_stat(x, y, bins) : ChiSquare{}};
    for (std::size_t k = 0; k < rep.thresholds.size(); ++k) {
      if (std::abs(s.t.t) < rep.thresholds[k]) ++rep.below[k];
    }
    rep.features.push_back(std::move(s));
  }
  std::sort(rep.features.begin(), rep.features.end(),
            [](const auto& a, const auto& b) { return a.name < b.name; });
  return rep;
}

}  // namespace filmrec::analysis
