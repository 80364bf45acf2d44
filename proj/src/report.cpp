/* Copyright 2026 The eqgan Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
        limitations under the License.
==============================================================================*/

#include "eqgan/report.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "eqgan/datasets.hpp"
#include "eqgan/equalizer.hpp"
#include "eqgan/metrics.hpp"
#include "eqgan/runspec.hpp"
#include "eqgan/trainer.hpp"

namespace fs = std::filesystem;

namespace eqgan {

Histogram make_histogram(std::span<const double> values, double lo, double hi, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h{lo, hi, std::vector<std::int64_t>(static_cast<std::size_t>(bins), 0)};
  for (double v : values) {
    if (!std::isfinite(v) || v < lo || v > hi) continue;
    auto b = static_cast<std::int64_t>((v - lo) / h.bin_width());
    b = std::clamp<std::int64_t>(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

std::pair<double, double> common_range(std::initializer_list<std::span<const double>> series) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    for (double v : s) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  return {lo, hi};
}

void write_png(const fs::path& path, int width, int height, std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    throw std::invalid_argument("rgb buffer does not match image size");
  }
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (fp == nullptr) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

ImprovementSplit improvement_split(std::span<const double> before, std::span<const double> after, double percentile) {
  if (before.size() != after.size()) throw std::invalid_argument("PSNR vectors differ in length");
  const std::size_t n = before.size();
  const auto take = std::min<std::size_t>(
      n, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * percentile / 100.0))));
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto delta = [&](std::int64_t i) { return after[static_cast<std::size_t>(i)] - before[static_cast<std::size_t>(i)]; };
  ImprovementSplit out;
  if (n == 0) return out;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return delta(a) > delta(b); });
  out.improved.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return delta(a) < delta(b); });
  out.worsened.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(out.improved.begin(), out.improved.end());
  std::sort(out.worsened.begin(), out.worsened.end());
  return out;
}

namespace {

// ---- SVG ---------------------------------------------------------------------------------

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
  const double span = hi - lo;
  if (!(span > 0)) return {lo};
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) ticks.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  return ticks;
}

class SvgPlot {
 public:
  SvgPlot(std::string title, std::string xlabel, std::string ylabel, double x0, double x1, double y0, double y1)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {
    if (!(x1 > x0)) {
      x0 -= 0.5;
      x1 += 0.5;
    }
    if (!(y1 > y0)) {
      y0 -= 0.5;
      y1 += 0.5;
    }
    x0_ = x0, x1_ = x1, y0_ = y0, y1_ = y1;
  }

  double px(double x) const { return kLeft + (x - x0_) / (x1_ - x0_) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0_) / (y1_ - y0_) * (kHeight - kTop - kBottom); }

  void rect(double xa, double xb, double ya, double yb, const std::string& color, double opacity) {
    const double left = px(std::min(xa, xb)), right = px(std::max(xa, xb));
    const double top = py(std::max(ya, yb)), bottom = py(std::min(ya, yb));
    body_ << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(right - left) << "\" height=\""
          << fmt(bottom - top) << "\" fill=\"" << color << "\" fill-opacity=\"" << opacity << "\"/>\n";
  }

  void point(double x, double y, const std::string& color, double r = 2.0) {
    body_ << "<circle cx=\"" << fmt(px(x)) << "\" cy=\"" << fmt(py(y)) << "\" r=\"" << r << "\" fill=\"" << color
          << "\" fill-opacity=\"0.6\"/>\n";
  }

  void polyline(std::span<const double> xs, std::span<const double> ys, const std::string& color) {
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) body_ << fmt(px(xs[i])) << ',' << fmt(py(ys[i])) << ' ';
    body_ << "\"/>\n";
  }

  void label(double x, double y, const std::string& text) {
    body_ << "<text x=\"" << fmt(px(x) + 4) << "\" y=\"" << fmt(py(y) - 4) << "\" font-size=\"11\">" << escape(text)
          << "</text>\n";
  }

  void legend(const std::string& text, const std::string& color) { legend_.emplace_back(text, color); }

  // Category labels replace numeric x ticks.
  void categories(std::vector<std::pair<double, std::string>> cats) { categories_ = std::move(cats); }

  void save(const fs::path& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" font-family=\"sans-serif\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title_)
       << "</text>\n";
    const double bx = kLeft, by = kHeight - kBottom;
    os << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << by
       << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << bx << "\" y2=\"" << kTop << "\" stroke=\"black\"/>\n";
    if (categories_.empty()) {
      for (double t : nice_ticks(x0_, x1_)) {
        os << "<text x=\"" << fmt(px(t)) << "\" y=\"" << by + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
           << fmt(t) << "</text>\n";
      }
    } else {
      for (const auto& [x, name] : categories_) {
        os << "<text x=\"" << fmt(px(x)) << "\" y=\"" << by + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
           << escape(name) << "</text>\n";
      }
    }
    for (double t : nice_ticks(y0_, y1_)) {
      os << "<text x=\"" << bx - 6 << "\" y=\"" << fmt(py(t) + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
         << fmt(t) << "</text>\n";
    }
    os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 8
       << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(xlabel_) << "</text>\n"
       << "<text transform=\"translate(16," << (kTop + kHeight - kBottom) / 2
       << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" << escape(ylabel_) << "</text>\n";
    os << body_.str();
    for (std::size_t i = 0; i < legend_.size(); ++i) {
      const double y = kTop + 8 + 16 * static_cast<double>(i);
      os << "<rect x=\"" << kWidth - kRight - 150 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
         << legend_[i].second << "\"/>\n"
         << "<text x=\"" << kWidth - kRight - 135 << "\" y=\"" << y << "\" font-size=\"11\">"
         << escape(legend_[i].first) << "</text>\n";
    }
    os << "</svg>\n";
  }

 private:
  static constexpr int kWidth = 640, kHeight = 420, kLeft = 64, kRight = 20, kTop = 34, kBottom = 48;
  std::string title_, xlabel_, ylabel_;
  double x0_ = 0, x1_ = 1, y0_ = 0, y1_ = 1;
  std::ostringstream body_;
  std::vector<std::pair<std::string, std::string>> legend_;
  std::vector<std::pair<double, std::string>> categories_;
};

// ---- CSV ---------------------------------------------------------------------------------

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::string& header) : os_(path) {
    if (!os_) throw std::runtime_error("cannot write " + path.string());
    os_ << header << '\n' << std::setprecision(17);
  }
  template <typename... T>
  void row(const T&... values) {
    bool first = true;
    ((os_ << (first ? "" : ",") << values, first = false), ...);
    os_ << '\n';
  }

 private:
  std::ofstream os_;
};

// Reads a CSV with a header row into named columns of strings.
std::map<std::string, std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing artifact " + path.string());
  std::string line;
  std::vector<std::string> names;
  std::map<std::string, std::vector<std::string>> cols;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (names.empty()) {
      names = cells;
      continue;
    }
    for (std::size_t i = 0; i < names.size() && i < cells.size(); ++i) cols[names[i]].push_back(cells[i]);
  }
  return cols;
}

std::vector<double> numeric(const std::vector<std::string>& cells) {
  std::vector<double> out;
  out.reserve(cells.size());
  for (const auto& c : cells) out.push_back(std::stod(c));
  return out;
}

std::vector<double> column(const std::map<std::string, std::vector<std::string>>& csv, const std::string& name,
                           const fs::path& path) {
  const auto it = csv.find(name);
  if (it == csv.end()) throw std::runtime_error(path.string() + " has no column '" + name + "'");
  return numeric(it->second);
}

// ---- runs ------------------------------------------------------------------------------

struct RunInfo {
  fs::path dir;
  fs::path manifest_path;
  std::string label;
  std::string variant;
  RunManifest manifest;
};

RunInfo open_run(const fs::path& p) {
  RunInfo r;
  if (fs::is_directory(p)) {
    r.dir = p;
    r.manifest_path = p / "manifest.json";
  } else {
    r.dir = p.parent_path();
    r.manifest_path = p;
  }
  if (!fs::exists(r.manifest_path)) throw std::runtime_error("missing manifest " + r.manifest_path.string());
  r.manifest = RunManifest::load(r.manifest_path);
  r.variant = r.manifest.config.value("variant", std::string("run"));
  r.label = r.variant;
  return r;
}

fs::path first_existing(std::initializer_list<fs::path> paths) {
  for (const auto& p : paths) {
    if (fs::exists(p)) return p;
  }
  return *paths.begin();
}

fs::path likelihood_path(const RunInfo& r) {
  return first_existing({r.dir / "score" / "likelihood.csv", r.dir / "phase2_scores" / "likelihood.csv"});
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

struct Context {
  const ReportOptions& options;
  ReportResult& result;

  // Runs one figure; failures become warnings.
  void attempt(const std::string& name, const std::function<std::vector<fs::path>()>& fn) {
    ++result.attempted;
    try {
      auto files = fn();
      result.written.insert(result.written.end(), files.begin(), files.end());
      ++result.succeeded;
    } catch (const std::exception& e) {
      result.warnings.push_back(name + " skipped: " + e.what());
    }
  }
  fs::path out(const std::string& file) const { return options.out_dir / file; }
};

// Overlaid density histograms sharing one set of bins.
void density_plot(const fs::path& svg, const fs::path& csv, const std::string& title, const std::string& xlabel,
                  const std::vector<std::pair<std::string, std::vector<double>>>& series, int bins) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    const auto [a, b] = common_range({s.second});
    lo = std::min(lo, a);
    hi = std::max(hi, b);
  }
  std::vector<Histogram> hists;
  std::vector<std::vector<double>> dens;
  double ymax = 0.0;
  for (const auto& s : series) {
    hists.push_back(make_histogram(s.second, lo, hi, bins));
    std::vector<double> d(hists.back().counts.size());
    const double total = std::max<double>(1.0, static_cast<double>(s.second.size()));
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = static_cast<double>(hists.back().counts[i]) / (total * hists.back().bin_width());
      ymax = std::max(ymax, d[i]);
    }
    dens.push_back(std::move(d));
  }
  std::string header = "bin_left,bin_right";
  for (const auto& s : series) header += "," + slug(s.first) + "_count," + slug(s.first) + "_density";
  CsvWriter w(csv, header);
  const Histogram& h0 = hists.front();
  for (std::size_t i = 0; i < h0.counts.size(); ++i) {
    std::ostringstream row;
    row << std::setprecision(17) << h0.bin_left(i) << ',' << h0.bin_left(i + 1);
    for (std::size_t s = 0; s < hists.size(); ++s) row << ',' << hists[s].counts[i] << ',' << dens[s][i];
    w.row(row.str());
  }
  SvgPlot plot(title, xlabel, "density", h0.lo, h0.hi, 0.0, ymax * 1.05);
  for (std::size_t s = 0; s < hists.size(); ++s) {
    const std::string color = kPalette[s % std::size(kPalette)];
    for (std::size_t i = 0; i < h0.counts.size(); ++i) {
      if (dens[s][i] > 0) plot.rect(h0.bin_left(i), h0.bin_left(i + 1), 0.0, dens[s][i], color, 0.45);
    }
    plot.legend(series[s].first, color);
  }
  plot.save(svg);
}

std::vector<fs::path> figure_norms(const Context& ctx, const RunInfo& run) {
  const fs::path src = run.dir / "eval" / "norms.csv";
  const auto csv = read_csv(src);
  const auto source = csv.count("source") ? csv.at("source") : std::vector<std::string>{};
  const auto norms = column(csv, "norm", src);
  std::vector<double> enc, prior;
  for (std::size_t i = 0; i < norms.size(); ++i) (source[i] == "encoded" ? enc : prior).push_back(norms[i]);
  if (enc.empty() || prior.empty()) throw std::runtime_error(src.string() + " lacks encoded or prior norms");
  const std::string stem = "fig1_norms_" + slug(run.label);
  density_plot(ctx.out(stem + ".svg"), ctx.out(stem + ".csv"), "Encoded vs prior norms (" + run.label + ")", "norm",
               {{"encoded", enc}, {"prior", prior}}, ctx.options.bins);
  return {ctx.out(stem + ".svg"), ctx.out(stem + ".csv")};
}

std::vector<fs::path> figure_loglik(const Context& ctx, const RunInfo& run) {
  const fs::path src = likelihood_path(run);
  const auto ll = column(read_csv(src), "log10_marginal", src);
  const auto [lo, hi] = common_range({ll});
  const Histogram h = make_histogram(ll, lo, hi, ctx.options.bins);
  const std::string stem = "fig3_loglik_" + slug(run.label);
  CsvWriter w(ctx.out(stem + ".csv"), "bin_left,bin_right,count");
  double ymax = 0;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    w.row(h.bin_left(i), h.bin_left(i + 1), h.counts[i]);
    ymax = std::max(ymax, static_cast<double>(h.counts[i]));
  }
  SvgPlot plot("log10 likelihood of reconstructions (" + run.label + ")", "log10 p(G(E(x)))", "count", h.lo, h.hi,
               0.0, ymax * 1.05);
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    if (h.counts[i] > 0) plot.rect(h.bin_left(i), h.bin_left(i + 1), 0, static_cast<double>(h.counts[i]), kPalette[0], 0.8);
  }
  plot.save(ctx.out(stem + ".svg"));
  return {ctx.out(stem + ".svg"), ctx.out(stem + ".csv")};
}

std::vector<fs::path> figure_psnr_vs_loglik(const Context& ctx, const RunInfo& run) {
  const fs::path src = likelihood_path(run);
  const auto csv = read_csv(src);
  const auto idx = column(csv, "sample_index", src);
  const auto ll = column(csv, "log10_marginal", src);
  auto psnr = column(csv, "psnr", src);
  for (auto& v : psnr) v = cap_psnr(v);
  const std::string stem = "fig4_psnr_vs_loglik_" + slug(run.label);
  CsvWriter w(ctx.out(stem + ".csv"), "sample_index,log10_marginal,psnr");
  for (std::size_t i = 0; i < ll.size(); ++i) w.row(static_cast<std::int64_t>(idx[i]), ll[i], psnr[i]);
  const auto [x0, x1] = common_range({ll});
  const auto [y0, y1] = common_range({psnr});
  SvgPlot plot("PSNR vs log10 likelihood (" + run.label + ")", "log10 p(G(E(x)))", "PSNR (dB)", x0, x1, y0, y1);
  for (std::size_t i = 0; i < ll.size(); ++i) plot.point(ll[i], psnr[i], kPalette[0]);
  plot.save(ctx.out(stem + ".svg"));
  return {ctx.out(stem + ".svg"), ctx.out(stem + ".csv")};
}

std::vector<fs::path> figure_sampling_curves(const Context& ctx) {
  constexpr std::int64_t n = 100;
  const double dists[] = {2, 4, 8, 16};
  std::vector<std::int64_t> ranks(n);
  std::iota(ranks.begin(), ranks.end(), 1);
  std::vector<std::vector<double>> curves;
  for (double d : dists) {
    SamplerConfig cfg;
    cfg.mode = SamplerMode::static_ll;
    cfg.lambda_perc = 1.0;
    cfg.lambda_dist = d;
    curves.push_back(sampling_distribution(ranks, cfg));
  }
  CsvWriter w(ctx.out("fig5_sampling_curves.csv"), "rank,lambda_dist_2,lambda_dist_4,lambda_dist_8,lambda_dist_16");
  double ymax = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    w.row(k + 1, curves[0][i], curves[1][i], curves[2][i], curves[3][i]);
    for (const auto& c : curves) ymax = std::max(ymax, c[i]);
  }
  SvgPlot plot("Sampling probability by rank (N = 100, lambda_perc = 1)", "rank k", "probability", 1, n, 0, ymax * 1.05);
  std::vector<double> xs(n);
  std::iota(xs.begin(), xs.end(), 1.0);
  for (std::size_t c = 0; c < curves.size(); ++c) {
    plot.polyline(xs, curves[c], kPalette[c]);
    plot.legend("lambda_dist = " + fmt(dists[c]), kPalette[c]);
  }
  plot.save(ctx.out("fig5_sampling_curves.svg"));
  return {ctx.out("fig5_sampling_curves.svg"), ctx.out("fig5_sampling_curves.csv")};
}

std::vector<std::pair<std::string, MetricsReport>> load_metrics(const std::vector<RunInfo>& runs) {
  std::vector<std::pair<std::string, MetricsReport>> out;
  for (const auto& r : runs) {
    const fs::path p = r.dir / "eval" / "metrics.json";
    if (!fs::exists(p)) continue;
    std::ifstream is(p);
    out.emplace_back(r.label, MetricsReport::from_json(nlohmann::json::parse(is)));
  }
  if (out.size() < 2) throw std::runtime_error("needs evaluation metrics for at least two runs");
  return out;
}

std::vector<fs::path> figure_fid(const Context& ctx, const std::vector<RunInfo>& runs) {
  const auto metrics = load_metrics(runs);
  CsvWriter w(ctx.out("fig6_fid.csv"), "model,fid");
  double ymax = 0;
  for (const auto& [label, m] : metrics) {
    w.row(label, m.fid);
    ymax = std::max(ymax, m.fid);
  }
  SvgPlot plot("FID by model", "model", "FID", -0.5, static_cast<double>(metrics.size()) - 0.5, 0, ymax * 1.1);
  std::vector<std::pair<double, std::string>> cats;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const double x = static_cast<double>(i);
    plot.rect(x - 0.35, x + 0.35, 0, metrics[i].second.fid, kPalette[i % std::size(kPalette)], 0.85);
    cats.emplace_back(x, metrics[i].first);
  }
  plot.categories(std::move(cats));
  plot.save(ctx.out("fig6_fid.svg"));
  return {ctx.out("fig6_fid.svg"), ctx.out("fig6_fid.csv")};
}

std::vector<fs::path> figure_pr(const Context& ctx, const std::vector<RunInfo>& runs) {
  const auto metrics = load_metrics(runs);
  CsvWriter w(ctx.out("fig7_precision_recall.csv"), "model,precision,recall");
  SvgPlot plot("Precision and recall", "recall", "precision", 0, 1, 0, 1);
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto& m = metrics[i].second;
    w.row(metrics[i].first, m.precision, m.recall);
    plot.point(m.recall, m.precision, kPalette[i % std::size(kPalette)], 5.0);
    plot.label(m.recall, m.precision, metrics[i].first);
  }
  plot.save(ctx.out("fig7_precision_recall.svg"));
  return {ctx.out("fig7_precision_recall.svg"), ctx.out("fig7_precision_recall.csv")};
}

std::vector<fs::path> figure_improvement(const Context& ctx, const RunInfo& a, const RunInfo& b) {
  const fs::path pa = a.dir / "eval" / "psnr.csv", pb = b.dir / "eval" / "psnr.csv";
  const auto before = column(read_csv(pa), "psnr", pa);
  const auto after = column(read_csv(pb), "psnr", pb);
  if (before.size() != after.size()) throw std::runtime_error("runs were evaluated on splits of different size");
  const auto split = improvement_split(before, after, ctx.options.percentile);
  {
    CsvWriter w(ctx.out("fig9_selected.csv"), "group,sample_index,psnr_" + slug(a.label) + ",psnr_" + slug(b.label) + ",delta");
    for (auto i : split.improved) {
      const auto u = static_cast<std::size_t>(i);
      w.row("improved", i, before[u], after[u], after[u] - before[u]);
    }
    for (auto i : split.worsened) {
      const auto u = static_cast<std::size_t>(i);
      w.row("worsened", i, before[u], after[u], after[u] - before[u]);
    }
  }
  std::vector<fs::path> files{ctx.out("fig9_selected.csv")};
  for (const auto& [group, members] : {std::pair{std::string("improved"), split.improved},
                                       std::pair{std::string("worsened"), split.worsened}}) {
    std::vector<double> va, vb;
    for (auto i : members) {
      va.push_back(before[static_cast<std::size_t>(i)]);
      vb.push_back(after[static_cast<std::size_t>(i)]);
    }
    const std::string stem = "fig9_psnr_" + group;
    density_plot(ctx.out(stem + ".svg"), ctx.out(stem + ".csv"),
                 "PSNR of the " + fmt(ctx.options.percentile) + "% most " + group + " samples", "PSNR (dB)",
                 {{a.label, va}, {b.label, vb}}, ctx.options.bins);
    files.push_back(ctx.out(stem + ".svg"));
    files.push_back(ctx.out(stem + ".csv"));
  }
  return files;
}

std::vector<fs::path> figure_panels(const Context& ctx, const std::vector<RunInfo>& runs) {
  const fs::path spec_path = runs.front().dir / "spec.txt";
  if (!fs::exists(spec_path)) throw std::runtime_error("missing artifact " + spec_path.string());
  const RunSpec spec = load_run_spec(spec_path);
  const DatasetSplit data = load_data(spec);
  const SampleCollection& split = data.split(spec.eval.split);
  const std::int64_t n = std::min<std::int64_t>(ctx.options.panel_samples, split.size());
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor x = split.batch(idx);

  std::vector<Tensor> rows{x};
  std::vector<std::vector<double>> psnrs;
  for (const auto& r : runs) {
    if (r.manifest.dataset_fingerprint != data.fingerprint()) {
      throw std::runtime_error("run " + r.dir.string() + " was trained on different data");
    }
    ModelTriple models = load_models(r.manifest);
    const Tensor z = models.encoder.forward(nn::Var::constant(x), Mode::eval).value();
    rows.push_back(models.generator.forward(nn::Var::constant(z), Mode::eval).value());
    psnrs.push_back(batch_psnr(x, rows.back(), data.pixel_max));
  }
  {
    std::string header = "sample_index";
    for (const auto& r : runs) header += ",psnr_" + slug(r.label);
    CsvWriter w(ctx.out("fig10_reconstructions.csv"), header);
    for (std::int64_t i = 0; i < n; ++i) {
      std::ostringstream row;
      row << std::setprecision(17) << i;
      for (const auto& p : psnrs) row << ',' << cap_psnr(p[static_cast<std::size_t>(i)]);
      w.row(row.str());
    }
  }
  const auto& shape = data.image_shape;
  const int c = static_cast<int>(shape[0]), h = static_cast<int>(shape[1]), wd = static_cast<int>(shape[2]);
  const int scale = std::max(1, 64 / std::max(h, wd));
  const int gap = 2;
  const int tile_w = wd * scale, tile_h = h * scale;
  const int width = static_cast<int>(n) * (tile_w + gap) + gap;
  const int height = static_cast<int>(rows.size()) * (tile_h + gap) + gap;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3, 255);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::int64_t s = 0; s < n; ++s) {
      const auto sample = rows[r].row(s);
      for (int yy = 0; yy < tile_h; ++yy) {
        for (int xx = 0; xx < tile_w; ++xx) {
          const int py = gap + static_cast<int>(r) * (tile_h + gap) + yy;
          const int px = gap + static_cast<int>(s) * (tile_w + gap) + xx;
          for (int ch = 0; ch < 3; ++ch) {
            const int src_ch = c == 1 ? 0 : ch;
            const double v = sample[static_cast<std::size_t>((src_ch * h + yy / scale) * wd + xx / scale)];
            const double pix = denormalize_value(v, data.pixel_max) * 255.0 / data.pixel_max;
            rgb[(static_cast<std::size_t>(py) * width + px) * 3 + ch] =
                static_cast<std::uint8_t>(std::clamp(std::lround(pix), 0L, 255L));
          }
        }
      }
    }
  }
  write_png(ctx.out("fig10_reconstructions.png"), width, height, rgb);
  return {ctx.out("fig10_reconstructions.png"), ctx.out("fig10_reconstructions.csv")};
}

}  // namespace

ReportResult generate_report(const ReportOptions& options) {
  ReportResult result;
  if (options.runs.empty()) throw ConfigError("report needs at least one run");
  if (!(options.percentile > 0 && options.percentile <= 50)) throw ConfigError("percentile must be in (0, 50]");
  fs::create_directories(options.out_dir);
  Context ctx{options, result};

  std::vector<RunInfo> runs;
  for (const auto& p : options.runs) {
    try {
      runs.push_back(open_run(p));
    } catch (const std::exception& e) {
      ++result.attempted;
      result.warnings.push_back(std::string("run skipped: ") + e.what());
    }
  }
  std::map<std::string, int> seen;
  for (const auto& r : runs) ++seen[r.label];
  for (auto& r : runs) {
    if (seen[r.label] > 1) r.label += "_" + r.dir.filename().string();
  }

  for (const auto& r : runs) {
    ctx.attempt("figure 1 (" + r.label + ")", [&] { return figure_norms(ctx, r); });
    ctx.attempt("figure 3 (" + r.label + ")", [&] { return figure_loglik(ctx, r); });
    ctx.attempt("figure 4 (" + r.label + ")", [&] { return figure_psnr_vs_loglik(ctx, r); });
  }
  if (runs.size() >= 2) {
    ctx.attempt("figure 5", [&] { return figure_sampling_curves(ctx); });
    ctx.attempt("figure 6", [&] { return figure_fid(ctx, runs); });
    ctx.attempt("figure 7", [&] { return figure_pr(ctx, runs); });
    ctx.attempt("figure 9", [&] { return figure_improvement(ctx, runs[0], runs[1]); });
    ctx.attempt("figure 10", [&] { return figure_panels(ctx, runs); });
  }
  return result;
}

}  // namespace eqgan
