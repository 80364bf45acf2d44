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

#ifndef EQGAN_REPORT_HPP
#define EQGAN_REPORT_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

// Post-hoc figures built from run directories. Every figure is an SVG file
// (PNG for image panels) next to a CSV file holding the plotted numbers.
namespace eqgan {

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::int64_t> counts;

  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  double bin_left(std::size_t i) const { return lo + bin_width() * static_cast<double>(i); }
};

// Equal-width bins over [lo, hi]; the last bin is closed. Values outside are dropped.
Histogram make_histogram(std::span<const double> values, double lo, double hi, int bins);
// Range spanning every finite value of all series.
std::pair<double, double> common_range(std::initializer_list<std::span<const double>> series);

// 8-bit RGB image, row-major.
void write_png(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb);

struct ReportOptions {
  std::vector<std::filesystem::path> runs;  // run directories or manifest files
  std::filesystem::path out_dir;
  double percentile = 10.0;  // tail share for the improvement histograms
  int bins = 30;
  int panel_samples = 8;
};

struct ReportResult {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> warnings;
  int attempted = 0;
  int succeeded = 0;
};

ReportResult generate_report(const ReportOptions& options);

// Sample indices of the `percentile` percent largest gains (after - before) and
// largest losses, each sorted by index.
struct ImprovementSplit {
  std::vector<std::int64_t> improved;
  std::vector<std::int64_t> worsened;
};
ImprovementSplit improvement_split(std::span<const double> before, std::span<const double> after, double percentile);

}  // namespace eqgan

#endif  // EQGAN_REPORT_HPP
