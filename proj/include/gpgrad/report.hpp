#pragma once

#include <map>
#include <string>
#include <vector>

#include "gpgrad/solver.hpp"
#include "gpgrad/spectral.hpp"

namespace gpgrad {

/// Round-trip decimal formatting (17 significant digits).
std::string format_g17(double x);

void write_trace_csv(const std::string& path, const Trace& trace);

void write_comparison_csv(const std::string& path, const Trace& adaptive, const Trace& h1);

struct RatesData {
  std::vector<int> n;
  std::vector<double> r;
  std::vector<double> omega;
  std::vector<double> h1_err;
  double mu1_abs = 0.0;
  double lambda1_over_lambda2 = 0.0;
};

void write_rates_csv(const std::string& path, const RatesData& data);

void write_density_csv(const std::string& path, const State& u);

void write_summary(const std::string& path, const std::vector<std::pair<std::string, std::string>>& fields);

void write_spectral_report_text(const std::string& path, const SpectralReport& rep);
void write_spectral_report_csv(const std::string& path, const SpectralReport& rep);

/// Minimal self-contained SVG line plot (log-y) of one or more series.
struct PlotSeries {
  std::string label;
  std::vector<double> y;  // plotted against the index
  std::string color = "#1f6fb2";
};

void write_svg_logplot(const std::string& path, const std::string& title,
                       const std::vector<PlotSeries>& series);

}  // namespace gpgrad
