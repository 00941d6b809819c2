#include "gpgrad/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "gpgrad/errors.hpp"

namespace gpgrad {

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

std::string opt_field(double x) { return std::isnan(x) ? std::string() : format_g17(x); }

}  // namespace

void write_trace_csv(const std::string& path, const Trace& trace) {
  std::ofstream os = open_out(path);
  os << "n,energy,energy_error,residual,tau,gamma,mass_intermediate,identity_gap\n";
  for (const IterationRecord& r : trace.records) {
    os << r.n << ',' << format_g17(r.energy) << ',' << opt_field(r.energy_error) << ','
       << format_g17(r.residual) << ',' << format_g17(r.tau) << ',' << opt_field(r.gamma) << ','
       << format_g17(r.mass_intermediate) << ',' << opt_field(r.energy_identity_gap) << '\n';
  }
}

void write_comparison_csv(const std::string& path, const Trace& adaptive, const Trace& h1) {
  std::ofstream os = open_out(path);
  os << "n,adaptive_energy_error,h1_energy_error\n";
  const size_t rows = std::max(adaptive.records.size(), h1.records.size());
  for (size_t i = 0; i < rows; ++i) {
    os << i << ',';
    if (i < adaptive.records.size()) os << opt_field(adaptive.records[i].energy_error);
    os << ',';
    if (i < h1.records.size()) os << opt_field(h1.records[i].energy_error);
    os << '\n';
  }
}

void write_rates_csv(const std::string& path, const RatesData& data) {
  std::ofstream os = open_out(path);
  os << "# mu1_abs = " << format_g17(data.mu1_abs) << '\n';
  os << "# lambda1_over_lambda2 = " << format_g17(data.lambda1_over_lambda2) << '\n';
  os << "n,r,omega_star,h1_err\n";
  for (size_t i = 0; i < data.r.size(); ++i) {
    os << data.n[i] << ',' << format_g17(data.r[i]) << ',' << format_g17(data.omega[i]) << ','
       << format_g17(data.h1_err[i]) << '\n';
  }
}

void write_density_csv(const std::string& path, const State& u) {
  const Mesh& mesh = *u.mesh;
  std::ofstream os = open_out(path);
  os << "x,y,density\n";
  for (int id = 0; id < mesh.num_nodes(); ++id) {
    const int dof = mesh.interior_index[id];
    const double re = dof >= 0 ? u.coeffs[2 * dof] : 0.0;
    const double im = dof >= 0 ? u.coeffs[2 * dof + 1] : 0.0;
    os << format_g17(mesh.node_coords[id][0]) << ',' << format_g17(mesh.node_coords[id][1])
       << ',' << format_g17(re * re + im * im) << '\n';
  }
}

void write_summary(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& fields) {
  std::ofstream os = open_out(path);
  for (const auto& [k, v] : fields) os << k << " = " << v << '\n';
}

void write_spectral_report_text(const std::string& path, const SpectralReport& rep) {
  std::ofstream os = open_out(path);
  os << "ground state eigenvalue lambda = " << format_g17(rep.lambda) << '\n';
  os << "discrete L2 residual           = " << format_g17(rep.res_l2) << "\n\n";

  os << "spectrum of the u-linearized operator (pencil (S + beta M_u, M)):\n";
  for (size_t i = 0; i < rep.a_u_eigs.size(); ++i)
    os << "  #" << (i + 1) << "  " << format_g17(rep.a_u_eigs[i]) << '\n';
  if (rep.lambda_index_in_a_u > 0)
    os << "lambda appears at position " << rep.lambda_index_in_a_u << '\n';
  else
    os << "lambda not found among the reported eigenvalues\n";

  os << "\nspectrum of the constrained second derivative:\n";
  for (size_t i = 0; i < rep.hess_eigs.size(); ++i)
    os << "  #" << (i + 1) << "  " << format_g17(rep.hess_eigs[i]) << '\n';
  os << "first eigenvector alignment with i*u: " << format_g17(rep.first_vector_alignment)
     << '\n';

  os << "\nweighted eigenvalue problem (largest |mu| first):\n";
  for (size_t i = 0; i < rep.mu_list.size(); ++i)
    os << "  #" << (i + 1) << "  " << format_g17(rep.mu_list[i]) << '\n';
  os << "lambda1/lambda2 = " << format_g17(rep.lambda1 / rep.lambda2) << '\n';
  os << "delta1          = " << format_g17(rep.delta1) << '\n';
  os << "rho*(tau=1)     = " << format_g17(rep.rho_star_tau1) << '\n';
  os << "tau limit (mu1>0 branch) = " << format_g17(rep.tau_range.tau_pos) << '\n';
  os << "tau limit (mu1<0 branch) = " << format_g17(rep.tau_range.tau_neg) << '\n';
  os << "active branch sign       = " << rep.tau_range.active_sign << "\n\n";

  auto flag = [&](const char* name, bool ok) { os << name << ": " << (ok ? "pass" : "FAIL") << '\n'; };
  flag("mu upper bound (lambda1/lambda2)", rep.mu_upper_ok);
  flag("mu lower bound (-lambda1/(lambda1+delta1))", rep.mu_lower_ok);
  flag("lambda1 equals lambda", rep.hess_lambda1_matches);
  flag("first eigenvector is i*u", rep.first_vector_aligned);
  flag("coercivity probe", rep.coercivity_ok);
  os << "coercivity margin = " << format_g17(rep.coercivity_margin) << '\n';
}

void write_spectral_report_csv(const std::string& path, const SpectralReport& rep) {
  std::ofstream os = open_out(path);
  os << "quantity,index,value\n";
  os << "lambda,," << format_g17(rep.lambda) << '\n';
  os << "res_l2,," << format_g17(rep.res_l2) << '\n';
  for (size_t i = 0; i < rep.a_u_eigs.size(); ++i)
    os << "a_u_eig," << (i + 1) << ',' << format_g17(rep.a_u_eigs[i]) << '\n';
  os << "lambda_index_in_a_u,," << rep.lambda_index_in_a_u << '\n';
  for (size_t i = 0; i < rep.hess_eigs.size(); ++i)
    os << "hess_eig," << (i + 1) << ',' << format_g17(rep.hess_eigs[i]) << '\n';
  for (size_t i = 0; i < rep.mu_list.size(); ++i)
    os << "mu," << (i + 1) << ',' << format_g17(rep.mu_list[i]) << '\n';
  os << "delta1,," << format_g17(rep.delta1) << '\n';
  os << "rho_star_tau1,," << format_g17(rep.rho_star_tau1) << '\n';
  os << "tau_pos,," << format_g17(rep.tau_range.tau_pos) << '\n';
  os << "tau_neg,," << format_g17(rep.tau_range.tau_neg) << '\n';
  os << "mu_upper_ok,," << rep.mu_upper_ok << '\n';
  os << "mu_lower_ok,," << rep.mu_lower_ok << '\n';
  os << "hess_lambda1_matches,," << rep.hess_lambda1_matches << '\n';
  os << "first_vector_aligned,," << rep.first_vector_aligned << '\n';
  os << "coercivity_ok,," << rep.coercivity_ok << '\n';
}

void write_svg_logplot(const std::string& path, const std::string& title,
                       const std::vector<PlotSeries>& series) {
  const int width = 720, height = 440;
  const int ml = 70, mr = 20, mt = 40, mb = 50;
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();
  size_t nmax = 1;
  for (const PlotSeries& s : series) {
    nmax = std::max(nmax, s.y.size());
    for (double v : s.y) {
      if (v > 0.0 && std::isfinite(v)) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
    }
  }
  if (!std::isfinite(ymin) || ymin <= 0.0) {
    ymin = 1e-12;
    ymax = 1.0;
  }
  const double ly0 = std::floor(std::log10(ymin));
  const double ly1 = std::ceil(std::log10(ymax * 1.0000001));
  auto xpix = [&](double i) { return ml + (width - ml - mr) * (nmax > 1 ? i / double(nmax - 1) : 0.0); };
  auto ypix = [&](double v) {
    const double t = (std::log10(v) - ly0) / std::max(1.0, ly1 - ly0);
    return height - mb - (height - mt - mb) * t;
  };

  std::ofstream os = open_out(path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
     << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='15'>" << title
     << "</text>\n";
  // Axes and decade gridlines.
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << height - mb
     << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << height - mb << "' x2='" << width - mr << "' y2='"
     << height - mb << "' stroke='black'/>\n";
  for (double d = ly0; d <= ly1; d += 1.0) {
    const double y = ypix(std::pow(10.0, d));
    os << "<line x1='" << ml << "' y1='" << y << "' x2='" << width - mr << "' y2='" << y
       << "' stroke='#dddddd'/>\n";
    os << "<text x='" << ml - 8 << "' y='" << y + 4 << "' text-anchor='end' font-size='11'>1e"
       << static_cast<int>(d) << "</text>\n";
  }
  os << "<text x='" << (ml + width - mr) / 2 << "' y='" << height - 14
     << "' text-anchor='middle' font-size='12'>iteration</text>\n";
  int legend_y = mt + 10;
  for (const PlotSeries& s : series) {
    os << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
    for (size_t i = 0; i < s.y.size(); ++i) {
      if (!(s.y[i] > 0.0) || !std::isfinite(s.y[i])) continue;
      os << xpix(static_cast<double>(i)) << ',' << ypix(s.y[i]) << ' ';
    }
    os << "'/>\n";
    os << "<text x='" << width - mr - 10 << "' y='" << legend_y << "' text-anchor='end' fill='"
       << s.color << "' font-size='12'>" << s.label << "</text>\n";
    legend_y += 16;
  }
  os << "</svg>\n";
}

}  // namespace gpgrad
