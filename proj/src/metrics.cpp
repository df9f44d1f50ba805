#include "sween/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sween/error.hpp"
#include "sween/io_util.hpp"
#include "sween/numerics.hpp"

namespace sween {

PointOutcome make_outcome(std::size_t point_index, std::size_t true_label,
                          const CertificationResult& cert) {
  PointOutcome o;
  o.point_index = point_index;
  o.true_label = true_label;
  o.prediction = cert.prediction;
  o.correct = cert.prediction.has_value() && *cert.prediction == true_label;
  o.radius = o.correct ? cert.radius : 0.0;
  o.evals = cert.evals;
  return o;
}

GammaSpec GammaSpec::indicator_at(double threshold) {
  if (!(threshold >= 0.0)) fail(ErrorKind::kInvalidParameter, "gamma: R must be >= 0");
  return {Kind::kIndicator, threshold, 0};
}

GammaSpec GammaSpec::radius() { return {Kind::kRadius, 0.0, 0}; }

GammaSpec GammaSpec::volume(std::size_t dim) {
  if (dim < 1) fail(ErrorKind::kInvalidParameter, "gamma: d must be >= 1");
  return {Kind::kVolume, 0.0, dim};
}

double GammaSpec::operator()(double r) const {
  switch (kind_) {
    case Kind::kIndicator:
      return r >= threshold_ ? 1.0 : 0.0;
    case Kind::kRadius:
      return r;
    case Kind::kVolume: {
      if (r <= 0.0) return 0.0;
      const double d = static_cast<double>(dim_);
      return std::exp(0.5 * d * std::log(std::numbers::pi) - log_gamma(0.5 * d + 1.0) +
                      d * std::log(r));
    }
  }
  return 0.0;
}

double gamma_index(std::span<const PointOutcome> outcomes, const GammaSpec& spec) {
  if (outcomes.empty()) fail(ErrorKind::kEmptyInput, "gamma_index: no outcomes");
  double total = 0.0;
  // Misclassified and abstained points contribute nothing, so that
  // indicator_at(0) is clean accuracy rather than 1.
  for (const auto& o : outcomes) {
    if (o.correct) total += spec(o.radius);
  }
  return total / static_cast<double>(outcomes.size());
}

std::vector<double> default_radius_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 8; ++i) grid.push_back(0.25 * i);
  return grid;
}

RobustnessReport radius_accuracy_curve(std::span<const PointOutcome> outcomes,
                                       std::span<const double> grid,
                                       ReportConfig config) {
  if (outcomes.empty()) fail(ErrorKind::kEmptyInput, "radius_accuracy_curve: no outcomes");
  if (grid.empty() || grid.front() != 0.0 ||
      !std::is_sorted(grid.begin(), grid.end()) ||
      std::adjacent_find(grid.begin(), grid.end()) != grid.end()) {
    fail(ErrorKind::kInvalidParameter,
         "radius_accuracy_curve: unsorted grid (must ascend strictly from 0)");
  }
  RobustnessReport report;
  report.radius_grid.assign(grid.begin(), grid.end());
  report.num_points = outcomes.size();
  report.config = config;
  const double n = static_cast<double>(outcomes.size());
  for (double r : grid) {
    std::size_t hits = 0;
    for (const auto& o : outcomes) {
      if (o.correct && o.radius >= r) ++hits;
    }
    report.aca.push_back(static_cast<double>(hits) / n);
  }
  report.acr = gamma_index(outcomes, GammaSpec::radius());
  return report;
}

namespace {

void check_shared_grid(std::span<const RobustnessReport> reports) {
  if (reports.empty()) fail(ErrorKind::kEmptyInput, "no reports to combine");
  for (const auto& r : reports) {
    if (r.radius_grid != reports.front().radius_grid ||
        r.aca.size() != r.radius_grid.size()) {
      fail(ErrorKind::kGridMismatch, "reports do not share a radius grid");
    }
  }
}

}  // namespace

RobustnessReport upper_envelope(std::span<const RobustnessReport> reports) {
  check_shared_grid(reports);
  RobustnessReport out = reports.front();
  for (const auto& r : reports.subspan(1)) {
    for (std::size_t i = 0; i < out.aca.size(); ++i) out.aca[i] = std::max(out.aca[i], r.aca[i]);
    out.acr = std::max(out.acr, r.acr);
  }
  return out;
}

RobustnessReport average_report(std::span<const RobustnessReport> reports) {
  check_shared_grid(reports);
  RobustnessReport out = reports.front();
  const double n = static_cast<double>(reports.size());
  std::fill(out.aca.begin(), out.aca.end(), 0.0);
  out.acr = 0.0;
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < out.aca.size(); ++i) out.aca[i] += r.aca[i] / n;
    out.acr += r.acr / n;
  }
  return out;
}

double mean_evals(std::span<const PointOutcome> outcomes) {
  if (outcomes.empty()) return 0.0;
  double total = 0.0;
  for (const auto& o : outcomes) total += static_cast<double>(o.evals);
  return total / static_cast<double>(outcomes.size());
}

std::string report_csv(const RobustnessReport& report) {
  std::string out = "radius,aca\n";
  for (std::size_t i = 0; i < report.radius_grid.size(); ++i) {
    out += io::format_double(report.radius_grid[i]) + "," +
           io::format_double(report.aca[i]) + "\n";
  }
  out += "ACR," + io::format_double(report.acr) + "\n";
  return out;
}

RobustnessReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "radius,aca") {
    fail(ErrorKind::kFormat, "report csv: expected header 'radius,aca'");
  }
  RobustnessReport report;
  bool have_acr = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || have_acr) {
      fail(ErrorKind::kFormat, "report csv: malformed row '" + line + "'");
    }
    const std::string_view head(line.data(), comma);
    const std::string_view tail(line.data() + comma + 1, line.size() - comma - 1);
    if (head == "ACR") {
      report.acr = io::parse_double(tail, "report csv");
      have_acr = true;
    } else {
      report.radius_grid.push_back(io::parse_double(head, "report csv"));
      report.aca.push_back(io::parse_double(tail, "report csv"));
    }
  }
  if (!have_acr) fail(ErrorKind::kFormat, "report csv: missing ACR row");
  return report;
}

std::string outcomes_csv(std::span<const PointOutcome> outcomes) {
  std::string out = "index,label,prediction,radius,correct,evals\n";
  for (const auto& o : outcomes) {
    out += std::to_string(o.point_index) + "," + std::to_string(o.true_label) + "," +
           (o.prediction ? std::to_string(*o.prediction) : std::string("-1")) + "," +
           io::format_double(o.radius) + "," + (o.correct ? "1" : "0") + "," +
           std::to_string(o.evals) + "\n";
  }
  return out;
}

std::string comparison_csv(std::span<const NamedReport> rows) {
  if (rows.empty()) fail(ErrorKind::kEmptyInput, "comparison: no reports");
  std::vector<RobustnessReport> reports;
  for (const auto& r : rows) reports.push_back(r.report);
  const RobustnessReport ue = upper_envelope(reports);
  const RobustnessReport avg = average_report(reports);

  std::string out = "model";
  for (double r : ue.radius_grid) out += "," + io::format_double(r);
  out += ",ACR\n";
  auto emit = [&out](const std::string& name, const RobustnessReport& r) {
    out += name;
    for (double a : r.aca) out += "," + io::format_double(a);
    out += "," + io::format_double(r.acr) + "\n";
  };
  for (const auto& r : rows) emit(r.name, r.report);
  emit("UE", ue);
  emit("AVG", avg);
  return out;
}

std::string radius_accuracy_svg(std::span<const NamedReport> curves) {
  constexpr double kWidth = 640, kHeight = 420;
  constexpr double kLeft = 60, kRight = 20, kTop = 20, kBottom = 50;
  constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                     "#ff7f0e", "#9467bd", "#8c564b"};
  double max_r = 0.0;
  for (const auto& c : curves) {
    if (!c.report.radius_grid.empty()) {
      max_r = std::max(max_r, c.report.radius_grid.back());
    }
  }
  if (max_r <= 0.0) max_r = 1.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double r) { return kLeft + plot_w * r / max_r; };
  auto py = [&](double a) { return kTop + plot_h * (1.0 - a); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << px(max_r)
      << "\" y2=\"" << py(0) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << kLeft
      << "\" y2=\"" << py(1) << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">radius</text>\n";
  svg << "<text x=\"15\" y=\"" << kTop + plot_h / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << kTop + plot_h / 2
      << ")\">accuracy</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& rep = curves[i].report;
    const char* color = kColors[i % std::size(kColors)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t g = 0; g < rep.radius_grid.size(); ++g) {
      const double next =
          g + 1 < rep.radius_grid.size() ? rep.radius_grid[g + 1] : max_r;
      svg << px(rep.radius_grid[g]) << "," << py(rep.aca[g]) << " " << px(next) << ","
          << py(rep.aca[g]) << " ";
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << kWidth - kRight - 150 << "\" y=\"" << kTop + 18 * (i + 1)
        << "\" fill=\"" << color << "\">" << curves[i].name << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace sween
