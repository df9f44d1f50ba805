#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sween/smoothing.hpp"

namespace sween {

struct PointOutcome {
  std::size_t point_index = 0;
  std::size_t true_label = 0;
  std::optional<std::size_t> prediction;  // nullopt = ABSTAIN
  double radius = 0.0;                    // 0 unless correct
  bool correct = false;
  std::uint64_t evals = 0;
};

// Abstentions and wrong predictions get radius 0.
PointOutcome make_outcome(std::size_t point_index, std::size_t true_label,
                          const CertificationResult& cert);

struct ReportConfig {
  double sigma = 0.0;
  std::uint64_t n0 = 0;
  std::uint64_t n = 0;
  double alpha = 0.0;
};

struct RobustnessReport {
  std::vector<double> radius_grid;
  std::vector<double> aca;
  double acr = 0.0;
  std::size_t num_points = 0;
  ReportConfig config;
};

class GammaSpec {
 public:
  enum class Kind { kIndicator, kRadius, kVolume };

  // gamma(r) = 1{r >= R}: certified accuracy at R.
  static GammaSpec indicator_at(double threshold);
  // gamma(r) = r: average certified radius.
  static GammaSpec radius();
  // gamma(r) = volume of the d-ball of radius r.
  static GammaSpec volume(std::size_t dim);

  Kind kind() const { return kind_; }
  double operator()(double r) const;

 private:
  GammaSpec(Kind kind, double threshold, std::size_t dim)
      : kind_(kind), threshold_(threshold), dim_(dim) {}

  Kind kind_;
  double threshold_;
  std::size_t dim_;
};

// Mean of gamma(radius) over correct points, divided by all points.
double gamma_index(std::span<const PointOutcome> outcomes, const GammaSpec& spec);

// {0.00, 0.25, ..., 2.00}
std::vector<double> default_radius_grid();

// Grid must be ascending and start at 0.
RobustnessReport radius_accuracy_curve(std::span<const PointOutcome> outcomes,
                                       std::span<const double> grid,
                                       ReportConfig config = {});

RobustnessReport upper_envelope(std::span<const RobustnessReport> reports);
RobustnessReport average_report(std::span<const RobustnessReport> reports);

double mean_evals(std::span<const PointOutcome> outcomes);

// `radius,aca` rows followed by `ACR,<value>`.
std::string report_csv(const RobustnessReport& report);
RobustnessReport parse_report_csv(const std::string& text);

// `index,label,prediction,radius,correct,evals`; ABSTAIN printed as -1.
std::string outcomes_csv(std::span<const PointOutcome> outcomes);

struct NamedReport {
  std::string name;
  RobustnessReport report;
};

// One row per report plus UE and AVG rows: `model,<grid radii...>,ACR`.
std::string comparison_csv(std::span<const NamedReport> rows);

// Step plot of certified accuracy against radius.
std::string radius_accuracy_svg(std::span<const NamedReport> curves);

}  // namespace sween
