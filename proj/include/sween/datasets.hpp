#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace sween {

// Class labels are 0-based throughout: label in [0, num_classes).
struct LabeledPoint {
  std::vector<double> features;
  std::size_t label = 0;

  friend bool operator==(const LabeledPoint&, const LabeledPoint&) = default;
};

struct Bounds {
  double lo = 0.0;
  double hi = 0.0;

  friend bool operator==(const Bounds&, const Bounds&) = default;
};

struct Dataset {
  std::vector<LabeledPoint> points;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<Bounds> bounds;
  // l2 length of the bounding-box diagonal.
  double diameter = 0.0;
  // Free-form generator description carried into the metadata sidecar.
  nlohmann::json generator = nlohmann::json::object();

  std::size_t size() const { return points.size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

double box_diameter(std::span<const Bounds> bounds);

Dataset gen_gaussian_mixture(std::size_t dim, std::size_t num_classes,
                             std::size_t n, double class_separation,
                             double cluster_std, std::uint64_t seed);

// Two-dimensional concentric rings; class c lives on radius radii[c].
Dataset gen_rings(std::size_t n, std::span<const double> radii,
                  double noise_std, std::uint64_t seed);

struct SplitFractions {
  double train = 0.7;
  double weight_eval = 0.1;
  double test = 0.2;
};

struct DatasetSplit {
  Dataset train;
  Dataset weight_eval;
  Dataset test;
};

// Stratified by class; each part inherits dim, classes, bounds and diameter.
DatasetSplit split(const Dataset& data, SplitFractions fractions,
                   std::uint64_t seed);

// Dataset with the same metadata holding only `points`.
Dataset with_points(const Dataset& like, std::vector<LabeledPoint> points);

// CSV with header `f1,...,fd,label` plus `<stem>.meta.json`.
void save_dataset(const Dataset& data, const std::filesystem::path& csv_path);
Dataset load_dataset(const std::filesystem::path& csv_path);

std::filesystem::path meta_path_for(const std::filesystem::path& csv_path);

}  // namespace sween
