#include "sween/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "sween/error.hpp"
#include "sween/io_util.hpp"
#include "sween/numerics.hpp"

namespace sween {

double box_diameter(std::span<const Bounds> bounds) {
  double sq = 0.0;
  for (const auto& b : bounds) sq += (b.hi - b.lo) * (b.hi - b.lo);
  return std::sqrt(sq);
}

namespace {

void clamp_to_box(std::vector<double>& x, std::span<const Bounds> bounds) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = std::clamp(x[i], bounds[i].lo, bounds[i].hi);
  }
}

}  // namespace

Dataset gen_gaussian_mixture(std::size_t dim, std::size_t num_classes,
                             std::size_t n, double class_separation,
                             double cluster_std, std::uint64_t seed) {
  if (dim < 1) fail(ErrorKind::kInvalidParameter, "mixture: dim must be >= 1");
  if (num_classes < 2) {
    fail(ErrorKind::kInvalidParameter, "mixture: need at least 2 classes");
  }
  if (n < num_classes) {
    fail(ErrorKind::kInvalidParameter, "mixture: n must be >= num_classes");
  }
  if (!(class_separation > 0.0) || !(cluster_std > 0.0)) {
    fail(ErrorKind::kInvalidParameter,
         "mixture: class_separation and cluster_std must be positive");
  }

  // Centers on a line (d = 1) or on a circle in the first two coordinates,
  // with neighbouring centers exactly class_separation apart.
  std::vector<std::vector<double>> centers(num_classes,
                                           std::vector<double>(dim, 0.0));
  if (dim == 1) {
    const double offset = 0.5 * class_separation * (num_classes - 1);
    for (std::size_t c = 0; c < num_classes; ++c) {
      centers[c][0] = class_separation * c - offset;
    }
  } else {
    const double m = static_cast<double>(num_classes);
    const double radius =
        class_separation / (2.0 * std::sin(std::numbers::pi / m));
    for (std::size_t c = 0; c < num_classes; ++c) {
      const double angle = 2.0 * std::numbers::pi * c / m;
      centers[c][0] = radius * std::cos(angle);
      centers[c][1] = radius * std::sin(angle);
    }
  }

  Dataset data;
  data.dim = dim;
  data.num_classes = num_classes;
  data.bounds.assign(dim, Bounds{});
  for (std::size_t i = 0; i < dim; ++i) {
    double lo = centers[0][i];
    double hi = centers[0][i];
    for (const auto& c : centers) {
      lo = std::min(lo, c[i]);
      hi = std::max(hi, c[i]);
    }
    data.bounds[i] = {lo - 4.0 * cluster_std, hi + 4.0 * cluster_std};
  }
  data.diameter = box_diameter(data.bounds);

  data.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % num_classes;
    auto x = gaussian_sample(
        {seed, static_cast<std::uint32_t>(i), 0, 0}, dim, cluster_std);
    for (std::size_t j = 0; j < dim; ++j) x[j] += centers[label][j];
    clamp_to_box(x, data.bounds);
    data.points.push_back({std::move(x), label});
  }
  data.generator = {{"kind", "mixture"},
                    {"dim", dim},
                    {"num_classes", num_classes},
                    {"n", n},
                    {"class_separation", class_separation},
                    {"cluster_std", cluster_std},
                    {"seed", seed}};
  return data;
}

Dataset gen_rings(std::size_t n, std::span<const double> radii,
                  double noise_std, std::uint64_t seed) {
  if (radii.size() < 2) {
    fail(ErrorKind::kInvalidParameter, "rings: need at least 2 radii");
  }
  for (std::size_t c = 0; c < radii.size(); ++c) {
    if (!(radii[c] > 0.0) || (c > 0 && !(radii[c] > radii[c - 1]))) {
      fail(ErrorKind::kInvalidParameter,
           "rings: radii must be positive and strictly increasing");
    }
  }
  if (!(noise_std >= 0.0)) {
    fail(ErrorKind::kInvalidParameter, "rings: noise_std must be >= 0");
  }
  if (n < radii.size()) {
    fail(ErrorKind::kInvalidParameter, "rings: n must be >= number of rings");
  }

  Dataset data;
  data.dim = 2;
  data.num_classes = radii.size();
  const double extent = radii.back() + 4.0 * noise_std;
  data.bounds.assign(2, Bounds{-extent, extent});
  data.diameter = box_diameter(data.bounds);

  data.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % radii.size();
    const NoiseStreamKey key{seed, static_cast<std::uint32_t>(i), 0, 0};
    double u = 0.0;
    uniform_sample_into(key, std::span<double>(&u, 1));
    const double angle = 2.0 * std::numbers::pi * u;
    std::vector<double> x = {radii[label] * std::cos(angle),
                             radii[label] * std::sin(angle)};
    if (noise_std > 0.0) {
      const auto noise = gaussian_sample(key, 2, noise_std);
      x[0] += noise[0];
      x[1] += noise[1];
    }
    clamp_to_box(x, data.bounds);
    data.points.push_back({std::move(x), label});
  }
  data.generator = {{"kind", "rings"},
                    {"n", n},
                    {"radii", std::vector<double>(radii.begin(), radii.end())},
                    {"noise_std", noise_std},
                    {"seed", seed}};
  return data;
}

Dataset with_points(const Dataset& like, std::vector<LabeledPoint> points) {
  Dataset out;
  out.points = std::move(points);
  out.dim = like.dim;
  out.num_classes = like.num_classes;
  out.bounds = like.bounds;
  out.diameter = like.diameter;
  out.generator = like.generator;
  return out;
}

DatasetSplit split(const Dataset& data, SplitFractions fractions,
                   std::uint64_t seed) {
  const std::array<double, 3> f = {fractions.train, fractions.weight_eval,
                                   fractions.test};
  for (double v : f) {
    if (!(v >= 0.0 && v <= 1.0)) {
      fail(ErrorKind::kInvalidParameter, "split: fractions must lie in [0, 1]");
    }
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
    fail(ErrorKind::kInvalidParameter, "split: fractions must sum to 1");
  }

  // Part sizes by largest remainder.
  const std::size_t n = data.size();
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int p = 0; p < 3; ++p) {
    const double exact = f[p] * static_cast<double>(n);
    sizes[p] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[p] = exact - static_cast<double>(sizes[p]);
    assigned += sizes[p];
  }
  while (assigned < n) {
    const auto p = static_cast<std::size_t>(
        std::max_element(remainder.begin(), remainder.end()) -
        remainder.begin());
    ++sizes[p];
    remainder[p] = -1.0;
    ++assigned;
  }

  // Stratify: shuffle within each class, give each point its within-class
  // quantile, then deal the global order into consecutive parts.
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < n; ++i) {
    by_class.at(data.points[i].label).push_back(i);
  }
  struct Ranked {
    double quantile;
    std::size_t label;
    std::size_t index;
  };
  std::vector<Ranked> order;
  order.reserve(n);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t r = 0; r < members.size(); ++r) {
      order.push_back({(r + 0.5) / static_cast<double>(members.size()), c,
                       members[r]});
    }
  }
  std::sort(order.begin(), order.end(), [](const Ranked& a, const Ranked& b) {
    if (a.quantile != b.quantile) return a.quantile < b.quantile;
    return a.label < b.label;
  });

  std::array<std::vector<std::size_t>, 3> parts;
  std::size_t cursor = 0;
  for (int p = 0; p < 3; ++p) {
    for (std::size_t k = 0; k < sizes[p]; ++k) {
      parts[p].push_back(order[cursor++].index);
    }
    std::sort(parts[p].begin(), parts[p].end());
  }
  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<LabeledPoint> pts;
    pts.reserve(idx.size());
    for (auto i : idx) pts.push_back(data.points[i]);
    return with_points(data, std::move(pts));
  };
  return {gather(parts[0]), gather(parts[1]), gather(parts[2])};
}

std::filesystem::path meta_path_for(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

void save_dataset(const Dataset& data, const std::filesystem::path& csv_path) {
  std::string csv;
  for (std::size_t j = 0; j < data.dim; ++j) {
    csv += "f" + std::to_string(j + 1) + ",";
  }
  csv += "label\n";
  for (const auto& p : data.points) {
    for (double v : p.features) {
      csv += io::format_double(v);
      csv += ',';
    }
    csv += std::to_string(p.label);
    csv += '\n';
  }
  io::write_file(csv_path, csv);

  nlohmann::json meta;
  meta["dim"] = data.dim;
  meta["num_classes"] = data.num_classes;
  auto bounds = nlohmann::json::array();
  for (const auto& b : data.bounds) bounds.push_back({b.lo, b.hi});
  meta["bounds"] = bounds;
  meta["diameter"] = data.diameter;
  meta["generator"] = data.generator;
  io::write_file(meta_path_for(csv_path), meta.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& csv_path) {
  Dataset data;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(io::read_file(meta_path_for(csv_path)));
    data.dim = meta.at("dim").get<std::size_t>();
    data.num_classes = meta.at("num_classes").get<std::size_t>();
    for (const auto& b : meta.at("bounds")) {
      data.bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    }
    data.diameter = meta.at("diameter").get<double>();
    data.generator = meta.value("generator", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "dataset metadata: " + std::string(e.what()));
  }
  if (data.bounds.size() != data.dim || data.dim == 0) {
    fail(ErrorKind::kFormat, "dataset metadata: bounds do not match dim");
  }

  std::istringstream in(io::read_file(csv_path));
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kFormat, "dataset csv: empty file");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    LabeledPoint p;
    std::size_t start = 0;
    std::vector<std::string_view> fields;
    std::string_view view(line);
    while (true) {
      const auto comma = view.find(',', start);
      fields.push_back(view.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != data.dim + 1) {
      fail(ErrorKind::kFormat, "dataset csv line " + std::to_string(line_no) +
                                   ": expected " + std::to_string(data.dim + 1) +
                                   " fields");
    }
    for (std::size_t j = 0; j < data.dim; ++j) {
      p.features.push_back(io::parse_double(fields[j], "dataset csv"));
    }
    const double label = io::parse_double(fields.back(), "dataset csv");
    if (label < 0 || label >= static_cast<double>(data.num_classes) ||
        label != std::floor(label)) {
      fail(ErrorKind::kFormat,
           "dataset csv line " + std::to_string(line_no) + ": bad label");
    }
    p.label = static_cast<std::size_t>(label);
    data.points.push_back(std::move(p));
  }
  return data;
}

}  // namespace sween
