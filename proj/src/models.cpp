#include "sween/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "json.hpp"
#include "sween/base64.hpp"
#include "sween/error.hpp"
#include "sween/io_util.hpp"
#include "sween/numerics.hpp"

namespace sween {

std::vector<std::size_t> MlpParams::arch() const {
  std::vector<std::size_t> a;
  if (layers.empty()) return a;
  a.push_back(layers.front().in_dim);
  for (const auto& l : layers) a.push_back(l.out_dim);
  return a;
}

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

MlpParams make_mlp(std::span<const std::size_t> arch) {
  if (arch.size() < 2) {
    fail(ErrorKind::kInvalidParameter, "arch needs at least input and output sizes");
  }
  MlpParams model;
  for (std::size_t l = 0; l + 1 < arch.size(); ++l) {
    if (arch[l] == 0 || arch[l + 1] == 0) {
      fail(ErrorKind::kInvalidParameter, "arch sizes must be positive");
    }
    DenseLayer layer;
    layer.in_dim = arch[l];
    layer.out_dim = arch[l + 1];
    layer.weights.assign(layer.in_dim * layer.out_dim, 0.0);
    layer.bias.assign(layer.out_dim, 0.0);
    layer.activation =
        (l + 2 == arch.size()) ? Activation::kIdentity : Activation::kRelu;
    model.layers.push_back(std::move(layer));
  }
  return model;
}

void validate(const MlpParams& model) {
  if (model.layers.empty()) fail(ErrorKind::kInvalidParameter, "model has no layers");
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    if (layer.in_dim == 0 || layer.out_dim == 0 ||
        layer.weights.size() != layer.in_dim * layer.out_dim ||
        layer.bias.size() != layer.out_dim) {
      fail(ErrorKind::kInvalidParameter,
           "layer " + std::to_string(l) + " has inconsistent shapes");
    }
    if (l > 0 && model.layers[l - 1].out_dim != layer.in_dim) {
      fail(ErrorKind::kInvalidParameter,
           "layer " + std::to_string(l) + " input does not chain");
    }
  }
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

namespace {

void dense_apply(const DenseLayer& layer, std::span<const double> in,
                 std::span<double> out) {
  const double* w = layer.weights.data();
  for (std::size_t o = 0; o < layer.out_dim; ++o) {
    double acc = layer.bias[o];
    const double* row = w + o * layer.in_dim;
    for (std::size_t i = 0; i < layer.in_dim; ++i) acc += row[i] * in[i];
    if (layer.activation == Activation::kRelu && acc < 0.0) acc = 0.0;
    out[o] = acc;
  }
}

void softmax_inplace(std::span<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    total += x;
  }
  for (double& x : v) x /= total;
}

}  // namespace

void forward_into(const MlpParams& model, std::span<const double> x,
                  std::span<double> out) {
  if (x.size() != model.input_dim()) {
    fail(ErrorKind::kDimensionMismatch,
         "forward: input has " + std::to_string(x.size()) +
             " features, model expects " + std::to_string(model.input_dim()));
  }
  thread_local std::vector<double> a;
  thread_local std::vector<double> b;
  a.assign(x.begin(), x.end());
  for (const auto& layer : model.layers) {
    b.resize(layer.out_dim);
    dense_apply(layer, a, b);
    std::swap(a, b);
  }
  softmax_inplace(a);
  std::copy(a.begin(), a.end(), out.begin());
}

std::vector<double> forward(const MlpParams& model, std::span<const double> x) {
  std::vector<double> out(model.num_classes());
  forward_into(model, x, out);
  return out;
}

double loss_and_gradient(const MlpParams& model, std::span<const double> x,
                         std::size_t label, MlpParams& grad) {
  const std::size_t depth = model.layers.size();
  // activations[l] is the input to layer l; activations[depth] the logits.
  std::vector<std::vector<double>> activations(depth + 1);
  activations[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < depth; ++l) {
    activations[l + 1].resize(model.layers[l].out_dim);
    dense_apply(model.layers[l], activations[l], activations[l + 1]);
  }
  std::vector<double> delta = activations[depth];
  softmax_inplace(delta);
  const double loss = -std::log(std::max(delta[label], 1e-300));
  delta[label] -= 1.0;

  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = model.layers[l];
    auto& g = grad.layers[l];
    const auto& input = activations[l];
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      g.bias[o] += delta[o];
      double* row = g.weights.data() + o * layer.in_dim;
      for (std::size_t i = 0; i < layer.in_dim; ++i) row[i] += delta[o] * input[i];
    }
    if (l == 0) break;
    std::vector<double> prev(layer.in_dim, 0.0);
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      const double* row = layer.weights.data() + o * layer.in_dim;
      for (std::size_t i = 0; i < layer.in_dim; ++i) prev[i] += row[i] * delta[o];
    }
    // relu'(z) is 0 where the stored activation was clamped to 0.
    if (model.layers[l - 1].activation == Activation::kRelu) {
      for (std::size_t i = 0; i < layer.in_dim; ++i) {
        if (input[i] <= 0.0) prev[i] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  return loss;
}

namespace {

void he_init(MlpParams& model, std::uint64_t seed) {
  // Offset keeps initialisation noise off the augmentation streams.
  constexpr std::uint64_t kInitStream = 0x5EED1A17C0FFEEULL;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.in_dim));
    gaussian_sample_into({seed ^ kInitStream, static_cast<std::uint32_t>(l), 0, 0},
                         scale, layer.weights);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
}

void zero_out(MlpParams& grad) {
  for (auto& l : grad.layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

}  // namespace

MlpParams train_gaussian_aug(const Dataset& train,
                             std::span<const std::size_t> arch,
                             const TrainConfig& cfg,
                             std::vector<double>* loss_history) {
  if (cfg.epochs < 1) fail(ErrorKind::kInvalidParameter, "train: epochs must be >= 1");
  if (cfg.batch_size < 1) {
    fail(ErrorKind::kInvalidParameter, "train: batch_size must be >= 1");
  }
  if (!(cfg.learning_rate > 0.0)) {
    fail(ErrorKind::kInvalidParameter, "train: learning_rate must be positive");
  }
  if (!(cfg.sigma >= 0.0)) fail(ErrorKind::kInvalidParameter, "train: sigma must be >= 0");
  if (!(cfg.lr_decay_factor > 0.0 && cfg.lr_decay_factor < 1.0)) {
    fail(ErrorKind::kInvalidParameter, "train: lr_decay_factor must lie in (0, 1)");
  }
  if (train.size() == 0) fail(ErrorKind::kEmptyInput, "train: dataset is empty");
  if (arch.size() < 2 || arch.front() != train.dim ||
      arch.back() != train.num_classes) {
    fail(ErrorKind::kInvalidParameter,
         "train: arch must start at the data dim and end at the class count");
  }

  MlpParams model = make_mlp(arch);
  he_init(model, cfg.seed);
  MlpParams grad = make_mlp(arch);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::vector<double> noisy(train.dim);
  double lr = cfg.learning_rate;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (std::find(cfg.lr_decay_epochs.begin(), cfg.lr_decay_epochs.end(), epoch) !=
        cfg.lr_decay_epochs.end()) {
      lr *= cfg.lr_decay_factor;
    }
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      zero_out(grad);
      for (std::size_t k = start; k < stop; ++k) {
        const auto& point = train.points[order[k]];
        if (cfg.sigma > 0.0) {
          gaussian_sample_into({cfg.seed, static_cast<std::uint32_t>(order[k]),
                                static_cast<std::uint32_t>(epoch), 0},
                               cfg.sigma, noisy);
          for (std::size_t j = 0; j < noisy.size(); ++j) noisy[j] += point.features[j];
        } else {
          std::copy(point.features.begin(), point.features.end(), noisy.begin());
        }
        epoch_loss += loss_and_gradient(model, noisy, point.label, grad);
      }
      const double step = lr / static_cast<double>(stop - start);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        const auto& g = grad.layers[l];
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
          layer.weights[i] -= step * g.weights[i];
        }
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
          layer.bias[i] -= step * g.bias[i];
        }
      }
    }
    epoch_loss /= static_cast<double>(train.size());
    if (!std::isfinite(epoch_loss)) {
      fail(ErrorKind::kNumericFailure,
           "train: loss diverged at epoch " + std::to_string(epoch));
    }
    if (loss_history) loss_history->push_back(epoch_loss);
  }
  return model;
}

double clean_accuracy(const MlpParams& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  std::vector<double> out(model.num_classes());
  for (const auto& p : data.points) {
    forward_into(model, p.features, out);
    if (argmax(out) == p.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

constexpr int kModelFileVersion = 1;

}  // namespace

void save_model(const MlpParams& model, const std::filesystem::path& path) {
  validate(model);
  nlohmann::json j;
  j["version"] = kModelFileVersion;
  j["arch"] = model.arch();
  j["activation"] = "relu";
  auto layers = nlohmann::json::array();
  for (const auto& l : model.layers) {
    layers.push_back({{"w", base64::encode_doubles_le(l.weights)},
                      {"b", base64::encode_doubles_le(l.bias)}});
  }
  j["layers"] = layers;
  io::write_file(path, j.dump() + "\n");
}

MlpParams load_model(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat,
         "model file '" + path.string() + "': malformed JSON (" + e.what() + ")");
  }
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.is_object() || !j.contains(name)) {
      fail(ErrorKind::kFormat, "model file: missing field '" + std::string(name) + "'");
    }
    return j.at(name);
  };
  const auto& version = field("version");
  if (!version.is_number_integer() || version.get<int>() != kModelFileVersion) {
    fail(ErrorKind::kFormat, "model file: version " + version.dump() +
                                 " not supported (expected " +
                                 std::to_string(kModelFileVersion) + ")");
  }
  std::vector<std::size_t> arch;
  try {
    arch = field("arch").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::kFormat, "model file: field 'arch' must be a list of sizes");
  }
  if (field("activation") != "relu") {
    fail(ErrorKind::kFormat, "model file: field 'activation' must be \"relu\"");
  }
  MlpParams model;
  try {
    model = make_mlp(arch);
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, std::string("model file: field 'arch': ") + e.what());
  }
  const auto& layers = field("layers");
  if (!layers.is_array() || layers.size() != model.layers.size()) {
    fail(ErrorKind::kFormat, "model file: field 'layers' does not match 'arch'");
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto decode = [&](const char* name, std::size_t expect) {
      const std::string where =
          "layers[" + std::to_string(l) + "]." + std::string(name);
      if (!layers[l].is_object() || !layers[l].contains(name) ||
          !layers[l][name].is_string()) {
        fail(ErrorKind::kFormat, "model file: missing field '" + where + "'");
      }
      auto values = base64::decode_doubles_le(layers[l][name].get<std::string>());
      if (!values || values->size() != expect) {
        fail(ErrorKind::kFormat, "model file: field '" + where +
                                     "' has bad encoding or length");
      }
      return std::move(*values);
    };
    model.layers[l].weights = decode("w", model.layers[l].weights.size());
    model.layers[l].bias = decode("b", model.layers[l].bias.size());
  }
  return model;
}

}  // namespace sween
