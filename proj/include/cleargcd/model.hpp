#pragma once

// MLP encoder f, projection head and cosine prototype classifier.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleargcd/binary_io.hpp"
#include "cleargcd/tensor.hpp"
#include "json.hpp"

namespace cleargcd {

struct ModelDims {
  std::size_t input = 3 * 32 * 32;
  std::size_t hidden = 256;
  std::size_t feature = 64;
  std::size_t projection = 32;
  std::size_t num_classes = 10;
};

/// Learnable parameters in declaration (and checkpoint) order.
struct ModelParams {
  Tensor w1, b1, w2, b2, w3, b3;  // encoder
  Tensor wp, bp;                  // projection head
  Tensor prototypes;              // K x d classifier prototypes

  std::vector<Tensor*> all() { return {&w1, &b1, &w2, &b2, &w3, &b3, &wp, &bp, &prototypes}; }
  std::vector<const Tensor*> all() const { return {&w1, &b1, &w2, &b2, &w3, &b3, &wp, &bp, &prototypes}; }
};

class Model {
 public:
  Model() = default;
  Model(ModelDims dims, ModelParams params) : dims_(dims), params_(std::move(params)) {}

  /// Xavier-uniform weights, zero biases, unit-norm prototypes.
  static Model init(std::uint64_t seed, const ModelDims& dims) {
    std::mt19937_64 rng(seed);
    auto xavier = [&rng](std::size_t in, std::size_t out) {
      const double a = std::sqrt(6.0 / static_cast<double>(in + out));
      std::uniform_real_distribution<double> u(-a, a);
      Tensor w({in, out});
      for (double& v : w.data()) v = u(rng);
      return w;
    };
    ModelParams p;
    p.w1 = xavier(dims.input, dims.hidden);
    p.b1 = Tensor({1, dims.hidden});
    p.w2 = xavier(dims.hidden, dims.hidden);
    p.b2 = Tensor({1, dims.hidden});
    p.w3 = xavier(dims.hidden, dims.feature);
    p.b3 = Tensor({1, dims.feature});
    p.wp = xavier(dims.feature, dims.projection);
    p.bp = Tensor({1, dims.projection});
    p.prototypes = Tensor({dims.num_classes, dims.feature});
    std::normal_distribution<double> n01(0.0, 1.0);
    for (std::size_t k = 0; k < dims.num_classes; ++k) {
      double s = 0.0;
      auto row = p.prototypes.row(k);
      for (double& v : row) {
        v = n01(rng);
        s += v * v;
      }
      for (double& v : row) v /= std::sqrt(s);
    }
    for (Tensor* t : p.all()) t->set_requires_grad(true);
    return Model(dims, std::move(p));
  }

  const ModelDims& dims() const { return dims_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  void zero_grad() {
    for (Tensor* t : params_.all()) t->zero_grad();
  }

  /// h = f(x) for a B x input batch.
  Var forward_features(Tape& tape, Var x) {
    if (x.cols() != dims_.input)
      throw ShapeError("encoder input " + shape_str(x.shape()) + " does not match input dim " +
                       std::to_string(dims_.input));
    Var a = tape.relu(tape.add_row(tape.matmul(x, tape.param(params_.w1)), tape.param(params_.b1)));
    a = tape.relu(tape.add_row(tape.matmul(a, tape.param(params_.w2)), tape.param(params_.b2)));
    return tape.add_row(tape.matmul(a, tape.param(params_.w3)), tape.param(params_.b3));
  }

  /// z = normalize(h W_p + b_p).
  Var project(Tape& tape, Var h) {
    return tape.l2_normalize_rows(tape.add_row(tape.matmul(h, tape.param(params_.wp)), tape.param(params_.bp)));
  }

  /// Cosine similarity between each feature row and each prototype, B x K.
  Var cosine_logits(Tape& tape, Var h) {
    Var hn = tape.l2_normalize_rows(h);
    Var cn = tape.l2_normalize_rows(tape.param(params_.prototypes));
    return tape.matmul(hn, tape.transpose(cn));
  }

  Var classify(Tape& tape, Var h, double tau) {
    if (!(tau > 0.0)) throw DomainError("classifier temperature must be positive");
    return tape.softmax_rows(cosine_logits(tape, h), tau);
  }

  Var log_classify(Tape& tape, Var h, double tau) {
    if (!(tau > 0.0)) throw DomainError("classifier temperature must be positive");
    return tape.log_softmax_rows(cosine_logits(tape, h), tau);
  }

  /// Gradient-free features for a batch of images.
  Tensor features(const std::vector<const Tensor*>& images) const {
    Tape tape;
    Model frozen(dims_, frozen_params());
    return frozen.forward_features(tape, tape.constant(stack(images, dims_.input))).value();
  }

  /// Gradient-free class probabilities.
  Tensor probabilities(const std::vector<const Tensor*>& images, double tau) const {
    Tape tape;
    Model frozen(dims_, frozen_params());
    Var h = frozen.forward_features(tape, tape.constant(stack(images, dims_.input)));
    return frozen.classify(tape, h, tau).value();
  }

  static Tensor stack(const std::vector<const Tensor*>& images, std::size_t width) {
    Tensor x({images.size(), width});
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (images[i]->numel() != width)
        throw ShapeError("image " + shape_str(images[i]->shape()) + " does not flatten to " + std::to_string(width));
      std::copy(images[i]->data().begin(), images[i]->data().end(), x.row(i).begin());
    }
    return x;
  }

 private:
  ModelParams frozen_params() const {
    ModelParams p;
    auto dst = p.all();
    auto src = params_.all();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = Tensor(src[i]->shape(), src[i]->storage());
    return p;
  }

  ModelDims dims_;
  ModelParams params_;
};

inline constexpr int kCheckpointFormatVersion = 1;

/// Writes meta.json (dims, K, format version, caller extras) and params.bin
/// (little-endian f64, parameters in declaration order).
inline void save_checkpoint(const std::filesystem::path& dir, const Model& model, const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta = extra;
  meta["format_version"] = kCheckpointFormatVersion;
  const auto& d = model.dims();
  meta["dims"] = {{"input", d.input}, {"hidden", d.hidden}, {"feature", d.feature},
                  {"projection", d.projection}, {"num_classes", d.num_classes}};
  meta["K"] = d.num_classes;
  write_text(dir / "meta.json", meta.dump(2) + "\n");
  std::vector<double> flat;
  for (const Tensor* t : model.params().all()) flat.insert(flat.end(), t->data().begin(), t->data().end());
  write_le_blob(dir / "params.bin", flat);
}

struct LoadedCheckpoint {
  Model model;
  nlohmann::json meta;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint meta.json in " + dir.string() + ": " + e.what());
  }
  if (!meta.contains("format_version") || meta["format_version"] != kCheckpointFormatVersion)
    throw std::runtime_error("unsupported checkpoint format version in " + dir.string());
  ModelDims d;
  try {
    const auto& j = meta.at("dims");
    d.input = j.at("input");
    d.hidden = j.at("hidden");
    d.feature = j.at("feature");
    d.projection = j.at("projection");
    d.num_classes = j.at("num_classes");
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint dims in " + dir.string() + ": " + e.what());
  }
  Model m = Model::init(0, d);
  std::size_t total = 0;
  for (const Tensor* t : m.params().all()) total += t->numel();
  const auto flat = read_le_blob<double>(dir / "params.bin");
  if (flat.size() != total)
    throw std::runtime_error("checkpoint params.bin holds " + std::to_string(flat.size()) + " values, expected " +
                             std::to_string(total));
  std::size_t off = 0;
  for (Tensor* t : m.params().all()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), t->numel(), t->data().begin());
    off += t->numel();
    if (!t->all_finite()) throw std::runtime_error("checkpoint contains non-finite parameters");
  }
  return {std::move(m), std::move(meta)};
}

}  // namespace cleargcd
