#pragma once

// Siamese encoder: a fully connected rectifier network applied with shared
// weights to both members of a pair, trained with the contrastive loss
//
//   L = Y * 1/2 * D^2 + (1 - Y) * 1/2 * max(0, m - D^2),   D^2 = |f(a) - f(b)|^2
//
// by mini-batch SGD with momentum, optionally on aggressively mined pairs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "coseg/binio.hpp"
#include "coseg/descriptors.hpp"
#include "coseg/error.hpp"
#include "coseg/rng.hpp"

namespace coseg {

using Embedding = Vector;

// One affine layer; weight is row-major rows x cols (out x in).
struct Layer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  Layer() = default;
  Layer(std::size_t out, std::size_t in) : rows(out), cols(in), weight(out * in, 0.0), bias(out, 0.0) {}

  double& w(std::size_t r, std::size_t c) { return weight[r * cols + c]; }
  double w(std::size_t r, std::size_t c) const { return weight[r * cols + c]; }

  friend bool operator==(const Layer&, const Layer&) = default;
};

// Hidden layers use a rectifier, the last layer is linear. Gradients and
// momentum buffers share this type.
struct EncoderParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().cols; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().rows; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers.empty()) throw ContractError("encoder has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.rows == 0 || l.cols == 0 || l.weight.size() != l.rows * l.cols || l.bias.size() != l.rows)
        throw ContractError("layer " + std::to_string(i) + " has inconsistent shape");
      if (i > 0 && layers[i - 1].rows != l.cols)
        throw ContractError("layer " + std::to_string(i) + " input " + std::to_string(l.cols) +
                            " does not chain with previous output " + std::to_string(layers[i - 1].rows));
    }
  }

  bool same_shape(const EncoderParams& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].rows != o.layers[i].rows || layers[i].cols != o.layers[i].cols) return false;
    return true;
  }

  // Zero-filled structure of the same shape.
  EncoderParams zeros_like() const {
    EncoderParams z;
    for (const auto& l : layers) z.layers.emplace_back(l.rows, l.cols);
    return z;
  }

  // Visits every scalar parameter in a fixed order (layer, weights, bias).
  template <typename F>
  void for_each(F&& f) {
    for (auto& l : layers) {
      for (auto& x : l.weight) f(x);
      for (auto& x : l.bias) f(x);
    }
  }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Glorot-uniform weights, zero biases. dims = {in, hidden..., out}.
inline EncoderParams init_params(std::span<const std::size_t> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw ContractError("encoder needs at least input and output dimensions");
  Rng rng(seed);
  EncoderParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i + 1] == 0) throw ContractError("layer dimension must be positive");
    Layer l(dims[i + 1], dims[i]);
    const double limit = std::sqrt(6.0 / static_cast<double>(dims[i] + dims[i + 1]));
    for (auto& x : l.weight) x = rng.uniform(-limit, limit);
    p.layers.push_back(std::move(l));
  }
  return p;
}

namespace detail {

inline void check_input(const EncoderParams& params, std::span<const double> x) {
  if (params.layers.empty()) throw ContractError("encoder has no layers");
  if (x.size() != params.input_dim())
    throw ContractError("descriptor dimension " + std::to_string(x.size()) + " does not match encoder input " +
                        std::to_string(params.input_dim()));
}

inline void affine(const Layer& l, std::span<const double> in, std::vector<double>& out) {
  out.assign(l.bias.begin(), l.bias.end());
  for (std::size_t r = 0; r < l.rows; ++r) {
    const double* row = l.weight.data() + r * l.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < l.cols; ++c) acc += row[c] * in[c];
    out[r] += acc;
  }
}

// Activations of every layer (post-rectifier for hidden layers); acts[0] is the input.
inline void forward_trace(const EncoderParams& params, std::span<const double> x,
                          std::vector<std::vector<double>>& acts) {
  acts.resize(params.layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    affine(params.layers[i], acts[i], acts[i + 1]);
    if (i + 1 < params.layers.size())
      for (auto& v : acts[i + 1]) v = v > 0.0 ? v : 0.0;
  }
}

// Accumulates scale * dL/dparams into grad given dL/d(output).
inline void backward(const EncoderParams& params, const std::vector<std::vector<double>>& acts,
                     std::vector<double> delta, double scale, EncoderParams& grad) {
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const Layer& l = params.layers[li];
    Layer& g = grad.layers[li];
    const auto& in = acts[li];
    for (std::size_t r = 0; r < l.rows; ++r) {
      const double d = delta[r] * scale;
      if (d == 0.0) continue;
      g.bias[r] += d;
      double* grow = g.weight.data() + r * l.cols;
      for (std::size_t c = 0; c < l.cols; ++c) grow[c] += d * in[c];
    }
    if (li == 0) break;
    std::vector<double> prev(l.cols, 0.0);
    for (std::size_t r = 0; r < l.rows; ++r) {
      if (delta[r] == 0.0) continue;
      const double* row = l.weight.data() + r * l.cols;
      for (std::size_t c = 0; c < l.cols; ++c) prev[c] += row[c] * delta[r];
    }
    // Rectifier derivative; zero at the kink.
    for (std::size_t c = 0; c < l.cols; ++c)
      if (!(in[c] > 0.0)) prev[c] = 0.0;
    delta = std::move(prev);
  }
}

}  // namespace detail

inline Embedding forward(const EncoderParams& params, std::span<const double> x) {
  detail::check_input(params, x);
  std::vector<std::vector<double>> acts;
  detail::forward_trace(params, x, acts);
  return std::move(acts.back());
}

// ---------------------------------------------------------------------------
// Contrastive loss

// kLinearHinge: hinge on the squared distance, max(0, m - D^2) (default).
// kSquaredHinge: squared hinge on the distance, max(0, m - D)^2.
enum class LossForm { kLinearHinge, kSquaredHinge };

struct LossConfig {
  double margin = 1.0;
  LossForm form = LossForm::kLinearHinge;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ContractError("embedding lengths differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

namespace detail {

inline void check_label(int label) {
  if (label != 0 && label != 1) throw ContractError("pair label must be 0 or 1, got " + std::to_string(label));
}

inline double loss_from_d2(double d2, int label, const LossConfig& cfg) {
  if (label == 1) return 0.5 * d2;
  if (cfg.form == LossForm::kLinearHinge) return 0.5 * std::max(0.0, cfg.margin - d2);
  const double h = std::max(0.0, cfg.margin - std::sqrt(d2));
  return 0.5 * h * h;
}

// dL/d(fa) = coeff * (fa - fb); dL/d(fb) = -coeff * (fa - fb).
inline double diff_coefficient(double d2, int label, const LossConfig& cfg) {
  if (label == 1) return 1.0;
  if (cfg.form == LossForm::kLinearHinge) return cfg.margin - d2 > 0.0 ? -1.0 : 0.0;
  const double d = std::sqrt(d2);
  if (!(d > 0.0) || !(cfg.margin - d > 0.0)) return 0.0;
  return -(cfg.margin - d) / d;
}

}  // namespace detail

inline double contrastive_loss(std::span<const double> fa, std::span<const double> fb, int label,
                               const LossConfig& cfg) {
  detail::check_label(label);
  if (!(cfg.margin > 0.0)) throw ContractError("margin must be positive");
  return detail::loss_from_d2(squared_distance(fa, fb), label, cfg);
}

inline double contrastive_loss(std::span<const double> fa, std::span<const double> fb, int label, double margin) {
  return contrastive_loss(fa, fb, label, LossConfig{margin, LossForm::kLinearHinge});
}

// Adds scale * dL/dparams for one pair into grad and returns the pair loss.
// Both twins share the weights, so their contributions are summed.
inline double accumulate_loss_gradient(const EncoderParams& params, std::span<const double> a,
                                       std::span<const double> b, int label, const LossConfig& cfg, double scale,
                                       EncoderParams& grad) {
  detail::check_label(label);
  detail::check_input(params, a);
  detail::check_input(params, b);
  if (!grad.same_shape(params)) throw ContractError("gradient buffer shape does not match encoder");
  std::vector<std::vector<double>> acts_a, acts_b;
  detail::forward_trace(params, a, acts_a);
  detail::forward_trace(params, b, acts_b);
  const auto& fa = acts_a.back();
  const auto& fb = acts_b.back();
  const double d2 = squared_distance(fa, fb);
  const double loss = detail::loss_from_d2(d2, label, cfg);
  const double coeff = detail::diff_coefficient(d2, label, cfg);
  if (coeff == 0.0) return loss;
  std::vector<double> delta(fa.size());
  for (std::size_t i = 0; i < fa.size(); ++i) delta[i] = coeff * (fa[i] - fb[i]);
  std::vector<double> neg(delta.size());
  std::transform(delta.begin(), delta.end(), neg.begin(), [](double v) { return -v; });
  detail::backward(params, acts_a, std::move(delta), scale, grad);
  detail::backward(params, acts_b, std::move(neg), scale, grad);
  return loss;
}

inline EncoderParams loss_gradient(const EncoderParams& params, std::span<const double> a, std::span<const double> b,
                                   int label, const LossConfig& cfg) {
  EncoderParams grad = params.zeros_like();
  accumulate_loss_gradient(params, a, b, label, cfg, 1.0, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Optimizer

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
};

// velocity <- momentum * velocity - lr * grad; params <- params + velocity
inline void sgd_step(EncoderParams& params, EncoderParams& velocity, const EncoderParams& grad,
                     const SgdConfig& cfg) {
  if (!params.same_shape(velocity) || !params.same_shape(grad))
    throw ContractError("sgd_step: params, velocity and gradient shapes differ");
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    auto step = [&](std::vector<double>& p, std::vector<double>& v, const std::vector<double>& g) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = cfg.momentum * v[i] - cfg.learning_rate * g[i];
        p[i] += v[i];
      }
    };
    step(params.layers[li].weight, velocity.layers[li].weight, grad.layers[li].weight);
    step(params.layers[li].bias, velocity.layers[li].bias, grad.layers[li].bias);
  }
}

// ---------------------------------------------------------------------------
// Pair sampling

// Descriptors with dense class indices.
struct LabeledSet {
  std::vector<Vector> descriptors;
  std::vector<std::size_t> labels;

  std::size_t size() const { return descriptors.size(); }

  // Maps string class names to indices in sorted-name order.
  static LabeledSet from_named(std::vector<Vector> descriptors, const std::vector<std::string>& class_names) {
    if (descriptors.size() != class_names.size()) throw ContractError("descriptor and label counts differ");
    std::map<std::string, std::size_t> index;
    for (const auto& c : class_names) index.emplace(c, 0);
    std::size_t next = 0;
    for (auto& [name, idx] : index) idx = next++;
    LabeledSet s;
    s.descriptors = std::move(descriptors);
    for (const auto& c : class_names) s.labels.push_back(index.at(c));
    return s;
  }
};

// Indices into a LabeledSet plus the similarity label (1 = same class).
struct PairSample {
  std::size_t first = 0;
  std::size_t second = 0;
  int label = 0;

  friend bool operator==(const PairSample&, const PairSample&) = default;
};

namespace detail {

struct ClassBuckets {
  std::vector<std::vector<std::size_t>> members;   // per class, ascending item index
  std::vector<std::size_t> positive_classes;       // classes with >= 2 members
};

inline ClassBuckets bucket_classes(const LabeledSet& data) {
  if (data.labels.size() != data.descriptors.size()) throw ContractError("descriptor and label counts differ");
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < data.labels.size(); ++i) by_label[data.labels[i]].push_back(i);
  ClassBuckets b;
  for (auto& [label, items] : by_label) {
    if (items.size() >= 2) b.positive_classes.push_back(b.members.size());
    b.members.push_back(std::move(items));
  }
  return b;
}

}  // namespace detail

// Balanced random pairs: even positions are positives, odd positions negatives,
// giving ceil(count/2) positives and floor(count/2) negatives.
inline std::vector<PairSample> sample_pairs(const LabeledSet& data, std::size_t count, std::uint64_t seed) {
  const auto buckets = detail::bucket_classes(data);
  const std::size_t n_classes = buckets.members.size();
  if (n_classes < 2) throw ContractError("pair sampling needs at least 2 classes, got " + std::to_string(n_classes));
  if (count > 0 && buckets.positive_classes.empty())
    throw ContractError("pair sampling needs a class with at least 2 items for positive pairs");
  Rng rng(seed);
  std::vector<PairSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (i % 2 == 0) {
      const auto& items = buckets.members[buckets.positive_classes[rng.below(buckets.positive_classes.size())]];
      const std::size_t a = rng.below(items.size());
      std::size_t b = rng.below(items.size() - 1);
      if (b >= a) ++b;
      out.push_back({items[a], items[b], 1});
    } else {
      const std::size_t ca = rng.below(n_classes);
      std::size_t cb = rng.below(n_classes - 1);
      if (cb >= ca) ++cb;
      const auto& ia = buckets.members[ca];
      const auto& ib = buckets.members[cb];
      out.push_back({ia[rng.below(ia.size())], ib[rng.below(ib.size())], 0});
    }
  }
  return out;
}

inline constexpr std::size_t kDefaultPoolFactor = 10;

// Hard-pair mining: draws pool_factor * count random pairs, embeds them with
// the current params and keeps the positives with the largest D^2 and the
// negatives with the smallest D^2. Ties keep candidate order. Output layout
// matches sample_pairs (positives at even positions).
inline std::vector<PairSample> mine_hard_pairs(const EncoderParams& params, const LabeledSet& data,
                                               std::size_t count, std::uint64_t seed,
                                               std::size_t pool_factor = kDefaultPoolFactor) {
  if (pool_factor == 0) throw ContractError("pool_factor must be >= 1");
  const auto pool = sample_pairs(data, count * pool_factor, seed);

  std::vector<Embedding> emb(data.size());
  std::vector<bool> have(data.size(), false);
  auto embedding = [&](std::size_t i) -> const Embedding& {
    if (!have[i]) {
      emb[i] = forward(params, data.descriptors[i]);
      have[i] = true;
    }
    return emb[i];
  };

  std::vector<std::size_t> pos, neg;
  std::vector<double> d2(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    d2[i] = squared_distance(embedding(pool[i].first), embedding(pool[i].second));
    (pool[i].label == 1 ? pos : neg).push_back(i);
  }
  std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) { return d2[a] > d2[b]; });
  std::stable_sort(neg.begin(), neg.end(), [&](std::size_t a, std::size_t b) { return d2[a] < d2[b]; });

  std::vector<PairSample> out;
  out.reserve(count);
  std::size_t ip = 0, in = 0;
  for (std::size_t i = 0; i < count; ++i) out.push_back(i % 2 == 0 ? pool[pos[ip++]] : pool[neg[in++]]);
  return out;
}

// ---------------------------------------------------------------------------
// Training

enum class Mining { kRandom, kAggressive };

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 128;
  double margin = 1.0;
  std::size_t iterations = 100000;
  std::uint64_t seed = 0;
  Mining mining = Mining::kAggressive;
  std::size_t pool_factor = kDefaultPoolFactor;
  LossForm loss_form = LossForm::kLinearHinge;
  std::vector<std::size_t> hidden = {128};
  std::size_t embedding_dim = 256;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must be in [0,1)");
    if (batch_size == 0) throw ContractError("batch_size must be >= 1");
    if (!(margin > 0.0)) throw ContractError("margin must be > 0");
    if (embedding_dim == 0) throw ContractError("embedding_dim must be >= 1");
    if (pool_factor == 0) throw ContractError("pool_factor must be >= 1");
  }

  std::vector<std::size_t> layer_dims(std::size_t input_dim) const {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(embedding_dim);
    return dims;
  }
};

struct TrainResult {
  EncoderParams params;
  std::vector<double> loss_trace;  // mean batch loss before each update
};

// Stream 0 seeds the initial weights; stream i+1 seeds the batch of iteration i.
inline TrainResult train(const LabeledSet& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw ContractError("training set is empty");
  const std::size_t in_dim = data.descriptors.front().size();
  for (const auto& d : data.descriptors)
    if (d.size() != in_dim) throw ContractError("training descriptors have mixed dimensions");

  const auto dims = cfg.layer_dims(in_dim);
  TrainResult result{init_params(dims, mix_seed(cfg.seed, 0)), {}};
  if (cfg.iterations == 0) return result;

  auto& params = result.params;
  EncoderParams velocity = params.zeros_like();
  EncoderParams grad = params.zeros_like();
  const LossConfig loss_cfg{cfg.margin, cfg.loss_form};
  const SgdConfig sgd{cfg.learning_rate, cfg.momentum};
  result.loss_trace.reserve(cfg.iterations);

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const std::uint64_t batch_seed = mix_seed(cfg.seed, it + 1);
    const auto batch = cfg.mining == Mining::kAggressive
                           ? mine_hard_pairs(params, data, cfg.batch_size, batch_seed, cfg.pool_factor)
                           : sample_pairs(data, cfg.batch_size, batch_seed);
    for (auto& l : grad.layers) {
      std::fill(l.weight.begin(), l.weight.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& p : batch)
      loss += accumulate_loss_gradient(params, data.descriptors[p.first], data.descriptors[p.second], p.label,
                                       loss_cfg, scale, grad);
    loss *= scale;
    if (!std::isfinite(loss)) throw TrainingDiverged(it, loss);
    result.loss_trace.push_back(loss);
    sgd_step(params, velocity, grad, sgd);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Model file: "CSGM" u32 version, u32 layer count,
//   per layer: u32 rows, u32 cols, rows*cols f64 (row-major), rows f64 bias.

inline constexpr std::uint32_t kModelFormatVersion = 1;

inline std::vector<std::uint8_t> encode_model(const EncoderParams& params) {
  params.validate();
  binio::Writer w;
  w.magic("CSGM");
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    w.u32(static_cast<std::uint32_t>(l.rows));
    w.u32(static_cast<std::uint32_t>(l.cols));
    for (double x : l.weight) w.f64(x);
    for (double x : l.bias) w.f64(x);
  }
  return std::move(w).take();
}

inline EncoderParams decode_model(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  r.expect_magic("CSGM");
  const auto version = r.u32();
  if (version != kModelFormatVersion)
    throw DecodeError(DecodeError::Kind::kUnsupportedVersion, "model file version " + std::to_string(version));
  const auto n_layers = r.u32();
  EncoderParams p;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const std::size_t rows = r.u32();
    const std::size_t cols = r.u32();
    if (rows == 0 || cols == 0 || cols + 1 > r.remaining() / sizeof(double) / rows)
      throw DecodeError(DecodeError::Kind::kTruncated, "layer " + std::to_string(i) + " exceeds file size");
    Layer l(rows, cols);
    for (auto& x : l.weight) x = r.f64();
    for (auto& x : l.bias) x = r.f64();
    p.layers.push_back(std::move(l));
  }
  if (!r.at_end()) throw DecodeError(DecodeError::Kind::kMalformed, "trailing bytes after model layers");
  try {
    p.validate();
  } catch (const ContractError& e) {
    throw DecodeError(DecodeError::Kind::kMalformed, e.what());
  }
  return p;
}

inline void save_model(const std::string& path, const EncoderParams& p) { binio::write_file(path, encode_model(p)); }
inline EncoderParams load_model(const std::string& path) { return decode_model(binio::read_file(path)); }

}  // namespace coseg
