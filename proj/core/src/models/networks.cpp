#include "pft/models/networks.hpp"

#include <cmath>
#include <numeric>

#include "pft/error.hpp"
#include "pft/numerics/ops.hpp"

namespace pft {

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.size();
  return n;
}

void set_frozen(Network& net, bool frozen) {
  for (auto& p : net.named_parameters()) p.tensor.set_requires_grad(!frozen);
  net.frozen_ = frozen;
}

std::vector<Tensor> trainable_parameters(std::initializer_list<const Network*> nets) {
  std::vector<Tensor> out;
  for (const Network* net : nets) {
    if (net == nullptr) continue;
    for (auto& p : net->named_parameters()) {
      if (p.tensor.requires_grad()) out.push_back(p.tensor);
    }
  }
  return out;
}

FeatureExtractor::FeatureExtractor(const ExtractorShape& shape, Rng& rng) : shape_(shape) {
  if (shape.blocks == 0) throw ConfigError("extractor needs at least one block");
  std::size_t in = shape.input_dim;
  for (std::size_t i = 0; i < shape.blocks; ++i) {
    const std::size_t out = (i + 1 == shape.blocks) ? shape.feat_dim : shape.hidden_dim;
    blocks_.emplace_back(in, out, rng);
    in = out;
  }
}

LayeredFeatures FeatureExtractor::extract(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != shape_.input_dim) {
    throw DimensionError("extract: expected input (batch, " + std::to_string(shape_.input_dim) + "), got " +
                         shape_str(x.shape()));
  }
  LayeredFeatures out;
  Tensor h = x;
  for (const auto& block : blocks_) {
    h = relu(block.forward(h));
    out.layers.push_back(h);
  }
  out.style_layers.resize(out.layers.size());
  std::iota(out.style_layers.begin(), out.style_layers.end(), std::size_t{0});
  return out;
}

std::vector<NamedTensor> FeatureExtractor::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect("extractor.block" + std::to_string(i), out);
  return out;
}

FeatureExtractor FeatureExtractor::clone() const {
  FeatureExtractor f;
  f.shape_ = shape_;
  f.frozen_ = frozen_;
  for (const auto& b : blocks_) f.blocks_.push_back(b.clone());
  return f;
}

Classifier::Classifier(std::size_t feat_dim, std::size_t num_classes, Rng& rng) : head_(feat_dim, num_classes, rng) {}

Tensor Classifier::classify(const Tensor& f) const {
  if (f.rank() != 2 || f.dim(1) != head_.in_features()) {
    throw DimensionError("classify: expected features (batch, " + std::to_string(head_.in_features()) + "), got " +
                         shape_str(f.shape()));
  }
  return head_.forward(f);
}

std::vector<NamedTensor> Classifier::named_parameters() const {
  std::vector<NamedTensor> out;
  head_.collect("classifier.head", out);
  return out;
}

Classifier Classifier::clone() const {
  Classifier c;
  c.head_ = head_.clone();
  c.frozen_ = frozen_;
  return c;
}

ChannelStats channel_stats(const Tensor& features) {
  if (features.rank() != 2 || features.dim(0) < 2) {
    throw ContractError("channel statistics need a (batch >= 2, channels) matrix, got " + shape_str(features.shape()));
  }
  NoGradGuard guard;
  const Tensor mu = mean_over_axis(features, 0);
  const Tensor sd = std_over_axis(features, 0);
  return {std::vector<double>(mu.values().begin(), mu.values().end()),
          std::vector<double>(sd.values().begin(), sd.values().end())};
}

namespace {

void recolor_row(const ChannelStats& from, const ChannelStats& to, bool isotropic, double* scale, double* shift) {
  const std::size_t d = from.mean.size();
  if (to.mean.size() != d || from.stddev.size() != d || to.stddev.size() != d) {
    throw DimensionError("recolor: statistics widths differ (" + std::to_string(d) + " vs " +
                         std::to_string(to.mean.size()) + ")");
  }
  double iso = 0.0;
  if (isotropic) {
    const double num = std::accumulate(to.stddev.begin(), to.stddev.end(), 0.0);
    const double den = std::accumulate(from.stddev.begin(), from.stddev.end(), 0.0);
    iso = num / den;
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double s = isotropic ? iso : to.stddev[j] / from.stddev[j];
    scale[j] = s;
    shift[j] = to.mean[j] - from.mean[j] * s;
  }
}

}  // namespace

Recolor Recolor::between(const ChannelStats& from, const ChannelStats& to, bool isotropic) {
  const std::size_t d = from.mean.size();
  std::vector<double> scale(d), shift(d);
  recolor_row(from, to, isotropic, scale.data(), shift.data());
  return {Tensor::from({d}, std::move(scale)), Tensor::from({d}, std::move(shift))};
}

Recolor Recolor::rows(const std::vector<const ChannelStats*>& from, const std::vector<const ChannelStats*>& to,
                      bool isotropic) {
  if (from.size() != to.size() || from.empty()) throw ContractError("recolor rows: mismatched or empty row lists");
  const std::size_t n = from.size();
  const std::size_t d = from.front()->mean.size();
  std::vector<double> scale(n * d), shift(n * d);
  for (std::size_t i = 0; i < n; ++i) recolor_row(*from[i], *to[i], isotropic, &scale[i * d], &shift[i * d]);
  return {Tensor::from({n, d}, std::move(scale)), Tensor::from({n, d}, std::move(shift))};
}

Translator::Translator(std::size_t feat_dim, std::size_t hidden_dim, Rng& rng)
    : down_(feat_dim, hidden_dim, rng), up_(Affine::zeros(hidden_dim, feat_dim)) {}

LayeredFeatures Translator::translate(const LayeredFeatures& features, const Recolor* recolor) const {
  return translate(features.final(), recolor);
}

LayeredFeatures Translator::translate(const Tensor& f, const Recolor* recolor) const {
  if (f.rank() != 2 || f.dim(1) != feat_dim()) {
    throw DimensionError("translate: expected features (batch, " + std::to_string(feat_dim()) + "), got " +
                         shape_str(f.shape()));
  }
  Tensor g = f;
  if (recolor != nullptr) {
    if (recolor->scale.rank() == 2 && recolor->scale.dim(0) != f.dim(0)) {
      throw ShapeError("translate: recolor has " + std::to_string(recolor->scale.dim(0)) + " rows for a batch of " +
                       std::to_string(f.dim(0)));
    }
    g = add(mul(f, recolor->scale), recolor->shift);
  }
  Tensor h = relu(down_.forward(g));
  Tensor out = add(g, up_.forward(h));
  return LayeredFeatures{{h, out}, {0, 1}};
}

std::vector<NamedTensor> Translator::named_parameters() const {
  std::vector<NamedTensor> out;
  down_.collect("translator.down", out);
  up_.collect("translator.up", out);
  return out;
}

Translator Translator::clone() const {
  Translator t;
  t.down_ = down_.clone();
  t.up_ = up_.clone();
  t.frozen_ = frozen_;
  return t;
}

CostReport count_cost(const FeatureExtractor& f, const Classifier& c, const Translator* t) {
  CostReport r;
  auto add_net = [&r](const Network& net) {
    const std::size_t n = net.parameter_count();
    r.total_params += n;
    if (!net.frozen()) r.trainable_params += n;
  };
  add_net(f);
  add_net(c);
  for (const auto& b : f.blocks()) r.flops_per_sample += 2 * b.in_features() * b.out_features() + b.out_features();
  r.flops_per_sample += 2 * c.feat_dim() * c.num_classes();
  if (t != nullptr) {
    add_net(*t);
    const std::size_t d = t->feat_dim();
    const std::size_t k = t->hidden_dim();
    r.flops_per_sample += 2 * d;              // recolour
    r.flops_per_sample += 2 * d * k + k;      // down + relu
    r.flops_per_sample += 2 * k * d + d;      // up + residual add
  }
  return r;
}

std::vector<ReferenceCost> paper_reported_costs() {
  return {
      {"PFT", 0.5, 3.6, "paper-reported, different backbone (ResNet-18)"},
      {"SFDA-IT", 57.2, 60.0, "paper-reported, different backbone (ResNet-18)"},
  };
}

}  // namespace pft
