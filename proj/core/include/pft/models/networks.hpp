#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pft/models/layers.hpp"

namespace pft {

/// Anything holding trainable tensors. Freezing toggles requires_grad on every
/// parameter, which keeps frozen tensors off the tape and out of optimisers.
class Network {
 public:
  virtual ~Network() = default;

  virtual std::vector<NamedTensor> named_parameters() const = 0;

  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  bool frozen() const noexcept { return frozen_; }

 protected:
  friend void set_frozen(Network& net, bool frozen);
  bool frozen_ = false;
};

void set_frozen(Network& net, bool frozen);

/// Parameters of the given networks that currently require a gradient.
std::vector<Tensor> trainable_parameters(std::initializer_list<const Network*> nets);

struct ExtractorShape {
  std::size_t input_dim = 32;
  std::size_t hidden_dim = 512;
  std::size_t feat_dim = 128;
  std::size_t blocks = 3;
};

/// Stack of affine + ReLU blocks: input -> hidden -> ... -> feat.
class FeatureExtractor final : public Network {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(const ExtractorShape& shape, Rng& rng);

  LayeredFeatures extract(const Tensor& x) const;

  const ExtractorShape& shape() const noexcept { return shape_; }
  std::vector<Affine>& blocks() noexcept { return blocks_; }
  const std::vector<Affine>& blocks() const noexcept { return blocks_; }
  std::vector<NamedTensor> named_parameters() const override;
  FeatureExtractor clone() const;

 private:
  ExtractorShape shape_;
  std::vector<Affine> blocks_;
};

class Classifier final : public Network {
 public:
  Classifier() = default;
  Classifier(std::size_t feat_dim, std::size_t num_classes, Rng& rng);

  Tensor classify(const Tensor& f) const;

  std::size_t feat_dim() const noexcept { return head_.in_features(); }
  std::size_t num_classes() const noexcept { return head_.out_features(); }
  Affine& head() noexcept { return head_; }
  const Affine& head() const noexcept { return head_; }
  std::vector<NamedTensor> named_parameters() const override;
  Classifier clone() const;

 private:
  Affine head_;
};

/// Per-channel neutral-expression statistics of one subject's features.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

ChannelStats channel_stats(const Tensor& features);

/// Constant affine map g = f * scale + shift applied ahead of the translator
/// layers; it moves one subject's feature statistics onto another's. Either
/// rank-1 (shared by every row) or one row per sample.
struct Recolor {
  Tensor scale;
  Tensor shift;

  /// Maps statistics `from` onto `to`. With `isotropic`, a single scale (ratio
  /// of mean channel deviations) is used for every channel, so the map is a
  /// similarity transform and preserves cluster geometry.
  static Recolor between(const ChannelStats& from, const ChannelStats& to, bool isotropic);
  static Recolor rows(const std::vector<const ChannelStats*>& from, const std::vector<const ChannelStats*>& to,
                      bool isotropic);
};

/// Lightweight residual adapter on extractor features:
///   g = recolor(f),  h = relu(g A + a),  f_hat = g + h B + b
/// B and b start at zero, so a fresh translator without recolour is the identity.
class Translator final : public Network {
 public:
  Translator() = default;
  Translator(std::size_t feat_dim, std::size_t hidden_dim, Rng& rng);

  /// Returns {h, f_hat}; both entries are style layers.
  LayeredFeatures translate(const LayeredFeatures& features, const Recolor* recolor = nullptr) const;
  LayeredFeatures translate(const Tensor& f, const Recolor* recolor = nullptr) const;

  std::size_t feat_dim() const noexcept { return down_.in_features(); }
  std::size_t hidden_dim() const noexcept { return down_.out_features(); }
  Affine& down() noexcept { return down_; }
  Affine& up() noexcept { return up_; }
  std::vector<NamedTensor> named_parameters() const override;
  Translator clone() const;

 private:
  Affine down_;
  Affine up_;
};

struct CostReport {
  std::size_t trainable_params = 0;
  std::size_t total_params = 0;
  std::size_t flops_per_sample = 0;
};

/// Analytic inference cost: an affine layer costs 2 * in * out, a ReLU or a
/// residual add one per element, the recolour stage two per element.
CostReport count_cost(const FeatureExtractor& f, const Classifier& c, const Translator* t = nullptr);

struct ReferenceCost {
  std::string method;
  double params_millions;
  double gflops;
  std::string note;
};

/// Literature figures for context only; they use a ResNet-18 backbone.
std::vector<ReferenceCost> paper_reported_costs();

}  // namespace pft
