#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pft/numerics/rng.hpp"
#include "pft/numerics/tensor.hpp"

namespace pft {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// y = x W + b with W stored as (in, out).
///
/// Default initialisation draws W and b from U(-1/sqrt(in), 1/sqrt(in)), the
/// usual fan-in rule for dense layers.
class Affine {
 public:
  Affine() = default;
  Affine(std::size_t in, std::size_t out, Rng& rng);
  static Affine zeros(std::size_t in, std::size_t out);

  Tensor forward(const Tensor& x) const;

  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }
  std::size_t parameter_count() const noexcept { return in_ * out_ + out_; }

  Tensor& weight() noexcept { return weight_; }
  Tensor& bias() noexcept { return bias_; }
  const Tensor& weight() const noexcept { return weight_; }
  const Tensor& bias() const noexcept { return bias_; }

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  Affine clone() const;

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Tensor weight_;
  Tensor bias_;
};

/// Activations of one network, in forward order. The last entry is the
/// network's output feature; `style_layers` names the entries whose channel
/// statistics enter the style loss.
struct LayeredFeatures {
  std::vector<Tensor> layers;
  std::vector<std::size_t> style_layers;

  const Tensor& final() const;
  std::size_t depth() const noexcept { return layers.size(); }
};

}  // namespace pft
