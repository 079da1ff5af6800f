#include "pft/models/layers.hpp"

#include <cmath>

#include "pft/error.hpp"
#include "pft/numerics/ops.hpp"

namespace pft {

Affine::Affine(std::size_t in, std::size_t out, Rng& rng) : in_(in), out_(out) {
  if (in == 0 || out == 0) throw ConfigError("affine layer needs positive widths");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out);
  for (auto& v : w) v = dist(rng);
  std::vector<double> b(out);
  for (auto& v : b) v = dist(rng);
  weight_ = Tensor::from({in, out}, std::move(w), true);
  bias_ = Tensor::from({out}, std::move(b), true);
}

Affine Affine::zeros(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw ConfigError("affine layer needs positive widths");
  Affine a;
  a.in_ = in;
  a.out_ = out;
  a.weight_ = Tensor::zeros({in, out}, true);
  a.bias_ = Tensor::zeros({out}, true);
  return a;
}

Tensor Affine::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw DimensionError("affine: expected input (batch, " + std::to_string(in_) + "), got " + shape_str(x.shape()));
  }
  return add(matmul(x, weight_), bias_);
}

void Affine::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

Affine Affine::clone() const {
  Affine a;
  a.in_ = in_;
  a.out_ = out_;
  a.weight_ = weight_.clone();
  a.bias_ = bias_.clone();
  return a;
}

const Tensor& LayeredFeatures::final() const {
  if (layers.empty()) throw ContractError("layered features are empty");
  return layers.back();
}

}  // namespace pft
