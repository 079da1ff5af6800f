#include "pft/losses/losses.hpp"

#include <cmath>
#include <string>

#include "pft/error.hpp"
#include "pft/numerics/ops.hpp"

namespace pft {

void LossWeights::validate() const {
  if (!std::isfinite(expr) || !std::isfinite(style) || expr < 0.0 || style < 0.0) {
    throw ConfigError("loss weights must be finite and non-negative",
                      "lambda_expr=" + std::to_string(expr) + " lambda_style=" + std::to_string(style));
  }
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be (batch, classes), got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (n == 0) throw ContractError("cross_entropy: empty batch");
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  }
  std::vector<double> onehot(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(c) + ")");
    }
    onehot[i * c + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  const Tensor picked = mul(log_softmax(logits), Tensor::from({n, c}, std::move(onehot)));
  return mul_scalar(sum(picked), -1.0 / static_cast<double>(n));
}

Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits) {
  if (p_logits.shape() != q_logits.shape() || p_logits.rank() != 2) {
    throw ShapeError("kl_divergence: shapes " + shape_str(p_logits.shape()) + " and " + shape_str(q_logits.shape()));
  }
  Tensor log_p;
  Tensor p;
  {
    NoGradGuard guard;
    log_p = log_softmax(p_logits.detach());
    p = exp(log_p);
  }
  const Tensor log_q = log_softmax(q_logits);
  const Tensor terms = mul(p, sub(log_p, log_q));
  return mul_scalar(sum(terms), 1.0 / static_cast<double>(p_logits.dim(0)));
}

Tensor style_loss(const LayeredFeatures& translated, const LayeredFeatures& reference,
                  std::span<const std::size_t> layer_set) {
  if (layer_set.empty()) throw ContractError("style_loss: empty layer set");
  Tensor total;
  for (const std::size_t l : layer_set) {
    if (l >= translated.depth() || l >= reference.depth()) {
      throw ContractError("style_loss: layer " + std::to_string(l) + " out of range");
    }
    const Tensor& a = translated.layers[l];
    const Tensor& b = reference.layers[l];
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
      throw ShapeError("style_loss: layer " + std::to_string(l) + " widths " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
    if (a.dim(0) < 2 || b.dim(0) < 2) throw ContractError("style_loss: batch must hold at least 2 rows");
    Tensor mu_ref;
    Tensor sd_ref;
    {
      NoGradGuard guard;
      mu_ref = mean_over_axis(b.detach(), 0);
      sd_ref = std_over_axis(b.detach(), 0);
    }
    const Tensor term = add(sum(square(sub(mean_over_axis(a, 0), mu_ref))), sum(square(sub(std_over_axis(a, 0), sd_ref))));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor source_total(const Tensor& ce, const Tensor& expr, const Tensor& style, const LossWeights& w) {
  w.validate();
  return add(add(ce, mul_scalar(expr, w.expr)), mul_scalar(style, w.style));
}

Tensor target_loss(const Tensor& f_t_logits, const Tensor& f_hat_t_logits) {
  return kl_divergence(f_t_logits, f_hat_t_logits);
}

}  // namespace pft
