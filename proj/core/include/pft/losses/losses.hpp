#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pft/models/layers.hpp"
#include "pft/numerics/tensor.hpp"

namespace pft {

struct LossWeights {
  double expr = 1.0;
  double style = 0.1;

  void validate() const;
};

/// Batch mean of -log_softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Batch mean of KL(softmax(p) || softmax(q)), evaluated from log-softmax on
/// both sides. The p side is a fixed teacher: no gradient reaches p_logits.
Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits);

/// Sum over the selected layers of squared differences between per-channel
/// batch means and standard deviations. Reference statistics are constants.
Tensor style_loss(const LayeredFeatures& translated, const LayeredFeatures& reference,
                  std::span<const std::size_t> layer_set);

/// ce + w.expr * expr + w.style * style.
Tensor source_total(const Tensor& ce, const Tensor& expr, const Tensor& style, const LossWeights& w);

/// Consistency of translated target predictions with the frozen model's own.
Tensor target_loss(const Tensor& f_t_logits, const Tensor& f_hat_t_logits);

}  // namespace pft
