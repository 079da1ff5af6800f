#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "pft/numerics/tensor.hpp"

namespace pft {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter set. step() consumes and clears
/// the gradients of every parameter.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamOptions options = {});

  /// Applies one update; returns how many parameter tensors were updated.
  std::size_t step();

  double lr() const noexcept { return options_.lr; }
  void set_lr(double lr);
  std::size_t steps() const noexcept { return t_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

struct PlateauOptions {
  double factor = 0.5;
  std::size_t patience = 3;
  double min_lr = 1e-6;
  double threshold = 1e-4;  // relative improvement required, as in ReduceLROnPlateau
};

/// Halves (by default) the learning rate once the monitored metric has failed
/// to improve for more than `patience` consecutive epochs. Lower is better.
class PlateauSchedule {
 public:
  PlateauSchedule(double initial_lr, PlateauOptions options = {});

  /// Feeds one epoch's metric and returns the (possibly reduced) rate.
  double step(double metric);

  double lr() const noexcept { return lr_; }
  double best() const noexcept { return best_; }
  std::size_t bad_epochs() const noexcept { return bad_epochs_; }
  std::size_t reductions() const noexcept { return reductions_; }

 private:
  PlateauOptions options_;
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
  std::size_t reductions_ = 0;
};

}  // namespace pft
