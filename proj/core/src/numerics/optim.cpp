#include "pft/numerics/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pft/error.hpp"
#include "pft/log.hpp"

namespace pft {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  if (!(options_.lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::set_lr(double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  options_.lr = lr;
}

std::size_t Adam::step() {
  if (params_.empty()) {
    ++t_;
    warn("adam: step over an empty parameter set; every network is frozen");
    return 0;
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("adam: parameter " + std::to_string(i) + " of shape " + shape_str(params_[i].shape()) +
                          " has no gradient");
    }
    if (m_[i].size() != params_[i].size()) throw ContractError("adam: moment shape no longer matches parameter");
  }
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].mutable_values();
    const auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      w[j] -= options_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.eps);
    }
    params_[i].zero_grad();
  }
  return params_.size();
}

PlateauSchedule::PlateauSchedule(double initial_lr, PlateauOptions options) : options_(options), lr_(initial_lr) {
  if (!(initial_lr > 0.0)) throw ConfigError("plateau: initial learning rate must be positive");
  if (!(options_.factor > 0.0 && options_.factor < 1.0)) throw ConfigError("plateau: factor must lie in (0, 1)");
}

double PlateauSchedule::step(double metric) {
  if (!std::isfinite(metric)) throw NumericError("plateau: non-finite metric");
  if (metric < best_ * (1.0 - options_.threshold) || !std::isfinite(best_)) {
    best_ = metric;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
  }
  if (bad_epochs_ > options_.patience) {
    const double reduced = std::max(lr_ * options_.factor, options_.min_lr);
    if (reduced < lr_) ++reductions_;
    lr_ = reduced;
    bad_epochs_ = 0;
  }
  return lr_;
}

}  // namespace pft
