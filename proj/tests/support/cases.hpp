#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string_view>
#include <tuple>
#include <vector>

#include "pft/losses/losses.hpp"
#include "pft/numerics/ops.hpp"
#include "pft/numerics/rng.hpp"
#include "pft/pairing/pairing.hpp"
#include "support/gradcheck.hpp"

// Seeded gradient cases and reference oracles shared by the unit tests and
// the acceptance runner.
namespace pft::testing {

inline constexpr std::array kAllOps{OpKind::matmul, OpKind::add,        OpKind::sub,           OpKind::mul,
                                    OpKind::mul_scalar, OpKind::relu,   OpKind::reshape,       OpKind::concat,
                                    OpKind::mean_over_axis, OpKind::std_over_axis, OpKind::log_softmax,
                                    OpKind::exp, OpKind::log, OpKind::sum, OpKind::square};

// Scalar loss that routes every leaf used by `kind` through that operation.
inline Tensor op_case(OpKind kind, std::vector<Tensor>& x) {
  switch (kind) {
    case OpKind::matmul: return sum(square(matmul(x[0], x[1])));
    case OpKind::add: return sum(square(add(x[0], x[2])));
    case OpKind::sub: return sum(square(sub(x[0], x[2])));
    case OpKind::mul: return sum(mul(mul(x[0], x[2]), x[0]));
    case OpKind::mul_scalar: return sum(square(mul_scalar(x[0], -1.7)));
    case OpKind::relu: return sum(mul(relu(x[0]), x[0]));
    case OpKind::reshape: return sum(square(matmul(reshape(x[0], {4, 3}), x[3])));
    case OpKind::concat: {
      const std::vector<Tensor> parts{x[0], x[0], x[2]};
      return sum(square(concat(parts, 0)));
    }
    case OpKind::mean_over_axis: return sum(square(mean_over_axis(x[0], 0)));
    case OpKind::std_over_axis: return sum(std_over_axis(x[0], 0));
    case OpKind::log_softmax: return sum(mul(log_softmax(x[0]), x[2]));
    case OpKind::exp: return sum(exp(x[0]));
    case OpKind::log: return sum(log(square(x[0])));
    case OpKind::sum: return sum(x[0]);
    case OpKind::square: return sum(square(square(x[0])));
  }
  return {};
}

inline GradCheckResult check_op(OpKind kind, std::uint64_t seed) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(kind)));
  std::vector<Tensor> leaves{random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2}), random_tensor(rng, {3, 4}),
                             random_tensor(rng, {3, 2})};
  if (kind == OpKind::mul_scalar || kind == OpKind::add) leaves[2] = random_tensor(rng, {4});
  return gradcheck(leaves, [kind](std::vector<Tensor>& x) { return op_case(kind, x); });
}

inline constexpr std::array<std::string_view, 5> kObjectives{"cross_entropy", "consistency", "style", "source_total",
                                                             "target"};

// Each objective evaluated on logits produced by a small residual map, so the
// gradient flows through every term of the loss.
inline GradCheckResult check_objective(std::string_view which, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 500 + which.size()));
  const auto x1 = random_tensor(rng, {4, 3});
  const auto x2 = random_tensor(rng, {4, 3});
  const auto frozen = random_tensor(rng, {3, 2});
  const std::vector<int> labels{0, 1, 1, 0};
  std::vector<Tensor> leaves{random_tensor(rng, {3, 3}, -1, 1)};
  auto loss = [&](std::vector<Tensor>& w) -> Tensor {
    const auto f_hat = add(x1, matmul(x1, w[0]));
    const auto logits_hat = matmul(f_hat, frozen);
    const auto logits = matmul(x1, frozen);
    const auto ce = cross_entropy(logits_hat, labels);
    const auto kl = kl_divergence(logits, logits_hat);
    const auto st = style_loss(LayeredFeatures{{f_hat}, {0}}, LayeredFeatures{{x2}, {0}}, std::vector<std::size_t>{0});
    if (which == "cross_entropy") return ce;
    if (which == "consistency") return kl;
    if (which == "style") return st;
    if (which == "source_total") return source_total(ce, kl, st, {0.7, 0.3});
    return target_loss(logits, logits_hat);
  };
  return gradcheck(leaves, loss);
}

// Procrustes residual found by scanning the rotation angle and refining the
// best grid cell with a ternary search.
inline double procrustes_by_grid_search(std::span<const std::array<double, 2>> a, std::span<const std::array<double, 2>> b) {
  auto normalise = [](std::span<const std::array<double, 2>> p) {
    std::vector<std::array<double, 2>> out(p.begin(), p.end());
    double mx = 0, my = 0;
    for (const auto& q : out) {
      mx += q[0];
      my += q[1];
    }
    mx /= static_cast<double>(out.size());
    my /= static_cast<double>(out.size());
    double norm = 0;
    for (auto& q : out) {
      q[0] -= mx;
      q[1] -= my;
      norm += q[0] * q[0] + q[1] * q[1];
    }
    norm = std::sqrt(norm);
    for (auto& q : out) {
      q[0] /= norm;
      q[1] /= norm;
    }
    return out;
  };
  const auto na = normalise(a);
  const auto nb = normalise(b);
  auto fit = [&](double t) {
    const double c = std::cos(t), s = std::sin(t);
    double dot = 0;
    for (std::size_t i = 0; i < na.size(); ++i) {
      dot += na[i][0] * (c * nb[i][0] - s * nb[i][1]) + na[i][1] * (s * nb[i][0] + c * nb[i][1]);
    }
    return dot;
  };
  constexpr int kSteps = 20000;
  const double step = 2.0 * std::numbers::pi / kSteps;
  double best_t = 0, best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < kSteps; ++k) {
    const double v = fit(k * step);
    if (v > best) {
      best = v;
      best_t = k * step;
    }
  }
  double lo = best_t - step, hi = best_t + step;
  for (int it = 0; it < 200; ++it) {
    const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
    if (fit(m1) < fit(m2)) {
      lo = m1;
    } else {
      hi = m2;
    }
  }
  const double peak = fit(0.5 * (lo + hi));
  return std::max(0.0, 1.0 - peak * peak);
}

inline std::array<std::array<double, 2>, 10> random_shape(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::array<std::array<double, 2>, 10> l{};
  for (auto& p : l) p = {n(rng), n(rng)};
  return l;
}

// Nearest well-classified row of another subject by exhaustive scan; the
// smallest index wins ties. Returns the row count when no candidate exists.
inline std::vector<std::size_t> brute_force_cosine(const Tensor& f, std::span<const double> loss, std::span<const int> subjects,
                                                   double threshold) {
  const std::size_t n = f.dim(0), d = f.dim(1);
  std::vector<std::size_t> out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (subjects[j] == subjects[i] || loss[j] > threshold) continue;
      const double dist = cosine_distance(f.values().subspan(i * d, d), f.values().subspan(j * d, d));
      if (dist < best) {
        best = dist;
        out[i] = j;
      }
    }
  }
  return out;
}

// Enumerates every other subject, finds the least relaxed constraint tier
// that admits anyone, and returns the (score, id) minimum within it.
inline SubjectMatch exhaustive_landmark_match(const SubjectProfile& q, std::span<const SubjectProfile* const> all,
                                              const PairingConfig& cfg) {
  auto level_of = [&](const SubjectProfile& c) {
    const bool age_ok = std::abs(c.age - q.age) <= cfg.max_age_gap;
    const bool gender_ok = !cfg.same_gender_required || c.gender == q.gender;
    return age_ok && gender_ok ? 0 : gender_ok ? 1 : 2;
  };
  int tier = 2;
  for (const SubjectProfile* c : all)
    if (c->subject_id != q.subject_id) tier = std::min(tier, level_of(*c));
  std::tuple<double, int> best{std::numeric_limits<double>::infinity(), -1};
  for (const SubjectProfile* c : all) {
    if (c->subject_id == q.subject_id || level_of(*c) > tier) continue;
    best = std::min(best, std::tuple<double, int>{landmark_score(q, *c, cfg), c->subject_id});
  }
  return {std::get<1>(best), std::get<0>(best), tier};
}

}  // namespace pft::testing
