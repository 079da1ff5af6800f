#include "pft/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "pft/error.hpp"

namespace pft {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

bool tracking(std::initializer_list<const Tensor*> operands) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(operands.begin(), operands.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Tensor finish(OpKind kind, Shape shape, std::vector<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op_name(kind)) + ": produced a non-finite value", shape_str(shape));
    }
  }
  return Tensor::from(std::move(shape), std::move(values));
}

void attach(OpKind kind, std::vector<Tensor> operands, Tensor& result, std::function<void()> fn) {
  result.set_requires_grad(true);
  Tape::active()->record(kind, std::move(operands), result, std::move(fn));
}

// Accumulates `g` into t's gradient when t participates in differentiation.
template <typename F>
void accumulate(Tensor t, F&& fill) {
  if (!t.requires_grad()) return;
  fill(t.mutable_grad());
}

struct AxisSplit {
  std::size_t outer;
  std::size_t n;
  std::size_t inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, OpKind kind) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op_name(kind)) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) out.push_back(shape[i]);
  return out;
}

// Equal shapes, or rhs rank-1 matching lhs's last extent (row broadcast).
bool broadcast_layout(const Tensor& a, const Tensor& b, OpKind kind) {
  if (a.shape() == b.shape()) return false;
  if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0)) return true;
  throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary(OpKind kind, const Tensor& a, const Tensor& b, Fwd fwd, GradA ga, GradB gb) {
  const bool bc = broadcast_layout(a, b, kind);
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t width = bc ? b.size() : av.size();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i % width]);
  Tensor result = finish(kind, a.shape(), std::move(out));
  if (tracking({&a, &b})) {
    attach(kind, {a, b}, result, [a, b, result, bc, width, ga, gb]() mutable {
      const auto g = result.grad();
      const auto av = a.values();
      const auto bv = b.values();
      accumulate(a, [&](std::span<double> da) {
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += ga(g[i], av[i], bv[i % width]);
      });
      accumulate(b, [&](std::span<double> db) {
        for (std::size_t i = 0; i < g.size(); ++i) db[bc ? i % width : i] += gb(g[i], av[i], bv[i % width]);
      });
    });
  }
  return result;
}

template <typename Fwd, typename Grad>
Tensor unary(OpKind kind, const Tensor& a, Fwd fwd, Grad grad) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  Tensor result = finish(kind, a.shape(), std::move(out));
  if (tracking({&a})) {
    attach(kind, {a}, result, [a, result, grad]() mutable {
      const auto g = result.grad();
      const auto av = a.values();
      const auto yv = result.values();
      accumulate(a, [&](std::span<double> da) {
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += grad(g[i], av[i], yv[i]);
      });
    });
  }
  return result;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const auto n = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto m = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(n * m));
  MatMap(out.data(), n, m).noalias() = ConstMatMap(a.values().data(), n, k) * ConstMatMap(b.values().data(), k, m);
  Tensor result = finish(OpKind::matmul, {a.dim(0), b.dim(1)}, std::move(out));
  if (tracking({&a, &b})) {
    attach(OpKind::matmul, {a, b}, result, [a, b, result, n, k, m]() mutable {
      ConstMatMap g(result.grad().data(), n, m);
      accumulate(a, [&](std::span<double> da) {
        MatMap(da.data(), n, k).noalias() += g * ConstMatMap(b.values().data(), k, m).transpose();
      });
      accumulate(b, [&](std::span<double> db) {
        MatMap(db.data(), k, m).noalias() += ConstMatMap(a.values().data(), n, k).transpose() * g;
      });
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::add, a, b, [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::sub, a, b, [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::mul, a, b, [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary(
      OpKind::mul_scalar, a, [s](double x) { return x * s; }, [s](double g, double, double) { return g * s; });
}

Tensor relu(const Tensor& a) {
  return unary(
      OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double g, double x, double) { return x > 0.0 ? g : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      OpKind::exp, a, [](double x) { return std::exp(x); }, [](double g, double, double y) { return g * y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (v <= 0.0) throw NumericError("log: argument must be positive", shape_str(a.shape()));
  }
  return unary(
      OpKind::log, a, [](double x) { return std::log(x); }, [](double g, double x, double) { return g / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      OpKind::square, a, [](double x) { return x * x; }, [](double g, double x, double) { return 2.0 * g * x; });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  const auto av = a.values();
  Tensor result = finish(OpKind::reshape, std::move(shape), std::vector<double>(av.begin(), av.end()));
  if (tracking({&a})) {
    attach(OpKind::reshape, {a}, result, [a, result]() mutable {
      const auto g = result.grad();
      accumulate(a, [&](std::span<double> da) {
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      });
    });
  }
  return result;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& first = parts[0].shape();
  Shape out_shape = first;
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(s));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
      }
    }
    out_shape[axis] += s[axis];
  }
  const auto outer = split_axis(first, axis, OpKind::concat).outer;
  std::vector<std::size_t> chunk;
  for (const auto& p : parts) chunk.push_back(split_axis(p.shape(), axis, OpKind::concat).n *
                                               split_axis(p.shape(), axis, OpKind::concat).inner);
  const std::size_t row = std::accumulate(chunk.begin(), chunk.end(), std::size_t{0});
  std::vector<double> out(outer * row);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t off = o * row;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const auto v = parts[p].values();
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * chunk[p]), chunk[p], out.begin() + static_cast<std::ptrdiff_t>(off));
      off += chunk[p];
    }
  }
  Tensor result = finish(OpKind::concat, out_shape, std::move(out));
  const bool any = Tape::active() && std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    std::vector<Tensor> ops(parts.begin(), parts.end());
    attach(OpKind::concat, ops, result, [ops, result, chunk, outer, row]() mutable {
      const auto g = result.grad();
      std::size_t start = 0;
      for (std::size_t p = 0; p < ops.size(); ++p) {
        accumulate(ops[p], [&](std::span<double> dp) {
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < chunk[p]; ++j) dp[o * chunk[p] + j] += g[o * row + start + j];
        });
        start += chunk[p];
      }
    });
  }
  return result;
}

Tensor mean_over_axis(const Tensor& a, std::size_t axis) {
  const auto s = split_axis(a.shape(), axis, OpKind::mean_over_axis);
  if (s.n == 0) throw ShapeError("mean_over_axis: empty axis in " + shape_str(a.shape()));
  const auto av = a.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += av[(o * s.n + j) * s.inner + i];
  for (double& v : out) v /= static_cast<double>(s.n);
  Tensor result = finish(OpKind::mean_over_axis, drop_axis(a.shape(), axis), std::move(out));
  if (tracking({&a})) {
    attach(OpKind::mean_over_axis, {a}, result, [a, result, s]() mutable {
      const auto g = result.grad();
      const double inv = 1.0 / static_cast<double>(s.n);
      accumulate(a, [&](std::span<double> da) {
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t j = 0; j < s.n; ++j)
            for (std::size_t i = 0; i < s.inner; ++i) da[(o * s.n + j) * s.inner + i] += g[o * s.inner + i] * inv;
      });
    });
  }
  return result;
}

Tensor std_over_axis(const Tensor& a, std::size_t axis, double eps) {
  const auto s = split_axis(a.shape(), axis, OpKind::std_over_axis);
  if (s.n < 2) {
    throw ShapeError("std_over_axis: need at least 2 elements along axis " + std::to_string(axis) + ", got " +
                     shape_str(a.shape()));
  }
  const auto av = a.values();
  const double inv = 1.0 / static_cast<double>(s.n);
  std::vector<double> mean(s.outer * s.inner, 0.0);
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t i = 0; i < s.inner; ++i) mean[o * s.inner + i] += av[(o * s.n + j) * s.inner + i] * inv;
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double d = av[(o * s.n + j) * s.inner + i] - mean[o * s.inner + i];
        out[o * s.inner + i] += d * d * inv;
      }
  for (double& v : out) v = std::sqrt(v + eps);
  Tensor result = finish(OpKind::std_over_axis, drop_axis(a.shape(), axis), std::move(out));
  if (tracking({&a})) {
    attach(OpKind::std_over_axis, {a}, result, [a, result, s, mean = std::move(mean), inv]() mutable {
      const auto g = result.grad();
      const auto av = a.values();
      const auto sd = result.values();
      // d sqrt(var + eps) / dx_j = (x_j - mean) / (n * sd)
      accumulate(a, [&](std::span<double> da) {
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t j = 0; j < s.n; ++j)
            for (std::size_t i = 0; i < s.inner; ++i) {
              const std::size_t r = o * s.inner + i;
              const std::size_t idx = (o * s.n + j) * s.inner + i;
              da[idx] += g[r] * (av[idx] - mean[r]) * inv / sd[r];
            }
      });
    });
  }
  return result;
}

Tensor log_softmax(const Tensor& a) {
  if (a.rank() == 0 || a.shape().back() == 0) throw ShapeError("log_softmax: need a non-empty last axis");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.size() / n;
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[j] - lse;
  }
  Tensor result = finish(OpKind::log_softmax, a.shape(), std::move(out));
  if (tracking({&a})) {
    attach(OpKind::log_softmax, {a}, result, [a, result, n, rows]() mutable {
      const auto g = result.grad();
      const auto y = result.values();
      accumulate(a, [&](std::span<double> da) {
        for (std::size_t r = 0; r < rows; ++r) {
          double gs = 0.0;
          for (std::size_t j = 0; j < n; ++j) gs += g[r * n + j];
          for (std::size_t j = 0; j < n; ++j) da[r * n + j] += g[r * n + j] - std::exp(y[r * n + j]) * gs;
        }
      });
    });
  }
  return result;
}

Tensor sum(const Tensor& a) {
  const auto av = a.values();
  const double total = std::accumulate(av.begin(), av.end(), 0.0);
  Tensor result = finish(OpKind::sum, {}, {total});
  if (tracking({&a})) {
    attach(OpKind::sum, {a}, result, [a, result]() mutable {
      const double g = result.grad()[0];
      accumulate(a, [&](std::span<double> da) {
        for (double& d : da) d += g;
      });
    });
  }
  return result;
}

}  // namespace pft
