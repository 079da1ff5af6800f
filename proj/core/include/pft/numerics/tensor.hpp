#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pft {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major array of doubles taking part in reverse-mode differentiation.
///
/// A Tensor is a cheap handle: copies alias the same storage. Use clone() for an
/// independent deep copy (parameters of a personalised translator, for example).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * shape()[1] + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();  // allocates a zero buffer on first use
  void zero_grad();

  /// Same values, no gradient tracking, no shared storage.
  Tensor detach() const;
  /// Deep copy that keeps requires_grad but drops any accumulated gradient.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }
  const std::shared_ptr<detail::TensorNode>& node() const noexcept { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

enum class OpKind {
  matmul,
  add,
  sub,
  mul,
  mul_scalar,
  relu,
  reshape,
  concat,
  mean_over_axis,
  std_over_axis,
  log_softmax,
  exp,
  log,
  sum,
  square,
};

const char* op_name(OpKind kind);

/// Ordered record of differentiable operations executed while the tape is
/// active on the current thread. Constructing a Tape activates it; destruction
/// restores whichever tape was active before.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const noexcept { return records_.size(); }
  bool consumed() const noexcept { return consumed_; }
  OpKind kind(std::size_t i) const { return records_.at(i).kind; }

  static Tape* active() noexcept;

  void record(OpKind kind, std::vector<Tensor> operands, Tensor result, std::function<void()> backward);

 private:
  struct Record {
    OpKind kind;
    std::vector<Tensor> operands;
    Tensor result;
    std::function<void()> backward;
  };
  std::vector<Record> records_;
  bool consumed_ = false;
  Tape* previous_ = nullptr;

  friend void backward(const Tensor& loss, Tape& tape);
};

/// Populates gradients of every tensor on the tape that requires one.
/// Leaf gradients accumulate; the tape cannot be replayed afterwards.
void backward(const Tensor& loss, Tape& tape);

/// Suspends recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

}  // namespace pft
