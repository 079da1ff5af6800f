#include "pft/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "pft/error.hpp"

namespace pft {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
  const auto n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, fill), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) +
                     " values");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("tensor: non-finite initial value");
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, {v}, requires_grad); }

namespace {
const detail::TensorNode& deref(const std::shared_ptr<detail::TensorNode>& n) {
  if (!n) throw ContractError("tensor: use of an undefined tensor");
  return *n;
}
}  // namespace

const Shape& Tensor::shape() const { return deref(node_).shape; }
std::size_t Tensor::size() const { return deref(node_).value.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::span<const double> Tensor::values() const { return deref(node_).value; }
std::span<double> Tensor::mutable_values() {
  deref(node_);
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("tensor: item() on a tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return deref(node_).requires_grad; }

void Tensor::set_requires_grad(bool on) {
  deref(node_);
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}

bool Tensor::has_grad() const { return !deref(node_).grad.empty(); }
std::span<const double> Tensor::grad() const { return deref(node_).grad; }

std::span<double> Tensor::mutable_grad() {
  deref(node_);
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  deref(node_);
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& n = deref(node_);
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = n.shape;
  node->value = n.value;
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::mul_scalar: return "mul_scalar";
    case OpKind::relu: return "relu";
    case OpKind::reshape: return "reshape";
    case OpKind::concat: return "concat";
    case OpKind::mean_over_axis: return "mean_over_axis";
    case OpKind::std_over_axis: return "std_over_axis";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sum: return "sum";
    case OpKind::square: return "square";
  }
  return "unknown";
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }
Tape::~Tape() { g_active_tape = previous_; }
Tape* Tape::active() noexcept { return g_active_tape; }

void Tape::record(OpKind kind, std::vector<Tensor> operands, Tensor result, std::function<void()> backward) {
  if (consumed_) throw ContractError(std::string("tape: recording ") + op_name(kind) + " on a consumed tape");
  records_.push_back(Record{kind, std::move(operands), std::move(result), std::move(backward)});
}

void backward(const Tensor& loss, Tape& tape) {
  if (tape.consumed_) throw ContractError("backward: tape already consumed");
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  tape.consumed_ = true;
  if (!loss.requires_grad()) return;

  const bool produced_here = std::any_of(tape.records_.begin(), tape.records_.end(),
                                         [&](const Tape::Record& r) { return r.result.same_storage(loss); });
  Tensor seed = loss;
  if (!produced_here && !tape.records_.empty()) {
    throw ContractError("backward: loss was not produced on this tape");
  }
  seed.mutable_grad()[0] += 1.0;

  for (auto it = tape.records_.rbegin(); it != tape.records_.rend(); ++it) {
    if (!it->result.has_grad()) continue;  // not on a path to the loss
    it->backward();
  }
  // Interior buffers are no longer needed once gradients reached the leaves.
  for (auto& r : tape.records_) {
    r.backward = nullptr;
  }
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

}  // namespace pft
