#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace relcap::autodiff {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

/// Dense row-major tensor of doubles. Copies share storage (handle semantics,
/// like a framework tensor); use clone() for a deep copy.
///
/// Rank is 1 or 2. A rank-1 tensor of length n behaves as a 1 x n row when an
/// op needs a matrix view. A scalar has shape {1}.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool has_grad() const;
  std::span<const double> grad() const;  // empty span when no gradient
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  Tensor clone() const;
  Tensor detach() const;

  /// True when both handles refer to the same storage.
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Ordered record of differentiable ops executed on this thread. Entries are
/// appended as ops run, so parents always precede children.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  static Tape& active();

  void record(std::shared_ptr<detail::Node> output, BackwardFn backward);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  bool grad_enabled() const { return grad_enabled_; }

 private:
  friend class NoGradGuard;
  friend void backward(const Tensor& loss);

  struct Entry {
    std::shared_ptr<detail::Node> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool grad_enabled_ = true;
};

/// Disables tape recording on this thread for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse pass from a scalar loss. Every requires_grad tensor that
/// contributed to the loss accumulates dLoss/dTensor; the tape is cleared.
void backward(const Tensor& loss);

/// When enabled (the default) every op checks its output for NaN/Inf and
/// throws NumericError naming the op.
void set_finite_checks(bool enabled);
bool finite_checks();

}  // namespace relcap::autodiff
