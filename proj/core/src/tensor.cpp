#include "relcap/tensor.hpp"

#include <atomic>
#include <numeric>
#include <sstream>

#include "relcap/errors.hpp"

namespace relcap::autodiff {

namespace {
std::atomic<bool> g_finite_checks{true};

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw ShapeError("tensor rank must be 1 or 2, got shape " + to_string(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + to_string(shape));
  }
}
}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  validate_shape(shape);
  auto node = std::make_shared<detail::Node>();
  node->data.assign(numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  validate_shape(shape);
  if (numel(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  std::vector<double> values;
  std::size_t ncols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& row : rows) {
    if (row.size() != ncols) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from({rows.size(), ncols}, std::move(values), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return from({values.size()}, std::vector<double>(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->data.size() : 0; }

std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }

std::size_t Tensor::cols() const { return rank() == 2 ? shape()[1] : shape()[0]; }

std::span<const double> Tensor::data() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->data;
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (row >= rows() || col >= cols()) throw IndexError("tensor index out of range");
  return node_->data[row * cols() + col];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_) throw ContractError("use of undefined tensor");
  node_->requires_grad = flag;
}

Tensor Tensor::clone() const {
  auto node = std::make_shared<detail::Node>(*node_);
  return Tensor(std::move(node));
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(std::shared_ptr<detail::Node> output, BackwardFn backward) {
  entries_.push_back(Entry{std::move(output), std::move(backward)});
}

NoGradGuard::NoGradGuard() : previous_(Tape::active().grad_enabled_) { Tape::active().grad_enabled_ = false; }

NoGradGuard::~NoGradGuard() { Tape::active().grad_enabled_ = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on undefined tensor");
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  auto& tape = Tape::active();
  const auto& root = loss.node();
  std::size_t end = tape.entries_.size();
  while (end > 0 && tape.entries_[end - 1].output != root) --end;
  if (end == 0) {
    tape.clear();
    throw ContractError("backward: loss was not produced on the active tape");
  }
  root->grad_buffer()[0] += 1.0;
  for (std::size_t i = end; i-- > 0;) {
    auto& entry = tape.entries_[i];
    if (!entry.output->grad.empty()) entry.backward();
  }
  tape.clear();
}

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }

bool finite_checks() { return g_finite_checks.load(std::memory_order_relaxed); }

}  // namespace relcap::autodiff
