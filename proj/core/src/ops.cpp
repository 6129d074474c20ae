#include "relcap/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "relcap/errors.hpp"

namespace relcap::autodiff {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

using NodePtr = std::shared_ptr<detail::Node>;

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active().grad_enabled()) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void check_finite(const std::vector<double>& values, const char* op) {
  if (!finite_checks()) return;
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

Tensor make_output(Shape shape, std::vector<double> values, bool grad, const char* op) {
  check_finite(values, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = grad;
  return Tensor(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

// Accumulate into a parent's gradient only when it participates in autodiff.
template <typename Fn>
void accumulate(const NodePtr& parent, Fn&& fn) {
  if (parent->requires_grad) fn(parent->grad_buffer());
}

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Bwd bwd) {
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  bool grad = wants_grad({&x});
  Tensor result = make_output(x.shape(), std::move(out), grad, op);
  if (grad) {
    NodePtr xn = x.node();
    NodePtr yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    Tape::active().record(yn, [xn, yw, bwd] {
      auto y = yw.lock();
      accumulate(xn, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += y->grad[i] * bwd(xn->data[i], y->data[i]);
      });
    });
  }
  return result;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  bool grad = wants_grad({&a, &b});
  Tensor result = make_output({m, n}, std::move(out), grad, "matmul");
  if (grad) {
    NodePtr an = a.node(), bn = b.node(), yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    Tape::active().record(yn, [an, bn, yw, m, k, n] {
      auto y = yw.lock();
      ConstMap dy(y->grad.data(), m, n);
      accumulate(an, [&](std::vector<double>& g) {
        MutMap(g.data(), m, k).noalias() += dy * ConstMap(bn->data.data(), k, n).transpose();
      });
      accumulate(bn, [&](std::vector<double>& g) {
        MutMap(g.data(), k, n).noalias() += ConstMap(an->data.data(), m, k).transpose() * dy;
      });
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  bool grad = wants_grad({&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), grad, "add");
  if (grad) {
    NodePtr an = a.node(), bn = b.node(), yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    Tape::active().record(yn, [an, bn, yw] {
      auto y = yw.lock();
      for (const auto& p : {an, bn}) {
        accumulate(p, [&](std::vector<double>& g) {
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += y->grad[i];
        });
      }
    });
  }
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  bool grad = wants_grad({&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), grad, "mul");
  if (grad) {
    NodePtr an = a.node(), bn = b.node(), yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    Tape::active().record(yn, [an, bn, yw] {
      auto y = yw.lock();
      accumulate(an, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += y->grad[i] * bn->data[i];
      });
      accumulate(bn, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += y->grad[i] * an->data[i];
      });
    });
  }
  return result;
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not fit " + to_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto b = bias.data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += b[c];
  }
  bool grad = wants_grad({&x, &bias});
  Tensor result = make_output(x.shape(), std::move(out), grad, "add_bias");
  if (grad) {
    NodePtr xn = x.node(), bn = bias.node(), yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    Tape::active().record(yn, [xn, bn, yw, m, n] {
      auto y = yw.lock();
      accumulate(xn, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += y->grad[i];
      });
      accumulate(bn, [&](std::vector<double>& g) {
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) g[c] += y->grad[r * n + c];
        }
      });
    });
  }
  return result;
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const std::size_t m = parts.front().rows();
  const bool as_matrix = parts.front().rank() == 2;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m || (p.rank() == 2) != as_matrix) {
      throw ShapeError("concat: incompatible operand " + to_string(p.shape()));
    }
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    auto src = p.data();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(src.begin() + r * w, w, out.begin() + r * total + offset);
    }
    offset += w;
  }
  bool grad = false;
  if (Tape::active().grad_enabled()) {
    grad = std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  }
  Shape shape = as_matrix ? Shape{m, total} : Shape{total};
  Tensor result = make_output(std::move(shape), std::move(out), grad, "concat");
  if (grad) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    NodePtr yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    Tape::active().record(yn, [nodes, yw, m, total] {
      auto y = yw.lock();
      std::size_t off = 0;
      for (const auto& p : nodes) {
        const std::size_t w = p->data.size() / m;
        accumulate(p, [&](std::vector<double>& g) {
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < w; ++c) g[r * w + c] += y->grad[r * total + off + c];
          }
        });
        off += w;
      }
    });
  }
  return result;
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > n) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                     to_string(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  auto src = x.data();
  for (std::size_t r = 0; r < m; ++r) std::copy_n(src.begin() + r * n + begin, w, out.begin() + r * w);
  bool grad = wants_grad({&x});
  Shape shape = x.rank() == 2 ? Shape{m, w} : Shape{w};
  Tensor result = make_output(std::move(shape), std::move(out), grad, "slice");
  if (grad) {
    NodePtr xn = x.node(), yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    Tape::active().record(yn, [xn, yw, m, n, begin, w] {
      auto y = yw.lock();
      accumulate(xn, [&](std::vector<double>& g) {
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < w; ++c) g[r * n + begin + c] += y->grad[r * w + c];
        }
      });
    });
  }
  return result;
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) throw ShapeError("gather_rows expects a rank-2 table");
  if (ids.empty()) throw ShapeError("gather_rows with no ids");
  const std::size_t v = table.rows(), e = table.cols();
  std::vector<double> out(ids.size() * e);
  auto src = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      throw IndexError("row id " + std::to_string(ids[i]) + " out of range for table of " + std::to_string(v) +
                       " rows");
    }
    std::copy_n(src.begin() + ids[i] * e, e, out.begin() + i * e);
  }
  bool grad = wants_grad({&table});
  Tensor result = make_output({ids.size(), e}, std::move(out), grad, "gather_rows");
  if (grad) {
    NodePtr tn = table.node(), yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    Tape::active().record(yn, [tn, yw, rows = std::move(rows), e] {
      auto y = yw.lock();
      accumulate(tn, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          for (std::size_t c = 0; c < e; ++c) g[rows[i] * e + c] += y->grad[i * e + c];
        }
      });
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  bool grad = wants_grad({&x});
  Tensor result = make_output({1}, {total}, grad, "sum");
  if (grad) {
    NodePtr xn = x.node(), yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    Tape::active().record(yn, [xn, yw] {
      double dy = yw.lock()->grad[0];
      accumulate(xn, [&](std::vector<double>& g) {
        for (double& gi : g) gi += dy;
      });
    });
  }
  return result;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  double mx = *std::max_element(out.begin(), out.end());
  double z = 0.0;
  for (double v : out) z += std::exp(v - mx);
  double lse = mx + std::log(z);
  for (double& v : out) v -= lse;
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target) {
  const std::size_t ids[1] = {target};
  const double weights[1] = {1.0};
  if (logits.rows() != 1) throw ShapeError("softmax_cross_entropy expects a single logit vector");
  if (target >= logits.cols()) {
    throw IndexError("target class " + std::to_string(target) + " out of range for " +
                     std::to_string(logits.cols()) + " logits");
  }
  return cross_entropy_rows(logits, ids, weights);
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> targets,
                          std::span<const double> weights) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m || weights.size() != m) {
    throw ShapeError("cross_entropy_rows: " + std::to_string(m) + " rows but " + std::to_string(targets.size()) +
                     " targets and " + std::to_string(weights.size()) + " weights");
  }
  auto x = logits.data();
  // Cached softmax rows for the backward pass.
  std::vector<double> probs(m * n, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (weights[r] == 0.0) continue;
    if (targets[r] >= n) {
      throw IndexError("target class " + std::to_string(targets[r]) + " out of range for " + std::to_string(n) +
                       " logits");
    }
    auto row = x.subspan(r * n, n);
    auto logp = log_softmax(row);
    total += weights[r] * -logp[targets[r]];
    for (std::size_t c = 0; c < n; ++c) probs[r * n + c] = std::exp(logp[c]);
  }
  bool grad = wants_grad({&logits});
  Tensor result = make_output({1}, {total}, grad, "cross_entropy");
  if (grad) {
    NodePtr ln = logits.node(), yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    std::vector<std::size_t> t(targets.begin(), targets.end());
    std::vector<double> w(weights.begin(), weights.end());
    Tape::active().record(yn, [ln, yw, probs = std::move(probs), t = std::move(t), w = std::move(w), m, n] {
      double dy = yw.lock()->grad[0];
      accumulate(ln, [&](std::vector<double>& g) {
        for (std::size_t r = 0; r < m; ++r) {
          if (w[r] == 0.0) continue;
          double s = dy * w[r];
          for (std::size_t c = 0; c < n; ++c) {
            double onehot = c == t[r] ? 1.0 : 0.0;
            g[r * n + c] += s * (probs[r * n + c] - onehot);
          }
        }
      });
    });
  }
  return result;
}

Tensor logistic_loss(const Tensor& logits, std::span<const double> labels, std::span<const double> weights) {
  const std::size_t m = logits.size();
  if (labels.size() != m || weights.size() != m) throw ShapeError("logistic_loss: length mismatch");
  auto x = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    // log(1 + exp(-|x|)) + max(x, 0) - x*y, stable for large |x|
    double v = x[i];
    double loss = std::max(v, 0.0) - v * labels[i] + std::log1p(std::exp(-std::abs(v)));
    total += weights[i] * loss;
  }
  bool grad = wants_grad({&logits});
  Tensor result = make_output({1}, {total}, grad, "logistic_loss");
  if (grad) {
    NodePtr ln = logits.node(), yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    std::vector<double> y(labels.begin(), labels.end());
    std::vector<double> w(weights.begin(), weights.end());
    Tape::active().record(yn, [ln, yw, y = std::move(y), w = std::move(w)] {
      double dy = yw.lock()->grad[0];
      accumulate(ln, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          double p = 1.0 / (1.0 + std::exp(-ln->data[i]));
          g[i] += dy * w[i] * (p - y[i]);
        }
      });
    });
  }
  return result;
}

Tensor smooth_l1(const Tensor& pred, std::span<const double> target, std::span<const double> weights) {
  const std::size_t m = pred.rows(), n = pred.cols();
  if (target.size() != pred.size() || weights.size() != m) throw ShapeError("smooth_l1: length mismatch");
  auto x = pred.data();
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (weights[r] == 0.0) continue;
    double row = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      double d = x[r * n + c] - target[r * n + c];
      row += std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
    }
    total += weights[r] * row;
  }
  bool grad = wants_grad({&pred});
  Tensor result = make_output({1}, {total}, grad, "smooth_l1");
  if (grad) {
    NodePtr pn = pred.node(), yn = result.node();
    std::weak_ptr<detail::Node> yw = yn;
    std::vector<double> t(target.begin(), target.end());
    std::vector<double> w(weights.begin(), weights.end());
    Tape::active().record(yn, [pn, yw, t = std::move(t), w = std::move(w), m, n] {
      double dy = yw.lock()->grad[0];
      accumulate(pn, [&](std::vector<double>& g) {
        for (std::size_t r = 0; r < m; ++r) {
          if (w[r] == 0.0) continue;
          for (std::size_t c = 0; c < n; ++c) {
            double d = pn->data[r * n + c] - t[r * n + c];
            double slope = std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
            g[r * n + c] += dy * w[r] * slope;
          }
        }
      });
    });
  }
  return result;
}

}  // namespace relcap::autodiff
