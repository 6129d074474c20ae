#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "relcap/tensor.hpp"

namespace relcap::autodiff {

// Differentiable ops. Each records itself on the active tape when any input
// requires a gradient and recording is enabled.

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// x[m x n] + bias[n], bias broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

/// Concatenation along the last axis. All parts need the same row count.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);

/// Columns [begin, end) of the last axis.
Tensor slice(const Tensor& x, std::size_t begin, std::size_t end);

/// Row lookup: out[i] = table[ids[i]]. Output is ids.size() x table.cols().
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

Tensor sum(const Tensor& x);

/// -log softmax(logits)[target] for a single logit vector.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target);

/// Sum over rows of weights[i] * -log softmax(logits[i])[targets[i]].
/// Rows with zero weight are skipped entirely (their targets are not read).
Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> targets,
                          std::span<const double> weights);

/// Sum over i of weights[i] * binary logistic loss of logits[i] vs labels[i].
Tensor logistic_loss(const Tensor& logits, std::span<const double> labels,
                     std::span<const double> weights);

/// Sum over rows of weights[i] * sum_j smoothL1(pred[i][j] - target[i][j]),
/// with smoothL1(x) = 0.5 x^2 if |x| < 1 else |x| - 0.5.
Tensor smooth_l1(const Tensor& pred, std::span<const double> target, std::span<const double> weights);

/// Plain (non-recorded) helpers used by decoders and metrics.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace relcap::autodiff
