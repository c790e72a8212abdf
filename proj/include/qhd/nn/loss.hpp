#pragma once

#include <span>
#include <vector>

#include "qhd/nn/array.hpp"

namespace qhd::nn {

struct LossResult {
    double value = 0.0;
    ArrayND grad;
};

/// Mean over all elements of (output - target)^2.
LossResult mse_loss(const ArrayND& output, const ArrayND& target);

/// Numerically stable softmax (max-subtracted).
std::vector<double> softmax(std::span<const double> logits);

struct ClassLoss {
    double value = 0.0;
    std::vector<double> grad;
};

/// -log softmax(logits)[target]; rejects targets that are not one-hot.
ClassLoss softmax_crossentropy(std::span<const double> logits, std::span<const double> one_hot);

/// Batch mean of the above for logits shaped (N, classes) and integer labels.
LossResult softmax_crossentropy_batch(const ArrayND& logits, std::span<const std::size_t> labels);

}  // namespace qhd::nn
