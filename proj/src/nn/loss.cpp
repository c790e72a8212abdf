#include "qhd/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qhd::nn {

LossResult mse_loss(const ArrayND& output, const ArrayND& target) {
    if (output.shape() != target.shape()) throw std::invalid_argument("mse_loss: shape mismatch");
    if (output.empty()) throw std::invalid_argument("mse_loss: empty arrays");
    LossResult r{0.0, ArrayND(output.shape())};
    const double inv = 1.0 / static_cast<double>(output.size());
    for (std::size_t i = 0; i < output.size(); ++i) {
        const double d = output[i] - target[i];
        r.value += d * d;
        r.grad[i] = 2.0 * d * inv;
    }
    r.value *= inv;
    return r;
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += p[i] = std::exp(logits[i] - top);
    for (double& v : p) v /= sum;
    return p;
}

namespace {

ClassLoss crossentropy_for_label(std::span<const double> logits, std::size_t label) {
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - top);
    const double log_norm = top + std::log(sum);
    ClassLoss r{log_norm - logits[label], std::vector<double>(logits.size())};
    for (std::size_t i = 0; i < logits.size(); ++i) {
        r.grad[i] = std::exp(logits[i] - log_norm) - (i == label ? 1.0 : 0.0);
    }
    return r;
}

}  // namespace

ClassLoss softmax_crossentropy(std::span<const double> logits, std::span<const double> one_hot) {
    if (logits.empty() || logits.size() != one_hot.size()) {
        throw std::invalid_argument("softmax_crossentropy: logits and target lengths differ");
    }
    std::size_t label = one_hot.size();
    for (std::size_t i = 0; i < one_hot.size(); ++i) {
        if (one_hot[i] == 1.0 && label == one_hot.size()) {
            label = i;
        } else if (one_hot[i] != 0.0) {
            throw std::invalid_argument("softmax_crossentropy: target is not one-hot");
        }
    }
    if (label == one_hot.size()) throw std::invalid_argument("softmax_crossentropy: target is not one-hot");
    return crossentropy_for_label(logits, label);
}

LossResult softmax_crossentropy_batch(const ArrayND& logits, std::span<const std::size_t> labels) {
    if (logits.rank() < 2 || logits.extent(0) != labels.size() || labels.empty()) {
        throw std::invalid_argument("softmax_crossentropy_batch: one label per batch row required");
    }
    const auto n = labels.size();
    const auto k = logits.size() / n;
    LossResult r{0.0, ArrayND(logits.shape())};
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t s = 0; s < n; ++s) {
        if (labels[s] >= k) throw std::invalid_argument("softmax_crossentropy_batch: label out of range");
        const auto row = logits.values().subspan(s * k, k);
        const auto c = crossentropy_for_label(row, labels[s]);
        r.value += c.value * inv;
        for (std::size_t i = 0; i < k; ++i) r.grad[s * k + i] = c.grad[i] * inv;
    }
    return r;
}

}  // namespace qhd::nn
