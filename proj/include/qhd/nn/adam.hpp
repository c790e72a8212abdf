#pragma once

#include <cstdint>

#include "qhd/nn/network.hpp"

namespace qhd::nn {

/// Bias-corrected Adam. Moment buffers are allocated on the first update.
struct AdamState {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t t = 0;
    ParamSet m;
    ParamSet v;

    explicit AdamState(double learning_rate = 0.001) : lr(learning_rate) {}
};

void adam_update(AdamState& state, ParamSet& params, const ParamSet& grads);

}  // namespace qhd::nn
