#pragma once

// Central finite-difference gradient oracle shared by the unit and
// acceptance suites. The scalar objective is sum_i r_i * y_i for a fixed
// random projection r, so the upstream gradient is r itself.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "qhd/nn/network.hpp"

namespace qhd::testing {

struct GradCheckResult {
    double worst_param_rel = 0.0;
    double worst_input_rel = 0.0;
    [[nodiscard]] double worst() const { return std::max(worst_param_rel, worst_input_rel); }
};

inline nn::ArrayND random_array(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
    nn::ArrayND a(std::move(shape));
    std::normal_distribution<double> d(0.0, scale);
    for (double& v : a.values()) v = d(rng);
    return a;
}

inline double norm_rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double diff = 0.0, na = 0.0, nn_ = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn_ += numeric[i] * numeric[i];
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nn_));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Checks every parameter and input gradient of `net` at `batch`. Dropout
/// masks are drawn once and frozen for the analytic and numeric passes.
inline GradCheckResult check_gradients(nn::Network& net, const nn::ArrayND& batch, std::uint64_t seed,
                                       double step = 1e-6) {
    std::mt19937_64 rng(seed);
    const auto probe = net.forward(batch, nn::Mode::training, &rng);
    const auto masks = probe.dropout_masks;
    const auto projection = random_array(probe.output().shape(), rng);

    auto objective = [&](const nn::Network& n, const nn::ArrayND& x) {
        const auto acts = n.forward_with_masks(x, masks);
        double s = 0.0;
        for (std::size_t i = 0; i < projection.size(); ++i) s += projection[i] * acts.output()[i];
        return s;
    };

    const auto acts = net.forward_with_masks(batch, masks);
    const auto grads = net.backward(acts, projection);

    GradCheckResult result;
    const std::size_t layer_count = net.params().size();
    for (std::size_t l = 0; l < layer_count; ++l) {
        for (std::size_t p = 0; p < net.params()[l].size(); ++p) {
            const auto count = net.params()[l][p].size();
            std::vector<double> numeric(count);
            for (std::size_t e = 0; e < count; ++e) {
                const double orig = net.params()[l][p][e];
                net.params_mut()[l][p][e] = orig + step;
                const double up = objective(net, batch);
                net.params_mut()[l][p][e] = orig - step;
                const double down = objective(net, batch);
                net.params_mut()[l][p][e] = orig;
                numeric[e] = (up - down) / (2.0 * step);
            }
            const auto& a = grads.params[l][p].values();
            result.worst_param_rel = std::max(result.worst_param_rel,
                                              norm_rel_error({a.begin(), a.end()}, numeric));
        }
    }
    std::vector<double> numeric(batch.size());
    nn::ArrayND x = batch;
    for (std::size_t e = 0; e < x.size(); ++e) {
        const double orig = x[e];
        x[e] = orig + step;
        const double up = objective(net, x);
        x[e] = orig - step;
        const double down = objective(net, x);
        x[e] = orig;
        numeric[e] = (up - down) / (2.0 * step);
    }
    const auto& a = grads.input.values();
    result.worst_input_rel = norm_rel_error({a.begin(), a.end()}, numeric);
    return result;
}

}  // namespace qhd::testing
