#include "qhd/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace qhd::nn {

void adam_update(AdamState& state, ParamSet& params, const ParamSet& grads) {
    if (grads.size() != params.size()) throw std::invalid_argument("adam_update: layer count mismatch");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            for (const auto& p : params[i]) {
                state.m[i].emplace_back(p.shape());
                state.v[i].emplace_back(p.shape());
            }
        }
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i].size()) throw std::invalid_argument("adam_update: parameter count mismatch");
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            auto& p = params[i][j];
            const auto& g = grads[i][j];
            auto& m = state.m[i][j];
            auto& v = state.v[i][j];
            if (g.size() != p.size() || m.size() != p.size()) {
                throw std::invalid_argument("adam_update: gradient shape mismatch");
            }
            const auto n = static_cast<Eigen::Index>(p.size());
            Eigen::Map<Eigen::ArrayXd> pa(p.data(), n), ma(m.data(), n), va(v.data(), n);
            const Eigen::Map<const Eigen::ArrayXd> ga(g.data(), n);
            ma = state.beta1 * ma + (1.0 - state.beta1) * ga;
            va = state.beta2 * va + (1.0 - state.beta2) * ga * ga;
            pa -= state.lr * (ma / c1) / ((va / c2).sqrt() + state.epsilon);
        }
    }
}

}  // namespace qhd::nn
