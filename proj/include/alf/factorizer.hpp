#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "alf/alf_block.hpp"

namespace alf {

// Drives the code width of an ALF block down during training. Every m-th step
// the mask is rebuilt from scratch off fresh channel importances, so weakly
// contributing channels are switched off softly and may recover later.
struct FactorizerState {
    std::int64_t m = 8;
    double pr = 0.85;
    std::int64_t step = 0;
    std::vector<double> importances;

    void validate() const {
        if (m < 1) throw ConfigError("factorizer: m must be >= 1");
        if (pr < 0.0 || pr >= 1.0) throw ConfigError("factorizer: pr must be in [0,1)");
    }
};

// k = min(floor(pr * C_code), C_code - 1). The slack absorbs the decimal
// representation error of pr so e.g. 0.85 * 20 counts as 17.
inline std::int64_t masked_target(double pr, std::int64_t c_code) {
    const auto k = static_cast<std::int64_t>(std::floor(pr * static_cast<double>(c_code) + 1e-9));
    return std::min(k, c_code - 1);
}

// importance[c] = ||W_code[:,:,:,c]|| * ||W_exp row c||, with W_code taken
// before masking so switched-off channels can earn their way back.
template <typename T>
std::vector<double> compute_importances(const ALFBlockT<T>& block) {
    block.validate();
    const Tensor4T<T> code = pointwise_conv(block.w_ref.relabeled(Layout::NHWC), block.encoder);
    const std::int64_t cc = block.c_code();
    const std::int64_t co = block.co();
    std::vector<double> imp(static_cast<std::size_t>(cc), 0.0);

    std::vector<double> code_sq(static_cast<std::size_t>(cc), 0.0);
    for (std::int64_t i = 0; i < code.size(); i += cc) {
        for (std::int64_t c = 0; c < cc; ++c) {
            const double v = static_cast<double>(code.raw()[i + c]);
            code_sq[static_cast<std::size_t>(c)] += v * v;
        }
    }
    for (std::int64_t c = 0; c < cc; ++c) {
        double exp_sq = 0.0;
        for (std::int64_t o = 0; o < co; ++o) {
            const double v = static_cast<double>(block.w_exp(0, 0, c, o));
            exp_sq += v * v;
        }
        imp[static_cast<std::size_t>(c)] =
            std::sqrt(code_sq[static_cast<std::size_t>(c)]) * std::sqrt(exp_sq);
    }
    return imp;
}

// Rebuilds the whole mask: the k smallest-importance channels go to zero,
// equal importances resolve to masking the lower index first.
inline std::vector<std::uint8_t> update_mask(const FactorizerState& state,
                                             const std::vector<double>& importances) {
    state.validate();
    if (importances.empty()) throw ConfigError("factorizer: empty importance vector");
    const auto cc = static_cast<std::int64_t>(importances.size());
    const std::int64_t k = masked_target(state.pr, cc);

    std::vector<std::int64_t> order(importances.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        return importances[static_cast<std::size_t>(a)] < importances[static_cast<std::size_t>(b)];
    });

    std::vector<std::uint8_t> mask(importances.size(), 1);
    for (std::int64_t i = 0; i < k; ++i) mask[static_cast<std::size_t>(order[i])] = 0;
    return mask;
}

// Runs after the optimizer update. Mask changes land on the next forward.
template <typename T>
void step_schedule(FactorizerState& state, ALFBlockT<T>& block) {
    state.validate();
    ++state.step;
    if (state.step % state.m != 0) return;

    state.importances = compute_importances(block);
    block.soft_scores.resize(state.importances.size());
    for (std::size_t i = 0; i < state.importances.size(); ++i) {
        block.soft_scores[i] = static_cast<T>(state.importances[i]);
    }
    block.mask = update_mask(state, state.importances);
}

}  // namespace alf
