#pragma once

#include "rapnet/autodiff.hpp"

namespace rapnet {

// Central-finite-difference check of reverse-mode gradients in f64.
// `build` records the scalar function on a fresh tape:
//   double? no: NodeId build(Tape<double>&, const std::vector<int>& leaf_ids)
// Returns max over all components of
//   |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-6).
// The 1e-6 floor keeps near-zero gradients honest: at eps = 1e-5 the central
// difference carries ~1e-12 of cancellation noise, so ratios against smaller
// denominators would measure roundoff, not the gradient.
template <typename BuildFn>
double grad_check(BuildFn&& build, std::vector<Tensor<double>> inputs, double eps = 1e-5) {
    Tape<double> tape;
    std::vector<int> leaves;
    leaves.reserve(inputs.size());
    for (auto& t : inputs) leaves.push_back(tape.leaf(t, true));
    const int loss = build(tape, leaves);
    tape.backward(loss);

    double worst = 0.0;
    for (std::size_t li = 0; li < inputs.size(); ++li) {
        const Tensor<double>& g_ad = tape.grad(leaves[li]);
        for (std::size_t k = 0; k < inputs[li].data.size(); ++k) {
            const double orig = inputs[li].data[k];
            auto eval = [&](double v) {
                inputs[li].data[k] = v;
                Tape<double> t2;
                std::vector<int> l2;
                for (auto& t : inputs) l2.push_back(t2.leaf(t, false));
                const int l = build(t2, l2);
                return t2.value(l).data[0];
            };
            const double fp = eval(orig + eps);
            const double fm = eval(orig - eps);
            inputs[li].data[k] = orig;
            const double g_fd = (fp - fm) / (2.0 * eps);
            const double g = g_ad.data[k];
            const double denom = std::max({std::abs(g), std::abs(g_fd), 1e-6});
            worst = std::max(worst, std::abs(g - g_fd) / denom);
        }
    }
    return worst;
}

// Moves values out of the +/-band around 0 so kinked ops (relu/prelu/abs)
// are not probed across their corner.
template <typename T>
void nudge_from_zero(Tensor<T>& t, T band) {
    for (auto& v : t.data)
        if (v > -band && v < band) v = v >= T(0) ? band : -band;
}

}  // namespace rapnet
