#pragma once

#include "socmpc/ad/ops.hpp"

#include <functional>
#include <random>
#include <vector>

namespace socmpc::testing {

/// Central finite-difference check of d(loss)/d(input) for one input tensor.
/// `build` must construct the scalar loss from scratch on every call so the
/// graph is fresh. Returns the max relative error over all coordinates
/// (absolute error where the analytic gradient is tiny).
inline double gradcheck(std::vector<ad::Tensor>& inputs, const std::function<ad::Tensor()>& build,
                        double h = 1e-5, double tiny = 1e-3) {
    ad::Tensor loss = build();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    for (auto& in : inputs) analytic.push_back(in.grad());

    double worst = 0.0;
    for (size_t t = 0; t < inputs.size(); ++t) {
        auto& vals = inputs[t].values_mut();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + h;
            const double fp = build().item();
            vals[i] = saved - h;
            const double fm = build().item();
            vals[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[t][i];
            const double err = std::abs(a - numeric);
            const double rel = err / std::max({std::abs(a), std::abs(numeric), tiny});
            worst = std::max(worst, rel);
        }
        inputs[t].zero_grad();
    }
    return worst;
}

inline ad::Tensor random_param(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> d(static_cast<size_t>(ad::detail::numel(shape)));
    for (double& x : d) x = u(rng);
    return ad::Tensor::param(std::move(shape), std::move(d));
}

}  // namespace socmpc::testing
