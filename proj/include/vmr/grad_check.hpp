#pragma once

#include <functional>

#include "vmr/graph.hpp"
#include "vmr/params.hpp"

namespace vmr {

// Central-difference check of reverse-mode gradients for a deterministic
// scalar loss over every entry of every parameter. Returns the max of
// |analytic - numeric| / max(1, |analytic|, |numeric|).
inline real grad_check(const std::function<Tensor()>& loss_fn, ParamTree& params, real eps) {
    if (eps < 1e-7 || eps > 1e-3) throw DomainError(msg("grad_check eps ", eps, " outside [1e-7, 1e-3]"));

    GradMap analytic;
    {
        Graph g;
        Tensor loss = loss_fn();
        analytic = g.backward(loss);
    }

    real worst = 0.0;
    for (auto& [name, t] : params.items()) {
        const auto it = analytic.find(t.impl());
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const real saved = t[i];
            t[i] = saved + eps;
            const real up = loss_fn().item();
            t[i] = saved - eps;
            const real down = loss_fn().item();
            t[i] = saved;
            const real numeric = (up - down) / (2.0 * eps);
            const real exact = it == analytic.end() ? 0.0 : it->second[i];
            const real denom = std::max({1.0, std::abs(exact), std::abs(numeric)});
            worst = std::max(worst, std::abs(exact - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace vmr
