#pragma once

// Finite-difference gradient oracle, independent of the reverse-mode path it
// checks: the loss is re-evaluated forward at perturbed parameter values.

#include <cmath>
#include <functional>
#include <vector>

#include "bfcdn/tensor.hpp"

namespace bfcdn_test {

// make_loss must rebuild the whole graph from the parameters' current values
// (and any RNG it uses must be re-seeded identically on every call).
template <class S>
double gradcheck_max_rel_err(const std::vector<bfcdn::TensorPtr<S>>& params,
                             const std::function<bfcdn::TensorPtr<S>()>& make_loss, double h,
                             double grad_floor = 1e-9) {
    auto loss = make_loss();
    for (auto& p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
    bfcdn::backward(loss);
    double worst = 0.0;
    for (const auto& p : params) {
        for (std::size_t j = 0; j < p->values.size(); ++j) {
            const S saved = p->values[j];
            p->values[j] = saved + static_cast<S>(h);
            const double lp = static_cast<double>(make_loss()->values[0]);
            p->values[j] = saved - static_cast<S>(h);
            const double lm = static_cast<double>(make_loss()->values[0]);
            p->values[j] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = static_cast<double>(p->grad[j]);
            const double scale = std::max(std::abs(fd), std::abs(an));
            if (scale < grad_floor) continue;
            worst = std::max(worst, std::abs(fd - an) / scale);
        }
    }
    return worst;
}

}  // namespace bfcdn_test
