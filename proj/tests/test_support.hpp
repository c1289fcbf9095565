#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "semformer/autodiff.hpp"
#include "semformer/rng.hpp"
#include "semformer/tensor.hpp"

namespace semformer::testing {

inline Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.vec()) v = rng.uniform(lo, hi);
    return t;
}

// Central finite differences of a scalar-valued graph builder against the
// analytic gradient at one leaf. Returns the max relative error.
inline double gradient_check(const std::function<ad::Var(const ad::Var&)>& build, const Tensor& x0,
                             double step = 1e-5) {
    ad::Var leaf = ad::leaf(x0, /*requires_grad=*/true);
    ad::Var out = build(leaf);
    ad::backward(out);
    const Tensor analytic = leaf->grad_or_zero();

    double worst = 0.0;
    Tensor x = x0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double fp = build(ad::leaf(x, false))->value[0];
        x[i] = orig - step;
        const double fm = build(ad::leaf(x, false))->value[0];
        x[i] = orig;
        const double fd = (fp - fm) / (2.0 * step);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
        worst = std::max(worst, std::abs(a - fd) / denom);
    }
    return worst;
}

// Multi-leaf variant: perturbs every tensor in xs; build receives leaves in
// the same order.
inline double gradient_check_multi(
    const std::function<ad::Var(const std::vector<ad::Var>&)>& build,
    const std::vector<Tensor>& xs, double step = 1e-5) {
    std::vector<ad::Var> leaves;
    for (const Tensor& t : xs) leaves.push_back(ad::leaf(t, true));
    ad::Var out = build(leaves);
    ad::backward(out);
    std::vector<Tensor> analytic;
    for (auto& l : leaves) analytic.push_back(l->grad_or_zero());

    auto eval_at = [&](const std::vector<Tensor>& pts) {
        std::vector<ad::Var> ls;
        for (const Tensor& t : pts) ls.push_back(ad::leaf(t, false));
        return build(ls)->value[0];
    };

    double worst = 0.0;
    std::vector<Tensor> pts = xs;
    for (std::size_t t = 0; t < pts.size(); ++t) {
        for (std::int64_t i = 0; i < pts[t].numel(); ++i) {
            const double orig = pts[t][i];
            pts[t][i] = orig + step;
            const double fp = eval_at(pts);
            pts[t][i] = orig - step;
            const double fm = eval_at(pts);
            pts[t][i] = orig;
            const double fd = (fp - fm) / (2.0 * step);
            const double a = analytic[t][i];
            const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
            worst = std::max(worst, std::abs(a - fd) / denom);
        }
    }
    return worst;
}

}  // namespace semformer::testing
