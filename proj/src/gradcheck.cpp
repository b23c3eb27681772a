#include "pfcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pfcn {

GradCheckReport finite_difference_check(const LossFunction& loss_fn, std::span<const double> params, double epsilon,
                                        int max_samples, uint64_t seed, Stencil stencil) {
    GradCheckReport rep;
    std::vector<double> p(params.begin(), params.end());
    std::vector<double> grad(p.size(), 0.0);
    const double base = loss_fn(p, grad);
    if (!std::isfinite(base)) {
        rep.finite = false;
        rep.failure = "loss is not finite at the starting point";
        return rep;
    }

    std::vector<int> idx(p.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_samples > 0 && static_cast<size_t>(max_samples) < idx.size()) {
        std::mt19937_64 rng(seed);
        std::vector<int> picked;
        std::sample(idx.begin(), idx.end(), std::back_inserter(picked), max_samples, rng);
        idx = std::move(picked);
    }

    for (int i : idx) {
        const double keep = p[i];
        bool finite = true;
        auto at = [&](double offset) {
            p[i] = keep + offset;
            const double v = loss_fn(p, {});
            finite &= std::isfinite(v);
            return v;
        };
        double fd = 0;
        if (stencil == Stencil::TwoPoint) {
            fd = (at(epsilon) - at(-epsilon)) / (2 * epsilon);
        } else {
            fd = (at(-2 * epsilon) - 8 * at(-epsilon) + 8 * at(epsilon) - at(2 * epsilon)) / (12 * epsilon);
        }
        p[i] = keep;
        if (!finite) {
            rep.finite = false;
            rep.failure = "loss is not finite when perturbing parameter " + std::to_string(i);
            return rep;
        }
        const double err = std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1e-8});
        ++rep.checked;
        if (err > rep.max_relative_error || rep.worst_index < 0) {
            rep.max_relative_error = err;
            rep.worst_index = i;
            rep.worst_analytic = grad[i];
            rep.worst_numeric = fd;
        }
    }
    return rep;
}

}  // namespace pfcn
