#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pfcn {

/// Scalar loss of a parameter vector. When grad is non-empty the analytic
/// gradient is written into it.
using LossFunction = std::function<double(std::span<const double> params, std::span<double> grad)>;

struct GradCheckReport {
    double max_relative_error = 0;
    int worst_index = -1;
    double worst_analytic = 0;
    double worst_numeric = 0;
    int checked = 0;
    bool finite = true;
    std::string failure;  // set when a loss evaluation was not finite
};

/// Symmetric difference quotients: the classic two-point form, or the
/// four-point form (f(-2h) - 8f(-h) + 8f(h) - f(2h)) / 12h, whose O(h^4)
/// truncation allows a larger h and so less rounding noise.
enum class Stencil { TwoPoint, FourPoint };

/// Central differences against the analytic gradient. The error of one
/// coordinate is |a - fd| / max(|a|, |fd|, 1e-8); the report holds the
/// largest. At most max_samples coordinates are probed (all when 0).
GradCheckReport finite_difference_check(const LossFunction& loss_fn, std::span<const double> params,
                                        double epsilon = 1e-6, int max_samples = 0, uint64_t seed = 0,
                                        Stencil stencil = Stencil::TwoPoint);

}  // namespace pfcn
