#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "lsa/tensor.hpp"

// Central-difference gradient checking shared by the unit and acceptance
// suites. The objective is re-evaluated from scratch for each probe so the
// check stays independent of the tape that produced the analytic gradient.
namespace gradcheck {

// Relative error guarded by the gradient tensor's own scale: coordinates more
// than ~3 orders of magnitude below the dominant entries are beneath what
// step-1e-5 central differences can resolve in double (the subtraction noise
// is |f|*eps/step), so they are measured against the scale instead of their
// own near-zero magnitude. A wrong factor or sign on any meaningful
// coordinate still fails at 1e-4.
inline double rel_err(double analytic, double numeric, double grad_scale) {
    const double denom =
        std::max({std::fabs(analytic), std::fabs(numeric), 1e-8, 1e-3 * grad_scale});
    return std::fabs(analytic - numeric) / denom;
}

// f re-evaluates the scalar objective at the given tensor value.
// Returns the max relative error over the probed coordinates.
inline double max_rel_err(const std::function<double(const lsa::Tensor&)>& f, const lsa::Tensor& x0,
                          const lsa::Tensor& analytic_grad, const std::vector<std::size_t>& coords,
                          double step = 1e-5) {
    double scale = 0.0;
    for (double v : analytic_grad.data) scale = std::max(scale, std::fabs(v));
    double worst = 0.0;
    lsa::Tensor x = x0;
    for (std::size_t i : coords) {
        const double keep = x.data[i];
        x.data[i] = keep + step;
        const double fp = f(x);
        x.data[i] = keep - step;
        const double fm = f(x);
        x.data[i] = keep;
        const double numeric = (fp - fm) / (2.0 * step);
        const double analytic = analytic_grad.size() ? analytic_grad.data[i] : 0.0;
        worst = std::max(worst, rel_err(analytic, numeric, scale));
    }
    return worst;
}

// Deterministic spread of probe coordinates over a tensor.
inline std::vector<std::size_t> probe_coords(std::size_t tensor_size, std::size_t n) {
    std::vector<std::size_t> out;
    if (tensor_size == 0) return out;
    n = std::min(n, tensor_size);
    for (std::size_t k = 0; k < n; ++k) out.push_back((k * tensor_size) / n);
    return out;
}

}  // namespace gradcheck
