#include "lsa/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace lsa {

SymmetricEigen symmetric_eigen(const Tensor& a, double tol, std::size_t max_sweeps) {
    if (a.rank() != 2 || a.shape[0] != a.shape[1])
        throw std::invalid_argument("symmetric_eigen: square matrix expected");
    const std::size_t n = a.shape[0];
    Tensor m = a;
    Tensor v({n, n});
    for (std::size_t i = 0; i < n; ++i) v.at2(i, i) = 1.0;

    double scale = 0.0;
    for (double x : a.data) scale = std::max(scale, std::fabs(x));
    if (scale == 0.0) scale = 1.0;

    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::fabs(m.at2(p, q)));
        if (off <= tol * scale) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m.at2(p, q);
                if (std::fabs(apq) <= 1e-300) continue;
                const double app = m.at2(p, p), aqq = m.at2(q, q);
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m.at2(k, p), mkq = m.at2(k, q);
                    m.at2(k, p) = c * mkp - s * mkq;
                    m.at2(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m.at2(p, k), mqk = m.at2(q, k);
                    m.at2(p, k) = c * mpk - s * mqk;
                    m.at2(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v.at2(k, p), vkq = v.at2(k, q);
                    v.at2(k, p) = c * vkp - s * vkq;
                    v.at2(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    SymmetricEigen out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = m.at2(i, i);
    out.vectors = std::move(v);
    return out;
}

Tensor sqrtm_psd(const Tensor& a) {
    const SymmetricEigen eig = symmetric_eigen(a);
    const std::size_t n = a.shape[0];
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double lam = std::max(0.0, eig.values[k]);
                acc += eig.vectors.at2(i, k) * std::sqrt(lam) * eig.vectors.at2(j, k);
            }
            out.at2(i, j) = acc;
        }
    return out;
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
        throw std::invalid_argument("matmul_plain: bad shapes");
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.data[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += av * b.data[p * n + j];
        }
    return out;
}

}  // namespace lsa
