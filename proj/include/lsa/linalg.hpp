#pragma once

#include <vector>

#include "lsa/tensor.hpp"

namespace lsa {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues
// (ascending not guaranteed) and eigenvectors as columns of V.
struct SymmetricEigen {
    std::vector<double> values;
    Tensor vectors;  // [n, n], column j pairs with values[j]
};
SymmetricEigen symmetric_eigen(const Tensor& a, double tol = 1e-13, std::size_t max_sweeps = 64);

// Principal square root of a symmetric PSD matrix, eigenvalues clamped at 0.
Tensor sqrtm_psd(const Tensor& a);

Tensor matmul_plain(const Tensor& a, const Tensor& b);

}  // namespace lsa
