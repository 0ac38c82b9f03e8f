#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsa {

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

// Dense row-major tensor of doubles. Rank is implied by shape.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(shape_numel(shape), fill) {}

    static Tensor scalar(double v) {
        Tensor t({1});
        t.data[0] = v;
        return t;
    }
    static Tensor from(std::vector<std::size_t> s, std::vector<double> d) {
        if (shape_numel(s) != d.size())
            throw std::invalid_argument("Tensor::from: shape/data size mismatch");
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(d);
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // rank-2 accessors
    double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double min_value() const {
        double m = data.empty() ? 0.0 : data[0];
        for (double v : data) m = std::min(m, v);
        return m;
    }
    double max_value() const {
        double m = data.empty() ? 0.0 : data[0];
        for (double v : data) m = std::max(m, v);
        return m;
    }
    double sum() const { return std::accumulate(data.begin(), data.end(), 0.0); }

    Tensor& operator+=(const Tensor& o) {
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
        return *this;
    }
    Tensor& operator*=(double c) {
        for (double& v : data) v *= c;
        return *this;
    }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace lsa
