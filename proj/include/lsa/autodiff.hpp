#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "lsa/tensor.hpp"

namespace lsa {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Build a graph forward with the op methods, then call
// backward(root) on a scalar node; gradients of every variable node are then
// available through grad(). One tape per objective evaluation; tapes are
// cheap to construct and not thread-safe (one per worker).
class Tape {
  public:
    Var constant(Tensor v);
    Var variable(Tensor v);

    const Tensor& value(Var v) const { return nodes_[check(v)].value; }
    double scalar(Var v) const;
    const Tensor& grad(Var v) const;

    // Seeds d(root)=1 and sweeps the tape in reverse. root must be scalar.
    void backward(Var root);

    std::size_t size() const { return nodes_.size(); }

    // ---- elementwise ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var add_scalar(Var a, double c);
    Var scale(Var a, double c);
    Var silu(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var log(Var a);
    Var clamp(Var a, double lo, double hi);

    // ---- reductions / contractions ----
    Var sum(Var a);
    Var mean(Var a);
    Var sum_sq(Var a);  // squared Frobenius norm
    Var dot(Var a, Var b);
    Var matmul(Var a, Var b);  // [m,k]x[k,n] -> [m,n]
    Var matvec(Var a, Var x);  // [m,k]x[k] -> [m]

    // ---- broadcast helpers over [rows, cols] maps ----
    Var mul_rows(Var x, Var s);             // x[r,c] * s[r]
    Var add_rows(Var x, Var b);             // x[r,c] + b[r]
    Var add_outer(Var x, Var s, Var e);     // x[r,c] + s[r] * e[c]
    Var row_mean(Var x);                    // [rows,cols] -> [rows]

    // ---- shape / resampling ----
    Var reshape(Var a, std::vector<std::size_t> shape);
    Var row(Var m, std::size_t r);  // [L,D] -> [D]
    // out[i] = a[idx[i]]; gradient scatter-adds.
    Var gather(Var a, std::shared_ptr<const std::vector<std::size_t>> idx,
               std::vector<std::size_t> out_shape);
    Var upsample2x_nn(Var x, std::size_t h, std::size_t w);  // [c,h*w] -> [c,4hw]
    Var avgpool2x(Var x, std::size_t h, std::size_t w);      // [c,h*w] -> [c,hw/4]
    // [hin,win,c] -> [hout,wout,c], half-pixel-center bilinear (area average at 2x down).
    Var resize_bilinear(Var img, std::size_t hout, std::size_t wout);
    // (x - mean[c]) / stdev[c] per channel of an [h,w,c] image; constants.
    Var normalize_channels(Var img, const Tensor& mean, const Tensor& stdev);
    // v / ||v||2; throws NumericError when the norm is zero.
    Var l2_normalize(Var v);

  private:
    struct Node {
        Tensor value;
        Tensor grad;  // sized lazily during backward
        bool requires_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves/constants
    };

    int check(Var v) const;
    Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> back);
    bool needs_grad(Var v) const { return nodes_[check(v)].requires_grad; }
    Tensor& grad_buf(int id);

    std::vector<Node> nodes_;
    Tensor empty_grad_;
};

}  // namespace lsa
