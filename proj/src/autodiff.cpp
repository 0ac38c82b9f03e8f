#include "lsa/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "lsa/errors.hpp"

namespace lsa {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        const double z = std::exp(-x);
        return 1.0 / (1.0 + z);
    }
    const double z = std::exp(x);
    return z / (1.0 + z);
}

}  // namespace

int Tape::check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw std::invalid_argument("Tape: invalid Var");
    return v.id;
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor v) { return push(std::move(v), false, nullptr); }

Var Tape::variable(Tensor v) { return push(std::move(v), true, nullptr); }

double Tape::scalar(Var v) const {
    const Tensor& t = value(v);
    if (t.size() != 1) throw std::invalid_argument("Tape::scalar: node is not scalar");
    return t.data[0];
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = nodes_[check(v)];
    return n.grad.size() ? n.grad : empty_grad_;
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape, 0.0);
    return n.grad;
}

void Tape::backward(Var root) {
    const int r = check(root);
    if (nodes_[r].value.size() != 1)
        throw std::invalid_argument("Tape::backward: root must be scalar");
    for (auto& n : nodes_) n.grad = Tensor();
    grad_buf(r).data[0] = 1.0;
    for (int id = r; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.requires_grad || !n.back) continue;
        if (n.grad.size() == 0) continue;  // not on a path to the root
        n.back(*this);
    }
}

// ---------------- elementwise ----------------

Var Tape::add(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw std::invalid_argument("add: shape " + shape_str(va.shape) + " vs " + shape_str(vb.shape));
    Tensor out = va;
    out += vb;
    const bool rg = needs_grad(a) || needs_grad(b);
    const int ia = a.id, ib = b.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), rg, [ia, ib, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        if (t.nodes_[ia].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw std::invalid_argument("sub: shape " + shape_str(va.shape) + " vs " + shape_str(vb.shape));
    Tensor out = va;
    out -= vb;
    const bool rg = needs_grad(a) || needs_grad(b);
    const int ia = a.id, ib = b.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), rg, [ia, ib, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        if (t.nodes_[ia].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out(va.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    const bool rg = needs_grad(a) || needs_grad(b);
    const int ia = a.id, ib = b.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), rg, [ia, ib, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& va = t.nodes_[ia].value;
        const Tensor& vb = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
        }
    });
}

Var Tape::add_scalar(Var a, double c) {
    Tensor out = value(a);
    for (double& v : out.data) v += c;
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(a), [ia, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var Tape::scale(Var a, double c) {
    Tensor out = value(a);
    out *= c;
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(a), [ia, io, c](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
}

Var Tape::silu(Var a) {
    const Tensor& va = value(a);
    Tensor out(va.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * stable_sigmoid(va[i]);
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(a), [ia, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& va = t.nodes_[ia].value;
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = stable_sigmoid(va[i]);
            ga[i] += g[i] * s * (1.0 + va[i] * (1.0 - s));
        }
    });
}

Var Tape::tanh(Var a) {
    const Tensor& va = value(a);
    Tensor out(va.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(va[i]);
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(a), [ia, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& vo = t.nodes_[io].value;
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - vo[i] * vo[i]);
    });
}

Var Tape::sigmoid(Var a) {
    const Tensor& va = value(a);
    Tensor out(va.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(va[i]);
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(a), [ia, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& vo = t.nodes_[io].value;
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vo[i] * (1.0 - vo[i]);
    });
}

Var Tape::log(Var a) {
    const Tensor& va = value(a);
    Tensor out(va.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(va[i]);
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(a), [ia, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& va = t.nodes_[ia].value;
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
    });
}

Var Tape::clamp(Var a, double lo, double hi) {
    const Tensor& va = value(a);
    Tensor out(va.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, va[i]));
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(a), [ia, io, lo, hi](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& va = t.nodes_[ia].value;
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (va[i] > lo && va[i] < hi) ga[i] += g[i];
    });
}

// ---------------- reductions / contractions ----------------

Var Tape::sum(Var a) {
    Tensor out = Tensor::scalar(value(a).sum());
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(a), [ia, io](Tape& t) {
        const double g = t.nodes_[io].grad[0];
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

Var Tape::mean(Var a) {
    const std::size_t n = value(a).size();
    if (n == 0) throw std::invalid_argument("mean: empty tensor");
    Tensor out = Tensor::scalar(value(a).sum() / static_cast<double>(n));
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(a), [ia, io, n](Tape& t) {
        const double g = t.nodes_[io].grad[0] / static_cast<double>(n);
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

Var Tape::sum_sq(Var a) {
    const Tensor& va = value(a);
    double s = 0.0;
    for (double v : va.data) s += v * v;
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(Tensor::scalar(s), needs_grad(a), [ia, io](Tape& t) {
        const double g = t.nodes_[io].grad[0];
        const Tensor& va = t.nodes_[ia].value;
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * g * va[i];
    });
}

Var Tape::dot(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.size() != vb.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
    const bool rg = needs_grad(a) || needs_grad(b);
    const int ia = a.id, ib = b.id, io = static_cast<int>(nodes_.size());
    return push(Tensor::scalar(s), rg, [ia, ib, io](Tape& t) {
        const double g = t.nodes_[io].grad[0];
        const Tensor& va = t.nodes_[ia].value;
        const Tensor& vb = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * vb[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * va[i];
        }
    });
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.shape[1] != vb.shape[0])
        throw std::invalid_argument("matmul: bad shapes " + shape_str(va.shape) + " x " + shape_str(vb.shape));
    const std::size_t m = va.shape[0], k = va.shape[1], n = vb.shape[1];
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &va.data[i * k];
        double* orow = &out.data[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = &vb.data[p * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    const bool rg = needs_grad(a) || needs_grad(b);
    const int ia = a.id, ib = b.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), rg, [ia, ib, io, m, k, n](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& va = t.nodes_[ia].value;
        const Tensor& vb = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            // dA = G * B^T
            Tensor& ga = t.grad_buf(ia);
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = &g.data[i * n];
                double* garow = &ga.data[i * k];
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = &vb.data[p * n];
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    garow[p] += s;
                }
            }
        }
        if (t.nodes_[ib].requires_grad) {
            // dB = A^T * G
            Tensor& gb = t.grad_buf(ib);
            for (std::size_t i = 0; i < m; ++i) {
                const double* arow = &va.data[i * k];
                const double* grow = &g.data[i * n];
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = arow[p];
                    if (av == 0.0) continue;
                    double* gbrow = &gb.data[p * n];
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    });
}

Var Tape::matvec(Var a, Var x) {
    const Tensor& va = value(a);
    const Tensor& vx = value(x);
    if (va.rank() != 2 || va.shape[1] != vx.size())
        throw std::invalid_argument("matvec: bad shapes " + shape_str(va.shape) + " x " + shape_str(vx.shape));
    const std::size_t m = va.shape[0], k = va.shape[1];
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &va.data[i * k];
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * vx[p];
        out[i] = s;
    }
    const bool rg = needs_grad(a) || needs_grad(x);
    const int ia = a.id, ix = x.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), rg, [ia, ix, io, m, k](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& va = t.nodes_[ia].value;
        const Tensor& vx = t.nodes_[ix].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) ga.data[i * k + p] += g[i] * vx[p];
        }
        if (t.nodes_[ix].requires_grad) {
            Tensor& gx = t.grad_buf(ix);
            for (std::size_t i = 0; i < m; ++i) {
                const double gi = g[i];
                if (gi == 0.0) continue;
                const double* arow = &va.data[i * k];
                for (std::size_t p = 0; p < k; ++p) gx[p] += gi * arow[p];
            }
        }
    });
}

// ---------------- broadcast helpers ----------------

Var Tape::mul_rows(Var x, Var s) {
    const Tensor& vx = value(x);
    const Tensor& vs = value(s);
    if (vx.rank() != 2 || vs.size() != vx.shape[0])
        throw std::invalid_argument("mul_rows: bad shapes");
    const std::size_t rows = vx.shape[0], cols = vx.shape[1];
    Tensor out(vx.shape);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = vx.data[r * cols + c] * vs[r];
    const bool rg = needs_grad(x) || needs_grad(s);
    const int ix = x.id, is = s.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), rg, [ix, is, io, rows, cols](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& vx = t.nodes_[ix].value;
        const Tensor& vs = t.nodes_[is].value;
        if (t.nodes_[ix].requires_grad) {
            Tensor& gx = t.grad_buf(ix);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gx.data[r * cols + c] += g.data[r * cols + c] * vs[r];
        }
        if (t.nodes_[is].requires_grad) {
            Tensor& gs = t.grad_buf(is);
            for (std::size_t r = 0; r < rows; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < cols; ++c) acc += g.data[r * cols + c] * vx.data[r * cols + c];
                gs[r] += acc;
            }
        }
    });
}

Var Tape::add_rows(Var x, Var b) {
    const Tensor& vx = value(x);
    const Tensor& vb = value(b);
    if (vx.rank() != 2 || vb.size() != vx.shape[0])
        throw std::invalid_argument("add_rows: bad shapes");
    const std::size_t rows = vx.shape[0], cols = vx.shape[1];
    Tensor out(vx.shape);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = vx.data[r * cols + c] + vb[r];
    const bool rg = needs_grad(x) || needs_grad(b);
    const int ix = x.id, ib = b.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), rg, [ix, ib, io, rows, cols](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        if (t.nodes_[ix].requires_grad) {
            Tensor& gx = t.grad_buf(ix);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (std::size_t r = 0; r < rows; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < cols; ++c) acc += g.data[r * cols + c];
                gb[r] += acc;
            }
        }
    });
}

Var Tape::add_outer(Var x, Var s, Var e) {
    const Tensor& vx = value(x);
    const Tensor& vs = value(s);
    const Tensor& ve = value(e);
    if (vx.rank() != 2 || vs.size() != vx.shape[0] || ve.size() != vx.shape[1])
        throw std::invalid_argument("add_outer: bad shapes");
    const std::size_t rows = vx.shape[0], cols = vx.shape[1];
    Tensor out(vx.shape);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out.data[r * cols + c] = vx.data[r * cols + c] + vs[r] * ve[c];
    const bool rg = needs_grad(x) || needs_grad(s) || needs_grad(e);
    const int ix = x.id, is = s.id, ie = e.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), rg, [ix, is, ie, io, rows, cols](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& vs = t.nodes_[is].value;
        const Tensor& ve = t.nodes_[ie].value;
        if (t.nodes_[ix].requires_grad) {
            Tensor& gx = t.grad_buf(ix);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.nodes_[is].requires_grad) {
            Tensor& gs = t.grad_buf(is);
            for (std::size_t r = 0; r < rows; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < cols; ++c) acc += g.data[r * cols + c] * ve[c];
                gs[r] += acc;
            }
        }
        if (t.nodes_[ie].requires_grad) {
            Tensor& ge = t.grad_buf(ie);
            for (std::size_t r = 0; r < rows; ++r) {
                const double sr = vs[r];
                if (sr == 0.0) continue;
                for (std::size_t c = 0; c < cols; ++c) ge[c] += g.data[r * cols + c] * sr;
            }
        }
    });
}

Var Tape::row_mean(Var x) {
    const Tensor& vx = value(x);
    if (vx.rank() != 2) throw std::invalid_argument("row_mean: rank-2 expected");
    const std::size_t rows = vx.shape[0], cols = vx.shape[1];
    Tensor out({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += vx.data[r * cols + c];
        out[r] = acc / static_cast<double>(cols);
    }
    const int ix = x.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(x), [ix, io, rows, cols](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        Tensor& gx = t.grad_buf(ix);
        for (std::size_t r = 0; r < rows; ++r) {
            const double gr = g[r] / static_cast<double>(cols);
            for (std::size_t c = 0; c < cols; ++c) gx.data[r * cols + c] += gr;
        }
    });
}

// ---------------- shape / resampling ----------------

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
    const Tensor& va = value(a);
    if (shape_numel(shape) != va.size()) throw std::invalid_argument("reshape: size mismatch");
    Tensor out;
    out.shape = std::move(shape);
    out.data = va.data;
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(a), [ia, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var Tape::row(Var m, std::size_t r) {
    const Tensor& vm = value(m);
    if (vm.rank() != 2 || r >= vm.shape[0]) throw std::invalid_argument("row: out of range");
    const std::size_t cols = vm.shape[1];
    Tensor out({cols});
    for (std::size_t c = 0; c < cols; ++c) out[c] = vm.data[r * cols + c];
    const int im = m.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(m), [im, io, r, cols](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        Tensor& gm = t.grad_buf(im);
        for (std::size_t c = 0; c < cols; ++c) gm.data[r * cols + c] += g[c];
    });
}

Var Tape::gather(Var a, std::shared_ptr<const std::vector<std::size_t>> idx,
                 std::vector<std::size_t> out_shape) {
    const Tensor& va = value(a);
    if (shape_numel(out_shape) != idx->size()) throw std::invalid_argument("gather: shape/index mismatch");
    Tensor out;
    out.shape = std::move(out_shape);
    out.data.resize(idx->size());
    for (std::size_t i = 0; i < idx->size(); ++i) out.data[i] = va.data[(*idx)[i]];
    const int ia = a.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(a), [ia, io, idx](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        Tensor& ga = t.grad_buf(ia);
        for (std::size_t i = 0; i < idx->size(); ++i) ga.data[(*idx)[i]] += g[i];
    });
}

Var Tape::upsample2x_nn(Var x, std::size_t h, std::size_t w) {
    const Tensor& vx = value(x);
    if (vx.rank() != 2 || vx.shape[1] != h * w) throw std::invalid_argument("upsample2x_nn: bad shape");
    const std::size_t chans = vx.shape[0];
    const std::size_t h2 = h * 2, w2 = w * 2;
    Tensor out({chans, h2 * w2});
    for (std::size_t ch = 0; ch < chans; ++ch) {
        const double* src = &vx.data[ch * h * w];
        double* dst = &out.data[ch * h2 * w2];
        for (std::size_t y = 0; y < h2; ++y)
            for (std::size_t xx = 0; xx < w2; ++xx) dst[y * w2 + xx] = src[(y / 2) * w + (xx / 2)];
    }
    const int ix = x.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(x), [ix, io, chans, h, w](Tape& t) {
        const std::size_t h2 = h * 2, w2 = w * 2;
        const Tensor& g = t.nodes_[io].grad;
        Tensor& gx = t.grad_buf(ix);
        for (std::size_t ch = 0; ch < chans; ++ch) {
            const double* gsrc = &g.data[ch * h2 * w2];
            double* gdst = &gx.data[ch * h * w];
            for (std::size_t y = 0; y < h2; ++y)
                for (std::size_t xx = 0; xx < w2; ++xx) gdst[(y / 2) * w + (xx / 2)] += gsrc[y * w2 + xx];
        }
    });
}

Var Tape::avgpool2x(Var x, std::size_t h, std::size_t w) {
    const Tensor& vx = value(x);
    if (vx.rank() != 2 || vx.shape[1] != h * w || h % 2 || w % 2)
        throw std::invalid_argument("avgpool2x: bad shape");
    const std::size_t chans = vx.shape[0];
    const std::size_t h2 = h / 2, w2 = w / 2;
    Tensor out({chans, h2 * w2});
    for (std::size_t ch = 0; ch < chans; ++ch) {
        const double* src = &vx.data[ch * h * w];
        double* dst = &out.data[ch * h2 * w2];
        for (std::size_t y = 0; y < h2; ++y)
            for (std::size_t xx = 0; xx < w2; ++xx) {
                const std::size_t y0 = 2 * y, x0 = 2 * xx;
                dst[y * w2 + xx] = 0.25 * (src[y0 * w + x0] + src[y0 * w + x0 + 1] +
                                           src[(y0 + 1) * w + x0] + src[(y0 + 1) * w + x0 + 1]);
            }
    }
    const int ix = x.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(x), [ix, io, chans, h, w](Tape& t) {
        const std::size_t h2 = h / 2, w2 = w / 2;
        const Tensor& g = t.nodes_[io].grad;
        Tensor& gx = t.grad_buf(ix);
        for (std::size_t ch = 0; ch < chans; ++ch) {
            const double* gsrc = &g.data[ch * h2 * w2];
            double* gdst = &gx.data[ch * h * w];
            for (std::size_t y = 0; y < h2; ++y)
                for (std::size_t xx = 0; xx < w2; ++xx) {
                    const double gv = 0.25 * gsrc[y * w2 + xx];
                    const std::size_t y0 = 2 * y, x0 = 2 * xx;
                    gdst[y0 * w + x0] += gv;
                    gdst[y0 * w + x0 + 1] += gv;
                    gdst[(y0 + 1) * w + x0] += gv;
                    gdst[(y0 + 1) * w + x0 + 1] += gv;
                }
        }
    });
}

namespace {
struct LerpAxis {
    std::vector<std::size_t> i0, i1;
    std::vector<double> w0, w1;
};
// Half-pixel-center sampling; clamped at borders. At an exact 2x downscale the
// sample point lands on the corner of 4 pixels, i.e. area averaging.
LerpAxis make_axis(std::size_t in, std::size_t out) {
    LerpAxis ax;
    ax.i0.resize(out);
    ax.i1.resize(out);
    ax.w0.resize(out);
    ax.w1.resize(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        const double limit = static_cast<double>(in - 1);
        if (src > limit) src = limit;
        const std::size_t i0 = static_cast<std::size_t>(src);
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        const double f = src - static_cast<double>(i0);
        ax.i0[o] = i0;
        ax.i1[o] = i1;
        ax.w0[o] = 1.0 - f;
        ax.w1[o] = f;
    }
    return ax;
}
}  // namespace

Var Tape::resize_bilinear(Var img, std::size_t hout, std::size_t wout) {
    const Tensor& vi = value(img);
    if (vi.rank() != 3) throw std::invalid_argument("resize_bilinear: [h,w,c] image expected");
    const std::size_t hin = vi.shape[0], win = vi.shape[1], chans = vi.shape[2];
    auto ay = std::make_shared<LerpAxis>(make_axis(hin, hout));
    auto axx = std::make_shared<LerpAxis>(make_axis(win, wout));
    Tensor out({hout, wout, chans});
    for (std::size_t y = 0; y < hout; ++y)
        for (std::size_t x = 0; x < wout; ++x)
            for (std::size_t c = 0; c < chans; ++c) {
                const double v =
                    ay->w0[y] * (axx->w0[x] * vi.data[(ay->i0[y] * win + axx->i0[x]) * chans + c] +
                                 axx->w1[x] * vi.data[(ay->i0[y] * win + axx->i1[x]) * chans + c]) +
                    ay->w1[y] * (axx->w0[x] * vi.data[(ay->i1[y] * win + axx->i0[x]) * chans + c] +
                                 axx->w1[x] * vi.data[(ay->i1[y] * win + axx->i1[x]) * chans + c]);
                out.data[(y * wout + x) * chans + c] = v;
            }
    const int ii = img.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(img), [ii, io, hout, wout, win, chans, ay, axx](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        Tensor& gi = t.grad_buf(ii);
        for (std::size_t y = 0; y < hout; ++y)
            for (std::size_t x = 0; x < wout; ++x)
                for (std::size_t c = 0; c < chans; ++c) {
                    const double gv = g.data[(y * wout + x) * chans + c];
                    if (gv == 0.0) continue;
                    gi.data[(ay->i0[y] * win + axx->i0[x]) * chans + c] += gv * ay->w0[y] * axx->w0[x];
                    gi.data[(ay->i0[y] * win + axx->i1[x]) * chans + c] += gv * ay->w0[y] * axx->w1[x];
                    gi.data[(ay->i1[y] * win + axx->i0[x]) * chans + c] += gv * ay->w1[y] * axx->w0[x];
                    gi.data[(ay->i1[y] * win + axx->i1[x]) * chans + c] += gv * ay->w1[y] * axx->w1[x];
                }
    });
}

Var Tape::normalize_channels(Var img, const Tensor& mean, const Tensor& stdev) {
    const Tensor& vi = value(img);
    if (vi.rank() != 3) throw std::invalid_argument("normalize_channels: [h,w,c] image expected");
    const std::size_t chans = vi.shape[2];
    if (mean.size() != chans || stdev.size() != chans)
        throw std::invalid_argument("normalize_channels: mean/std size mismatch");
    for (double s : stdev.data)
        if (s == 0.0) throw NumericError("normalize_channels: zero stdev");
    Tensor out(vi.shape);
    auto inv = std::make_shared<std::vector<double>>(chans);
    for (std::size_t c = 0; c < chans; ++c) (*inv)[c] = 1.0 / stdev[c];
    for (std::size_t i = 0; i < vi.size(); ++i) {
        const std::size_t c = i % chans;
        out.data[i] = (vi.data[i] - mean[c]) * (*inv)[c];
    }
    const int ii = img.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(img), [ii, io, chans, inv](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        Tensor& gi = t.grad_buf(ii);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * (*inv)[i % chans];
    });
}

Var Tape::l2_normalize(Var v) {
    const Tensor& vv = value(v);
    double n2 = 0.0;
    for (double x : vv.data) n2 += x * x;
    const double n = std::sqrt(n2);
    if (n == 0.0) throw NumericError("l2_normalize: zero-norm vector");
    Tensor out(vv.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vv[i] / n;
    const int iv = v.id, io = static_cast<int>(nodes_.size());
    return push(std::move(out), needs_grad(v), [iv, io, n](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& vv = t.nodes_[iv].value;
        Tensor& gv = t.grad_buf(iv);
        double vg = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) vg += vv[i] * g[i];
        const double n3 = n * n * n;
        for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i] / n - vv[i] * vg / n3;
    });
}

}  // namespace lsa
