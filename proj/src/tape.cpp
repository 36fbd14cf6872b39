#include "adprog/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adprog/errors.hpp"
#include "adprog/rng.hpp"

namespace adprog::num {

namespace {

[[noreturn]] void fail(const std::string& what) { throw NumericalError("tape: " + what); }

int normalize_axis(int axis, int rank, const char* op) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) fail(std::string(op) + ": axis out of range");
    return axis;
}

// Decomposes a shape around `axis` into (outer, len, inner) so element
// (o, a, i) lives at flat index (o * len + a) * inner + i.
struct Lanes {
    std::int64_t outer = 1;
    std::int64_t len = 1;
    std::int64_t inner = 1;
};

Lanes lanes_of(const std::vector<std::int64_t>& shape, int axis) {
    Lanes l;
    for (int i = 0; i < axis; ++i) l.outer *= shape[static_cast<std::size_t>(i)];
    l.len = shape[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i)
        l.inner *= shape[i];
    return l;
}

bool is_suffix(const std::vector<std::int64_t>& small, const std::vector<std::int64_t>& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// C (m x n) += A (m x k) * B (k x n), with optional transposes applied to the
// logical operands (dimensions are those of the logical, post-transpose view).
void gemm_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
              std::int64_t n, bool trans_a, bool trans_b) {
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = trans_a ? a[p * m + i] : a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = trans_b ? nullptr : b + p * n;
            double* crow = c + i * n;
            if (trans_b) {
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
            } else {
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

}  // namespace

std::size_t Tape::check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.index) >= nodes_.size())
        throw NumericalError("tape: invalid variable handle");
    return static_cast<std::size_t>(v.index);
}

Var Tape::make(Tensor value, bool requires_grad) {
    auto n = std::make_unique<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buf(Var v) {
    Node& n = node(v);
    if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
    n.grad_ready = true;
    return n.grad;
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.numel() == 0) {
        // Lazily materialize a zero gradient for vars outside the swept
        // subgraph. Constness does not propagate through the node pointer.
        Node& mut = *nodes_[check(v)];
        mut.grad = Tensor(mut.value.shape());
    }
    return n.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) { return make(std::move(value), requires_grad); }

Var Tape::add(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!is_suffix(bv.shape(), av.shape()))
        fail("add: right shape " + bv.shape_str() + " is not a suffix of " + av.shape_str());
    Tensor out(av.shape());
    const std::int64_t bn = bv.numel();
    for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i % bn];
    bool rg = node(a).requires_grad || node(b).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, a, b, o, bn]() {
            const Tensor& g = node(o).grad;
            if (node(a).requires_grad) {
                Tensor& ga = grad_buf(a);
                for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
            }
            if (node(b).requires_grad) {
                Tensor& gb = grad_buf(b);
                for (std::int64_t i = 0; i < g.numel(); ++i) gb[i % bn] += g[i];
            }
        };
    }
    return o;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv))
        fail("sub: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] - bv[i];
    bool rg = node(a).requires_grad || node(b).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, a, b, o]() {
            const Tensor& g = node(o).grad;
            if (node(a).requires_grad) {
                Tensor& ga = grad_buf(a);
                for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
            }
            if (node(b).requires_grad) {
                Tensor& gb = grad_buf(b);
                for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
            }
        };
    }
    return o;
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!is_suffix(bv.shape(), av.shape()))
        fail("mul: right shape " + bv.shape_str() + " is not a suffix of " + av.shape_str());
    Tensor out(av.shape());
    const std::int64_t bn = bv.numel();
    for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] * bv[i % bn];
    bool rg = node(a).requires_grad || node(b).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, a, b, o, bn]() {
            const Tensor& g = node(o).grad;
            const Tensor& av2 = node(a).value;
            const Tensor& bv2 = node(b).value;
            if (node(a).requires_grad) {
                Tensor& ga = grad_buf(a);
                for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv2[i % bn];
            }
            if (node(b).requires_grad) {
                Tensor& gb = grad_buf(b);
                for (std::int64_t i = 0; i < g.numel(); ++i) gb[i % bn] += g[i] * av2[i];
            }
        };
    }
    return o;
}

Var Tape::scale(Var a, double c) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] * c;
    bool rg = node(a).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, a, o, c]() {
            const Tensor& g = node(o).grad;
            Tensor& ga = grad_buf(a);
            for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * c;
        };
    }
    return o;
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rank() < 2) fail("matmul: left operand must have rank >= 2");
    if (bv.rank() != 2 && bv.rank() != av.rank())
        fail("matmul: right operand must be rank 2 (shared) or match left rank (batched)");

    if (bv.rank() == 2) {
        // Shared weights: contract the last axis of a with b's first axis.
        const std::int64_t k = av.dim(av.rank() - 1);
        if (k != bv.dim(0))
            fail("matmul: inner dims differ, " + av.shape_str() + " x " + bv.shape_str());
        const std::int64_t n = bv.dim(1);
        const std::int64_t rows = av.numel() / k;
        std::vector<std::int64_t> oshape = av.shape();
        oshape.back() = n;
        Tensor out(oshape);
        gemm_acc(av.data(), bv.data(), out.data(), rows, k, n, false, false);
        bool rg = node(a).requires_grad || node(b).requires_grad;
        Var o = make(std::move(out), rg);
        if (rg) {
            node(o).backprop = [this, a, b, o, rows, k, n]() {
                const Tensor& g = node(o).grad;
                const Tensor& av2 = node(a).value;
                const Tensor& bv2 = node(b).value;
                if (node(a).requires_grad)
                    gemm_acc(g.data(), bv2.data(), grad_buf(a).data(), rows, n, k, false, true);
                if (node(b).requires_grad)
                    gemm_acc(av2.data(), g.data(), grad_buf(b).data(), k, rows, n, true, false);
            };
        }
        return o;
    }

    // Batched: identical leading dims, contract a's last axis with b's
    // second-to-last.
    const int r = av.rank();
    for (int i = 0; i < r - 2; ++i)
        if (av.dim(i) != bv.dim(i))
            fail("matmul: batch dims differ, " + av.shape_str() + " x " + bv.shape_str());
    const std::int64_t m = av.dim(r - 2);
    const std::int64_t k = av.dim(r - 1);
    if (k != bv.dim(r - 2))
        fail("matmul: inner dims differ, " + av.shape_str() + " x " + bv.shape_str());
    const std::int64_t n = bv.dim(r - 1);
    std::int64_t batch = 1;
    for (int i = 0; i < r - 2; ++i) batch *= av.dim(i);
    std::vector<std::int64_t> oshape = av.shape();
    oshape[static_cast<std::size_t>(r - 2)] = m;
    oshape[static_cast<std::size_t>(r - 1)] = n;
    Tensor out(oshape);
    for (std::int64_t s = 0; s < batch; ++s)
        gemm_acc(av.data() + s * m * k, bv.data() + s * k * n, out.data() + s * m * n, m, k, n,
                 false, false);
    bool rg = node(a).requires_grad || node(b).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, a, b, o, batch, m, k, n]() {
            const Tensor& g = node(o).grad;
            const Tensor& av2 = node(a).value;
            const Tensor& bv2 = node(b).value;
            for (std::int64_t s = 0; s < batch; ++s) {
                if (node(a).requires_grad)
                    gemm_acc(g.data() + s * m * n, bv2.data() + s * k * n,
                             grad_buf(a).data() + s * m * k, m, n, k, false, true);
                if (node(b).requires_grad)
                    gemm_acc(av2.data() + s * m * k, g.data() + s * m * n,
                             grad_buf(b).data() + s * k * n, k, m, n, true, false);
            }
        };
    }
    return o;
}

Var Tape::sigmoid(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < av.numel(); ++i) {
        double x = av[i];
        // Branch keeps exp() argument non-positive for stability at both tails.
        out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    bool rg = node(a).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, a, o]() {
            const Tensor& g = node(o).grad;
            const Tensor& y = node(o).value;
            Tensor& ga = grad_buf(a);
            for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        };
    }
    return o;
}

Var Tape::tanh(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = std::tanh(av[i]);
    bool rg = node(a).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, a, o]() {
            const Tensor& g = node(o).grad;
            const Tensor& y = node(o).value;
            Tensor& ga = grad_buf(a);
            for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        };
    }
    return o;
}

Var Tape::relu(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    bool rg = node(a).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, a, o]() {
            const Tensor& g = node(o).grad;
            const Tensor& x = node(a).value;
            Tensor& ga = grad_buf(a);
            for (std::int64_t i = 0; i < g.numel(); ++i)
                if (x[i] > 0.0) ga[i] += g[i];
        };
    }
    return o;
}

Var Tape::softmax(Var a, int axis) {
    const Tensor& av = value(a);
    axis = normalize_axis(axis, av.rank(), "softmax");
    const Lanes L = lanes_of(av.shape(), axis);
    Tensor out(av.shape());
    for (std::int64_t o = 0; o < L.outer; ++o) {
        for (std::int64_t i = 0; i < L.inner; ++i) {
            const std::int64_t base = o * L.len * L.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t j = 0; j < L.len; ++j) mx = std::max(mx, av[base + j * L.inner]);
            if (!(mx > -std::numeric_limits<double>::infinity())) {
                // Every lane entry is -inf (fully masked): emit zeros rather
                // than NaN so masked attention rows stay inert.
                for (std::int64_t j = 0; j < L.len; ++j) out[base + j * L.inner] = 0.0;
                continue;
            }
            double sum = 0.0;
            for (std::int64_t j = 0; j < L.len; ++j) {
                double e = std::exp(av[base + j * L.inner] - mx);
                out[base + j * L.inner] = e;
                sum += e;
            }
            for (std::int64_t j = 0; j < L.len; ++j) out[base + j * L.inner] /= sum;
        }
    }
    bool rg = node(a).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, a, o, L]() {
            const Tensor& g = node(o).grad;
            const Tensor& y = node(o).value;
            Tensor& ga = grad_buf(a);
            for (std::int64_t ou = 0; ou < L.outer; ++ou) {
                for (std::int64_t i = 0; i < L.inner; ++i) {
                    const std::int64_t base = ou * L.len * L.inner + i;
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < L.len; ++j)
                        dot += g[base + j * L.inner] * y[base + j * L.inner];
                    for (std::int64_t j = 0; j < L.len; ++j) {
                        const std::int64_t idx = base + j * L.inner;
                        ga[idx] += y[idx] * (g[idx] - dot);
                    }
                }
            }
        };
    }
    return o;
}

Var Tape::log_softmax(Var a, int axis) {
    const Tensor& av = value(a);
    axis = normalize_axis(axis, av.rank(), "log_softmax");
    const Lanes L = lanes_of(av.shape(), axis);
    Tensor out(av.shape());
    for (std::int64_t o = 0; o < L.outer; ++o) {
        for (std::int64_t i = 0; i < L.inner; ++i) {
            const std::int64_t base = o * L.len * L.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t j = 0; j < L.len; ++j) mx = std::max(mx, av[base + j * L.inner]);
            double sum = 0.0;
            for (std::int64_t j = 0; j < L.len; ++j)
                sum += std::exp(av[base + j * L.inner] - mx);
            const double lse = mx + std::log(sum);
            for (std::int64_t j = 0; j < L.len; ++j)
                out[base + j * L.inner] = av[base + j * L.inner] - lse;
        }
    }
    bool rg = node(a).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, a, o, L]() {
            const Tensor& g = node(o).grad;
            const Tensor& y = node(o).value;  // log-probabilities
            Tensor& ga = grad_buf(a);
            for (std::int64_t ou = 0; ou < L.outer; ++ou) {
                for (std::int64_t i = 0; i < L.inner; ++i) {
                    const std::int64_t base = ou * L.len * L.inner + i;
                    double gsum = 0.0;
                    for (std::int64_t j = 0; j < L.len; ++j) gsum += g[base + j * L.inner];
                    for (std::int64_t j = 0; j < L.len; ++j) {
                        const std::int64_t idx = base + j * L.inner;
                        ga[idx] += g[idx] - std::exp(y[idx]) * gsum;
                    }
                }
            }
        };
    }
    return o;
}

Var Tape::layer_norm(Var x, Var gain, Var bias) {
    const Tensor& xv = value(x);
    const Tensor& gv = value(gain);
    const Tensor& bv = value(bias);
    if (xv.rank() < 1) fail("layer_norm: input must have rank >= 1");
    const std::int64_t c = xv.dim(xv.rank() - 1);
    if (gv.rank() != 1 || gv.dim(0) != c || bv.rank() != 1 || bv.dim(0) != c)
        fail("layer_norm: gain/bias must be rank-1 of size " + std::to_string(c));
    constexpr double kEps = 1e-12;
    const std::int64_t rows = xv.numel() / c;
    Tensor out(xv.shape());
    // Cache per-row 1/sigma and the normalized values for the backward pass.
    auto inv_sigma = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(xv.numel()));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * c;
        double mean = 0.0;
        for (std::int64_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + kEps);
        (*inv_sigma)[static_cast<std::size_t>(r)] = is;
        for (std::int64_t j = 0; j < c; ++j) {
            const double h = (row[j] - mean) * is;
            (*xhat)[static_cast<std::size_t>(r * c + j)] = h;
            out[r * c + j] = gv[j] * h + bv[j];
        }
    }
    bool rg = node(x).requires_grad || node(gain).requires_grad || node(bias).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, x, gain, bias, o, rows, c, inv_sigma, xhat]() {
            const Tensor& g = node(o).grad;
            const Tensor& gv2 = node(gain).value;
            if (node(gain).requires_grad || node(bias).requires_grad) {
                Tensor* gg = node(gain).requires_grad ? &grad_buf(gain) : nullptr;
                Tensor* gb = node(bias).requires_grad ? &grad_buf(bias) : nullptr;
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t j = 0; j < c; ++j) {
                        const std::int64_t idx = r * c + j;
                        if (gg) (*gg)[j] += g[idx] * (*xhat)[static_cast<std::size_t>(idx)];
                        if (gb) (*gb)[j] += g[idx];
                    }
                }
            }
            if (node(x).requires_grad) {
                Tensor& gx = grad_buf(x);
                for (std::int64_t r = 0; r < rows; ++r) {
                    // dL/dxhat_j = g_j * gain_j; project out the mean and the
                    // component along xhat, then rescale by 1/sigma.
                    double s1 = 0.0, s2 = 0.0;
                    for (std::int64_t j = 0; j < c; ++j) {
                        const std::int64_t idx = r * c + j;
                        const double dh = g[idx] * gv2[j];
                        s1 += dh;
                        s2 += dh * (*xhat)[static_cast<std::size_t>(idx)];
                    }
                    s1 /= static_cast<double>(c);
                    s2 /= static_cast<double>(c);
                    const double is = (*inv_sigma)[static_cast<std::size_t>(r)];
                    for (std::int64_t j = 0; j < c; ++j) {
                        const std::int64_t idx = r * c + j;
                        const double dh = g[idx] * gv2[j];
                        gx[idx] += is * (dh - s1 - (*xhat)[static_cast<std::size_t>(idx)] * s2);
                    }
                }
            }
        };
    }
    return o;
}

Var Tape::dropout(Var x, double p, bool train, std::uint64_t seed, std::uint64_t layer,
                  std::uint64_t step) {
    if (!train || p <= 0.0) return x;
    if (p >= 1.0) fail("dropout: probability must be < 1");
    const Tensor& xv = value(x);
    const double inv_keep = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(xv.numel()));
    Tensor out(xv.shape());
    for (std::int64_t i = 0; i < xv.numel(); ++i) {
        const bool keep =
            counter_unit(seed, layer, step, static_cast<std::uint64_t>(i)) >= p;
        (*mask)[static_cast<std::size_t>(i)] = keep ? 1 : 0;
        out[i] = keep ? xv[i] * inv_keep : 0.0;
    }
    bool rg = node(x).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, x, o, mask, inv_keep]() {
            const Tensor& g = node(o).grad;
            Tensor& gx = grad_buf(x);
            for (std::int64_t i = 0; i < g.numel(); ++i)
                if ((*mask)[static_cast<std::size_t>(i)]) gx[i] += g[i] * inv_keep;
        };
    }
    return o;
}

Var Tape::concat(const std::vector<Var>& xs, int axis) {
    if (xs.empty()) fail("concat: needs at least one input");
    const Tensor& first = value(xs[0]);
    axis = normalize_axis(axis, first.rank(), "concat");
    std::int64_t total = 0;
    for (Var v : xs) {
        const Tensor& t = value(v);
        if (t.rank() != first.rank()) fail("concat: rank mismatch");
        for (int d = 0; d < first.rank(); ++d)
            if (d != axis && t.dim(d) != first.dim(d))
                fail("concat: shape mismatch off the concat axis");
        total += t.dim(axis);
    }
    std::vector<std::int64_t> oshape = first.shape();
    oshape[static_cast<std::size_t>(axis)] = total;
    const Lanes L = lanes_of(oshape, axis);
    Tensor out(oshape);
    std::int64_t offset = 0;
    std::vector<std::int64_t> offsets;
    for (Var v : xs) {
        const Tensor& t = value(v);
        const std::int64_t len = t.dim(axis);
        offsets.push_back(offset);
        for (std::int64_t o = 0; o < L.outer; ++o)
            for (std::int64_t j = 0; j < len; ++j)
                for (std::int64_t i = 0; i < L.inner; ++i)
                    out[(o * total + offset + j) * L.inner + i] = t[(o * len + j) * L.inner + i];
        offset += len;
    }
    bool rg = false;
    for (Var v : xs) rg = rg || node(v).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        std::vector<Var> inputs = xs;
        node(o).backprop = [this, inputs, offsets, o, L, total, axis]() {
            const Tensor& g = node(o).grad;
            for (std::size_t s = 0; s < inputs.size(); ++s) {
                if (!node(inputs[s]).requires_grad) continue;
                const std::int64_t len = node(inputs[s]).value.dim(axis);
                Tensor& gi = grad_buf(inputs[s]);
                const std::int64_t off = offsets[s];
                for (std::int64_t ou = 0; ou < L.outer; ++ou)
                    for (std::int64_t j = 0; j < len; ++j)
                        for (std::int64_t i = 0; i < L.inner; ++i)
                            gi[(ou * len + j) * L.inner + i] +=
                                g[(ou * total + off + j) * L.inner + i];
            }
        };
    }
    return o;
}

Var Tape::slice(Var x, int axis, std::int64_t start, std::int64_t len) {
    const Tensor& xv = value(x);
    axis = normalize_axis(axis, xv.rank(), "slice");
    const std::int64_t alen = xv.dim(axis);
    if (start < 0 || len < 1 || start + len > alen) fail("slice: range out of bounds");
    std::vector<std::int64_t> oshape = xv.shape();
    oshape[static_cast<std::size_t>(axis)] = len;
    const Lanes L = lanes_of(xv.shape(), axis);
    Tensor out(oshape);
    for (std::int64_t o = 0; o < L.outer; ++o)
        for (std::int64_t j = 0; j < len; ++j)
            for (std::int64_t i = 0; i < L.inner; ++i)
                out[(o * len + j) * L.inner + i] = xv[(o * alen + start + j) * L.inner + i];
    bool rg = node(x).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, x, o, L, alen, start, len]() {
            const Tensor& g = node(o).grad;
            Tensor& gx = grad_buf(x);
            for (std::int64_t ou = 0; ou < L.outer; ++ou)
                for (std::int64_t j = 0; j < len; ++j)
                    for (std::int64_t i = 0; i < L.inner; ++i)
                        gx[(ou * alen + start + j) * L.inner + i] +=
                            g[(ou * len + j) * L.inner + i];
        };
    }
    return o;
}

Var Tape::embedding_lookup(Var table, const std::vector<std::int64_t>& ids) {
    const Tensor& tv = value(table);
    if (tv.rank() != 2) fail("embedding_lookup: table must be rank 2");
    const std::int64_t v = tv.dim(0);
    const std::int64_t d = tv.dim(1);
    for (std::int64_t id : ids)
        if (id < 0 || id >= v) fail("embedding_lookup: id out of range");
    Tensor out({static_cast<std::int64_t>(ids.size()), d});
    for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::int64_t j = 0; j < d; ++j)
            out[static_cast<std::int64_t>(r) * d + j] = tv[ids[r] * d + j];
    bool rg = node(table).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        std::vector<std::int64_t> ids_copy = ids;
        node(o).backprop = [this, table, o, ids_copy, d]() {
            const Tensor& g = node(o).grad;
            Tensor& gt = grad_buf(table);
            for (std::size_t r = 0; r < ids_copy.size(); ++r)
                for (std::int64_t j = 0; j < d; ++j)
                    gt[ids_copy[r] * d + j] += g[static_cast<std::int64_t>(r) * d + j];
        };
    }
    return o;
}

Var Tape::masked_fill(Var x, std::shared_ptr<const std::vector<std::uint8_t>> mask,
                      double fill_value) {
    const Tensor& xv = value(x);
    if (!mask || static_cast<std::int64_t>(mask->size()) != xv.numel())
        fail("masked_fill: mask size must equal element count");
    Tensor out(xv.shape());
    for (std::int64_t i = 0; i < xv.numel(); ++i)
        out[i] = (*mask)[static_cast<std::size_t>(i)] ? fill_value : xv[i];
    bool rg = node(x).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, x, o, mask]() {
            const Tensor& g = node(o).grad;
            Tensor& gx = grad_buf(x);
            for (std::int64_t i = 0; i < g.numel(); ++i)
                if (!(*mask)[static_cast<std::size_t>(i)]) gx[i] += g[i];
        };
    }
    return o;
}

Var Tape::transpose(Var x, int axis_a, int axis_b) {
    const Tensor& xv = value(x);
    axis_a = normalize_axis(axis_a, xv.rank(), "transpose");
    axis_b = normalize_axis(axis_b, xv.rank(), "transpose");
    if (axis_a == axis_b) return x;
    const int r = xv.rank();
    std::vector<std::int64_t> oshape = xv.shape();
    std::swap(oshape[static_cast<std::size_t>(axis_a)], oshape[static_cast<std::size_t>(axis_b)]);
    // Strides of the input, then walk the output in row-major order mapping
    // each output coordinate back to the input flat index.
    std::vector<std::int64_t> istride(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i)
        istride[static_cast<std::size_t>(i)] =
            istride[static_cast<std::size_t>(i + 1)] * xv.dim(i + 1);
    std::vector<std::int64_t> map_stride(istride);
    std::swap(map_stride[static_cast<std::size_t>(axis_a)],
              map_stride[static_cast<std::size_t>(axis_b)]);
    Tensor out(oshape);
    std::vector<std::int64_t> coord(static_cast<std::size_t>(r), 0);
    for (std::int64_t flat = 0; flat < out.numel(); ++flat) {
        std::int64_t src = 0;
        for (int i = 0; i < r; ++i) src += coord[static_cast<std::size_t>(i)] *
                                           map_stride[static_cast<std::size_t>(i)];
        out[flat] = xv[src];
        for (int i = r - 1; i >= 0; --i) {
            if (++coord[static_cast<std::size_t>(i)] < oshape[static_cast<std::size_t>(i)]) break;
            coord[static_cast<std::size_t>(i)] = 0;
        }
    }
    bool rg = node(x).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, x, o, map_stride, oshape, r]() {
            const Tensor& g = node(o).grad;
            Tensor& gx = grad_buf(x);
            std::vector<std::int64_t> coord(static_cast<std::size_t>(r), 0);
            for (std::int64_t flat = 0; flat < g.numel(); ++flat) {
                std::int64_t src = 0;
                for (int i = 0; i < r; ++i)
                    src += coord[static_cast<std::size_t>(i)] *
                           map_stride[static_cast<std::size_t>(i)];
                gx[src] += g[flat];
                for (int i = r - 1; i >= 0; --i) {
                    if (++coord[static_cast<std::size_t>(i)] <
                        oshape[static_cast<std::size_t>(i)])
                        break;
                    coord[static_cast<std::size_t>(i)] = 0;
                }
            }
        };
    }
    return o;
}

Var Tape::reshape(Var x, std::vector<std::int64_t> new_shape) {
    const Tensor& xv = value(x);
    if (shape_numel(new_shape) != xv.numel())
        fail("reshape: element count mismatch for " + xv.shape_str());
    Tensor out(new_shape, std::vector<double>(xv.data(), xv.data() + xv.numel()));
    bool rg = node(x).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, x, o]() {
            const Tensor& g = node(o).grad;
            Tensor& gx = grad_buf(x);
            for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        };
    }
    return o;
}

Var Tape::expand_leading(Var x, std::int64_t n) {
    if (n < 1) fail("expand_leading: n must be >= 1");
    const Tensor& xv = value(x);
    std::vector<std::int64_t> oshape;
    oshape.push_back(n);
    for (std::int64_t d : xv.shape()) oshape.push_back(d);
    const std::int64_t block = xv.numel();
    Tensor out(oshape);
    for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t i = 0; i < block; ++i) out[s * block + i] = xv[i];
    bool rg = node(x).requires_grad;
    Var o = make(std::move(out), rg);
    if (rg) {
        node(o).backprop = [this, x, o, n, block]() {
            const Tensor& g = node(o).grad;
            Tensor& gx = grad_buf(x);
            for (std::int64_t s = 0; s < n; ++s)
                for (std::int64_t i = 0; i < block; ++i) gx[i] += g[s * block + i];
        };
    }
    return o;
}

Var Tape::sum(Var x) {
    const Tensor& xv = value(x);
    double total = 0.0;
    for (std::int64_t i = 0; i < xv.numel(); ++i) total += xv[i];
    bool rg = node(x).requires_grad;
    Var o = make(Tensor::scalar(total), rg);
    if (rg) {
        node(o).backprop = [this, x, o]() {
            const double g = node(o).grad[0];
            Tensor& gx = grad_buf(x);
            for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
        };
    }
    return o;
}

Var Tape::mean(Var x) {
    const Tensor& xv = value(x);
    const std::int64_t n = xv.numel();
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) total += xv[i];
    bool rg = node(x).requires_grad;
    Var o = make(Tensor::scalar(total / static_cast<double>(n)), rg);
    if (rg) {
        node(o).backprop = [this, x, o, n]() {
            const double g = node(o).grad[0] / static_cast<double>(n);
            Tensor& gx = grad_buf(x);
            for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
        };
    }
    return o;
}

std::size_t Tape::backward(Var loss) {
    Node& ln = node(loss);
    if (ln.value.numel() != 1) fail("backward: loss must be a single element");
    for (auto& n : nodes_) {
        if (n->grad.numel() != 0)
            std::fill(n->grad.data(), n->grad.data() + n->grad.numel(), 0.0);
        n->grad_ready = false;
    }
    grad_buf(loss)[0] = 1.0;
    std::size_t visited = 0;
    for (std::int32_t i = loss.index; i >= 0; --i) {
        Node& n = *nodes_[static_cast<std::size_t>(i)];
        if (!n.grad_ready || !n.backprop) continue;
        n.backprop();
        ++visited;
    }
    return visited;
}

}  // namespace adprog::num
