#pragma once

#include <algorithm>
#include <cmath>

#include "ddnd/detail/gemm.hpp"
#include "ddnd/tensor.hpp"

namespace ddnd {

// ---------------------------------------------------------------------------
// Elementwise ops. Broadcasting is restricted to equal shapes and
// scalar-vs-tensor (either side); anything else is a shape error.
// ---------------------------------------------------------------------------

enum class Bcast { Equal, ScalarLeft, ScalarRight };

inline Bcast bcast_mode(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() == b.shape()) return Bcast::Equal;
    if (a.numel() == 1) return Bcast::ScalarLeft;
    if (b.numel() == 1) return Bcast::ScalarRight;
    fail(std::string(who) + ": incompatible shapes " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
}

template <class F, class DA, class DB>
Tensor binary_ew(const char* name, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
    Bcast m = bcast_mode(a, b, name);
    const Tensor& big = (m == Bcast::ScalarLeft) ? b : a;
    const long long n = big.numel();
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(static_cast<size_t>(n));
    for (long long i = 0; i < n; ++i) {
        double av = (m == Bcast::ScalarLeft) ? ad[0] : ad[static_cast<size_t>(i)];
        double bv = (m == Bcast::ScalarRight) ? bd[0] : bd[static_cast<size_t>(i)];
        out[static_cast<size_t>(i)] = f(av, bv);
    }
    auto ai = a.impl();
    auto bi = b.impl();
    return make_node(big.shape(), std::move(out), {a, b},
                     [ai, bi, m, f, dfa, dfb](TensorImpl& self) {
                         const auto& g = self.grad;
                         const bool aneed = ai->requires_grad;
                         const bool bneed = bi->requires_grad;
                         std::vector<double>* ag = aneed ? &ensure_grad(*ai) : nullptr;
                         std::vector<double>* bg = bneed ? &ensure_grad(*bi) : nullptr;
                         const auto& ad = ai->data;
                         const auto& bd = bi->data;
                         for (size_t i = 0; i < g.size(); ++i) {
                             double av = (m == Bcast::ScalarLeft) ? ad[0] : ad[i];
                             double bv = (m == Bcast::ScalarRight) ? bd[0] : bd[i];
                             if (aneed) (*ag)[m == Bcast::ScalarLeft ? 0 : i] += dfa(av, bv) * g[i];
                             if (bneed) (*bg)[m == Bcast::ScalarRight ? 0 : i] += dfb(av, bv) * g[i];
                         }
                     });
}

template <class F, class DF>
Tensor unary_ew(const char* /*name*/, const Tensor& x, F f, DF df) {
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
    auto xi = x.impl();
    return make_node(x.shape(), std::move(out), {x}, [xi, df](TensorImpl& self) {
        if (!xi->requires_grad) return;
        auto& xg = ensure_grad(*xi);
        const auto& g = self.grad;
        const auto& xd = xi->data;
        const auto& yd = self.data;
        for (size_t i = 0; i < g.size(); ++i) xg[i] += df(xd[i], yd[i]) * g[i];
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    return binary_ew(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_ew(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_ew(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    return binary_ew(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

// Per-element minimum of two tensors; ties route the gradient to the first.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
    return binary_ew(
        "minimum", a, b, [](double x, double y) { return x < y ? x : y; },
        [](double x, double y) { return x <= y ? 1.0 : 0.0; },
        [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

inline Tensor neg(const Tensor& x) {
    return unary_ew(
        "neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

inline Tensor abs(const Tensor& x) {
    return unary_ew(
        "abs", x, [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

inline Tensor exp(const Tensor& x) {
    return unary_ew(
        "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
    return unary_ew(
        "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor sqrt(const Tensor& x) {
    return unary_ew(
        "sqrt", x, [](double v) { return std::sqrt(v); },
        [](double, double y) { return 0.5 / y; });
}

inline Tensor sigmoid(const Tensor& x) {
    return unary_ew(
        "sigmoid", x,
        [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor elu(const Tensor& x) {
    return unary_ew(
        "elu", x, [](double v) { return v > 0 ? v : std::expm1(v); },
        [](double v, double y) { return v > 0 ? 1.0 : y + 1.0; });
}

inline Tensor clamp_min(const Tensor& x, double lo) {
    return unary_ew(
        "clamp_min", x, [lo](double v) { return v < lo ? lo : v; },
        [lo](double v, double) { return v < lo ? 0.0 : 1.0; });
}

inline Tensor scalar_mul(const Tensor& x, double c) {
    return unary_ew(
        "scalar_mul", x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

inline Tensor scalar_add(const Tensor& x, double c) {
    return unary_ew(
        "scalar_add", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
    double s = 0;
    for (double v : x.data()) s += v;
    auto xi = x.impl();
    return make_node({1}, {s}, {x}, [xi](TensorImpl& self) {
        if (!xi->requires_grad) return;
        auto& xg = ensure_grad(*xi);
        const double g = self.grad[0];
        for (auto& v : xg) v += g;
    });
}

inline Tensor mean(const Tensor& x) {
    check(x.numel() > 0, "mean: empty tensor");
    double s = 0;
    for (double v : x.data()) s += v;
    const double inv = 1.0 / static_cast<double>(x.numel());
    auto xi = x.impl();
    return make_node({1}, {s * inv}, {x}, [xi, inv](TensorImpl& self) {
        if (!xi->requires_grad) return;
        auto& xg = ensure_grad(*xi);
        const double g = self.grad[0] * inv;
        for (auto& v : xg) v += g;
    });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
    check(numel_of(shape) == x.numel(),
          "reshape: cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    auto xi = x.impl();
    return make_node(std::move(shape), x.data(), {x}, [xi](TensorImpl& self) {
        if (!xi->requires_grad) return;
        auto& xg = ensure_grad(*xi);
        for (size_t i = 0; i < self.grad.size(); ++i) xg[i] += self.grad[i];
    });
}

inline Tensor transpose2d(const Tensor& x) {
    check(x.ndim() == 2, "transpose2d: expected rank-2, got " + shape_str(x.shape()));
    const int m = x.dim(0), n = x.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n);
    const auto& xd = x.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = xd[static_cast<size_t>(i) * n + j];
    auto xi = x.impl();
    return make_node({n, m}, std::move(out), {x}, [xi, m, n](TensorImpl& self) {
        if (!xi->requires_grad) return;
        auto& xg = ensure_grad(*xi);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                xg[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j) * m + i];
    });
}

inline Tensor slice_row(const Tensor& x, int r) {
    check(x.ndim() == 2, "slice_row: expected rank-2, got " + shape_str(x.shape()));
    check(r >= 0 && r < x.dim(0), "slice_row: row out of range");
    const int n = x.dim(1);
    std::vector<double> out(x.data().begin() + static_cast<size_t>(r) * n,
                            x.data().begin() + static_cast<size_t>(r + 1) * n);
    auto xi = x.impl();
    return make_node({n}, std::move(out), {x}, [xi, r, n](TensorImpl& self) {
        if (!xi->requires_grad) return;
        auto& xg = ensure_grad(*xi);
        for (int j = 0; j < n; ++j) xg[static_cast<size_t>(r) * n + j] += self.grad[static_cast<size_t>(j)];
    });
}

inline Tensor elem(const Tensor& x, long long i) {
    check(i >= 0 && i < x.numel(), "elem: index out of range");
    auto xi = x.impl();
    return make_node({1}, {x.data()[static_cast<size_t>(i)]}, {x}, [xi, i](TensorImpl& self) {
        if (!xi->requires_grad) return;
        ensure_grad(*xi)[static_cast<size_t>(i)] += self.grad[0];
    });
}

inline Tensor stack_scalars(Shape shape, const std::vector<Tensor>& parts) {
    check(numel_of(shape) == static_cast<long long>(parts.size()),
          "stack_scalars: part count does not match shape");
    std::vector<double> out(parts.size());
    for (size_t i = 0; i < parts.size(); ++i) {
        check(parts[i].numel() == 1, "stack_scalars: parts must be scalars");
        out[i] = parts[i][0];
    }
    std::vector<std::shared_ptr<TensorImpl>> impls;
    impls.reserve(parts.size());
    for (const auto& p : parts) impls.push_back(p.impl());
    return make_node(std::move(shape), std::move(out), parts, [impls](TensorImpl& self) {
        for (size_t i = 0; i < impls.size(); ++i)
            if (impls[i]->requires_grad) ensure_grad(*impls[i])[0] += self.grad[i];
    });
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check(a.ndim() == 4 && b.ndim() == 4, "concat_channels: expected NCHW tensors");
    check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    const long long hw = static_cast<long long>(h) * w;
    std::vector<double> out(static_cast<size_t>(n) * (ca + cb) * hw);
    const auto& advec = a.data();
    const auto& bdvec = b.data();
    for (int ni = 0; ni < n; ++ni) {
        std::copy(advec.begin() + ni * ca * hw, advec.begin() + (ni + 1) * ca * hw,
                  out.begin() + static_cast<size_t>(ni) * (ca + cb) * hw);
        std::copy(bdvec.begin() + ni * cb * hw, bdvec.begin() + (ni + 1) * cb * hw,
                  out.begin() + static_cast<size_t>(ni) * (ca + cb) * hw + ca * hw);
    }
    auto ai = a.impl();
    auto bi = b.impl();
    return make_node({n, ca + cb, h, w}, std::move(out), {a, b},
                     [ai, bi, n, ca, cb, hw](TensorImpl& self) {
                         for (int ni = 0; ni < n; ++ni) {
                             const double* g = self.grad.data() + static_cast<size_t>(ni) * (ca + cb) * hw;
                             if (ai->requires_grad) {
                                 auto& ag = ensure_grad(*ai);
                                 for (long long i = 0; i < ca * hw; ++i) ag[ni * ca * hw + i] += g[i];
                             }
                             if (bi->requires_grad) {
                                 auto& bg = ensure_grad(*bi);
                                 for (long long i = 0; i < cb * hw; ++i) bg[ni * cb * hw + i] += g[ca * hw + i];
                             }
                         }
                     });
}

// (x, y) pixel-coordinate planes [N,1,H,W] -> sampling grid [N,H,W,2].
inline Tensor pack_coords(const Tensor& x, const Tensor& y) {
    check(x.ndim() == 4 && x.dim(1) == 1 && x.shape() == y.shape(),
          "pack_coords: expected matching [N,1,H,W] planes");
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const long long hw = static_cast<long long>(h) * w;
    std::vector<double> out(static_cast<size_t>(n) * hw * 2);
    const auto& xd = x.data();
    const auto& yd = y.data();
    for (long long i = 0; i < n * hw; ++i) {
        out[static_cast<size_t>(2 * i)] = xd[static_cast<size_t>(i)];
        out[static_cast<size_t>(2 * i + 1)] = yd[static_cast<size_t>(i)];
    }
    auto xi = x.impl();
    auto yi = y.impl();
    return make_node({n, h, w, 2}, std::move(out), {x, y}, [xi, yi](TensorImpl& self) {
        const auto& g = self.grad;
        if (xi->requires_grad) {
            auto& xg = ensure_grad(*xi);
            for (size_t i = 0; i < xg.size(); ++i) xg[i] += g[2 * i];
        }
        if (yi->requires_grad) {
            auto& yg = ensure_grad(*yi);
            for (size_t i = 0; i < yg.size(); ++i) yg[i] += g[2 * i + 1];
        }
    });
}

// [N,C,H,W] -> [N,C], mean over the spatial extent.
inline Tensor spatial_mean(const Tensor& x) {
    check(x.ndim() == 4, "spatial_mean: expected NCHW");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const long long hw = static_cast<long long>(h) * w;
    const double inv = 1.0 / static_cast<double>(hw);
    std::vector<double> out(static_cast<size_t>(n) * c, 0.0);
    const auto& xd = x.data();
    for (int i = 0; i < n * c; ++i) {
        double s = 0;
        for (long long j = 0; j < hw; ++j) s += xd[static_cast<size_t>(i * hw + j)];
        out[static_cast<size_t>(i)] = s * inv;
    }
    auto xi = x.impl();
    return make_node({n, c}, std::move(out), {x}, [xi, hw, inv](TensorImpl& self) {
        if (!xi->requires_grad) return;
        auto& xg = ensure_grad(*xi);
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const double g = self.grad[i] * inv;
            for (long long j = 0; j < hw; ++j) xg[i * hw + static_cast<size_t>(j)] += g;
        }
    });
}

// ---------------------------------------------------------------------------
// Dense linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.ndim() == 2 && b.ndim() == 2, "matmul: expected rank-2 operands");
    check(a.dim(1) == b.dim(0), "matmul: inner dims disagree, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), p = b.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * p);
    detail::gemm(a.data().data(), b.data().data(), out.data(), m, k, p);
    auto ai = a.impl();
    auto bi = b.impl();
    return make_node({m, p}, std::move(out), {a, b}, [ai, bi, m, k, p](TensorImpl& self) {
        const double* g = self.grad.data();
        if (ai->requires_grad)
            detail::gemm_a_bt(g, bi->data.data(), ensure_grad(*ai).data(), m, p, k, true);
        if (bi->requires_grad)
            detail::gemm_at_b(ai->data.data(), g, ensure_grad(*bi).data(), m, k, p, true);
    });
}

// x[N,K] * w[K,M] + b[M]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check(x.ndim() == 2 && w.ndim() == 2 && b.ndim() == 1, "linear: bad ranks");
    check(x.dim(1) == w.dim(0) && w.dim(1) == b.dim(0), "linear: shape mismatch");
    const int n = x.dim(0), k = x.dim(1), m = w.dim(1);
    std::vector<double> out(static_cast<size_t>(n) * m);
    detail::gemm(x.data().data(), w.data().data(), out.data(), n, k, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out[static_cast<size_t>(i) * m + j] += b.data()[static_cast<size_t>(j)];
    auto xi = x.impl();
    auto wi = w.impl();
    auto bimpl = b.impl();
    return make_node({n, m}, std::move(out), {x, w, b}, [xi, wi, bimpl, n, k, m](TensorImpl& self) {
        const double* g = self.grad.data();
        if (xi->requires_grad)
            detail::gemm_a_bt(g, wi->data.data(), ensure_grad(*xi).data(), n, m, k, true);
        if (wi->requires_grad)
            detail::gemm_at_b(xi->data.data(), g, ensure_grad(*wi).data(), n, k, m, true);
        if (bimpl->requires_grad) {
            auto& bg = ensure_grad(*bimpl);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) bg[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * m + j];
        }
    });
}

// ---------------------------------------------------------------------------
// Softmax along an axis, max-subtracted for stability.
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& x, int axis) {
    check(axis >= 0 && axis < x.ndim(), "softmax: axis out of range");
    long long outer = 1, inner = 1;
    const int len = x.dim(axis);
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (long long o = 0; o < outer; ++o) {
        for (long long in = 0; in < inner; ++in) {
            const long long base = o * len * inner + in;
            double mx = xd[static_cast<size_t>(base)];
            for (int l = 1; l < len; ++l) mx = std::max(mx, xd[static_cast<size_t>(base + l * inner)]);
            double s = 0;
            for (int l = 0; l < len; ++l) {
                double e = std::exp(xd[static_cast<size_t>(base + l * inner)] - mx);
                out[static_cast<size_t>(base + l * inner)] = e;
                s += e;
            }
            const double invs = 1.0 / s;
            for (int l = 0; l < len; ++l) out[static_cast<size_t>(base + l * inner)] *= invs;
        }
    }
    auto xi = x.impl();
    return make_node(x.shape(), std::move(out), {x}, [xi, outer, inner, len](TensorImpl& self) {
        if (!xi->requires_grad) return;
        auto& xg = ensure_grad(*xi);
        const auto& y = self.data;
        const auto& g = self.grad;
        for (long long o = 0; o < outer; ++o) {
            for (long long in = 0; in < inner; ++in) {
                const long long base = o * len * inner + in;
                double dot = 0;
                for (int l = 0; l < len; ++l) {
                    const size_t idx = static_cast<size_t>(base + l * inner);
                    dot += g[idx] * y[idx];
                }
                for (int l = 0; l < len; ++l) {
                    const size_t idx = static_cast<size_t>(base + l * inner);
                    xg[idx] += y[idx] * (g[idx] - dot);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// conv2d: zero padding, configurable stride/dilation, im2col + GEMM.
// ---------------------------------------------------------------------------

struct Conv2dDims {
    int n, cin, h, w, cout, kh, kw, stride, dilation, padding, hout, wout;
};

inline Conv2dDims conv2d_dims(const Tensor& x, const Tensor& w, int stride, int dilation,
                              int padding) {
    check(x.ndim() == 4, "conv2d: input must be [N,Cin,H,W], got " + shape_str(x.shape()));
    check(w.ndim() == 4, "conv2d: weight must be [Cout,Cin,kh,kw], got " + shape_str(w.shape()));
    check(stride >= 1 && dilation >= 1 && padding >= 0, "conv2d: bad stride/dilation/padding");
    check(x.dim(1) == w.dim(1), "conv2d: input channels " + std::to_string(x.dim(1)) +
                                    " do not match weight channels " + std::to_string(w.dim(1)));
    Conv2dDims d;
    d.n = x.dim(0); d.cin = x.dim(1); d.h = x.dim(2); d.w = x.dim(3);
    d.cout = w.dim(0); d.kh = w.dim(2); d.kw = w.dim(3);
    d.stride = stride; d.dilation = dilation; d.padding = padding;
    const int eh = d.h + 2 * padding - dilation * (d.kh - 1) - 1;
    const int ew = d.w + 2 * padding - dilation * (d.kw - 1) - 1;
    check(eh >= 0 && ew >= 0, "conv2d: kernel does not fit padded input");
    d.hout = eh / stride + 1;
    d.wout = ew / stride + 1;
    check(d.hout >= 1 && d.wout >= 1, "conv2d: zero-size output");
    return d;
}

namespace detail {

// col is [Cin*kh*kw, Hout*Wout], x points at one sample [Cin,H,W].
inline void im2col(const double* x, const Conv2dDims& d, double* col) {
    const long long hw_out = static_cast<long long>(d.hout) * d.wout;
    long long row = 0;
    for (int c = 0; c < d.cin; ++c) {
        const double* xc = x + static_cast<long long>(c) * d.h * d.w;
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj, ++row) {
                double* out = col + row * hw_out;
                for (int oh = 0; oh < d.hout; ++oh) {
                    const int ih = oh * d.stride - d.padding + ki * d.dilation;
                    for (int ow = 0; ow < d.wout; ++ow) {
                        const int iw = ow * d.stride - d.padding + kj * d.dilation;
                        out[static_cast<long long>(oh) * d.wout + ow] =
                            (ih >= 0 && ih < d.h && iw >= 0 && iw < d.w)
                                ? xc[static_cast<long long>(ih) * d.w + iw]
                                : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add of a column matrix back into one sample's gradient buffer.
inline void col2im_add(const double* col, const Conv2dDims& d, double* gx) {
    const long long hw_out = static_cast<long long>(d.hout) * d.wout;
    long long row = 0;
    for (int c = 0; c < d.cin; ++c) {
        double* gc = gx + static_cast<long long>(c) * d.h * d.w;
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj, ++row) {
                const double* in = col + row * hw_out;
                for (int oh = 0; oh < d.hout; ++oh) {
                    const int ih = oh * d.stride - d.padding + ki * d.dilation;
                    if (ih < 0 || ih >= d.h) continue;
                    for (int ow = 0; ow < d.wout; ++ow) {
                        const int iw = ow * d.stride - d.padding + kj * d.dilation;
                        if (iw < 0 || iw >= d.w) continue;
                        gc[static_cast<long long>(ih) * d.w + iw] +=
                            in[static_cast<long long>(oh) * d.wout + ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1,
                     int dilation = 1, int padding = 0) {
    const Conv2dDims d = conv2d_dims(x, w, stride, dilation, padding);
    check(b.ndim() == 1 && b.dim(0) == d.cout, "conv2d: bias must be [Cout]");

    const long long hw_out = static_cast<long long>(d.hout) * d.wout;
    const long long ckk = static_cast<long long>(d.cin) * d.kh * d.kw;
    std::vector<double> col(static_cast<size_t>(ckk) * hw_out);
    std::vector<double> out(static_cast<size_t>(d.n) * d.cout * hw_out);

    for (int ni = 0; ni < d.n; ++ni) {
        detail::im2col(x.data().data() + static_cast<long long>(ni) * d.cin * d.h * d.w, d,
                       col.data());
        double* on = out.data() + static_cast<long long>(ni) * d.cout * hw_out;
        detail::gemm(w.data().data(), col.data(), on, d.cout, static_cast<int>(ckk),
                     static_cast<int>(hw_out));
        for (int co = 0; co < d.cout; ++co) {
            const double bv = b.data()[static_cast<size_t>(co)];
            double* oc = on + static_cast<long long>(co) * hw_out;
            for (long long i = 0; i < hw_out; ++i) oc[i] += bv;
        }
    }

    auto xi = x.impl();
    auto wi = w.impl();
    auto bimpl = b.impl();
    return make_node({d.n, d.cout, d.hout, d.wout}, std::move(out), {x, w, b},
                     [xi, wi, bimpl, d, hw_out, ckk](TensorImpl& self) {
                         std::vector<double> col(static_cast<size_t>(ckk) * hw_out);
                         for (int ni = 0; ni < d.n; ++ni) {
                             const double* g =
                                 self.grad.data() + static_cast<long long>(ni) * d.cout * hw_out;
                             if (bimpl->requires_grad) {
                                 auto& bg = ensure_grad(*bimpl);
                                 for (int co = 0; co < d.cout; ++co) {
                                     double s = 0;
                                     for (long long i = 0; i < hw_out; ++i)
                                         s += g[static_cast<long long>(co) * hw_out + i];
                                     bg[static_cast<size_t>(co)] += s;
                                 }
                             }
                             if (wi->requires_grad) {
                                 detail::im2col(
                                     xi->data.data() + static_cast<long long>(ni) * d.cin * d.h * d.w,
                                     d, col.data());
                                 detail::gemm_a_bt(g, col.data(), ensure_grad(*wi).data(), d.cout,
                                                   static_cast<int>(hw_out), static_cast<int>(ckk),
                                                   true);
                             }
                             if (xi->requires_grad) {
                                 detail::gemm_at_b(wi->data.data(), g, col.data(), d.cout,
                                                   static_cast<int>(ckk), static_cast<int>(hw_out));
                                 detail::col2im_add(
                                     col.data(), d,
                                     ensure_grad(*xi).data() +
                                         static_cast<long long>(ni) * d.cin * d.h * d.w);
                             }
                         }
                     });
}

// Depthwise 3x3-style convolution: one filter per channel, stride 1.
inline Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int dilation,
                               int padding) {
    check(x.ndim() == 4, "depthwise_conv2d: input must be NCHW");
    check(w.ndim() == 4 && w.dim(1) == 1, "depthwise_conv2d: weight must be [C,1,kh,kw]");
    check(w.dim(0) == x.dim(1), "depthwise_conv2d: channel mismatch");
    check(b.ndim() == 1 && b.dim(0) == x.dim(1), "depthwise_conv2d: bias must be [C]");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int kh = w.dim(2), kw = w.dim(3);
    const int hout = h + 2 * padding - dilation * (kh - 1);
    const int wout = wd + 2 * padding - dilation * (kw - 1);
    check(hout >= 1 && wout >= 1, "depthwise_conv2d: zero-size output");

    std::vector<double> out(static_cast<size_t>(n) * c * hout * wout);
    const auto& xd = x.data();
    const auto& wdat = w.data();
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            const double* xc = xd.data() + (static_cast<long long>(ni) * c + ci) * h * wd;
            const double* ker = wdat.data() + static_cast<long long>(ci) * kh * kw;
            double* oc = out.data() + (static_cast<long long>(ni) * c + ci) * hout * wout;
            const double bv = b.data()[static_cast<size_t>(ci)];
            for (int oh = 0; oh < hout; ++oh) {
                for (int ow = 0; ow < wout; ++ow) {
                    double s = bv;
                    for (int ki = 0; ki < kh; ++ki) {
                        const int ih = oh - padding + ki * dilation;
                        if (ih < 0 || ih >= h) continue;
                        for (int kj = 0; kj < kw; ++kj) {
                            const int iw = ow - padding + kj * dilation;
                            if (iw < 0 || iw >= wd) continue;
                            s += ker[ki * kw + kj] * xc[static_cast<long long>(ih) * wd + iw];
                        }
                    }
                    oc[static_cast<long long>(oh) * wout + ow] = s;
                }
            }
        }
    }

    auto xi = x.impl();
    auto wi = w.impl();
    auto bimpl = b.impl();
    return make_node(
        {n, c, hout, wout}, std::move(out), {x, w, b},
        [xi, wi, bimpl, n, c, h, wd, kh, kw, hout, wout, dilation, padding](TensorImpl& self) {
            const auto& g = self.grad;
            for (int ni = 0; ni < n; ++ni) {
                for (int ci = 0; ci < c; ++ci) {
                    const double* gc = g.data() + (static_cast<long long>(ni) * c + ci) * hout * wout;
                    const double* xc = xi->data.data() + (static_cast<long long>(ni) * c + ci) * h * wd;
                    const double* ker = wi->data.data() + static_cast<long long>(ci) * kh * kw;
                    if (bimpl->requires_grad) {
                        double s = 0;
                        for (long long i = 0; i < static_cast<long long>(hout) * wout; ++i) s += gc[i];
                        ensure_grad(*bimpl)[static_cast<size_t>(ci)] += s;
                    }
                    for (int oh = 0; oh < hout; ++oh) {
                        for (int ow = 0; ow < wout; ++ow) {
                            const double gv = gc[static_cast<long long>(oh) * wout + ow];
                            if (gv == 0.0) continue;
                            for (int ki = 0; ki < kh; ++ki) {
                                const int ih = oh - padding + ki * dilation;
                                if (ih < 0 || ih >= h) continue;
                                for (int kj = 0; kj < kw; ++kj) {
                                    const int iw = ow - padding + kj * dilation;
                                    if (iw < 0 || iw >= wd) continue;
                                    if (wi->requires_grad)
                                        ensure_grad(*wi)[static_cast<size_t>(
                                            static_cast<long long>(ci) * kh * kw + ki * kw + kj)] +=
                                            gv * xc[static_cast<long long>(ih) * wd + iw];
                                    if (xi->requires_grad)
                                        ensure_grad(*xi)[static_cast<size_t>(
                                            (static_cast<long long>(ni) * c + ci) * h * wd +
                                            static_cast<long long>(ih) * wd + iw)] +=
                                            gv * ker[ki * kw + kj];
                                }
                            }
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// bilinear_sample: coords[N,Ho,Wo,2] in pixel units, (x, y) order.
// Out-of-range coordinates clamp to the border; the coordinate gradient is
// zero in the clamped region.
// ---------------------------------------------------------------------------

inline Tensor bilinear_sample(const Tensor& img, const Tensor& coords) {
    check(img.ndim() == 4, "bilinear_sample: image must be NCHW");
    check(coords.ndim() == 4 && coords.dim(3) == 2,
          "bilinear_sample: coords must be [N,H',W',2]");
    check(img.dim(0) == coords.dim(0), "bilinear_sample: batch mismatch");
    const int n = img.dim(0), c = img.dim(1), h = img.dim(2), w = img.dim(3);
    const int ho = coords.dim(1), wo = coords.dim(2);
    const long long hw = static_cast<long long>(h) * w;
    const long long hwo = static_cast<long long>(ho) * wo;

    std::vector<double> out(static_cast<size_t>(n) * c * hwo);
    const auto& id = img.data();
    const auto& cd = coords.data();
    for (int ni = 0; ni < n; ++ni) {
        for (long long p = 0; p < hwo; ++p) {
            const double xr = cd[static_cast<size_t>((ni * hwo + p) * 2)];
            const double yr = cd[static_cast<size_t>((ni * hwo + p) * 2 + 1)];
            const double xc = std::clamp(xr, 0.0, static_cast<double>(w - 1));
            const double yc = std::clamp(yr, 0.0, static_cast<double>(h - 1));
            const int x0 = std::min(static_cast<int>(std::floor(xc)), std::max(w - 2, 0));
            const int y0 = std::min(static_cast<int>(std::floor(yc)), std::max(h - 2, 0));
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double fx = xc - x0;
            const double fy = yc - y0;
            for (int ci = 0; ci < c; ++ci) {
                const double* plane = id.data() + (static_cast<long long>(ni) * c + ci) * hw;
                const double v00 = plane[static_cast<long long>(y0) * w + x0];
                const double v01 = plane[static_cast<long long>(y0) * w + x1];
                const double v10 = plane[static_cast<long long>(y1) * w + x0];
                const double v11 = plane[static_cast<long long>(y1) * w + x1];
                out[static_cast<size_t>((static_cast<long long>(ni) * c + ci) * hwo + p)] =
                    (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    }

    auto ii = img.impl();
    auto ci_ = coords.impl();
    return make_node(
        {n, c, ho, wo}, std::move(out), {img, coords},
        [ii, ci_, n, c, h, w, hwo, hw](TensorImpl& self) {
            const auto& g = self.grad;
            const auto& id = ii->data;
            const auto& cd = ci_->data;
            const bool ineed = ii->requires_grad;
            const bool cneed = ci_->requires_grad;
            std::vector<double>* ig = ineed ? &ensure_grad(*ii) : nullptr;
            std::vector<double>* cg = cneed ? &ensure_grad(*ci_) : nullptr;
            for (int ni = 0; ni < n; ++ni) {
                for (long long p = 0; p < hwo; ++p) {
                    const double xr = cd[static_cast<size_t>((ni * hwo + p) * 2)];
                    const double yr = cd[static_cast<size_t>((ni * hwo + p) * 2 + 1)];
                    const bool xin = xr > 0.0 && xr < static_cast<double>(w - 1);
                    const bool yin = yr > 0.0 && yr < static_cast<double>(h - 1);
                    const double xc = std::clamp(xr, 0.0, static_cast<double>(w - 1));
                    const double yc = std::clamp(yr, 0.0, static_cast<double>(h - 1));
                    const int x0 = std::min(static_cast<int>(std::floor(xc)), std::max(w - 2, 0));
                    const int y0 = std::min(static_cast<int>(std::floor(yc)), std::max(h - 2, 0));
                    const int x1 = std::min(x0 + 1, w - 1);
                    const int y1 = std::min(y0 + 1, h - 1);
                    const double fx = xc - x0;
                    const double fy = yc - y0;
                    double dx = 0, dy = 0;
                    for (int cc = 0; cc < c; ++cc) {
                        const double gv =
                            g[static_cast<size_t>((static_cast<long long>(ni) * c + cc) * hwo + p)];
                        if (gv == 0.0) continue;
                        const double* plane = id.data() + (static_cast<long long>(ni) * c + cc) * hw;
                        const double v00 = plane[static_cast<long long>(y0) * w + x0];
                        const double v01 = plane[static_cast<long long>(y0) * w + x1];
                        const double v10 = plane[static_cast<long long>(y1) * w + x0];
                        const double v11 = plane[static_cast<long long>(y1) * w + x1];
                        if (ineed) {
                            double* gp = ig->data() + (static_cast<long long>(ni) * c + cc) * hw;
                            gp[static_cast<long long>(y0) * w + x0] += gv * (1 - fy) * (1 - fx);
                            gp[static_cast<long long>(y0) * w + x1] += gv * (1 - fy) * fx;
                            gp[static_cast<long long>(y1) * w + x0] += gv * fy * (1 - fx);
                            gp[static_cast<long long>(y1) * w + x1] += gv * fy * fx;
                        }
                        if (cneed) {
                            dx += gv * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
                            dy += gv * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
                        }
                    }
                    if (cneed) {
                        if (xin) (*cg)[static_cast<size_t>((ni * hwo + p) * 2)] += dx;
                        if (yin) (*cg)[static_cast<size_t>((ni * hwo + p) * 2 + 1)] += dy;
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Pooling / resampling
// ---------------------------------------------------------------------------

inline Tensor avg_pool2d(const Tensor& x, int window) {
    check(x.ndim() == 4, "avg_pool2d: expected NCHW");
    check(window >= 1, "avg_pool2d: window must be >= 1");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    check(h % window == 0 && w % window == 0,
          "avg_pool2d: dims " + shape_str(x.shape()) + " not divisible by window " +
              std::to_string(window));
    const int ho = h / window, wo = w / window;
    const double inv = 1.0 / (static_cast<double>(window) * window);
    std::vector<double> out(static_cast<size_t>(n) * c * ho * wo, 0.0);
    const auto& xd = x.data();
    for (int p = 0; p < n * c; ++p) {
        const double* xp = xd.data() + static_cast<long long>(p) * h * w;
        double* op = out.data() + static_cast<long long>(p) * ho * wo;
        for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow) {
                double s = 0;
                for (int i = 0; i < window; ++i)
                    for (int j = 0; j < window; ++j)
                        s += xp[static_cast<long long>(oh * window + i) * w + ow * window + j];
                op[static_cast<long long>(oh) * wo + ow] = s * inv;
            }
    }
    auto xi = x.impl();
    return make_node({n, c, ho, wo}, std::move(out), {x},
                     [xi, n, c, h, w, ho, wo, window, inv](TensorImpl& self) {
                         if (!xi->requires_grad) return;
                         auto& xg = ensure_grad(*xi);
                         for (int p = 0; p < n * c; ++p) {
                             const double* gp = self.grad.data() + static_cast<long long>(p) * ho * wo;
                             double* xp = xg.data() + static_cast<long long>(p) * h * w;
                             for (int oh = 0; oh < ho; ++oh)
                                 for (int ow = 0; ow < wo; ++ow) {
                                     const double gv = gp[static_cast<long long>(oh) * wo + ow] * inv;
                                     for (int i = 0; i < window; ++i)
                                         for (int j = 0; j < window; ++j)
                                             xp[static_cast<long long>(oh * window + i) * w +
                                                ow * window + j] += gv;
                                 }
                         }
                     });
}

namespace detail {

struct LerpTable {
    std::vector<int> i0, i1;
    std::vector<double> t;
};

inline LerpTable upsample_table(int src, int factor) {
    const int dst = src * factor;
    LerpTable tb;
    tb.i0.resize(dst); tb.i1.resize(dst); tb.t.resize(dst);
    for (int o = 0; o < dst; ++o) {
        double s = (o + 0.5) / factor - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src - 1));
        int i0 = std::min(static_cast<int>(std::floor(s)), std::max(src - 2, 0));
        tb.i0[o] = i0;
        tb.i1[o] = std::min(i0 + 1, src - 1);
        tb.t[o] = s - i0;
    }
    return tb;
}

}  // namespace detail

inline Tensor upsample_bilinear(const Tensor& x, int factor) {
    check(x.ndim() == 4, "upsample_bilinear: expected NCHW");
    check(factor >= 1, "upsample_bilinear: factor must be >= 1");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = h * factor, wo = w * factor;
    const auto rows = detail::upsample_table(h, factor);
    const auto cols = detail::upsample_table(w, factor);
    std::vector<double> out(static_cast<size_t>(n) * c * ho * wo);
    const auto& xd = x.data();
    for (int p = 0; p < n * c; ++p) {
        const double* xp = xd.data() + static_cast<long long>(p) * h * w;
        double* op = out.data() + static_cast<long long>(p) * ho * wo;
        for (int oh = 0; oh < ho; ++oh) {
            const int r0 = rows.i0[oh], r1 = rows.i1[oh];
            const double ty = rows.t[oh];
            for (int ow = 0; ow < wo; ++ow) {
                const int c0 = cols.i0[ow], c1 = cols.i1[ow];
                const double tx = cols.t[ow];
                op[static_cast<long long>(oh) * wo + ow] =
                    (1 - ty) * ((1 - tx) * xp[static_cast<long long>(r0) * w + c0] +
                                tx * xp[static_cast<long long>(r0) * w + c1]) +
                    ty * ((1 - tx) * xp[static_cast<long long>(r1) * w + c0] +
                          tx * xp[static_cast<long long>(r1) * w + c1]);
            }
        }
    }
    auto xi = x.impl();
    return make_node({n, c, ho, wo}, std::move(out), {x},
                     [xi, n, c, h, w, ho, wo, rows, cols](TensorImpl& self) {
                         if (!xi->requires_grad) return;
                         auto& xg = ensure_grad(*xi);
                         for (int p = 0; p < n * c; ++p) {
                             const double* gp = self.grad.data() + static_cast<long long>(p) * ho * wo;
                             double* xp = xg.data() + static_cast<long long>(p) * h * w;
                             for (int oh = 0; oh < ho; ++oh) {
                                 const int r0 = rows.i0[oh], r1 = rows.i1[oh];
                                 const double ty = rows.t[oh];
                                 for (int ow = 0; ow < wo; ++ow) {
                                     const int c0 = cols.i0[ow], c1 = cols.i1[ow];
                                     const double tx = cols.t[ow];
                                     const double gv = gp[static_cast<long long>(oh) * wo + ow];
                                     xp[static_cast<long long>(r0) * w + c0] += gv * (1 - ty) * (1 - tx);
                                     xp[static_cast<long long>(r0) * w + c1] += gv * (1 - ty) * tx;
                                     xp[static_cast<long long>(r1) * w + c0] += gv * ty * (1 - tx);
                                     xp[static_cast<long long>(r1) * w + c1] += gv * ty * tx;
                                 }
                             }
                         }
                     });
}

inline Tensor replicate_pad(const Tensor& x, int p) {
    check(x.ndim() == 4, "replicate_pad: expected NCHW");
    check(p >= 0, "replicate_pad: negative padding");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = h + 2 * p, wo = w + 2 * p;
    std::vector<double> out(static_cast<size_t>(n) * c * ho * wo);
    const auto& xd = x.data();
    for (int pl = 0; pl < n * c; ++pl) {
        const double* xp = xd.data() + static_cast<long long>(pl) * h * w;
        double* op = out.data() + static_cast<long long>(pl) * ho * wo;
        for (int oh = 0; oh < ho; ++oh) {
            const int ih = std::clamp(oh - p, 0, h - 1);
            for (int ow = 0; ow < wo; ++ow) {
                const int iw = std::clamp(ow - p, 0, w - 1);
                op[static_cast<long long>(oh) * wo + ow] = xp[static_cast<long long>(ih) * w + iw];
            }
        }
    }
    auto xi = x.impl();
    return make_node({n, c, ho, wo}, std::move(out), {x},
                     [xi, n, c, h, w, ho, wo, p](TensorImpl& self) {
                         if (!xi->requires_grad) return;
                         auto& xg = ensure_grad(*xi);
                         for (int pl = 0; pl < n * c; ++pl) {
                             const double* gp = self.grad.data() + static_cast<long long>(pl) * ho * wo;
                             double* xp = xg.data() + static_cast<long long>(pl) * h * w;
                             for (int oh = 0; oh < ho; ++oh) {
                                 const int ih = std::clamp(oh - p, 0, h - 1);
                                 for (int ow = 0; ow < wo; ++ow) {
                                     const int iw = std::clamp(ow - p, 0, w - 1);
                                     xp[static_cast<long long>(ih) * w + iw] +=
                                         gp[static_cast<long long>(oh) * wo + ow];
                                 }
                             }
                         }
                     });
}

// Forward differences along x/y with edge replication: the last column/row of
// the output is zero.
inline Tensor fwd_diff_x(const Tensor& x) {
    check(x.ndim() == 4, "fwd_diff_x: expected NCHW");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    std::vector<double> out(x.data().size(), 0.0);
    const auto& xd = x.data();
    for (int p = 0; p < n * c; ++p)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j + 1 < w; ++j) {
                const long long base = static_cast<long long>(p) * h * w + static_cast<long long>(i) * w;
                out[static_cast<size_t>(base + j)] = xd[static_cast<size_t>(base + j + 1)] - xd[static_cast<size_t>(base + j)];
            }
    auto xi = x.impl();
    return make_node(x.shape(), std::move(out), {x}, [xi, n, c, h, w](TensorImpl& self) {
        if (!xi->requires_grad) return;
        auto& xg = ensure_grad(*xi);
        for (int p = 0; p < n * c; ++p)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j + 1 < w; ++j) {
                    const long long base =
                        static_cast<long long>(p) * h * w + static_cast<long long>(i) * w;
                    const double g = self.grad[static_cast<size_t>(base + j)];
                    xg[static_cast<size_t>(base + j + 1)] += g;
                    xg[static_cast<size_t>(base + j)] -= g;
                }
    });
}

inline Tensor fwd_diff_y(const Tensor& x) {
    check(x.ndim() == 4, "fwd_diff_y: expected NCHW");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    std::vector<double> out(x.data().size(), 0.0);
    const auto& xd = x.data();
    for (int p = 0; p < n * c; ++p)
        for (int i = 0; i + 1 < h; ++i)
            for (int j = 0; j < w; ++j) {
                const long long base = static_cast<long long>(p) * h * w;
                out[static_cast<size_t>(base + static_cast<long long>(i) * w + j)] =
                    xd[static_cast<size_t>(base + static_cast<long long>(i + 1) * w + j)] -
                    xd[static_cast<size_t>(base + static_cast<long long>(i) * w + j)];
            }
    auto xi = x.impl();
    return make_node(x.shape(), std::move(out), {x}, [xi, n, c, h, w](TensorImpl& self) {
        if (!xi->requires_grad) return;
        auto& xg = ensure_grad(*xi);
        for (int p = 0; p < n * c; ++p)
            for (int i = 0; i + 1 < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const long long base = static_cast<long long>(p) * h * w;
                    const double g =
                        self.grad[static_cast<size_t>(base + static_cast<long long>(i) * w + j)];
                    xg[static_cast<size_t>(base + static_cast<long long>(i + 1) * w + j)] += g;
                    xg[static_cast<size_t>(base + static_cast<long long>(i) * w + j)] -= g;
                }
    });
}

// 3x3 box filter with replicate padding, for single-channel maps.
inline Tensor mean_filter3x3(const Tensor& x) {
    check(x.ndim() == 4 && x.dim(1) == 1, "mean_filter3x3: expected [N,1,H,W]");
    static const Tensor kernel = Tensor::full({1, 1, 3, 3}, 1.0 / 9.0);
    static const Tensor zero_bias = Tensor::zeros({1});
    return conv2d(replicate_pad(x, 1), kernel, zero_bias, 1, 1, 0);
}

// ---------------------------------------------------------------------------
// Rotation-vector coefficients, smooth through zero rotation. With s = theta^2:
//   rot_coef_a(s) = sin(theta)/theta, rot_coef_b(s) = (1 - cos(theta))/theta^2.
// Both are analytic in s, so a series branch keeps values and gradients exact
// near s = 0.
// ---------------------------------------------------------------------------

inline Tensor rot_coef_a(const Tensor& s) {
    return unary_ew(
        "rot_coef_a", s,
        [](double v) {
            if (v < 1e-8) return 1.0 - v / 6.0 + v * v / 120.0;
            const double t = std::sqrt(v);
            return std::sin(t) / t;
        },
        [](double v, double) {
            if (v < 1e-8) return -1.0 / 6.0 + v / 60.0;
            const double t = std::sqrt(v);
            return (t * std::cos(t) - std::sin(t)) / (2.0 * t * t * t);
        });
}

inline Tensor rot_coef_b(const Tensor& s) {
    return unary_ew(
        "rot_coef_b", s,
        [](double v) {
            if (v < 1e-8) return 0.5 - v / 24.0 + v * v / 720.0;
            return (1.0 - std::cos(std::sqrt(v))) / v;
        },
        [](double v, double) {
            if (v < 1e-8) return -1.0 / 24.0 + v / 360.0;
            const double t = std::sqrt(v);
            return (t * std::sin(t) - 2.0 * (1.0 - std::cos(t))) / (2.0 * v * v);
        });
}

}  // namespace ddnd
