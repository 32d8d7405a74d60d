#pragma once

#include <memory>

#include "ddnd/sim.hpp"

namespace ddnd {

// Graph-free float32 forward pass for deployment-style inference: same
// architecture and weight names as depthnet_forward, but plain buffers and
// single-precision GEMMs. Used by the closed-loop simulator, where the double
// precision autodiff path would dominate the tick budget.

namespace detail {

struct FMap {
    int c = 0, h = 0, w = 0;
    std::vector<float> v;  // [c][h][w] row-major

    FMap() = default;
    FMap(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, 0.0f) {}
};

struct FWeight {
    Shape shape;
    std::vector<float> v;
};

inline void elu_inplace(FMap& x) {
    for (auto& f : x.v) f = f > 0 ? f : std::expm1(f);
}

inline FMap conv3x3_f32(const FMap& x, const FWeight& w, const FWeight& b, int stride,
                        int dilation, int padding) {
    const int cout = w.shape[0], cin = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    check(cin == x.c, "conv3x3_f32: channel mismatch");
    const int eh = x.h + 2 * padding - dilation * (kh - 1) - 1;
    const int ew = x.w + 2 * padding - dilation * (kw - 1) - 1;
    check(eh >= 0 && ew >= 0, "conv3x3_f32: kernel does not fit");
    const int hout = eh / stride + 1, wout = ew / stride + 1;
    const int krows = cin * kh * kw, cols = hout * wout;

    std::vector<float> col(size_t(krows) * cols, 0.0f);
    for (int ci = 0; ci < cin; ++ci)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const int row = (ci * kh + ky) * kw + kx;
                float* dst = col.data() + size_t(row) * cols;
                for (int oy = 0; oy < hout; ++oy) {
                    const int iy = oy * stride - padding + ky * dilation;
                    if (iy < 0 || iy >= x.h) continue;
                    const float* src = x.v.data() + (size_t(ci) * x.h + iy) * x.w;
                    for (int ox = 0; ox < wout; ++ox) {
                        const int ix = ox * stride - padding + kx * dilation;
                        if (ix >= 0 && ix < x.w) dst[oy * wout + ox] = src[ix];
                    }
                }
            }

    FMap out(cout, hout, wout);
    gemm<float>(w.v.data(), col.data(), out.v.data(), cout, krows, cols);
    for (int co = 0; co < cout; ++co) {
        float* o = out.v.data() + size_t(co) * cols;
        for (int i = 0; i < cols; ++i) o[i] += b.v[size_t(co)];
    }
    return out;
}

inline FMap dwconv3x3_f32(const FMap& x, const FWeight& w, const FWeight& b, int dilation,
                          int padding) {
    const int kh = w.shape[2], kw = w.shape[3];
    FMap out(x.c, x.h, x.w);
    for (int ci = 0; ci < x.c; ++ci) {
        const float* src = x.v.data() + size_t(ci) * x.h * x.w;
        const float* ker = w.v.data() + size_t(ci) * kh * kw;
        float* dst = out.v.data() + size_t(ci) * x.h * x.w;
        for (int oy = 0; oy < x.h; ++oy)
            for (int ox = 0; ox < x.w; ++ox) {
                float acc = b.v[size_t(ci)];
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy - padding + ky * dilation;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox - padding + kx * dilation;
                        if (ix >= 0 && ix < x.w) acc += ker[ky * kw + kx] * src[iy * x.w + ix];
                    }
                }
                dst[oy * x.w + ox] = acc;
            }
    }
    return out;
}

inline FMap upsample2x_f32(const FMap& x) {
    const LerpTable ty = upsample_table(x.h, 2), tx = upsample_table(x.w, 2);
    FMap out(x.c, x.h * 2, x.w * 2);
    for (int ci = 0; ci < x.c; ++ci) {
        const float* src = x.v.data() + size_t(ci) * x.h * x.w;
        float* dst = out.v.data() + size_t(ci) * out.h * out.w;
        for (int oy = 0; oy < out.h; ++oy) {
            const float wy = float(ty.t[size_t(oy)]);
            const float* r0 = src + size_t(ty.i0[size_t(oy)]) * x.w;
            const float* r1 = src + size_t(ty.i1[size_t(oy)]) * x.w;
            for (int ox = 0; ox < out.w; ++ox) {
                const float wx = float(tx.t[size_t(ox)]);
                const int x0 = tx.i0[size_t(ox)], x1 = tx.i1[size_t(ox)];
                const float top = r0[x0] * (1 - wx) + r0[x1] * wx;
                const float bot = r1[x0] * (1 - wx) + r1[x1] * wx;
                dst[oy * out.w + ox] = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

inline FMap concat_f32(const FMap& a, const FMap& b) {
    check(a.h == b.h && a.w == b.w, "concat_f32: spatial mismatch");
    FMap out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

}  // namespace detail

class InferenceEngine {
  public:
    InferenceEngine(const WeightStore& ws, const NetworkConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        for (const auto& [name, t] : ws) {
            detail::FWeight fw;
            fw.shape = t.shape();
            fw.v.assign(t.data().begin(), t.data().end());
            w_.emplace(name, std::move(fw));
        }
    }

    // image: [1,1,H,W] or [H,W] in [0,1]; returns the full-resolution sigmoid
    // disparity as [H,W].
    Tensor disparity(const Tensor& image) const {
        detail::FMap x = to_fmap(image);
        check(x.h % 32 == 0 && x.w % 32 == 0, "InferenceEngine: H and W must be divisible by 32");
        detail::FMap stem = conv(x, "enc.stem", 2, 1, 1);
        detail::elu_inplace(stem);
        std::vector<detail::FMap> feats;
        detail::FMap cur = stem;
        for (int i = 0; i < 4; ++i) {
            const std::string s = "enc.s" + std::to_string(i);
            cur = conv(cur, s + ".down", 2, 1, 1);
            detail::elu_inplace(cur);
            for (int j = 0; j < cfg_.blocks_per_stage; ++j)
                cur = res_block(cur, s + ".blk" + std::to_string(j),
                                cfg_.dilation_rates[size_t(i)]);
            feats.push_back(cur);
        }
        detail::FMap d = dec_level(feats[3], "dec.l4", &feats[2]);
        d = dec_level(d, "dec.l3", &feats[1]);
        d = dec_level(d, "dec.l2", &feats[0]);
        d = dec_level(d, "dec.l1", &stem);
        d = dec_level(d, "dec.l0", nullptr);
        detail::FMap head = conv(d, "dec.disp0", 1, 1, 1);
        std::vector<double> out(head.v.size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-double(head.v[i])));
        return Tensor::from_vec({head.h, head.w}, std::move(out));
    }

    Tensor depth(const Tensor& image, double min_depth, double max_depth) const {
        Tensor disp = disparity(image);
        std::vector<double> d(disp.data().size());
        for (size_t i = 0; i < d.size(); ++i)
            d[i] = disp_to_depth_value(disp.data()[i], min_depth, max_depth);
        return Tensor::from_vec(disp.shape(), std::move(d));
    }

  private:
    static detail::FMap to_fmap(const Tensor& image) {
        int h, w;
        if (image.ndim() == 4) {
            check(image.dim(0) == 1 && image.dim(1) == 1, "InferenceEngine: expected [1,1,H,W]");
            h = image.dim(2); w = image.dim(3);
        } else {
            check(image.ndim() == 2, "InferenceEngine: expected [1,1,H,W] or [H,W]");
            h = image.dim(0); w = image.dim(1);
        }
        detail::FMap x(1, h, w);
        for (size_t i = 0; i < x.v.size(); ++i) x.v[i] = float(image.data()[i]);
        return x;
    }

    const detail::FWeight& wget(const std::string& name) const {
        auto it = w_.find(name);
        check(it != w_.end(), "missing weight tensor '" + name + "'");
        return it->second;
    }

    detail::FMap conv(const detail::FMap& x, const std::string& name, int stride, int dilation,
                      int padding) const {
        return detail::conv3x3_f32(x, wget(name + ".w"), wget(name + ".b"), stride, dilation,
                                   padding);
    }

    detail::FMap res_block(const detail::FMap& x, const std::string& name, int dilation) const {
        detail::FMap h = detail::dwconv3x3_f32(x, wget(name + ".dw.w"), wget(name + ".dw.b"),
                                               dilation, dilation);
        detail::elu_inplace(h);
        h = detail::conv3x3_f32(h, wget(name + ".pw.w"), wget(name + ".pw.b"), 1, 1, 0);
        for (size_t i = 0; i < h.v.size(); ++i) h.v[i] += x.v[i];
        return h;
    }

    detail::FMap dec_level(const detail::FMap& x, const std::string& name,
                           const detail::FMap* skip) const {
        detail::FMap h = conv(x, name + ".pre", 1, 1, 1);
        detail::elu_inplace(h);
        h = detail::upsample2x_f32(h);
        if (skip) h = detail::concat_f32(h, *skip);
        h = conv(h, name + ".post", 1, 1, 1);
        detail::elu_inplace(h);
        return h;
    }

    NetworkConfig cfg_;
    std::map<std::string, detail::FWeight> w_;
};

// Depth provider over the rendered camera frame, as the closed loop uses it.
inline DepthFn network_depth_fn(std::shared_ptr<InferenceEngine> engine, double fov, int width,
                                int height, double min_depth, double max_depth) {
    check(engine != nullptr, "network_depth_fn: null engine");
    return [=](const World& w, const DroneState& st) {
        const Tensor frame = render_gray(w, st, fov, width, height, max_depth);
        return engine->depth(frame, min_depth, max_depth);
    };
}

}  // namespace ddnd
