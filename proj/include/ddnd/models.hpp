#pragma once

#include <array>
#include <map>
#include <string>

#include "ddnd/ops.hpp"

namespace ddnd {

struct NetworkConfig {
    std::vector<int> stage_channels{32, 32, 64, 80};
    std::vector<int> stage_strides{2, 2, 2, 2};
    std::vector<int> dilation_rates{1, 2, 3, 2};
    int blocks_per_stage = 2;
    // Decoder widths from the deepest level to the full-resolution level.
    std::vector<int> decoder_channels{64, 48, 32, 16, 12};
    int in_channels = 1;

    static NetworkConfig student() { return NetworkConfig{}; }

    static NetworkConfig teacher() {
        NetworkConfig c;
        c.stage_channels = {48, 48, 80, 128};
        c.decoder_channels = {96, 64, 48, 24, 16};
        return c;
    }

    // Miniature pair used by the composite gradient checks: same topology,
    // small enough that finite-difference probing stays cheap.
    static NetworkConfig tiny_student() {
        NetworkConfig c;
        c.stage_channels = {4, 4, 6, 8};
        c.decoder_channels = {8, 6, 5, 4, 4};
        c.blocks_per_stage = 1;
        return c;
    }

    static NetworkConfig tiny_teacher() {
        NetworkConfig c;
        c.stage_channels = {6, 6, 8, 10};
        c.decoder_channels = {10, 8, 6, 5, 5};
        c.blocks_per_stage = 1;
        return c;
    }

    void validate() const {
        check(stage_channels.size() == 4, "NetworkConfig: expected 4 stage channel counts");
        check(stage_strides.size() == 4 && dilation_rates.size() == 4,
              "NetworkConfig: expected 4 stage strides and dilation rates");
        check(decoder_channels.size() == 5, "NetworkConfig: expected 5 decoder widths");
        check(blocks_per_stage >= 1, "NetworkConfig: blocks_per_stage must be >= 1");
        for (int s : stage_strides) check(s == 2, "NetworkConfig: stage strides are fixed at 2");
    }
};

using WeightStore = std::map<std::string, Tensor>;

inline long long param_count(const WeightStore& ws) {
    long long n = 0;
    for (const auto& [name, t] : ws) n += t.numel();
    return n;
}

inline void set_trainable(WeightStore& ws, bool on = true) {
    for (auto& [name, t] : ws) t.set_requires_grad(on);
}

namespace init {

inline void conv(WeightStore& ws, Rng& rng, const std::string& name, int cout, int cin, int k) {
    ws[name + ".w"] = Tensor::randn({cout, cin, k, k}, rng, std::sqrt(2.0 / (cin * k * k)));
    ws[name + ".b"] = Tensor::zeros({cout});
}

inline void dwconv(WeightStore& ws, Rng& rng, const std::string& name, int c, int k) {
    ws[name + ".w"] = Tensor::randn({c, 1, k, k}, rng, std::sqrt(2.0 / (k * k)));
    ws[name + ".b"] = Tensor::zeros({c});
}

}  // namespace init

inline WeightStore init_depthnet(const NetworkConfig& cfg, Rng& rng) {
    cfg.validate();
    WeightStore ws;
    const auto& ch = cfg.stage_channels;
    init::conv(ws, rng, "enc.stem", ch[0], cfg.in_channels, 3);
    int prev = ch[0];
    for (int i = 0; i < 4; ++i) {
        const std::string s = "enc.s" + std::to_string(i);
        init::conv(ws, rng, s + ".down", ch[static_cast<size_t>(i)], prev, 3);
        prev = ch[static_cast<size_t>(i)];
        for (int j = 0; j < cfg.blocks_per_stage; ++j) {
            const std::string b = s + ".blk" + std::to_string(j);
            init::dwconv(ws, rng, b + ".dw", prev, 3);
            init::conv(ws, rng, b + ".pw", prev, prev, 1);
        }
    }
    // Skip channel counts, deepest decoder level first: stage3, stage2, stage1,
    // stem, none.
    const std::array<int, 4> skip = {ch[2], ch[1], ch[0], ch[0]};
    const auto& dc = cfg.decoder_channels;
    int in = ch[3];
    for (int k = 0; k < 5; ++k) {
        const std::string l = "dec.l" + std::to_string(4 - k);
        init::conv(ws, rng, l + ".pre", dc[static_cast<size_t>(k)], in, 3);
        const int cat = dc[static_cast<size_t>(k)] + (k < 4 ? skip[static_cast<size_t>(k)] : 0);
        init::conv(ws, rng, l + ".post", dc[static_cast<size_t>(k)], cat, 3);
        in = dc[static_cast<size_t>(k)];
    }
    init::conv(ws, rng, "dec.disp2", 1, dc[2], 3);
    init::conv(ws, rng, "dec.disp1", 1, dc[3], 3);
    init::conv(ws, rng, "dec.disp0", 1, dc[4], 3);
    return ws;
}

inline WeightStore init_posenet(Rng& rng) {
    WeightStore ws;
    init::conv(ws, rng, "pose.c1", 16, 2, 3);
    init::conv(ws, rng, "pose.c2", 32, 16, 3);
    init::conv(ws, rng, "pose.c3", 64, 32, 3);
    init::conv(ws, rng, "pose.c4", 64, 64, 3);
    ws["pose.fc.w"] = Tensor::randn({64, 6}, rng, std::sqrt(1.0 / 64.0));
    ws["pose.fc.b"] = Tensor::zeros({6});
    return ws;
}

namespace detail {

inline const Tensor& wget(const WeightStore& ws, const std::string& name) {
    auto it = ws.find(name);
    check(it != ws.end(), "missing weight tensor '" + name + "'");
    return it->second;
}

inline Tensor res_block(const Tensor& x, const WeightStore& ws, const std::string& name,
                        int dilation) {
    Tensor h = depthwise_conv2d(x, wget(ws, name + ".dw.w"), wget(ws, name + ".dw.b"), dilation,
                                dilation);
    h = elu(h);
    h = conv2d(h, wget(ws, name + ".pw.w"), wget(ws, name + ".pw.b"), 1, 1, 0);
    return add(x, h);
}

inline Tensor dec_level(const Tensor& x, const WeightStore& ws, const std::string& name,
                        const Tensor* skip) {
    Tensor h = elu(conv2d(x, wget(ws, name + ".pre.w"), wget(ws, name + ".pre.b"), 1, 1, 1));
    h = upsample_bilinear(h, 2);
    if (skip) h = concat_channels(h, *skip);
    return elu(conv2d(h, wget(ws, name + ".post.w"), wget(ws, name + ".post.b"), 1, 1, 1));
}

}  // namespace detail

struct DepthForward {
    // disparities[j] has spatial extent (H >> j, W >> j); all three pass
    // through sigmoid.
    std::vector<Tensor> disparities;
    // Encoder stage outputs at 1/4, 1/8, 1/16, 1/32 — the distillation taps.
    std::vector<Tensor> features;
    // Decoder features feeding the three heads, same order as disparities.
    std::vector<Tensor> decoder_features;
};

inline DepthForward depthnet_forward(const Tensor& image, const WeightStore& ws,
                                     const NetworkConfig& cfg) {
    cfg.validate();
    check(image.ndim() == 4 && image.dim(1) == cfg.in_channels,
          "depthnet_forward: expected [N," + std::to_string(cfg.in_channels) + ",H,W], got " +
              shape_str(image.shape()));
    check(image.dim(2) % 32 == 0 && image.dim(3) % 32 == 0,
          "depthnet_forward: H and W must be divisible by 32, got " + shape_str(image.shape()));

    using detail::wget;
    Tensor stem = elu(conv2d(image, wget(ws, "enc.stem.w"), wget(ws, "enc.stem.b"), 2, 1, 1));
    std::vector<Tensor> feats;
    Tensor x = stem;
    for (int i = 0; i < 4; ++i) {
        const std::string s = "enc.s" + std::to_string(i);
        x = elu(conv2d(x, wget(ws, s + ".down.w"), wget(ws, s + ".down.b"), 2, 1, 1));
        for (int j = 0; j < cfg.blocks_per_stage; ++j)
            x = detail::res_block(x, ws, s + ".blk" + std::to_string(j),
                                  cfg.dilation_rates[static_cast<size_t>(i)]);
        feats.push_back(x);
    }

    Tensor l4 = detail::dec_level(feats[3], ws, "dec.l4", &feats[2]);
    Tensor l3 = detail::dec_level(l4, ws, "dec.l3", &feats[1]);
    Tensor l2 = detail::dec_level(l3, ws, "dec.l2", &feats[0]);
    Tensor l1 = detail::dec_level(l2, ws, "dec.l1", &stem);
    Tensor l0 = detail::dec_level(l1, ws, "dec.l0", nullptr);

    DepthForward out;
    out.features = std::move(feats);
    out.decoder_features = {l0, l1, l2};
    out.disparities = {
        sigmoid(conv2d(l0, wget(ws, "dec.disp0.w"), wget(ws, "dec.disp0.b"), 1, 1, 1)),
        sigmoid(conv2d(l1, wget(ws, "dec.disp1.w"), wget(ws, "dec.disp1.b"), 1, 1, 1)),
        sigmoid(conv2d(l2, wget(ws, "dec.disp2.w"), wget(ws, "dec.disp2.b"), 1, 1, 1))};
    return out;
}

// Maps sigmoid disparity onto metric depth: 1/depth interpolates linearly
// between 1/max_depth (disp 0) and 1/min_depth (disp 1).
inline Tensor disp_to_depth(const Tensor& disp, double min_depth, double max_depth) {
    check(min_depth > 0 && min_depth < max_depth, "disp_to_depth: need 0 < min_depth < max_depth");
    for (double v : disp.data())
        check(v > 0.0 && v < 1.0, "disp_to_depth: disparity outside (0,1)");
    const double a = 1.0 / max_depth;
    const double b = 1.0 / min_depth - a;
    return div(Tensor::scalar(1.0), scalar_add(scalar_mul(disp, b), a));
}

inline double disp_to_depth_value(double disp, double min_depth, double max_depth) {
    return 1.0 / (1.0 / max_depth + (1.0 / min_depth - 1.0 / max_depth) * disp);
}

inline Tensor posenet_forward(const Tensor& pair, const WeightStore& ws) {
    check(pair.ndim() == 4 && pair.dim(1) == 2, "posenet_forward: expected [N,2,H,W], got " +
                                                    shape_str(pair.shape()));
    using detail::wget;
    Tensor x = elu(conv2d(pair, wget(ws, "pose.c1.w"), wget(ws, "pose.c1.b"), 2, 1, 1));
    x = elu(conv2d(x, wget(ws, "pose.c2.w"), wget(ws, "pose.c2.b"), 2, 1, 1));
    x = elu(conv2d(x, wget(ws, "pose.c3.w"), wget(ws, "pose.c3.b"), 2, 1, 1));
    x = elu(conv2d(x, wget(ws, "pose.c4.w"), wget(ws, "pose.c4.b"), 2, 1, 1));
    Tensor pooled = spatial_mean(x);
    return scalar_mul(linear(pooled, wget(ws, "pose.fc.w"), wget(ws, "pose.fc.b")), 0.01);
}

struct Pose6D {
    std::array<double, 3> axis_angle{0, 0, 0};
    std::array<double, 3> translation{0, 0, 0};
};

inline Pose6D pose_from_row(const Tensor& p6, int row = 0) {
    check(p6.ndim() == 2 && p6.dim(1) == 6, "pose_from_row: expected [N,6]");
    Pose6D p;
    const double* d = p6.data().data() + static_cast<size_t>(row) * 6;
    p.axis_angle = {d[0], d[1], d[2]};
    p.translation = {d[3], d[4], d[5]};
    return p;
}

// Rodrigues with the rotation built from s = theta^2 so the map stays smooth
// through zero rotation. With invert set, the returned matrix is the rigid
// inverse (transpose rotation, back-rotated negated translation).
inline Tensor pose_to_matrix(const Tensor& p6, bool invert) {
    check(p6.numel() == 6, "pose_to_matrix: expected 6 pose parameters, got " +
                               shape_str(p6.shape()));
    Tensor p = (p6.ndim() == 1) ? p6 : reshape(p6, {6});
    const double sign = invert ? -1.0 : 1.0;
    Tensor a0 = scalar_mul(elem(p, 0), sign);
    Tensor a1 = scalar_mul(elem(p, 1), sign);
    Tensor a2 = scalar_mul(elem(p, 2), sign);
    Tensor s = add(add(mul(a0, a0), mul(a1, a1)), mul(a2, a2));
    Tensor A = rot_coef_a(s);
    Tensor B = rot_coef_b(s);

    Tensor r00 = scalar_add(mul(B, neg(add(mul(a1, a1), mul(a2, a2)))), 1.0);
    Tensor r11 = scalar_add(mul(B, neg(add(mul(a0, a0), mul(a2, a2)))), 1.0);
    Tensor r22 = scalar_add(mul(B, neg(add(mul(a0, a0), mul(a1, a1)))), 1.0);
    Tensor r01 = add(neg(mul(A, a2)), mul(B, mul(a0, a1)));
    Tensor r10 = add(mul(A, a2), mul(B, mul(a0, a1)));
    Tensor r02 = add(mul(A, a1), mul(B, mul(a0, a2)));
    Tensor r20 = add(neg(mul(A, a1)), mul(B, mul(a0, a2)));
    Tensor r12 = add(neg(mul(A, a0)), mul(B, mul(a1, a2)));
    Tensor r21 = add(mul(A, a0), mul(B, mul(a1, a2)));

    Tensor t0 = elem(p, 3), t1 = elem(p, 4), t2 = elem(p, 5);
    Tensor m03, m13, m23;
    if (invert) {
        m03 = neg(add(add(mul(r00, t0), mul(r01, t1)), mul(r02, t2)));
        m13 = neg(add(add(mul(r10, t0), mul(r11, t1)), mul(r12, t2)));
        m23 = neg(add(add(mul(r20, t0), mul(r21, t1)), mul(r22, t2)));
    } else {
        m03 = t0;
        m13 = t1;
        m23 = t2;
    }

    Tensor zero = Tensor::scalar(0.0);
    Tensor one = Tensor::scalar(1.0);
    return stack_scalars({4, 4}, {r00, r01, r02, m03, r10, r11, r12, m13, r20, r21, r22, m23,
                                  zero, zero, zero, one});
}

inline Tensor pose_to_matrix(const Pose6D& p, bool invert) {
    Tensor p6 = Tensor::from_vec({6}, {p.axis_angle[0], p.axis_angle[1], p.axis_angle[2],
                                       p.translation[0], p.translation[1], p.translation[2]});
    return pose_to_matrix(p6, invert);
}

}  // namespace ddnd
