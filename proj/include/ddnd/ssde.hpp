#pragma once

#include "ddnd/models.hpp"

namespace ddnd {

struct CameraIntrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
};

inline CameraIntrinsics make_intrinsics(int width, int height, double hfov_rad) {
    check(width >= 1 && height >= 1 && hfov_rad > 0 && hfov_rad < 3.14159,
          "make_intrinsics: bad camera parameters");
    CameraIntrinsics k;
    k.fx = (width / 2.0) / std::tan(hfov_rad / 2.0);
    k.fy = k.fx;
    k.cx = (width - 1) / 2.0;
    k.cy = (height - 1) / 2.0;
    return k;
}

struct SsdeParams {
    double alpha_ssim = 0.85;
    double lambda_smooth = 1e-3;
    double min_depth = 0.1;
    double max_depth = 100.0;
};

struct TripletSample {
    Tensor prev, target, next;  // [1,1,H,W] each, values in [0,1]
    CameraIntrinsics K;
    std::vector<float> oracle_depth;  // row-major H·W, evaluation only

    void validate() const {
        check(prev.ndim() == 4 && prev.shape() == target.shape() &&
                  next.shape() == target.shape(),
              "TripletSample: frames must share one [1,1,H,W] shape");
    }
};

// View synthesis: back-project target pixels by their depth, move them through
// the rigid transform, re-project and sample the source. The transform maps
// target-camera coordinates into source-camera coordinates.
inline Tensor warp(const Tensor& source, const Tensor& depth, const Tensor& transform,
                   const CameraIntrinsics& K) {
    check(source.ndim() == 4 && source.dim(1) == 1, "warp: source must be [N,1,H,W]");
    check(depth.shape() == source.shape(), "warp: depth shape " + shape_str(depth.shape()) +
                                               " does not match source " +
                                               shape_str(source.shape()));
    check(transform.ndim() == 2 && transform.dim(0) == 4 && transform.dim(1) == 4,
          "warp: transform must be [4,4]");
    for (double v : depth.data()) check(v > 0.0, "warp: depth must be positive everywhere");

    const int n = source.dim(0), h = source.dim(2), w = source.dim(3);
    std::vector<double> us(static_cast<size_t>(h) * w), vs(static_cast<size_t>(h) * w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            us[static_cast<size_t>(i) * w + j] = j;
            vs[static_cast<size_t>(i) * w + j] = i;
        }
    std::vector<double> un, vn;
    un.reserve(static_cast<size_t>(n) * h * w);
    vn.reserve(static_cast<size_t>(n) * h * w);
    for (int ni = 0; ni < n; ++ni) {
        un.insert(un.end(), us.begin(), us.end());
        vn.insert(vn.end(), vs.begin(), vs.end());
    }
    Tensor u = Tensor::from_vec({n, 1, h, w}, std::move(un));
    Tensor v = Tensor::from_vec({n, 1, h, w}, std::move(vn));

    Tensor xc = mul(scalar_mul(scalar_add(u, -K.cx), 1.0 / K.fx), depth);
    Tensor yc = mul(scalar_mul(scalar_add(v, -K.cy), 1.0 / K.fy), depth);
    const Tensor& zc = depth;

    auto m = [&](int i, int j) { return elem(transform, i * 4 + j); };
    Tensor xs = add(add(mul(m(0, 0), xc), mul(m(0, 1), yc)), add(mul(m(0, 2), zc), m(0, 3)));
    Tensor ys = add(add(mul(m(1, 0), xc), mul(m(1, 1), yc)), add(mul(m(1, 2), zc), m(1, 3)));
    Tensor zs = add(add(mul(m(2, 0), xc), mul(m(2, 1), yc)), add(mul(m(2, 2), zc), m(2, 3)));
    zs = clamp_min(zs, 1e-6);

    Tensor up = scalar_add(scalar_mul(div(xs, zs), K.fx), K.cx);
    Tensor vp = scalar_add(scalar_mul(div(ys, zs), K.fy), K.cy);
    return bilinear_sample(source, pack_coords(up, vp));
}

inline Tensor warp(const Tensor& source, const Tensor& depth, const Pose6D& pose, bool invert,
                   const CameraIntrinsics& K) {
    return warp(source, depth, pose_to_matrix(pose, invert), K);
}

// Per-pixel SSIM from 3x3 mean-filter statistics.
inline Tensor ssim(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), "ssim: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
    const double c1 = 1e-4, c2 = 9e-4;
    Tensor mu_a = mean_filter3x3(a);
    Tensor mu_b = mean_filter3x3(b);
    Tensor var_a = sub(mean_filter3x3(mul(a, a)), mul(mu_a, mu_a));
    Tensor var_b = sub(mean_filter3x3(mul(b, b)), mul(mu_b, mu_b));
    Tensor cov = sub(mean_filter3x3(mul(a, b)), mul(mu_a, mu_b));
    Tensor num = mul(scalar_add(scalar_mul(mul(mu_a, mu_b), 2.0), c1),
                     scalar_add(scalar_mul(cov, 2.0), c2));
    Tensor den = mul(scalar_add(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), c1),
                     scalar_add(add(var_a, var_b), c2));
    return div(num, den);
}

// alpha·(1 - SSIM)/2 + (1 - alpha)·|recon - target|, per pixel.
inline Tensor photometric_loss(const Tensor& recon, const Tensor& target, const SsdeParams& p) {
    check(recon.shape() == target.shape(), "photometric_loss: shape mismatch");
    Tensor ssim_term = scalar_mul(scalar_add(neg(ssim(recon, target)), 1.0), p.alpha_ssim / 2.0);
    Tensor l1_term = scalar_mul(abs(sub(recon, target)), 1.0 - p.alpha_ssim);
    return add(ssim_term, l1_term);
}

struct MaskedReprojection {
    Tensor masked_loss;  // mask ⊙ per-pixel minimum over sources
    Tensor mask;         // exactly binary, built from values, carries no gradient
    Tensor min_warped;   // unmasked per-pixel minimum
};

inline MaskedReprojection min_reproj_automask(const std::vector<Tensor>& warped_losses,
                                              const std::vector<Tensor>& identity_losses) {
    check(warped_losses.size() == 2 && identity_losses.size() == 2,
          "min_reproj_automask: expected losses for exactly two source offsets");
    Tensor min_w = minimum(warped_losses[0], warped_losses[1]);
    Tensor min_id = minimum(identity_losses[0], identity_losses[1]);
    const auto& wv = min_w.data();
    const auto& iv = min_id.data();
    std::vector<double> mv(wv.size());
    for (size_t i = 0; i < wv.size(); ++i) mv[i] = iv[i] > wv[i] ? 1.0 : 0.0;
    Tensor mask = Tensor::from_vec(min_w.shape(), std::move(mv));
    return {mul(mask, min_w), mask, min_w};
}

// Edge-aware smoothness on mean-normalized disparity, forward differences.
inline Tensor smoothness_loss(const Tensor& disp, const Tensor& image) {
    check(disp.shape() == image.shape(), "smoothness_loss: disparity/image shape mismatch");
    Tensor m = mean(disp);
    check(m[0] != 0.0, "smoothness_loss: zero-mean disparity cannot be normalized");
    Tensor d = div(disp, m);
    Tensor wx = exp(neg(abs(fwd_diff_x(image))));
    Tensor wy = exp(neg(abs(fwd_diff_y(image))));
    return mean(add(mul(abs(fwd_diff_x(d)), wx), mul(abs(fwd_diff_y(d)), wy)));
}

// (1/3)·Σ_j (L_p(j) + λ·L_smooth(j)) over the three scales.
inline Tensor ssde_total_loss(const std::vector<Tensor>& photometric,
                              const std::vector<Tensor>& smoothness, const SsdeParams& p) {
    check(photometric.size() == 3 && smoothness.size() == 3,
          "ssde_total_loss: expected exactly three scales");
    Tensor acc = add(photometric[0], scalar_mul(smoothness[0], p.lambda_smooth));
    for (int j = 1; j < 3; ++j)
        acc = add(acc, add(photometric[static_cast<size_t>(j)],
                           scalar_mul(smoothness[static_cast<size_t>(j)], p.lambda_smooth)));
    return scalar_mul(acc, 1.0 / 3.0);
}

struct SsdeLoss {
    Tensor total;
    std::array<double, 3> photometric{};
    std::array<double, 3> smooth{};
    double mask_fraction = 0;
};

// Full per-sample objective: disparities at the three scales are upsampled to
// full resolution, converted to depth, and scored by masked min-reprojection
// plus weighted smoothness. pose_prev maps the previous frame's camera to the
// target camera (so the warp inverts it); pose_next maps target to next.
inline SsdeLoss ssde_sample_loss(const Tensor& target, const Tensor& prev, const Tensor& next,
                                 const std::vector<Tensor>& disparities, const Tensor& pose_prev,
                                 const Tensor& pose_next, const CameraIntrinsics& K,
                                 const SsdeParams& p) {
    check(disparities.size() == 3, "ssde_sample_loss: expected three disparity scales");
    Tensor id_prev = photometric_loss(prev, target, p);
    Tensor id_next = photometric_loss(next, target, p);
    Tensor m_prev = pose_to_matrix(pose_prev, true);
    Tensor m_next = pose_to_matrix(pose_next, false);

    SsdeLoss out;
    std::vector<Tensor> lp, ls;
    double mask_acc = 0;
    for (int j = 0; j < 3; ++j) {
        Tensor disp = (j == 0) ? disparities[0]
                               : upsample_bilinear(disparities[static_cast<size_t>(j)], 1 << j);
        Tensor depth = disp_to_depth(disp, p.min_depth, p.max_depth);
        Tensor warped_prev = warp(prev, depth, m_prev, K);
        Tensor warped_next = warp(next, depth, m_next, K);
        MaskedReprojection mr =
            min_reproj_automask({photometric_loss(warped_prev, target, p),
                                 photometric_loss(warped_next, target, p)},
                                {id_prev, id_next});
        Tensor lp_j = mean(mr.masked_loss);
        Tensor ls_j = smoothness_loss(disp, target);
        out.photometric[static_cast<size_t>(j)] = lp_j[0];
        out.smooth[static_cast<size_t>(j)] = ls_j[0];
        double mf = 0;
        for (double v : mr.mask.data()) mf += v;
        mask_acc += mf / static_cast<double>(mr.mask.numel());
        lp.push_back(lp_j);
        ls.push_back(ls_j);
    }
    out.mask_fraction = mask_acc / 3.0;
    out.total = ssde_total_loss(lp, ls, p);
    return out;
}

}  // namespace ddnd
