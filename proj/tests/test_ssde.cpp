#include <catch_amalgamated.hpp>

#include "ddnd/gradcheck_suite.hpp"

using namespace ddnd;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("warp with identity pose returns the source", "[ssde]") {
    Rng rng(2);
    Tensor src = Tensor::uniform({1, 1, 4, 6}, rng, 0, 1);
    Tensor depth = Tensor::full({1, 1, 4, 6}, 2.5);
    CameraIntrinsics k = make_intrinsics(6, 4, 1.2);
    Tensor out = warp(src, depth, Pose6D{}, false, k);
    for (long long i = 0; i < src.numel(); ++i)
        REQUIRE(out[i] == Approx(src[i]).margin(1e-12));
}

TEST_CASE("warp with pure x-translation shifts samples by fx*t/d", "[ssde]") {
    const int w = 8, h = 4;
    std::vector<double> ramp(size_t(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) ramp[size_t(r) * w + c] = double(c) / (w - 1);
    Tensor src = Tensor::from_vec({1, 1, h, w}, ramp);
    const double d = 1.0;
    Tensor depth = Tensor::full({1, 1, h, w}, d);
    CameraIntrinsics k{2.0, 2.0, 3.5, 1.5};
    Pose6D p;
    p.translation = {0.5, 0.0, 0.0};  // fx*t/d = 2*0.5/1 = +1 pixel
    Tensor out = warp(src, depth, p, false, k);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c + 1 < w; ++c)
            REQUIRE(out[r * w + c] == Approx(ramp[size_t(r) * w + c + 1]).margin(1e-9));
}

TEST_CASE("warp rejects non-positive depth", "[ssde]") {
    Tensor src = Tensor::full({1, 1, 2, 2}, 0.5);
    Tensor depth = Tensor::from_vec({1, 1, 2, 2}, {1, 1, 0, 1});
    REQUIRE_THROWS_WITH(warp(src, depth, Pose6D{}, false, make_intrinsics(2, 2, 1.0)),
                        ContainsSubstring("positive"));
}

TEST_CASE("ssim closed forms and bounds", "[ssde]") {
    Rng rng(3);
    Tensor a = Tensor::uniform({1, 1, 5, 7}, rng, 0, 1);
    Tensor self = ssim(a, a);
    for (double v : self.data()) REQUIRE(v == Approx(1.0).margin(1e-12));

    Tensor z = Tensor::full({1, 1, 4, 4}, 0.0);
    Tensor o = Tensor::full({1, 1, 4, 4}, 1.0);
    // zero variances: ssim = c1*c2 / ((1+c1)*c2) = 1e-4 / 1.0001
    Tensor zo = ssim(z, o);
    for (double v : zo.data()) REQUIRE(v == Approx(1e-4 / 1.0001).margin(1e-9));

    Tensor b = Tensor::uniform({1, 1, 5, 7}, rng, 0, 1);
    Tensor ab = ssim(a, b);
    for (double v : ab.data()) REQUIRE((v >= -1.0 && v <= 1.0));

    REQUIRE_THROWS_AS(ssim(a, Tensor::zeros({1, 1, 5, 6})), std::runtime_error);
}

TEST_CASE("photometric_loss closed form on constants", "[ssde]") {
    SsdeParams p;
    Rng rng(4);
    Tensor a = Tensor::uniform({1, 1, 5, 5}, rng, 0, 1);
    Tensor self = photometric_loss(a, a, p);
    for (double v : self.data()) REQUIRE(v == Approx(0.0).margin(1e-12));

    Tensor r = Tensor::full({1, 1, 3, 3}, 0.4);
    Tensor t = Tensor::full({1, 1, 3, 3}, 0.5);
    const double c1 = 1e-4, c2 = 9e-4;
    const double s = (2 * 0.4 * 0.5 + c1) * c2 / ((0.16 + 0.25 + c1) * c2);
    const double expect = p.alpha_ssim * (1 - s) / 2 + (1 - p.alpha_ssim) * 0.1;
    Tensor rt = photometric_loss(r, t, p);
    for (double v : rt.data()) REQUIRE(v == Approx(expect).margin(1e-12));

    Tensor b = Tensor::uniform({1, 1, 5, 5}, rng, 0, 1);
    Tensor abl = photometric_loss(a, b, p);
    for (double v : abl.data()) REQUIRE(v >= 0.0);
}

TEST_CASE("min-reprojection auto-mask hand case", "[ssde]") {
    auto px = [](double v) { return Tensor::full({1, 1, 1, 1}, v); };
    MaskedReprojection r = min_reproj_automask({px(0.2), px(0.5)}, {px(0.3), px(0.4)});
    REQUIRE(r.mask[0] == 1.0);
    REQUIRE(r.min_warped[0] == Approx(0.2));
    REQUIRE(r.masked_loss[0] == Approx(0.2));
}

TEST_CASE("auto-mask suppresses static pixels and stays binary", "[ssde]") {
    // pixel 0: identity dominates -> kept; pixel 1: a neighbor already matches
    // the target (identity loss 0) -> dropped
    Tensor w0 = Tensor::from_vec({1, 1, 1, 2}, {0.2, 0.2});
    Tensor w1 = Tensor::from_vec({1, 1, 1, 2}, {0.5, 0.5});
    Tensor i0 = Tensor::from_vec({1, 1, 1, 2}, {0.9, 0.0});
    Tensor i1 = Tensor::from_vec({1, 1, 1, 2}, {0.8, 0.7});
    MaskedReprojection r = min_reproj_automask({w0, w1}, {i0, i1});
    REQUIRE(r.mask[0] == 1.0);
    REQUIRE(r.mask[1] == 0.0);
    REQUIRE(r.masked_loss[1] == 0.0);

    Rng rng(5);
    Tensor rw0 = Tensor::uniform({1, 1, 4, 4}, rng, 0, 1);
    Tensor rw1 = Tensor::uniform({1, 1, 4, 4}, rng, 0, 1);
    Tensor big = Tensor::full({1, 1, 4, 4}, 10.0);
    MaskedReprojection dom = min_reproj_automask({rw0, rw1}, {big, big});
    for (double v : dom.mask.data()) REQUIRE(v == 1.0);

    Tensor ri0 = Tensor::uniform({1, 1, 4, 4}, rng, 0, 1);
    Tensor ri1 = Tensor::uniform({1, 1, 4, 4}, rng, 0, 1);
    MaskedReprojection any = min_reproj_automask({rw0, rw1}, {ri0, ri1});
    for (long long i = 0; i < any.mask.numel(); ++i) {
        REQUIRE((any.mask[i] == 0.0 || any.mask[i] == 1.0));
        REQUIRE(any.masked_loss[i] <= any.min_warped[i]);
    }
}

TEST_CASE("smoothness_loss hand cases", "[ssde]") {
    Rng rng(6);
    Tensor img = Tensor::uniform({1, 1, 3, 4}, rng, 0, 1);
    REQUIRE(smoothness_loss(Tensor::full({1, 1, 3, 4}, 0.7), img)[0] == 0.0);

    // columns [1,2]: normalized disparity is [2/3, 4/3] per row; forward
    // differences replicate the last column, so |dx| = 2/3 at the left pixels
    // and 0 at the right, |dy| = 0; mean over 4 pixels = 1/3
    Tensor disp = Tensor::from_vec({1, 1, 2, 2}, {1, 2, 1, 2});
    Tensor flat = Tensor::full({1, 1, 2, 2}, 0.3);
    REQUIRE(smoothness_loss(disp, flat)[0] == Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("smoothness_loss scale invariance and zero-mean error", "[ssde]") {
    Rng rng(7);
    Tensor img = Tensor::uniform({1, 1, 4, 5}, rng, 0, 1);
    Tensor d = Tensor::uniform({1, 1, 4, 5}, rng, 0.2, 0.8);
    double base = smoothness_loss(d, img)[0];
    for (double k : {0.1, 1.0, 10.0})
        REQUIRE(smoothness_loss(scalar_mul(d, k), img)[0] == Approx(base).margin(1e-9));

    Tensor zm = Tensor::from_vec({1, 1, 2, 2}, {1, -1, -1, 1});
    REQUIRE_THROWS_WITH(smoothness_loss(zm, Tensor::zeros({1, 1, 2, 2})),
                        ContainsSubstring("zero-mean"));
}

TEST_CASE("ssde_total_loss arithmetic", "[ssde]") {
    SsdeParams p;
    auto s = [](double v) { return Tensor::scalar(v); };
    std::vector<Tensor> lp{s(0.3), s(0.3), s(0.3)};
    std::vector<Tensor> ls{s(3.0), s(3.0), s(3.0)};
    REQUIRE(ssde_total_loss(lp, ls, p)[0] == Approx(0.303).margin(1e-15));

    std::vector<Tensor> z{s(0.0), s(0.0), s(0.0)};
    REQUIRE(ssde_total_loss(z, z, p)[0] == 0.0);

    // dropping the lambda term changes the total by exactly (lambda/3)*sum(ls)
    Rng rng(8);
    std::vector<Tensor> rp{s(rand_uniform(rng, 0, 1)), s(rand_uniform(rng, 0, 1)),
                           s(rand_uniform(rng, 0, 1))};
    std::vector<Tensor> rs{s(rand_uniform(rng, 0, 5)), s(rand_uniform(rng, 0, 5)),
                           s(rand_uniform(rng, 0, 5))};
    SsdeParams off = p;
    off.lambda_smooth = 0.0;
    double delta = ssde_total_loss(rp, rs, p)[0] - ssde_total_loss(rp, rs, off)[0];
    double expect = p.lambda_smooth / 3.0 * (rs[0][0] + rs[1][0] + rs[2][0]);
    REQUIRE(delta == Approx(expect).margin(1e-12));

    REQUIRE_THROWS_WITH(ssde_total_loss({s(0), s(0)}, {s(0), s(0)}, p),
                        ContainsSubstring("three scales"));
}

TEST_CASE("full loss gradients survive finite-difference probing", "[ssde]") {
    GradSuiteResult res = run_grad_cases({ssde_composite_case()}, 2, nullptr);
    CAPTURE(res.worst_err);
    REQUIRE(res.failed == 0);
}
