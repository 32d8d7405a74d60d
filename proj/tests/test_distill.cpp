#include <catch_amalgamated.hpp>

#include <sstream>

#include "ddnd/gradcheck_suite.hpp"
#include "ddnd/sim.hpp"

using namespace ddnd;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("align_channels basics", "[distill]") {
    Rng rng(2);
    Tensor f = Tensor::uniform({1, 2, 3, 4}, rng, -1, 1);
    Tensor zero_w = Tensor::zeros({5, 2, 1, 1});
    Tensor zero_b = Tensor::zeros({5});
    Tensor out = align_channels(f, zero_w, zero_b);
    REQUIRE(out.shape() == Shape{12, 5});
    for (double v : out.data()) REQUIRE(v == 0.0);

    // identity 1x1 projection leaves only the reshape
    std::vector<double> wd(4, 0.0);
    wd[0] = 1.0;
    wd[3] = 1.0;
    Tensor eye_w = Tensor::from_vec({2, 2, 1, 1}, wd);
    Tensor same = align_channels(f, eye_w, Tensor::zeros({2}));
    Tensor flat = flatten_feature(f);
    REQUIRE(same.shape() == flat.shape());
    for (long long i = 0; i < flat.numel(); ++i) REQUIRE(same[i] == Approx(flat[i]).margin(0));

    REQUIRE_THROWS_WITH(align_channels(f, Tensor::zeros({5, 3, 1, 1}), zero_b),
                        ContainsSubstring("channels"));
}

TEST_CASE("align_channels gradient", "[distill]") {
    Rng rng(3);
    double err = grad_check(
        [](const std::vector<Tensor>& in) { return align_channels(in[0], in[1], in[2]); },
        {Tensor::uniform({1, 2, 2, 2}, rng, -1, 1), Tensor::uniform({3, 2, 1, 1}, rng, -1, 1),
         Tensor::uniform({3}, rng, -0.5, 0.5)},
        rng);
    REQUIRE(err < 1e-4);
}

TEST_CASE("ccm closed forms", "[distill]") {
    Rng rng(4);
    Tensor v = Tensor::uniform({6, 1}, rng, -2, 2);
    Tensor m = ccm(v, v);
    REQUIRE(m.shape() == Shape{1, 1});
    REQUIRE(m[0] == Approx(1.0).margin(1e-12));

    // orthonormal columns, F_S = F_T: Gram = I, each row = softmax([1,0])
    Tensor basis = Tensor::from_vec({2, 2}, {1, 0, 0, 1});
    Tensor c = ccm(basis, basis, 1, false);
    const double hi = std::exp(1.0) / (std::exp(1.0) + 1.0);
    REQUIRE(c[0] == Approx(hi).margin(1e-4));
    REQUIRE(c[1] == Approx(1.0 - hi).margin(1e-4));
    REQUIRE(c[2] == Approx(1.0 - hi).margin(1e-4));
    REQUIRE(c[3] == Approx(hi).margin(1e-4));
    REQUIRE(c[0] == Approx(0.7311).margin(1e-4));
    REQUIRE(c[1] == Approx(0.2689).margin(1e-4));

    REQUIRE_THROWS_AS(ccm(Tensor::zeros({4, 2}), Tensor::zeros({4, 3})), std::runtime_error);
}

TEST_CASE("ccm rows are stochastic", "[distill]") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + int(rand_uniform(rng, 0, 5));
        const int ch = 2 + int(rand_uniform(rng, 0, 4));
        Tensor fs = Tensor::uniform({n, ch}, rng, -3, 3);
        Tensor ft = Tensor::uniform({n, ch}, rng, -3, 3);
        Tensor m = ccm(fs, ft);
        for (int r = 0; r < ch; ++r) {
            double row = 0;
            for (int cc = 0; cc < ch; ++cc) {
                REQUIRE(m[r * ch + cc] >= 0.0);
                row += m[r * ch + cc];
            }
            REQUIRE(row == Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("cadit_reconfigure closed forms", "[distill]") {
    Rng rng(6);
    Tensor f = Tensor::uniform({4, 3}, rng, -1, 1);
    Tensor same = cadit_reconfigure(f, Tensor::zeros({3, 3}));
    for (long long i = 0; i < f.numel(); ++i) REQUIRE(same[i] == f[i]);

    Tensor v = Tensor::uniform({5, 1}, rng, -1, 1);
    Tensor twice = cadit_reconfigure(v, Tensor::full({1, 1}, 1.0));
    for (long long i = 0; i < v.numel(); ++i) REQUIRE(twice[i] == Approx(2.0 * v[i]).margin(0));

    Tensor corr = ccm(f, Tensor::uniform({4, 3}, rng, -1, 1));
    Tensor base = cadit_reconfigure(f, corr);
    Tensor scaled = cadit_reconfigure(scalar_mul(f, 3.0), corr);
    for (long long i = 0; i < f.numel(); ++i)
        REQUIRE(scaled[i] == Approx(3.0 * base[i]).margin(1e-12));
}

TEST_CASE("kd_feature_loss closed forms", "[distill]") {
    Rng rng(7);
    Tensor f = Tensor::uniform({6, 4}, rng, -1, 1);
    REQUIRE(kd_feature_loss(f, f, EncoderKD::L2)[0] == 0.0);

    // C = 1 with F_S = F_T = v: the full path collapses to rms(2v - v)
    Tensor v = Tensor::uniform({8, 1}, rng, 0.2, 1.5);
    double ms = 0;
    for (double x : v.data()) ms += x * x;
    double rms_v = std::sqrt(ms / 8.0);
    REQUIRE(kd_feature_loss(v, v, EncoderKD::CADiT)[0] == Approx(rms_v).margin(1e-12));

    // C = 1 with distinct features: ||2 F_S - F_T||
    Tensor t = Tensor::uniform({8, 1}, rng, 0.2, 1.5);
    double ms2 = 0;
    for (int i = 0; i < 8; ++i) {
        const double d = 2.0 * v[i] - t[i];
        ms2 += d * d;
    }
    REQUIRE(kd_feature_loss(v, t, EncoderKD::CADiT)[0] ==
            Approx(std::sqrt(ms2 / 8.0)).margin(1e-12));

    Tensor g = Tensor::uniform({6, 4}, rng, -1, 1);
    REQUIRE(kd_feature_loss(f, g, EncoderKD::L2)[0] > 0.0);
    REQUIRE_THROWS_AS(kd_feature_loss(f, g, EncoderKD::None), std::runtime_error);
}

TEST_CASE("kd_feature_loss CADiT gradient through the projection", "[distill]") {
    Rng rng(8);
    Tensor f_t = flatten_feature(Tensor::uniform({1, 3, 2, 2}, rng, -1, 1));
    double err = grad_check(
        [&](const std::vector<Tensor>& in) {
            return kd_feature_loss(align_channels(in[0], in[1], in[2]), f_t, EncoderKD::CADiT);
        },
        {Tensor::uniform({1, 2, 2, 2}, rng, -1, 1), Tensor::uniform({3, 2, 1, 1}, rng, -1, 1),
         Tensor::uniform({3}, rng, -0.5, 0.5)},
        rng);
    REQUIRE(err < 1e-3);
}

TEST_CASE("output_match_loss arithmetic", "[distill]") {
    Rng rng(9);
    std::vector<Tensor> a{Tensor::uniform({1, 1, 4, 4}, rng, 0, 1),
                          Tensor::uniform({1, 1, 2, 2}, rng, 0, 1),
                          Tensor::uniform({1, 1, 1, 1}, rng, 0, 1)};
    REQUIRE(output_match_loss(a, a)[0] == 0.0);

    std::vector<Tensor> lo{Tensor::full({1, 1, 4, 4}, 0.2), Tensor::full({1, 1, 2, 2}, 0.3),
                           Tensor::full({1, 1, 1, 1}, 0.4)};
    std::vector<Tensor> hi{Tensor::full({1, 1, 4, 4}, 1.2), Tensor::full({1, 1, 2, 2}, 1.3),
                           Tensor::full({1, 1, 1, 1}, 1.4)};
    REQUIRE(output_match_loss(lo, hi)[0] == Approx(1.0).margin(1e-12));

    std::vector<Tensor> b{Tensor::uniform({1, 1, 4, 4}, rng, 0, 1),
                          Tensor::uniform({1, 1, 2, 2}, rng, 0, 1),
                          Tensor::uniform({1, 1, 1, 1}, rng, 0, 1)};
    REQUIRE(output_match_loss(a, b)[0] == Approx(output_match_loss(b, a)[0]).margin(0));

    REQUIRE_THROWS_WITH(output_match_loss({a[0], a[1]}, {a[0], a[1]}),
                        ContainsSubstring("three scales"));
    std::vector<Tensor> bad{a[0], a[1], Tensor::zeros({1, 1, 2, 2})};
    REQUIRE_THROWS_WITH(output_match_loss(a, bad), ContainsSubstring("shape mismatch"));
}

TEST_CASE("total_loss arithmetic and gradient", "[distill]") {
    DistillParams p;
    Tensor one = Tensor::scalar(1.0);
    REQUIRE(total_loss(one, one, one, p)[0] == Approx(2.1).margin(1e-12));

    DistillParams off;
    off.encoder_mode = EncoderKD::None;
    off.decoder_mode = DecoderKD::None;
    Tensor l_ss = Tensor::scalar(0.6180339887);
    REQUIRE(total_loss(l_ss, one, one, off)[0] == l_ss[0]);

    Tensor l_cadit = Tensor::scalar(0.7);
    l_cadit.set_requires_grad(true);
    Tensor total = total_loss(Tensor::scalar(0.2), l_cadit, Tensor::scalar(0.3), p);
    total.backward();
    REQUIRE(l_cadit.grad()[0] == Approx(0.1).margin(1e-15));
}

TEST_CASE("adamw single-parameter hand update", "[distill]") {
    auto one_step = [](double wd) {
        WeightStore ws;
        ws["w"] = Tensor::from_vec({1}, {1.0}, true);
        ws["w"].raw()->grad = {1.0};
        AdamW opt;
        opt.weight_decay = wd;
        opt.step(ws, 0.1);
        return ws["w"][0];
    };
    // bias-corrected first step: mh = vh = 1, so w -= lr * (1/(1+eps) + wd*w)
    REQUIRE(one_step(0.0) == Approx(0.9).margin(1e-8));
    REQUIRE(one_step(0.5) == Approx(0.85).margin(1e-8));
}

TEST_CASE("cosine_lr schedule endpoints", "[distill]") {
    REQUIRE(cosine_lr(1e-4, 0, 100) == Approx(1e-4).margin(1e-18));
    REQUIRE(cosine_lr(1e-4, 50, 100) == Approx(5e-5).margin(1e-12));
    REQUIRE(cosine_lr(1e-4, 100, 100) == Approx(0.0).margin(1e-12));
    REQUIRE(cosine_lr(1e-4, 0, 0) == 1e-4);
}

TEST_CASE("log_step format", "[distill]") {
    std::ostringstream ss;
    log_step(&ss, 3, StepBreakdown{0.5, 0.25, 0.125, 0.875});
    REQUIRE(ss.str() == "3, 0.5, 0.25, 0.125, 0.875\n");
}

namespace {

TripletSample corridor_triplet(int w, int h, double x0) {
    World world = world_corridor();
    const double fov = 1.5;
    // 0.3 units between frames gives the warp real parallax to work with
    DroneState s0{x0, 0.05, 0.0, 0.5};
    DroneState s1{x0 + 0.3, 0.05, 0.0, 0.5};
    DroneState s2{x0 + 0.6, 0.05, 0.0, 0.5};
    TripletSample t;
    t.prev = render_gray(world, s0, fov, w, h);
    t.target = render_gray(world, s1, fov, w, h);
    t.next = render_gray(world, s2, fov, w, h);
    t.K = make_intrinsics(w, h, fov);
    return t;
}

}  // namespace

TEST_CASE("train_step with zero learning rate leaves weights untouched", "[distill]") {
    Rng rng(10);
    NetworkConfig cfg = NetworkConfig::tiny_student();
    TrainerState tr;
    tr.depth = init_depthnet(cfg, rng);
    tr.pose = init_posenet(rng);
    set_trainable(tr.depth);
    set_trainable(tr.pose);

    std::map<std::string, std::vector<double>> before;
    for (const auto& [name, t] : tr.depth) before[name] = t.data();
    for (const auto& [name, t] : tr.pose) before["p:" + name] = t.data();

    TripletSample s = corridor_triplet(32, 32, 1.0);
    DistillParams dp;
    dp.encoder_mode = EncoderKD::None;
    dp.decoder_mode = DecoderKD::None;
    train_step({&s}, tr, cfg, nullptr, cfg, SsdeParams{}, dp, 0.0);

    for (const auto& [name, t] : tr.depth) REQUIRE(t.data() == before.at(name));
    for (const auto& [name, t] : tr.pose) REQUIRE(t.data() == before.at("p:" + name));
}

TEST_CASE("teacher weights stay frozen through training steps", "[distill]") {
    Rng rng(11);
    NetworkConfig cfg_s = NetworkConfig::tiny_student();
    NetworkConfig cfg_t = NetworkConfig::tiny_teacher();
    WeightStore teacher = init_depthnet(cfg_t, rng);
    std::map<std::string, std::vector<double>> before;
    for (const auto& [name, t] : teacher) before[name] = t.data();

    DistillParams dp;  // encoder CADiT + decoder L1 by default
    TrainerState tr;
    tr.depth = init_depthnet(cfg_s, rng);
    tr.pose = init_posenet(rng);
    tr.proj = init_projections(cfg_s, cfg_t, dp, rng);
    set_trainable(tr.depth);
    set_trainable(tr.pose);
    set_trainable(tr.proj);

    TripletSample s = corridor_triplet(32, 32, 1.0);
    for (int i = 0; i < 2; ++i)
        train_step({&s}, tr, cfg_s, &teacher, cfg_t, SsdeParams{}, dp, 1e-4);

    for (const auto& [name, t] : teacher) {
        REQUIRE(!t.has_grad());
        REQUIRE(t.data() == before.at(name));
    }
}

TEST_CASE("fifty steps overfit a two-sample batch", "[distill]") {
    std::vector<TripletSample> data{corridor_triplet(32, 32, 0.8), corridor_triplet(32, 32, 3.0)};
    NetworkConfig cfg = NetworkConfig::tiny_student();
    int improved = 0;
    for (unsigned seed = 0; seed < 5; ++seed) {
        TrainOptions opts;
        opts.steps = 50;
        opts.batch = 2;
        opts.lr = 1e-3;
        opts.cosine = false;
        opts.seed = seed;
        DistillParams dp;
        dp.encoder_mode = EncoderKD::None;
        dp.decoder_mode = DecoderKD::None;
        TrainResult res =
            train_depth_model(data, cfg, nullptr, cfg, SsdeParams{}, dp, opts, nullptr);
        if (res.last_loss < res.first_loss) ++improved;
    }
    REQUIRE(improved >= 4);
}

TEST_CASE("composite distillation gradients pass probing", "[distill]") {
    GradSuiteResult res = run_grad_cases({distill_composite_case()}, 2, nullptr);
    CAPTURE(res.worst_err);
    REQUIRE(res.failed == 0);
}

TEST_CASE("mode parsing", "[distill]") {
    REQUIRE(encoder_kd_from_string("cadit") == EncoderKD::CADiT);
    REQUIRE(encoder_kd_from_string("none") == EncoderKD::None);
    REQUIRE(encoder_kd_from_string("l2") == EncoderKD::L2);
    REQUIRE(encoder_kd_from_string("cd") == EncoderKD::CD);
    REQUIRE(decoder_kd_from_string("l1") == DecoderKD::L1);
    REQUIRE(decoder_kd_from_string("cadit+l1") == DecoderKD::CADiTL1);
    REQUIRE_THROWS_AS(encoder_kd_from_string("bogus"), std::runtime_error);
    REQUIRE_THROWS_AS(decoder_kd_from_string("bogus"), std::runtime_error);
}
