#pragma once

#include "ddnd/distill.hpp"
#include "ddnd/gradcheck.hpp"

namespace ddnd {

// End-to-end gradient checks over the two training objectives: the
// self-supervised loss probed through leaf disparities and poses, and the
// combined distillation loss probed through live network weights. Both run on
// miniature shapes so finite differences stay affordable.

inline GradCase ssde_composite_case() {
    GradCase c;
    c.name = "ssde_sample_loss (composite)";
    c.tol = 1e-3;
    c.run = [](Rng& rng) {
        const int h = 16, w = 32;
        const CameraIntrinsics K = make_intrinsics(w, h, 1.2);
        const SsdeParams p;
        Tensor target = Tensor::uniform({1, 1, h, w}, rng, 0.1, 0.9);
        Tensor prev = Tensor::uniform({1, 1, h, w}, rng, 0.1, 0.9);
        Tensor next = Tensor::uniform({1, 1, h, w}, rng, 0.1, 0.9);

        // Disparities sit mid-range, away from the (0,1) domain edges; the
        // poses are small but deliberately not identity, which would park
        // every warp coordinate on an exact pixel corner.
        std::vector<Tensor> inputs = {
            Tensor::uniform({1, 1, h, w}, rng, 0.3, 0.7),
            Tensor::uniform({1, 1, h / 2, w / 2}, rng, 0.3, 0.7),
            Tensor::uniform({1, 1, h / 4, w / 4}, rng, 0.3, 0.7),
            Tensor::from_vec({6}, {rand_uniform(rng, 0.01, 0.04), rand_uniform(rng, 0.01, 0.04),
                                   rand_uniform(rng, 0.01, 0.04), rand_uniform(rng, 0.05, 0.12),
                                   rand_uniform(rng, 0.01, 0.03), rand_uniform(rng, 0.05, 0.12)}),
            Tensor::from_vec({6}, {rand_uniform(rng, -0.04, -0.01), rand_uniform(rng, 0.01, 0.04),
                                   rand_uniform(rng, -0.04, -0.01), rand_uniform(rng, -0.12, -0.05),
                                   rand_uniform(rng, 0.01, 0.03), rand_uniform(rng, 0.05, 0.12)}),
        };
        auto f = [&](const std::vector<Tensor>& in) {
            return ssde_sample_loss(target, prev, next, {in[0], in[1], in[2]}, in[3], in[4], K, p)
                .total;
        };
        // The auto-mask makes this loss piecewise: a probe window that spans a
        // mask flip measures the jump, not the derivative. Guarded probing
        // rejects those windows.
        return grad_check(f, inputs, rng, 1e-6, 16, true);
    };
    c.eps = 1e-6;
    return c;
}

inline GradCase distill_composite_case() {
    GradCase c;
    c.name = "distill_sample_loss (composite)";
    c.tol = 1e-3;
    c.run = [](Rng& rng) {
        const int h = 32, w = 32;
        TripletSample s;
        s.target = Tensor::uniform({1, 1, h, w}, rng, 0.1, 0.9);
        s.prev = Tensor::uniform({1, 1, h, w}, rng, 0.1, 0.9);
        s.next = Tensor::uniform({1, 1, h, w}, rng, 0.1, 0.9);
        s.K = make_intrinsics(w, h, 1.2);

        const NetworkConfig cfg_s = NetworkConfig::tiny_student();
        const NetworkConfig cfg_t = NetworkConfig::tiny_teacher();
        const SsdeParams sp;
        DistillParams dp;
        dp.encoder_mode = EncoderKD::CADiT;
        dp.decoder_mode = DecoderKD::CADiTL1;  // widest path: every projection is live

        WeightStore teacher = init_depthnet(cfg_t, rng);
        TrainerState tr;
        tr.depth = init_depthnet(cfg_s, rng);
        tr.pose = init_posenet(rng);
        tr.proj = init_projections(cfg_s, cfg_t, dp, rng);
        set_trainable(tr.depth);
        set_trainable(tr.pose);
        set_trainable(tr.proj);

        // Probe a cross-section of the trainable surface; the stores share
        // tensor storage with these handles, so finite-difference pokes are
        // seen by the forward pass.
        std::vector<Tensor> inputs = {
            tr.depth.at("enc.stem.w"),     tr.depth.at("enc.s3.blk0.pw.w"),
            tr.depth.at("dec.l0.post.w"),  tr.depth.at("dec.disp0.w"),
            tr.pose.at("pose.fc.w"),       tr.proj.at("kd.enc2.w"),
            tr.proj.at("kd.dec0.w"),
        };
        auto f = [&](const std::vector<Tensor>&) {
            Tensor total;
            distill_sample_loss(s, tr, cfg_s, &teacher, cfg_t, sp, dp, &total);
            return total;
        };
        // Contains the self-supervised term, so the same mask-flip hazard
        // applies; see ssde_composite_case.
        return grad_check(f, inputs, rng, 1e-6, 8, true);
    };
    c.eps = 1e-6;
    return c;
}

inline std::vector<GradCase> all_grad_cases() {
    std::vector<GradCase> cases = numerics_grad_cases();
    cases.push_back(ssde_composite_case());
    cases.push_back(distill_composite_case());
    return cases;
}

inline GradSuiteResult run_all_grad_checks(int seeds = 5, std::ostream* log = nullptr) {
    return run_grad_cases(all_grad_cases(), seeds, log);
}

}  // namespace ddnd
