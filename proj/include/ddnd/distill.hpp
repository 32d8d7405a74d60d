#pragma once

#include <ostream>

#include "ddnd/ssde.hpp"

namespace ddnd {

enum class EncoderKD { None, L2, CD, CADiT };
enum class DecoderKD { None, L1, CADiTL1 };

inline EncoderKD encoder_kd_from_string(const std::string& s) {
    if (s == "none") return EncoderKD::None;
    if (s == "l2") return EncoderKD::L2;
    if (s == "cd") return EncoderKD::CD;
    if (s == "cadit") return EncoderKD::CADiT;
    fail("unknown encoder distillation mode '" + s + "' (none|l2|cd|cadit)");
}

inline DecoderKD decoder_kd_from_string(const std::string& s) {
    if (s == "none") return DecoderKD::None;
    if (s == "l1") return DecoderKD::L1;
    if (s == "cadit+l1") return DecoderKD::CADiTL1;
    fail("unknown decoder distillation mode '" + s + "' (none|l1|cadit+l1)");
}

struct DistillParams {
    double alpha_kd = 0.1;
    EncoderKD encoder_mode = EncoderKD::CADiT;
    DecoderKD decoder_mode = DecoderKD::L1;
    std::vector<int> stages{1, 2, 3, 4};  // encoder stages the feature loss covers
    int ccm_axis = 1;                     // 1: distribution over teacher channels
    bool ccm_prescale = true;             // scale the Gram product by 1/sqrt(N)
};

// [1,C,H,W] feature map -> [H·W, C] with pixels as rows.
inline Tensor flatten_feature(const Tensor& f) {
    check(f.ndim() == 4 && f.dim(0) == 1, "flatten_feature: expected [1,C,H,W]");
    return transpose2d(reshape(f, {f.dim(1), f.dim(2) * f.dim(3)}));
}

// Learnable 1x1 projection lifting student channels to teacher width, then
// flattening to pixels-by-channels.
inline Tensor align_channels(const Tensor& f_s_raw, const Tensor& proj_w, const Tensor& proj_b) {
    check(f_s_raw.ndim() == 4, "align_channels: expected an NCHW feature map");
    check(proj_w.ndim() == 4 && proj_w.dim(2) == 1 && proj_w.dim(3) == 1,
          "align_channels: projection must be a 1x1 convolution");
    check(proj_w.dim(1) == f_s_raw.dim(1),
          "align_channels: projection input channels " + std::to_string(proj_w.dim(1)) +
              " do not match feature channels " + std::to_string(f_s_raw.dim(1)));
    return flatten_feature(conv2d(f_s_raw, proj_w, proj_b, 1, 1, 0));
}

// Channel correlation map: softmax over the Gram product of aligned features.
// Rows index student channels; with axis 1 each row is a distribution over
// teacher channels.
inline Tensor ccm(const Tensor& f_s, const Tensor& f_t, int axis = 1, bool prescale = true) {
    check(f_s.ndim() == 2 && f_s.shape() == f_t.shape(),
          "ccm: expected matching [N_pix, C] features, got " + shape_str(f_s.shape()) + " vs " +
              shape_str(f_t.shape()));
    Tensor gram = matmul(transpose2d(f_s), f_t);
    if (prescale) gram = scalar_mul(gram, 1.0 / std::sqrt(static_cast<double>(f_s.dim(0))));
    return softmax(gram, axis);
}

inline Tensor cadit_reconfigure(const Tensor& f_s, const Tensor& correlation) {
    check(correlation.ndim() == 2 && correlation.dim(0) == correlation.dim(1) &&
              correlation.dim(0) == f_s.dim(1),
          "cadit_reconfigure: correlation must be [C,C] matching the feature channels");
    return add(f_s, matmul(f_s, correlation));
}

inline Tensor rms_norm(const Tensor& x) { return sqrt(mean(mul(x, x))); }

// mode L2: ||F_S - F_T||; mode CADiT: ||F_S' - F_T|| with the reconfigured
// student features. Norms are root-mean-square so the magnitude does not scale
// with the feature-map size.
inline Tensor kd_feature_loss(const Tensor& f_s, const Tensor& f_t, EncoderKD mode,
                              const DistillParams& p = {}) {
    check(f_s.shape() == f_t.shape(), "kd_feature_loss: aligned shapes required");
    switch (mode) {
        case EncoderKD::L2:
            return rms_norm(sub(f_s, f_t));
        case EncoderKD::CADiT:
            return rms_norm(sub(cadit_reconfigure(f_s, ccm(f_s, f_t, p.ccm_axis, p.ccm_prescale)),
                                f_t));
        case EncoderKD::CD: {
            // Channel-distribution matching: per channel, softmax over pixels,
            // then KL(teacher || student) averaged over channels.
            Tensor p_t = softmax(f_t, 0);
            Tensor p_s = softmax(f_s, 0);
            Tensor kl = sum(mul(p_t, sub(log(p_t), log(p_s))));
            return scalar_mul(kl, 1.0 / static_cast<double>(f_s.dim(1)));
        }
        case EncoderKD::None:
            break;
    }
    fail("kd_feature_loss: mode carries no feature loss");
}

// (1/3)·Σ_j mean|D_S(j) - D_T(j)| on the sigmoid disparities at their native
// scales.
inline Tensor output_match_loss(const std::vector<Tensor>& d_s, const std::vector<Tensor>& d_t) {
    check(d_s.size() == 3 && d_t.size() == 3, "output_match_loss: expected three scales");
    for (int j = 0; j < 3; ++j)
        check(d_s[static_cast<size_t>(j)].shape() == d_t[static_cast<size_t>(j)].shape(),
              "output_match_loss: scale " + std::to_string(j) + " shape mismatch");
    Tensor acc = mean(abs(sub(d_s[0], d_t[0])));
    for (int j = 1; j < 3; ++j)
        acc = add(acc, mean(abs(sub(d_s[static_cast<size_t>(j)], d_t[static_cast<size_t>(j)]))));
    return scalar_mul(acc, 1.0 / 3.0);
}

// L = L_ss + alpha·L_feature + L_out, with disabled modes contributing nothing.
inline Tensor total_loss(const Tensor& l_ss, const Tensor& l_cadit, const Tensor& l_out,
                         const DistillParams& p) {
    Tensor total = l_ss;
    const bool feature_term =
        p.encoder_mode != EncoderKD::None || p.decoder_mode == DecoderKD::CADiTL1;
    if (feature_term) total = add(total, scalar_mul(l_cadit, p.alpha_kd));
    if (p.decoder_mode != DecoderKD::None) total = add(total, l_out);
    return total;
}

// ---------------------------------------------------------------------------
// Optimizer and schedules
// ---------------------------------------------------------------------------

struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    long long t = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> state;

    void step(WeightStore& params, double lr_now) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (auto& [name, p] : params) {
            if (!p.requires_grad()) continue;
            auto* impl = p.raw();
            auto& st = state[name];
            if (st.first.empty()) {
                st.first.assign(impl->data.size(), 0.0);
                st.second.assign(impl->data.size(), 0.0);
            }
            const bool has_g = !impl->grad.empty();
            for (size_t i = 0; i < impl->data.size(); ++i) {
                const double g = has_g ? impl->grad[i] : 0.0;
                st.first[i] = beta1 * st.first[i] + (1.0 - beta1) * g;
                st.second[i] = beta2 * st.second[i] + (1.0 - beta2) * g * g;
                const double mh = st.first[i] / bc1;
                const double vh = st.second[i] / bc2;
                impl->data[i] -=
                    lr_now * (mh / (std::sqrt(vh) + eps) + weight_decay * impl->data[i]);
            }
        }
    }

    static void zero_grads(WeightStore& params) {
        for (auto& [name, p] : params) p.zero_grad();
    }
};

inline double cosine_lr(double base_lr, long long step, long long total_steps) {
    if (total_steps <= 0) return base_lr;
    const double x = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
    return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * x));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
    int steps = 300;
    int batch = 2;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    unsigned seed = 0;
    bool cosine = true;
};

struct StepBreakdown {
    double l_ss = 0, l_cadit = 0, l_out = 0, total = 0;
};

inline void log_step(std::ostream* log, long long step, const StepBreakdown& b) {
    if (!log) return;
    (*log) << step << ", " << b.l_ss << ", " << b.l_cadit << ", " << b.l_out << ", " << b.total
           << "\n";
}

struct TrainerState {
    WeightStore depth;  // student weights
    WeightStore pose;
    WeightStore proj;  // distillation projections, empty when not distilling
    AdamW opt;
};

// Loss for one triplet. When `teacher` is non-null the KD terms of the
// combined objective are added according to `dp`.
inline StepBreakdown distill_sample_loss(const TripletSample& s, TrainerState& tr,
                                         const NetworkConfig& cfg_s, const WeightStore* teacher,
                                         const NetworkConfig& cfg_t, const SsdeParams& sp,
                                         const DistillParams& dp, Tensor* total_out) {
    DepthForward student = depthnet_forward(s.target, tr.depth, cfg_s);

    Tensor pose_prev =
        slice_row(posenet_forward(concat_channels(s.prev, s.target), tr.pose), 0);
    Tensor pose_next =
        slice_row(posenet_forward(concat_channels(s.target, s.next), tr.pose), 0);

    SsdeLoss ssl = ssde_sample_loss(s.target, s.prev, s.next, student.disparities, pose_prev,
                                    pose_next, s.K, sp);

    StepBreakdown b;
    b.l_ss = ssl.total[0];

    Tensor l_feat = Tensor::scalar(0.0);
    Tensor l_out = Tensor::scalar(0.0);
    if (teacher) {
        DepthForward tf = depthnet_forward(s.target, *teacher, cfg_t);
        int terms = 0;
        if (dp.encoder_mode != EncoderKD::None) {
            Tensor acc = Tensor::scalar(0.0);
            for (int stage : dp.stages) {
                check(stage >= 1 && stage <= 4, "distill: stage index out of range");
                const std::string pname = "kd.enc" + std::to_string(stage);
                Tensor f_s =
                    align_channels(student.features[static_cast<size_t>(stage - 1)],
                                   detail::wget(tr.proj, pname + ".w"),
                                   detail::wget(tr.proj, pname + ".b"));
                Tensor f_t = flatten_feature(tf.features[static_cast<size_t>(stage - 1)]);
                acc = add(acc, kd_feature_loss(f_s, f_t, dp.encoder_mode, dp));
                ++terms;
            }
            l_feat = acc;
        }
        if (dp.decoder_mode == DecoderKD::CADiTL1) {
            Tensor acc = Tensor::scalar(0.0);
            for (int j = 0; j < 3; ++j) {
                const std::string pname = "kd.dec" + std::to_string(j);
                Tensor f_s = align_channels(student.decoder_features[static_cast<size_t>(j)],
                                            detail::wget(tr.proj, pname + ".w"),
                                            detail::wget(tr.proj, pname + ".b"));
                Tensor f_t = flatten_feature(tf.decoder_features[static_cast<size_t>(j)]);
                acc = add(acc, kd_feature_loss(f_s, f_t, EncoderKD::CADiT, dp));
                ++terms;
            }
            l_feat = add(l_feat, acc);
        }
        if (terms > 0) l_feat = scalar_mul(l_feat, 1.0 / terms);
        if (dp.decoder_mode != DecoderKD::None)
            l_out = output_match_loss(student.disparities, tf.disparities);
    }

    b.l_cadit = l_feat[0];
    b.l_out = l_out[0];
    Tensor total = teacher ? total_loss(ssl.total, l_feat, l_out, dp) : ssl.total;
    b.total = total[0];
    if (total_out) *total_out = total;
    return b;
}

// One optimizer update over a mini-batch of triplets. Teacher weights are
// never touched; passing nullptr trains with the self-supervised loss alone.
inline StepBreakdown train_step(const std::vector<const TripletSample*>& batch, TrainerState& tr,
                                const NetworkConfig& cfg_s, const WeightStore* teacher,
                                const NetworkConfig& cfg_t, const SsdeParams& sp,
                                const DistillParams& dp, double lr_now) {
    check(!batch.empty(), "train_step: empty batch");
    AdamW::zero_grads(tr.depth);
    AdamW::zero_grads(tr.pose);
    AdamW::zero_grads(tr.proj);

    StepBreakdown avg;
    Tensor batch_total = Tensor::scalar(0.0);
    for (const TripletSample* s : batch) {
        Tensor total;
        StepBreakdown b =
            distill_sample_loss(*s, tr, cfg_s, teacher, cfg_t, sp, dp, &total);
        avg.l_ss += b.l_ss;
        avg.l_cadit += b.l_cadit;
        avg.l_out += b.l_out;
        avg.total += b.total;
        batch_total = add(batch_total, total);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    batch_total = scalar_mul(batch_total, inv);
    avg.l_ss *= inv;
    avg.l_cadit *= inv;
    avg.l_out *= inv;
    avg.total *= inv;
    check(std::isfinite(avg.total),
          "train_step: non-finite loss " + std::to_string(avg.total) + " at optimizer step " +
              std::to_string(tr.opt.t + 1));

    batch_total.backward();
    tr.opt.step(tr.depth, lr_now);
    tr.opt.step(tr.pose, lr_now);
    tr.opt.step(tr.proj, lr_now);
    return avg;
}

inline WeightStore init_projections(const NetworkConfig& cfg_s, const NetworkConfig& cfg_t,
                                    const DistillParams& dp, Rng& rng) {
    WeightStore proj;
    if (dp.encoder_mode != EncoderKD::None) {
        for (int stage : dp.stages)
            init::conv(proj, rng, "kd.enc" + std::to_string(stage),
                       cfg_t.stage_channels[static_cast<size_t>(stage - 1)],
                       cfg_s.stage_channels[static_cast<size_t>(stage - 1)], 1);
    }
    if (dp.decoder_mode == DecoderKD::CADiTL1) {
        for (int j = 0; j < 3; ++j)
            init::conv(proj, rng, "kd.dec" + std::to_string(j),
                       cfg_t.decoder_channels[static_cast<size_t>(4 - j)],
                       cfg_s.decoder_channels[static_cast<size_t>(4 - j)], 1);
    }
    return proj;
}

struct TrainResult {
    TrainerState state;
    double first_loss = 0, last_loss = 0;
};

// Shared loop for plain training (teacher == nullptr) and distillation.
inline TrainResult train_depth_model(const std::vector<TripletSample>& data,
                                     const NetworkConfig& cfg_s, const WeightStore* teacher,
                                     const NetworkConfig& cfg_t, const SsdeParams& sp,
                                     const DistillParams& dp, const TrainOptions& opts,
                                     std::ostream* log) {
    check(!data.empty(), "train_depth_model: empty dataset");
    TrainResult res;
    Rng rng(opts.seed);
    res.state.depth = init_depthnet(cfg_s, rng);
    res.state.pose = init_posenet(rng);
    if (teacher) {
        Rng proj_rng(opts.seed ^ 0xa5a5a5a5u);
        res.state.proj = init_projections(cfg_s, cfg_t, dp, proj_rng);
    }
    set_trainable(res.state.depth);
    set_trainable(res.state.pose);
    set_trainable(res.state.proj);
    res.state.opt.lr = opts.lr;
    res.state.opt.weight_decay = opts.weight_decay;

    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), size_t{0});
    size_t cursor = order.size();  // forces an initial shuffle

    for (int step = 0; step < opts.steps; ++step) {
        std::vector<const TripletSample*> batch;
        for (int b = 0; b < opts.batch; ++b) {
            if (cursor >= order.size()) {
                for (size_t i = order.size(); i > 1; --i) {
                    size_t j = static_cast<size_t>(rand_uniform(rng, 0.0, static_cast<double>(i)));
                    j = std::min(j, i - 1);
                    std::swap(order[i - 1], order[j]);
                }
                cursor = 0;
            }
            batch.push_back(&data[order[cursor++]]);
        }
        const double lr_now =
            opts.cosine ? cosine_lr(opts.lr, step, opts.steps) : opts.lr;
        StepBreakdown b = train_step(batch, res.state, cfg_s, teacher, cfg_t, sp, dp, lr_now);
        log_step(log, step, b);
        if (step == 0) res.first_loss = b.total;
        res.last_loss = b.total;
    }
    return res;
}

}  // namespace ddnd
