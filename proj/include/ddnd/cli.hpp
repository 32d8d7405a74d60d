#pragma once

#include <iostream>

#include <CLI11.hpp>

#include "ddnd/config.hpp"
#include "ddnd/gradcheck_suite.hpp"
#include "ddnd/infer.hpp"
#include "ddnd/metrics.hpp"
#include "ddnd/quant.hpp"

namespace ddnd {
namespace cli {

// Bad user input (missing files, malformed configs, unusable flag values).
// Everything else that throws is a genuine runtime failure.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_file(const std::string& path, const std::string& what) {
    if (!std::filesystem::exists(path))
        throw UsageError(what + " '" + path + "' does not exist");
}

inline RunConfig load_cfg(const std::string& path) {
    if (path.empty()) return RunConfig{};
    require_file(path, "config file");
    try {
        return load_config(path);
    } catch (const std::runtime_error& e) {
        throw UsageError(e.what());
    }
}

struct NamedWorld {
    World world;
    DroneState start;
};

// --world accepts a built-in name or a world text file. File worlds start at
// the origin unless --start overrides it.
inline NamedWorld resolve_world(const std::string& spec, double speed) {
    NamedWorld nw;
    if (spec == "box") {
        nw.world = world_box();
        nw.start = {-1.0, -1.0, 0.4, speed};
    } else if (spec == "corridor") {
        nw.world = world_corridor();
        nw.start = {0.5, 0.0, 0.0, speed};
    } else if (spec == "pillar") {
        nw.world = world_pillar_corridor();
        nw.start = {0.5, 0.0, 0.0, speed};
    } else if (spec == "s-corridor") {
        nw.world = world_s_corridor();
        nw.start = {0.0, 0.5, M_PI / 2, speed};
    } else {
        require_file(spec, "world file");
        try {
            nw.world = load_world(spec);
        } catch (const std::runtime_error& e) {
            throw UsageError(e.what());
        }
        nw.start = {0.0, 0.0, 0.0, speed};
    }
    return nw;
}

// Oracle-guided flights from perturbed starts, concatenated per episode so a
// triplet never straddles an episode boundary.
inline void generate_dataset(const RunConfig& cfg, const NamedWorld& nw, int count,
                             unsigned seed, const std::string& out_dir) {
    const double fov = cfg.fov_rad();
    const DepthFn oracle = oracle_depth_fn(fov, cfg.width, cfg.height, cfg.ssde.max_depth);
    Rng rng(seed);
    const int episodes = 4;
    int written = 0;
    for (int ep = 0; ep < episodes && written < count; ++ep) {
        DroneState start = nw.start;
        start.phi += rand_uniform(rng, -0.05, 0.05);
        EpisodeResult res =
            run_episode(nw.world, start, oracle, cfg.control, fov, cfg.max_ticks, cfg.dt,
                        cfg.collision_radius);
        if (res.ticks.size() < 3) continue;
        std::vector<DroneState> traj;
        traj.reserve(res.ticks.size());
        for (const auto& t : res.ticks) traj.push_back(t.state);
        const int want = std::min(count - written, (count + episodes - 1) / episodes);
        gen_synthetic_triplets(nw.world, traj, fov, cfg.width, cfg.height, want,
                               seed + unsigned(ep) * 7919u, out_dir, cfg.ssde.max_depth,
                               written);
        written += want;
    }
    check(written == count, "generate_dataset: trajectories too short for requested count");
}

inline NetworkConfig variant_config(const RunConfig& cfg, const std::string& variant) {
    if (variant == "student") return cfg.student;
    if (variant == "teacher") return cfg.teacher;
    throw UsageError("unknown variant '" + variant + "' (student|teacher)");
}

inline SaveDtype dtype_from_string(const std::string& s) {
    if (s == "f32") return SaveDtype::f32;
    if (s == "f64") return SaveDtype::f64;
    if (s == "i8") return SaveDtype::i8;
    throw UsageError("unknown dtype '" + s + "' (f32|f64|i8)");
}

inline WeightStore load_weights(const std::string& path) {
    require_file(path, "weights file");
    try {
        return load_model(path);
    } catch (const std::runtime_error& e) {
        throw UsageError(e.what());
    }
}

inline int cmd_gen_data(const std::string& config, const std::string& world_spec,
                        const std::string& out_dir, int count, int seed) {
    RunConfig cfg = load_cfg(config);
    if (count > 0) cfg.data_count = count;
    if (seed >= 0) cfg.data_seed = unsigned(seed);
    if (!out_dir.empty()) cfg.data_dir = out_dir;
    const NamedWorld nw = resolve_world(world_spec, cfg.speed);
    generate_dataset(cfg, nw, cfg.data_count, cfg.data_seed, cfg.data_dir);
    std::cout << "wrote " << cfg.data_count << " triplets to " << cfg.data_dir << "\n";
    return 0;
}

inline int cmd_train(const std::string& config, const std::string& data_dir,
                     const std::string& out_path, const std::string& variant,
                     const std::string& dtype, int seed, int steps) {
    RunConfig cfg = load_cfg(config);
    if (seed >= 0) cfg.train.seed = unsigned(seed);
    if (steps > 0) cfg.train.steps = steps;
    require_file(data_dir, "dataset directory");
    const auto data = load_dataset(data_dir);
    const NetworkConfig net = variant_config(cfg, variant);
    DistillParams off;
    off.encoder_mode = EncoderKD::None;
    off.decoder_mode = DecoderKD::None;
    TrainResult r = train_depth_model(data, net, nullptr, NetworkConfig{}, cfg.ssde, off,
                                      cfg.train, &std::cout);
    WeightStore merged = r.state.depth;
    merged.insert(r.state.pose.begin(), r.state.pose.end());
    const size_t bytes = save_model(merged, dtype_from_string(dtype), out_path);
    std::cout << "loss " << r.first_loss << " -> " << r.last_loss << ", wrote " << bytes
              << " bytes to " << out_path << "\n";
    return 0;
}

inline int cmd_distill(const std::string& config, const std::string& data_dir,
                       const std::string& teacher_path, const std::string& out_path,
                       const std::string& dtype, int seed, int steps) {
    RunConfig cfg = load_cfg(config);
    if (seed >= 0) cfg.train.seed = unsigned(seed);
    if (steps > 0) cfg.train.steps = steps;
    require_file(data_dir, "dataset directory");
    const auto data = load_dataset(data_dir);
    const WeightStore teacher = load_weights(teacher_path);
    TrainResult r = train_depth_model(data, cfg.student, &teacher, cfg.teacher, cfg.ssde,
                                      cfg.distill, cfg.train, &std::cout);
    WeightStore merged = r.state.depth;
    merged.insert(r.state.pose.begin(), r.state.pose.end());
    const size_t bytes = save_model(merged, dtype_from_string(dtype), out_path);
    std::cout << "loss " << r.first_loss << " -> " << r.last_loss << ", wrote " << bytes
              << " bytes to " << out_path << "\n";
    return 0;
}

inline int cmd_quantize(const std::string& in_path, const std::string& out_path) {
    const WeightStore ws = load_weights(in_path);
    const size_t out_bytes = save_model(ws, SaveDtype::i8, out_path);
    const auto in_bytes = std::filesystem::file_size(in_path);
    std::cout << in_path << ": " << in_bytes << " bytes -> " << out_path << ": " << out_bytes
              << " bytes (ratio " << double(out_bytes) / double(in_bytes) << ")\n";
    return 0;
}

inline int cmd_eval(const std::string& config, const std::string& weights_path,
                    const std::string& data_dir, const std::string& variant) {
    RunConfig cfg = load_cfg(config);
    require_file(data_dir, "dataset directory");
    const auto data = load_dataset(data_dir);
    InferenceEngine engine(load_weights(weights_path), variant_config(cfg, variant));
    DepthMetrics sum;
    int n = 0;
    for (const auto& s : data) {
        if (s.oracle_depth.empty()) continue;
        const Tensor depth = engine.depth(s.target, cfg.ssde.min_depth, cfg.ssde.max_depth);
        const DepthMetrics m =
            depth_metrics(depth, s.oracle_depth, cfg.ssde.min_depth, cfg.ssde.max_depth);
        sum.abs_rel += m.abs_rel; sum.sq_rel += m.sq_rel; sum.rmse += m.rmse;
        sum.rmse_log += m.rmse_log; sum.a1 += m.a1; sum.a2 += m.a2; sum.a3 += m.a3;
        ++n;
    }
    if (n == 0) throw UsageError("no samples with oracle depth under '" + data_dir + "'");
    std::cout << "samples " << n << "\n";
    std::cout << "abs_rel " << sum.abs_rel / n << "\nsq_rel " << sum.sq_rel / n << "\nrmse "
              << sum.rmse / n << "\nrmse_log " << sum.rmse_log / n << "\nd1 " << sum.a1 / n
              << "\nd2 " << sum.a2 / n << "\nd3 " << sum.a3 / n << "\n";
    return 0;
}

inline int cmd_infer(const std::string& config, const std::string& weights_path,
                     const std::string& image_path, const std::string& out_path,
                     const std::string& variant, const std::string& pgm_path) {
    RunConfig cfg = load_cfg(config);
    require_file(image_path, "input image");
    const Tensor img = read_pgm(image_path);
    InferenceEngine engine(load_weights(weights_path), variant_config(cfg, variant));
    const Tensor depth = engine.depth(img, cfg.ssde.min_depth, cfg.ssde.max_depth);
    std::vector<float> out(depth.data().begin(), depth.data().end());
    write_floats(out_path, out);
    std::ofstream hdr(out_path + ".txt");
    hdr << depth.dim(1) << " " << depth.dim(0) << "\n";
    if (!pgm_path.empty()) {
        const Tensor disp = engine.disparity(img);
        write_pgm(pgm_path, reshape(disp, {1, 1, disp.dim(0), disp.dim(1)}));
    }
    std::cout << "wrote " << out_path << " (" << depth.dim(1) << "x" << depth.dim(0) << ")\n";
    return 0;
}

inline int cmd_simulate(const std::string& config, const std::string& world_spec,
                        const std::string& depth_source, const std::string& weights_path,
                        const std::string& variant, int episodes, int seed,
                        const std::string& out_prefix) {
    RunConfig cfg = load_cfg(config);
    const NamedWorld nw = resolve_world(world_spec, cfg.speed);
    const double fov = cfg.fov_rad();

    DepthFn depth_fn;
    if (depth_source == "oracle") {
        depth_fn = oracle_depth_fn(fov, cfg.width, cfg.height, cfg.ssde.max_depth);
    } else if (depth_source == "network") {
        auto engine =
            std::make_shared<InferenceEngine>(load_weights(weights_path), variant_config(cfg, variant));
        depth_fn = network_depth_fn(engine, fov, cfg.width, cfg.height, cfg.ssde.min_depth,
                                    cfg.ssde.max_depth);
    } else {
        throw UsageError("unknown depth source '" + depth_source + "' (oracle|network)");
    }

    Rng rng(seed >= 0 ? unsigned(seed) : 0u);
    int collisions = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        DroneState start = nw.start;
        if (episodes > 1 || seed >= 0) start.phi += rand_uniform(rng, -0.05, 0.05);
        const EpisodeResult res = run_episode(nw.world, start, depth_fn, cfg.control, fov,
                                              cfg.max_ticks, cfg.dt, cfg.collision_radius);
        collisions += res.collided;
        if (!out_prefix.empty()) {
            std::ofstream traj(out_prefix + "_ep" + std::to_string(ep) + ".csv");
            check(static_cast<bool>(traj), "simulate: cannot write trajectory file");
            traj << "t, x, y, phi, phi_dot\n";
            std::ofstream steer(out_prefix + "_steer" + std::to_string(ep) + ".csv");
            steer << "t, phi, phi_dot, min_bin_depth\n";
            traj.precision(10);
            steer.precision(10);
            for (const auto& tk : res.ticks) {
                traj << tk.t << ", " << tk.state.x << ", " << tk.state.y << ", " << tk.state.phi
                     << ", " << tk.phi_dot << "\n";
                steer << tk.t << ", " << tk.state.phi << ", " << tk.phi_dot << ", "
                      << tk.min_bin_depth << "\n";
            }
        }
        std::cout << "episode " << ep << ": ticks=" << res.ticks.size()
                  << " collided=" << (res.collided ? "true" : "false") << "\n";
    }
    std::cout << "collision-free " << (episodes - collisions) << "/" << episodes << "\n";
    return 0;
}

inline int cmd_gradcheck(int seeds) {
    const GradSuiteResult res = run_all_grad_checks(seeds, &std::cout);
    std::cout << "checked " << res.reports.size() << " cases over " << seeds
              << " seeds, worst " << res.worst_err << " (" << res.worst_case << "), "
              << res.failed << " failed\n";
    return res.failed == 0 ? 0 : 2;
}

}  // namespace cli

inline int run_cli(int argc, char** argv) {
    CLI::App app{"tiny self-supervised depth, distillation, quantization and obstacle "
                 "avoidance toolkit"};
    app.require_subcommand(0, 1);
    bool dump_config = false;
    app.add_flag("--dump-config", dump_config, "print the full default config and exit");

    std::string config, world_spec = "s-corridor", out, data_dir, weights, teacher_path;
    std::string variant = "student", dtype = "f32", depth_source = "oracle", image, pgm;
    int count = 0, seed = -1, steps = 0, episodes = 1, gc_seeds = 5;

    auto* gen = app.add_subcommand("gen-data", "render a synthetic triplet dataset");
    gen->add_option("--config", config, "config file");
    gen->add_option("--world", world_spec, "world name (box|corridor|pillar|s-corridor) or file");
    gen->add_option("--out", out, "output dataset directory");
    gen->add_option("--count", count, "number of triplets");
    gen->add_option("--seed", seed, "dataset seed");

    auto* train = app.add_subcommand("train", "self-supervised training, no distillation");
    train->add_option("--config", config, "config file");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out, "output weights file")->required();
    train->add_option("--variant", variant, "student|teacher");
    train->add_option("--dtype", dtype, "weight file precision (f32|f64)");
    train->add_option("--seed", seed, "training seed");
    train->add_option("--steps", steps, "optimizer steps");

    auto* dist = app.add_subcommand("distill", "train the student against a frozen teacher");
    dist->add_option("--config", config, "config file");
    dist->add_option("--data", data_dir, "dataset directory")->required();
    dist->add_option("--teacher", teacher_path, "teacher weights file")->required();
    dist->add_option("--out", out, "output weights file")->required();
    dist->add_option("--dtype", dtype, "weight file precision (f32|f64)");
    dist->add_option("--seed", seed, "training seed");
    dist->add_option("--steps", steps, "optimizer steps");

    auto* quant = app.add_subcommand("quantize", "write an int8 copy of a weights file");
    quant->add_option("--in", weights, "input weights file")->required();
    quant->add_option("--out", out, "output weights file")->required();

    auto* eval = app.add_subcommand("eval", "depth metrics against oracle depth");
    eval->add_option("--config", config, "config file");
    eval->add_option("--weights", weights, "weights file")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--variant", variant, "student|teacher");

    auto* infer = app.add_subcommand("infer", "one image to one depth map");
    infer->add_option("--config", config, "config file");
    infer->add_option("--weights", weights, "weights file")->required();
    infer->add_option("--image", image, "input PGM image")->required();
    infer->add_option("--out", out, "output f32 depth file")->required();
    infer->add_option("--variant", variant, "student|teacher");
    infer->add_option("--pgm", pgm, "also write a disparity PGM preview");

    auto* sim = app.add_subcommand("simulate", "closed-loop obstacle avoidance episodes");
    sim->add_option("--config", config, "config file");
    sim->add_option("--world", world_spec, "world name (box|corridor|pillar|s-corridor) or file");
    sim->add_option("--depth-source", depth_source, "oracle|network");
    sim->add_option("--weights", weights, "weights file for --depth-source network");
    sim->add_option("--variant", variant, "student|teacher");
    sim->add_option("--episodes", episodes, "number of perturbed-start episodes");
    sim->add_option("--seed", seed, "start perturbation seed");
    sim->add_option("--out", out, "trajectory/steering csv prefix");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op");
    gc->add_option("--seeds", gc_seeds, "random seeds per case");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 1;
    }

    try {
        if (dump_config) {
            std::cout << default_config_text();
            return 0;
        }
        if (gen->parsed()) return cli::cmd_gen_data(config, world_spec, out, count, seed);
        if (train->parsed())
            return cli::cmd_train(config, data_dir, out, variant, dtype, seed, steps);
        if (dist->parsed())
            return cli::cmd_distill(config, data_dir, teacher_path, out, dtype, seed, steps);
        if (quant->parsed()) return cli::cmd_quantize(weights, out);
        if (eval->parsed()) return cli::cmd_eval(config, weights, data_dir, variant);
        if (infer->parsed()) return cli::cmd_infer(config, weights, image, out, variant, pgm);
        if (sim->parsed())
            return cli::cmd_simulate(config, world_spec, depth_source, weights, variant,
                                     episodes, seed, out);
        if (gc->parsed()) return cli::cmd_gradcheck(gc_seeds);
        std::cerr << app.help() << "\n";
        return 1;
    } catch (const cli::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace ddnd
