#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ddnd/sim.hpp"
#include "ddnd/ssde.hpp"

using namespace ddnd;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace fs = std::filesystem;

TEST_CASE("raycast_depth box hand cases", "[sim]") {
    World box = world_box(2.0);
    Tensor center = raycast_depth(box, {0, 0, 0, 0.5}, 1.2, 9, 3);
    REQUIRE(center.shape() == Shape{3, 9});
    REQUIRE(center[4] == Approx(2.0).margin(1e-12));  // middle column looks straight at x=2

    Tensor corner = raycast_depth(box, {0, 0, M_PI / 4.0, 0.5}, 1.2, 9, 3);
    REQUIRE(corner[4] == Approx(2.0 * std::sqrt(2.0)).margin(1e-9));

    // rows are replicated copies of the column profile
    for (int u = 0; u < 9; ++u) {
        REQUIRE(center[u] == center[9 + u]);
        REQUIRE(center[u] == center[18 + u]);
    }
}

TEST_CASE("raycast_depth misses clamp to max_depth", "[sim]") {
    World far;
    far.segments = {{100.0, -0.5, 100.0, 0.5, 0.9}};  // visible only near dead ahead
    Tensor d = raycast_depth(far, {0, 0, 0, 0.5}, 1.5, 21, 1, 50.0);
    for (long long i = 0; i < d.numel(); ++i) {
        REQUIRE(d[i] > 0.0);
        REQUIRE(d[i] <= 50.0);
    }
    REQUIRE(d[0] == 50.0);   // leftmost ray misses
    REQUIRE(d[20] == 50.0);  // rightmost ray misses
}

TEST_CASE("render_gray shading properties", "[sim]") {
    World box = world_box(2.0);
    const double fov = 1.2;
    Tensor near_img = render_gray(box, {1.0, 0, 0, 0.5}, fov, 9, 5);
    Tensor far_img = render_gray(box, {-1.0, 0, 0, 0.5}, fov, 9, 5);
    REQUIRE(near_img.shape() == Shape{1, 1, 5, 9});
    // the center ray hits the same wall point from 1 and 3 units out; only the
    // 1/(1+distance) factor differs
    const long long c = 2 * 9 + 4;  // center row, center column
    REQUIRE(near_img[c] > far_img[c]);
    REQUIRE(near_img[c] == Approx(far_img[c] * 4.0 / 2.0).margin(1e-12));

    for (long long i = 0; i < near_img.numel(); ++i)
        REQUIRE((near_img[i] >= 0.0 && near_img[i] <= 1.0));

    Tensor again = render_gray(box, {1.0, 0, 0, 0.5}, fov, 9, 5);
    REQUIRE(near_img.data() == again.data());

    World tiny;
    tiny.segments = {{5.0, -0.1, 5.0, 0.1, 0.9}};
    Tensor mostly_black = render_gray(tiny, {0, 0, M_PI, 0.5}, 1.5, 11, 3);
    for (double v : mostly_black.data()) REQUIRE(v == 0.0);  // wall is behind the camera
}

TEST_CASE("step kinematics", "[sim]") {
    DroneState straight = step({0, 0, 0, 0.5}, 0.0, 0.1);
    REQUIRE(straight.x == Approx(0.05).margin(1e-15));
    REQUIRE(straight.y == 0.0);
    REQUIRE(straight.phi == 0.0);

    DroneState spin = step({1, 2, 0.3, 0.0}, 1.7, 0.1);
    REQUIRE(spin.phi == Approx(0.47).margin(1e-15));
    REQUIRE(spin.x == 1.0);
    REQUIRE(spin.y == 2.0);

    // heading updates before translation: a quarter-turn step moves along +y
    DroneState quarter = step({0, 0, 0, 0.5}, M_PI / 2.0 / 0.1, 0.1);
    REQUIRE(quarter.phi == Approx(M_PI / 2.0).margin(1e-12));
    REQUIRE(quarter.x == Approx(0.0).margin(1e-12));
    REQUIRE(quarter.y == Approx(0.05).margin(1e-12));

    REQUIRE_THROWS_AS(step({0, 0, 0, 0.5}, 0.0, 0.0), std::runtime_error);
}

TEST_CASE("relative_pose identity and forward motion", "[sim]") {
    DroneState s{1.2, -0.4, 0.7, 0.5};
    Pose6D same = relative_pose(s, s);
    for (double v : same.axis_angle) REQUIRE(v == 0.0);
    for (double v : same.translation) REQUIRE(v == 0.0);

    DroneState s0{0, 0, 0, 0.5};
    DroneState s1 = step(s0, 0.0, 0.2);
    // the earlier camera sits v*dt behind the later one
    Pose6D p = relative_pose(s0, s1);
    REQUIRE(p.axis_angle[1] == 0.0);
    REQUIRE(p.translation[0] == Approx(0.0).margin(1e-15));
    REQUIRE(p.translation[2] == Approx(-0.1).margin(1e-15));

    DroneState turned{0, 0, 0.25, 0.5};
    REQUIRE(relative_pose(turned, s0).axis_angle[1] == Approx(0.25).margin(1e-15));
}

TEST_CASE("ground-truth warp beats identity and wrong depth", "[sim]") {
    World world = world_corridor();
    const double fov = 1.5;
    const int w = 64, h = 32;
    const CameraIntrinsics k = make_intrinsics(w, h, fov);
    DroneState prev_st{1.0, 0.1, 0.0, 0.5};
    DroneState tgt_st{1.35, 0.1, 0.0, 0.5};
    Tensor prev = render_gray(world, prev_st, fov, w, h);
    Tensor target = render_gray(world, tgt_st, fov, w, h);

    // raycast distances are along the ray; the warp wants camera-forward depth
    Tensor rays = raycast_depth(world, tgt_st, fov, w, h);
    std::vector<double> zd(size_t(h) * w);
    for (int r = 0; r < h; ++r)
        for (int u = 0; u < w; ++u) {
            const double local = std::atan((u - k.cx) / k.fx);
            zd[size_t(r) * w + u] = rays[r * w + u] * std::cos(local);
        }
    Tensor depth = Tensor::from_vec({1, 1, h, w}, zd);

    Tensor tf = pose_to_matrix(relative_pose(tgt_st, prev_st), false);
    Tensor warped = warp(prev, depth, tf, k);
    SsdeParams sp;
    const double l_warp = mean(photometric_loss(warped, target, sp))[0];
    const double l_id = mean(photometric_loss(prev, target, sp))[0];
    Tensor wrong = warp(prev, scalar_mul(depth, 2.5), tf, k);
    const double l_wrong = mean(photometric_loss(wrong, target, sp))[0];
    REQUIRE(l_warp < l_id);
    REQUIRE(l_warp < l_wrong);
}

TEST_CASE("corridor episode flies straight without collision", "[sim]") {
    World world = world_corridor();
    ControlParams p;
    EpisodeResult r = run_episode(world, {0.5, 0.0, 0.02, 0.5}, oracle_depth_fn(1.5, 160, 12), p,
                                  1.5, 150, 0.1);
    REQUIRE(!r.collided);
    REQUIRE(r.ticks.size() == 150);
    for (const auto& tick : r.ticks) REQUIRE(std::abs(tick.state.y) < 0.5);
    REQUIRE(r.ticks.back().state.x > r.ticks.front().state.x);
}

TEST_CASE("pillar corridor episode avoids the pillar", "[sim]") {
    World world = world_pillar_corridor();
    ControlParams p;
    EpisodeResult r = run_episode(world, {0.5, 0.0, 0.03, 0.5}, oracle_depth_fn(1.5, 160, 12), p,
                                  1.5, 220, 0.1);
    REQUIRE(!r.collided);
    REQUIRE(r.ticks.back().state.x > 9.0);  // made it past the pillar at x = 6
}

TEST_CASE("episode edge cases and determinism", "[sim]") {
    World world = world_corridor();
    ControlParams p;
    EpisodeResult empty = run_episode(world, {0.5, 0.0, 0.0, 0.5}, oracle_depth_fn(1.5, 160, 12),
                                      p, 1.5, 0, 0.1);
    REQUIRE(empty.ticks.empty());
    REQUIRE(!empty.collided);

    EpisodeResult wall = run_episode(world, {0.5, 0.99, 0.0, 0.5}, oracle_depth_fn(1.5, 160, 12),
                                     p, 1.5, 10, 0.1);
    REQUIRE(wall.collided);
    REQUIRE(wall.ticks.empty());

    auto run = [&]() {
        return run_episode(world, {0.5, 0.1, -0.04, 0.5}, oracle_depth_fn(1.5, 160, 12), p, 1.5,
                           60, 0.1);
    };
    EpisodeResult a = run();
    EpisodeResult b = run();
    REQUIRE(a.ticks.size() == b.ticks.size());
    for (size_t i = 0; i < a.ticks.size(); ++i) {
        REQUIRE(a.ticks[i].state.x == b.ticks[i].state.x);
        REQUIRE(a.ticks[i].state.y == b.ticks[i].state.y);
        REQUIRE(a.ticks[i].state.phi == b.ticks[i].state.phi);
        REQUIRE(a.ticks[i].phi_dot == b.ticks[i].phi_dot);
    }
}

TEST_CASE("open space produces almost no steering", "[sim]") {
    World far;
    far.segments = {{100.0, -50.0, 100.0, 50.0, 0.9}};
    ControlParams p;
    p.sigma = 1.5;
    Tensor d = raycast_depth(far, {0, 0, 0, 0.5}, 1.5, 160, 12);
    REQUIRE(std::abs(avoid(0.0, obstacle_map(d, 1.5, p), p)) < 1e-3);
}

namespace {

std::vector<char> slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(static_cast<bool>(is));
    return std::vector<char>(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("synthetic triplet generation is reproducible", "[sim]") {
    World world = world_corridor();
    std::vector<DroneState> traj;
    for (int i = 0; i < 20; ++i) traj.push_back({0.5 + 0.35 * i, 0.05, 0.0, 0.5});

    const std::string root_a = (fs::temp_directory_path() / "ddnd_sim_a").string();
    const std::string root_b = (fs::temp_directory_path() / "ddnd_sim_b").string();
    fs::remove_all(root_a);
    fs::remove_all(root_b);
    gen_synthetic_triplets(world, traj, 1.5, 32, 16, 4, 7, root_a);
    gen_synthetic_triplets(world, traj, 1.5, 32, 16, 4, 7, root_b);

    for (int i = 0; i < 4; ++i) {
        const std::string dir = "/" + sample_dir_name(i) + "/";
        for (const char* f :
             {"prev.pgm", "target.pgm", "next.pgm", "intrinsics.txt", "oracle_depth.bin"})
            REQUIRE(slurp(root_a + dir + f) == slurp(root_b + dir + f));
    }

    std::vector<TripletSample> data = load_dataset(root_a);
    REQUIRE(data.size() == 4);
    for (const auto& s : data) {
        s.validate();
        REQUIRE(s.target.shape() == Shape{1, 1, 16, 32});
        REQUIRE(s.oracle_depth.size() == 16 * 32);
        REQUIRE(s.K.fx == Approx(make_intrinsics(32, 16, 1.5).fx).margin(1e-12));
    }
    fs::remove_all(root_a);
    fs::remove_all(root_b);
}

TEST_CASE("stored oracle depth is the raycast at the recorded pose", "[sim]") {
    World world = world_corridor();
    // a constant trajectory pins every sample to one known pose
    std::vector<DroneState> traj(5, DroneState{2.0, 0.1, 0.05, 0.5});
    const std::string root = (fs::temp_directory_path() / "ddnd_sim_oracle").string();
    fs::remove_all(root);
    gen_synthetic_triplets(world, traj, 1.5, 32, 16, 3, 11, root);

    Tensor fresh = raycast_depth(world, traj[1], 1.5, 32, 16);
    std::vector<TripletSample> data = load_dataset(root);
    REQUIRE(data.size() == 3);
    for (const auto& s : data) {
        REQUIRE(s.oracle_depth.size() == size_t(fresh.numel()));
        for (long long i = 0; i < fresh.numel(); ++i)
            REQUIRE(s.oracle_depth[size_t(i)] == float(fresh[i]));
    }
    fs::remove_all(root);
}

TEST_CASE("world files round trip", "[sim]") {
    Rng rng(9);
    World w;
    for (int i = 0; i < 5; ++i)
        w.segments.push_back({rand_uniform(rng, -9, 9), rand_uniform(rng, -9, 9),
                              rand_uniform(rng, -9, 9), rand_uniform(rng, -9, 9),
                              rand_uniform(rng, 0.1, 1.0)});
    const std::string path = (fs::temp_directory_path() / "ddnd_world.txt").string();
    save_world(path, w);
    World r = load_world(path);
    REQUIRE(r.segments.size() == w.segments.size());
    for (size_t i = 0; i < w.segments.size(); ++i) {
        REQUIRE(r.segments[i].x1 == w.segments[i].x1);
        REQUIRE(r.segments[i].y1 == w.segments[i].y1);
        REQUIRE(r.segments[i].x2 == w.segments[i].x2);
        REQUIRE(r.segments[i].y2 == w.segments[i].y2);
        REQUIRE(r.segments[i].albedo == Approx(w.segments[i].albedo).margin(1e-15));
    }
    fs::remove(path);
}

TEST_CASE("world file parsing accepts comments and optional albedo", "[sim]") {
    const std::string path = (fs::temp_directory_path() / "ddnd_world_parse.txt").string();
    {
        std::ofstream os(path);
        os << "# corridor walls\n";
        os << "0 -1 10 -1 0.5\n";
        os << "0 1 10 1   # default albedo\n";
        os << "\n";
    }
    World w = load_world(path);
    REQUIRE(w.segments.size() == 2);
    REQUIRE(w.segments[0].albedo == 0.5);
    REQUIRE(w.segments[1].albedo == 0.9);

    {
        std::ofstream os(path);
        os << "0 -1 10\n";
    }
    REQUIRE_THROWS_WITH(load_world(path), ContainsSubstring(":1"));
    fs::remove(path);
}
