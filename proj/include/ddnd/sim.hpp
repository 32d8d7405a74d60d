#pragma once

#include <array>
#include <functional>
#include <optional>
#include <sstream>

#include "ddnd/control.hpp"
#include "ddnd/dataset.hpp"
#include "ddnd/models.hpp"

namespace ddnd {

struct Segment {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    double albedo = 0.9;
};

struct World {
    std::vector<Segment> segments;

    void validate() const {
        check(!segments.empty(), "World: needs at least one segment");
        for (const auto& s : segments)
            check(std::isfinite(s.x1) && std::isfinite(s.y1) && std::isfinite(s.x2) &&
                      std::isfinite(s.y2) && s.albedo > 0 && s.albedo <= 1,
                  "World: non-finite segment or albedo outside (0,1]");
    }

    std::array<double, 4> bounds() const {
        validate();
        std::array<double, 4> b{segments[0].x1, segments[0].y1, segments[0].x1, segments[0].y1};
        for (const auto& s : segments) {
            b[0] = std::min({b[0], s.x1, s.x2});
            b[1] = std::min({b[1], s.y1, s.y2});
            b[2] = std::max({b[2], s.x1, s.x2});
            b[3] = std::max({b[3], s.y1, s.y2});
        }
        return b;
    }
};

// World text format: one "x1 y1 x2 y2 albedo" line per segment, '#' comments.
inline void save_world(const std::string& path, const World& w) {
    w.validate();
    std::ofstream os(path);
    check(static_cast<bool>(os), "save_world: cannot open '" + path + "'");
    os.precision(17);
    os << "# segments: x1 y1 x2 y2 albedo\n";
    for (const auto& s : w.segments)
        os << s.x1 << " " << s.y1 << " " << s.x2 << " " << s.y2 << " " << s.albedo << "\n";
}

inline World load_world(const std::string& path) {
    std::ifstream is(path);
    check(static_cast<bool>(is), "load_world: cannot open '" + path + "'");
    World w;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        Segment s;
        if (!(ls >> s.x1)) continue;  // blank line
        check(static_cast<bool>(ls >> s.y1 >> s.x2 >> s.y2),
              "load_world: malformed segment at " + path + ":" + std::to_string(lineno));
        double albedo;
        if (ls >> albedo) s.albedo = albedo;  // optional fifth column
        w.segments.push_back(s);
    }
    w.validate();
    return w;
}

struct DroneState {
    double x = 0, y = 0;
    double phi = 0;  // world heading, radians CCW
    double v = 0.5;  // forward speed, units/s
};

namespace detail {

struct RayHit {
    double dist = 0;    // along the (unit) ray
    double arclen = 0;  // along the segment, from its first endpoint
    int seg = -1;
};

inline std::optional<RayHit> cast_ray(const World& w, double ox, double oy, double bearing) {
    const double ux = std::cos(bearing), uy = std::sin(bearing);
    std::optional<RayHit> best;
    for (size_t i = 0; i < w.segments.size(); ++i) {
        const auto& sg = w.segments[i];
        const double dx = sg.x2 - sg.x1, dy = sg.y2 - sg.y1;
        const double denom = ux * dy - uy * dx;
        if (std::abs(denom) < 1e-12) continue;  // parallel or degenerate
        const double px = sg.x1 - ox, py = sg.y1 - oy;
        const double t = (px * dy - py * dx) / denom;
        const double s = (px * uy - py * ux) / denom;
        if (t > 1e-9 && s >= 0 && s <= 1 && (!best || t < best->dist)) {
            best = RayHit{t, s * std::hypot(dx, dy), int(i)};
        }
    }
    return best;
}

inline double point_segment_distance(double px, double py, const Segment& sg) {
    const double dx = sg.x2 - sg.x1, dy = sg.y2 - sg.y1;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - sg.x1) * dx + (py - sg.y1) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (sg.x1 + t * dx), py - (sg.y1 + t * dy));
}

// Wall texture, anchored to world coordinates so that the same wall point
// renders the same brightness from any pose: stripes along the segment plus a
// banding term in wall height.
inline double stripe_factor(double arclen, int seg) {
    const double phase = seg * 2.3999632297286535;
    return 0.7 + 0.3 * (0.5 + 0.5 * std::sin(2.0 * M_PI * arclen / 0.8 + phase));
}

inline double height_factor(double height) {
    return 0.85 + 0.15 * std::cos(2.0 * M_PI * height / 0.7);
}

}  // namespace detail

inline double distance_to_walls(const World& w, double x, double y) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& sg : w.segments) d = std::min(d, detail::point_segment_distance(x, y, sg));
    return d;
}

// Per-column nearest wall distance at the column's pinhole bearing, replicated
// down rows (walls are vertical, the camera is horizontal). Misses read as
// max_depth.
inline Tensor raycast_depth(const World& w, const DroneState& st, double fov, int width,
                            int height, double max_depth = 100.0) {
    check(width >= 1 && height >= 1, "raycast_depth: width and height must be >= 1");
    const CameraIntrinsics k = make_intrinsics(width, height, fov);
    std::vector<double> row(width);
    for (int u = 0; u < width; ++u) {
        const double bearing = st.phi + std::atan((u - k.cx) / k.fx);
        const auto hit = detail::cast_ray(w, st.x, st.y, bearing);
        row[u] = hit ? std::min(hit->dist, max_depth) : max_depth;
    }
    std::vector<double> data(size_t(height) * width);
    for (int r = 0; r < height; ++r)
        std::copy(row.begin(), row.end(), data.begin() + size_t(r) * width);
    return Tensor::from_vec({height, width}, std::move(data));
}

// Gray render: albedo x texture x 1/(1+distance) shading; rays that miss every
// wall render black. Output in [0,1].
inline Tensor render_gray(const World& w, const DroneState& st, double fov, int width,
                          int height, double max_depth = 100.0) {
    check(width >= 1 && height >= 1, "render_gray: width and height must be >= 1");
    const CameraIntrinsics k = make_intrinsics(width, height, fov);
    std::vector<double> data(size_t(height) * width, 0.0);
    for (int u = 0; u < width; ++u) {
        const double local = std::atan((u - k.cx) / k.fx);
        const auto hit = detail::cast_ray(w, st.x, st.y, st.phi + local);
        if (!hit || hit->dist > max_depth) continue;
        const auto& sg = w.segments[size_t(hit->seg)];
        const double base =
            sg.albedo * detail::stripe_factor(hit->arclen, hit->seg) / (1.0 + hit->dist);
        const double z = hit->dist * std::cos(local);  // camera-forward depth
        for (int r = 0; r < height; ++r) {
            const double wall_height = -(r - k.cy) / k.fy * z;
            data[size_t(r) * width + u] = base * detail::height_factor(wall_height);
        }
    }
    return Tensor::from_vec({1, 1, height, width}, std::move(data));
}

// Euler step, heading first so the translation uses the new heading.
inline DroneState step(const DroneState& st, double phi_dot, double dt) {
    check(dt > 0, "step: dt must be positive");
    DroneState out = st;
    out.phi += phi_dot * dt;
    out.x += st.v * std::cos(out.phi) * dt;
    out.y += st.v * std::sin(out.phi) * dt;
    return out;
}

// Camera-frame motion between two drone poses: maps camera coordinates of
// `from` into camera coordinates of `to`. Camera axes: x left, y down,
// z forward, so a heading change appears as a rotation about y.
inline Pose6D relative_pose(const DroneState& from, const DroneState& to) {
    const double fx = std::cos(to.phi), fy = std::sin(to.phi);    // forward of `to`
    const double lx = -std::sin(to.phi), ly = std::cos(to.phi);   // left of `to`
    const double dx = from.x - to.x, dy = from.y - to.y;
    Pose6D p;
    p.axis_angle = {0.0, from.phi - to.phi, 0.0};
    p.translation = {dx * lx + dy * ly, 0.0, dx * fx + dy * fy};
    return p;
}

struct EpisodeTick {
    double t = 0;
    DroneState state;  // state the controller saw, before stepping
    double phi_dot = 0;
    double min_bin_depth = 0;
};

struct EpisodeResult {
    std::vector<EpisodeTick> ticks;
    bool collided = false;
};

// Depth provider for the closed loop: returns a [H,W] metric depth map for the
// current pose (ground-truth raycast, or a network run on render_gray).
using DepthFn = std::function<Tensor(const World&, const DroneState&)>;

inline EpisodeResult run_episode(const World& world, const DroneState& initial,
                                 const DepthFn& depth_fn, const ControlParams& params,
                                 double fov, int max_ticks, double dt,
                                 double collision_radius = 0.1) {
    world.validate();
    ControlParams p = params;
    if (p.sigma <= 0) p.sigma = fov;
    EpisodeResult out;
    DroneState st = initial;
    if (distance_to_walls(world, st.x, st.y) < collision_radius) {
        out.collided = true;
        return out;
    }
    for (int i = 0; i < max_ticks; ++i) {
        const Tensor depth = depth_fn(world, st);
        const ObstacleMap omap = obstacle_map(depth, fov, p);
        // Body frame: the current heading is always bearing offset zero.
        const double phi_dot = avoid(0.0, omap, p);
        const double min_bin =
            *std::min_element(omap.depths.begin(), omap.depths.end());
        out.ticks.push_back({i * dt, st, phi_dot, min_bin});
        st = step(st, phi_dot, dt);
        if (distance_to_walls(world, st.x, st.y) < collision_radius) {
            out.collided = true;
            break;
        }
    }
    return out;
}

inline DepthFn oracle_depth_fn(double fov, int width, int height, double max_depth = 100.0) {
    return [=](const World& w, const DroneState& st) {
        return raycast_depth(w, st, fov, width, height, max_depth);
    };
}

// Renders consecutive state triples from a trajectory into a triplet dataset.
// Sample start indices are drawn from `seed`, so a given (trajectory, seed)
// pair regenerates byte-identical data.
inline void gen_synthetic_triplets(const World& world, const std::vector<DroneState>& traj,
                                   double fov, int width, int height, int count,
                                   uint32_t seed, const std::string& out_root,
                                   double max_depth = 100.0, int first_index = 0) {
    check(traj.size() >= 3, "gen_synthetic_triplets: trajectory shorter than one triplet");
    check(count >= 1, "gen_synthetic_triplets: count must be >= 1");
    const CameraIntrinsics k = make_intrinsics(width, height, fov);
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        const int start = int(rand_uniform(rng, 0.0, double(traj.size() - 2)));
        TripletSample s;
        s.prev = render_gray(world, traj[size_t(start)], fov, width, height, max_depth);
        s.target = render_gray(world, traj[size_t(start) + 1], fov, width, height, max_depth);
        s.next = render_gray(world, traj[size_t(start) + 2], fov, width, height, max_depth);
        s.K = k;
        const Tensor d = raycast_depth(world, traj[size_t(start) + 1], fov, width, height, max_depth);
        s.oracle_depth.assign(d.data().begin(), d.data().end());
        save_triplet(out_root + "/" + sample_dir_name(first_index + i), s);
    }
}

// Canned worlds.

inline World world_box(double half = 2.0) {
    World w;
    w.segments = {{-half, -half, half, -half, 0.90}, {half, -half, half, half, 0.80},
                  {half, half, -half, half, 0.95},   {-half, half, -half, -half, 0.85}};
    return w;
}

inline World world_corridor(double length = 20.0, double width = 2.0) {
    const double h = width / 2;
    World w;
    w.segments = {{0, -h, length, -h, 0.90}, {0, h, length, h, 0.85}, {0, -h, 0, h, 0.80}};
    return w;
}

inline World world_pillar_corridor(double length = 12.0, double width = 3.0) {
    World w = world_corridor(length, width);
    // Small square pillar offset from the corridor axis.
    const double cx = length / 2, cy = 0.35, r = 0.18;
    w.segments.push_back({cx - r, cy - r, cx + r, cy - r, 0.95});
    w.segments.push_back({cx + r, cy - r, cx + r, cy + r, 0.95});
    w.segments.push_back({cx + r, cy + r, cx - r, cy + r, 0.95});
    w.segments.push_back({cx - r, cy + r, cx - r, cy - r, 0.95});
    return w;
}

// Two-bend S: up the first leg, east across the middle, up the second leg.
inline World world_s_corridor() {
    World w;
    w.segments = {
        {-1, 0, -1, 7, 0.90}, {-1, 7, 3, 7, 0.85}, {3, 7, 3, 12, 0.92},
        {1, 0, 1, 5, 0.88},   {1, 5, 5, 5, 0.95},  {5, 5, 5, 12, 0.82},
        {-1, 0, 1, 0, 0.80},
    };
    return w;
}

}  // namespace ddnd
