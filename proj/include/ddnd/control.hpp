#pragma once

#include "ddnd/tensor.hpp"

namespace ddnd {

// 1D polar obstacle profile. Bin directions are body-frame bearings,
// 0 = straight ahead, left positive, strictly increasing across the map.
struct ObstacleMap {
    std::vector<double> depths;
    std::vector<double> directions;
};

struct ControlParams {
    double lambda_avoid = 1.0;
    double c_avoid = 0.1;
    double sigma = 0.0;  // angular width of the repulsion field; 0 = use the camera FOV
    int window = 10;
    int center_rows = 10;
};

// Pools the middle rows of a depth map into W/window bins and assigns each
// bin the bearing of its column-window center.
inline ObstacleMap obstacle_map(const Tensor& depth, double fov, const ControlParams& p) {
    check(depth.ndim() == 2, "obstacle_map: depth must be [H,W]");
    check(p.window > 0 && p.center_rows > 0, "obstacle_map: window and center_rows must be positive");
    const int h = depth.dim(0), w = depth.dim(1);
    check(w % p.window == 0, "obstacle_map: width " + std::to_string(w) +
                                 " not divisible by window " + std::to_string(p.window));
    check(h >= p.center_rows, "obstacle_map: fewer than center_rows rows");
    check(fov > 0, "obstacle_map: fov must be positive");
    const int nbins = w / p.window;
    const int row0 = (h - p.center_rows) / 2;
    ObstacleMap m;
    m.depths.resize(nbins);
    m.directions.resize(nbins);
    for (int i = 0; i < nbins; ++i) {
        double acc = 0;
        for (int r = row0; r < row0 + p.center_rows; ++r)
            for (int c = i * p.window; c < (i + 1) * p.window; ++c)
                acc += depth.data()[size_t(r) * w + c];
        m.depths[i] = acc / (p.center_rows * p.window);
        m.directions[i] = fov * ((i + 0.5) / nbins - 0.5);
    }
    return m;
}

// Behaviour arbitration: each bin repels the heading with strength that decays
// exponentially in depth and falls off as a Gaussian in angular distance.
// Positive output = turn left.
inline double avoid(double phi, const ObstacleMap& m, const ControlParams& p) {
    check(m.depths.size() == m.directions.size(), "avoid: obstacle map length mismatch");
    check(std::isfinite(phi), "avoid: non-finite heading");
    check(p.sigma > 0, "avoid: sigma must be positive");
    double rate = 0;
    for (size_t i = 0; i < m.depths.size(); ++i) {
        const double dpsi = phi - m.directions[i];
        rate += dpsi * std::exp(-p.c_avoid * m.depths[i]) *
                std::exp(-dpsi * dpsi / (2.0 * p.sigma * p.sigma));
    }
    return p.lambda_avoid * rate;
}

}  // namespace ddnd
