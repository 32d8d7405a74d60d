#pragma once

#include "ddnd/tensor.hpp"

namespace ddnd {

// Standard monocular depth indicators, lower is better for the first four,
// higher for the three threshold accuracies.
struct DepthMetrics {
    double abs_rel = 0;
    double sq_rel = 0;
    double rmse = 0;
    double rmse_log = 0;
    double a1 = 0;  // fraction with max(pred/gt, gt/pred) < 1.25
    double a2 = 0;  // ... < 1.25^2
    double a3 = 0;  // ... < 1.25^3
    double scale = 1.0;  // median ratio applied to the prediction
};

inline double median_of(std::vector<double> v) {
    check(!v.empty(), "median_of: empty input");
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
        m = 0.5 * (m + v[mid - 1]);
    }
    return m;
}

// Monocular depth is scale-ambiguous, so the prediction is aligned to the
// reference by the median depth ratio before scoring.
inline DepthMetrics depth_metrics(const std::vector<double>& pred,
                                  const std::vector<double>& gt,
                                  double min_depth = 1e-3, double max_depth = 100.0) {
    check(pred.size() == gt.size() && !pred.empty(), "depth_metrics: size mismatch");
    std::vector<double> ratios;
    ratios.reserve(gt.size());
    for (size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] > min_depth && gt[i] < max_depth) {
            check(pred[i] > 0, "depth_metrics: non-positive predicted depth");
            ratios.push_back(gt[i] / pred[i]);
        }
    }
    check(!ratios.empty(), "depth_metrics: no valid reference pixels");
    DepthMetrics m;
    m.scale = median_of(ratios);

    size_t n = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
        if (!(gt[i] > min_depth && gt[i] < max_depth)) continue;
        const double p = std::clamp(pred[i] * m.scale, min_depth, max_depth);
        const double g = gt[i];
        const double d = p - g;
        m.abs_rel += std::abs(d) / g;
        m.sq_rel += d * d / g;
        m.rmse += d * d;
        const double dl = std::log(p) - std::log(g);
        m.rmse_log += dl * dl;
        const double r = std::max(p / g, g / p);
        m.a1 += r < 1.25;
        m.a2 += r < 1.25 * 1.25;
        m.a3 += r < 1.25 * 1.25 * 1.25;
        ++n;
    }
    m.abs_rel /= n;
    m.sq_rel /= n;
    m.rmse = std::sqrt(m.rmse / n);
    m.rmse_log = std::sqrt(m.rmse_log / n);
    m.a1 /= n;
    m.a2 /= n;
    m.a3 /= n;
    return m;
}

inline DepthMetrics depth_metrics(const Tensor& pred, const std::vector<float>& gt,
                                  double min_depth = 1e-3, double max_depth = 100.0) {
    std::vector<double> g(gt.begin(), gt.end());
    return depth_metrics(pred.data(), g, min_depth, max_depth);
}

}  // namespace ddnd
