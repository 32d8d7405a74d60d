#include <catch_amalgamated.hpp>

#include "ddnd/control.hpp"

using namespace ddnd;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

ControlParams steering(double sigma) {
    ControlParams p;
    p.lambda_avoid = 1.0;
    p.c_avoid = 0.1;
    p.sigma = sigma;
    return p;
}

}  // namespace

TEST_CASE("obstacle_map pooling", "[control]") {
    ControlParams p = steering(1.5);
    Tensor flat = Tensor::full({12, 160}, 3.0);
    ObstacleMap m = obstacle_map(flat, 1.5, p);
    REQUIRE(m.depths.size() == 16);
    REQUIRE(m.directions.size() == 16);
    for (double d : m.depths) REQUIRE(d == 3.0);

    std::vector<double> halves(size_t(10) * 20);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 20; ++c) halves[size_t(r) * 20 + c] = c < 10 ? 1.0 : 5.0;
    ObstacleMap two = obstacle_map(Tensor::from_vec({10, 20}, halves), 1.5, p);
    REQUIRE(two.depths == std::vector<double>{1.0, 5.0});
}

TEST_CASE("obstacle_map directions span the fov symmetrically", "[control]") {
    ControlParams p = steering(1.5);
    const double fov = 1.5;
    ObstacleMap m = obstacle_map(Tensor::full({10, 160}, 2.0), fov, p);
    for (size_t i = 0; i + 1 < m.directions.size(); ++i)
        REQUIRE(m.directions[i] < m.directions[i + 1]);
    for (size_t i = 0; i < m.directions.size(); ++i) {
        REQUIRE(m.directions[i] ==
                Approx(fov * ((i + 0.5) / 16.0 - 0.5)).margin(1e-15));
        REQUIRE(m.directions[i] == Approx(-m.directions[15 - i]).margin(1e-12));
    }
    REQUIRE(m.directions.front() > -fov / 2);
    REQUIRE(m.directions.back() < fov / 2);
}

TEST_CASE("obstacle_map 4x4 hand case", "[control]") {
    ControlParams p = steering(1.0);
    p.window = 2;
    p.center_rows = 2;
    Tensor d = Tensor::from_vec({4, 4}, {9, 9, 9, 9, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 9});
    ObstacleMap m = obstacle_map(d, 1.0, p);
    REQUIRE(m.depths.size() == 2);
    REQUIRE(m.depths[0] == Approx(3.5));
    REQUIRE(m.depths[1] == Approx(5.5));
    REQUIRE(m.directions[0] == Approx(-0.25));
    REQUIRE(m.directions[1] == Approx(0.25));
}

TEST_CASE("obstacle_map input validation", "[control]") {
    ControlParams p = steering(1.0);
    REQUIRE_THROWS_WITH(obstacle_map(Tensor::full({10, 25}, 1.0), 1.0, p),
                        ContainsSubstring("25 not divisible by window 10"));
    REQUIRE_THROWS_WITH(obstacle_map(Tensor::full({5, 20}, 1.0), 1.0, p),
                        ContainsSubstring("center_rows"));
    REQUIRE_THROWS_AS(obstacle_map(Tensor::full({10, 20}, 1.0), -1.0, p), std::runtime_error);
    REQUIRE_THROWS_AS(obstacle_map(Tensor::full({200}, 1.0), 1.0, p), std::runtime_error);
}

TEST_CASE("avoid single-bin closed form", "[control]") {
    ObstacleMap m;
    m.depths = {1.0};
    m.directions = {-0.3};
    ControlParams p = steering(0.8);
    const double got = avoid(0.0, m, p);
    const double expect = 0.3 * std::exp(-0.1 * 1.0) * std::exp(-0.09 / (2.0 * 0.64));
    REQUIRE(got == Approx(expect).margin(1e-12));
    REQUIRE(got == Approx(0.2530).margin(1e-4));
    REQUIRE(got > 0.0);  // obstacle on the left repels to the right... sign is +phi-side
}

TEST_CASE("avoid is zero for a mirror-symmetric map", "[control]") {
    ObstacleMap m;
    m.directions = {-0.6, -0.2, 0.2, 0.6};
    m.depths = {1.5, 0.7, 0.7, 1.5};
    REQUIRE(std::abs(avoid(0.0, m, steering(1.2))) < 1e-12);
}

TEST_CASE("avoid antisymmetry under scene mirroring", "[control]") {
    Rng rng(3);
    ObstacleMap m, neg;
    for (int i = 0; i < 6; ++i) {
        m.directions.push_back(rand_uniform(rng, -0.7, 0.7));
        m.depths.push_back(rand_uniform(rng, 0.3, 6.0));
    }
    neg = m;
    for (double& d : neg.directions) d = -d;
    ControlParams p = steering(1.1);
    REQUIRE(avoid(0.0, neg, p) == -avoid(0.0, m, p));
}

TEST_CASE("avoid proximity dominance and gain sensitivity", "[control]") {
    ObstacleMap nearm, farm;
    nearm.directions = farm.directions = {0.4};
    nearm.depths = {0.5};
    farm.depths = {4.0};
    ControlParams p = steering(0.9);
    REQUIRE(std::abs(avoid(0.0, nearm, p)) > std::abs(avoid(0.0, farm, p)));

    ControlParams lo = steering(0.9), hi = steering(0.9);
    lo.c_avoid = 0.05;
    hi.c_avoid = 0.2;
    REQUIRE(std::abs(avoid(0.0, farm, lo)) > std::abs(avoid(0.0, farm, hi)));
}

TEST_CASE("avoid is exactly linear in lambda", "[control]") {
    Rng rng(4);
    ObstacleMap m;
    for (int i = 0; i < 5; ++i) {
        m.directions.push_back(rand_uniform(rng, -0.8, 0.8));
        m.depths.push_back(rand_uniform(rng, 0.2, 8.0));
    }
    ControlParams p = steering(1.3);
    ControlParams twice = p;
    twice.lambda_avoid = 2.0;
    REQUIRE(avoid(0.1, m, twice) == 2.0 * avoid(0.1, m, p));
}

TEST_CASE("avoid input validation", "[control]") {
    ObstacleMap m;
    m.depths = {1.0, 2.0};
    m.directions = {0.0};
    REQUIRE_THROWS_WITH(avoid(0.0, m, steering(1.0)), ContainsSubstring("length mismatch"));
    m.directions = {0.0, 0.1};
    REQUIRE_THROWS_WITH(avoid(0.0, m, steering(0.0)), ContainsSubstring("sigma"));
    REQUIRE_THROWS_AS(avoid(std::nan(""), m, steering(1.0)), std::runtime_error);
}

TEST_CASE("frontal obstacle at the current bearing contributes nothing", "[control]") {
    ObstacleMap m;
    m.directions = {0.25};
    m.depths = {0.4};
    REQUIRE(avoid(0.25, m, steering(1.0)) == 0.0);
}
