#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>

#include "ckmflow/common.hpp"
#include "ckmflow/scene.hpp"

using namespace ckmflow;

namespace {

Scene open_scene(int h, int w, double cell, int bs_r, int bs_c, int nt = 4) {
    Scene s;
    s.height_px = h;
    s.width_px = w;
    s.cell_size = cell;
    s.bs_row = bs_r;
    s.bs_col = bs_c;
    s.n_antennas = nt;
    return s;
}

PropagationParams clean_prop(double exponent) {
    PropagationParams p;
    p.exponent = exponent;
    p.shadow_sigma = 0.0;
    return p;
}

Eigen::MatrixXcf to_eigen(const CMatf& R) {
    Eigen::MatrixXcf m(R.n, R.n);
    for (int i = 0; i < R.n; ++i)
        for (int j = 0; j < R.n; ++j) m(i, j) = R.at(i, j);
    return m;
}

}  // namespace

TEST_SUITE("scene") {

TEST_CASE("generate_scene is deterministic and respects bounds") {
    SceneConfig cfg;
    cfg.height_px = 64;
    cfg.width_px = 64;
    cfg.n_buildings = 5;
    Scene a = generate_scene(7, cfg);
    Scene b = generate_scene(7, cfg);
    CHECK(a.bs_row == b.bs_row);
    CHECK(a.bs_col == b.bs_col);
    REQUIRE(a.buildings.size() == 5);
    REQUIRE(b.buildings.size() == 5);
    for (size_t i = 0; i < a.buildings.size(); ++i) {
        CHECK(a.buildings[i].row0 == b.buildings[i].row0);
        CHECK(a.buildings[i].col0 == b.buildings[i].col0);
        CHECK(a.buildings[i].row1 == b.buildings[i].row1);
        CHECK(a.buildings[i].col1 == b.buildings[i].col1);
    }
    for (const auto& r : a.buildings) {
        CHECK(r.row0 >= 0);
        CHECK(r.col0 >= 0);
        CHECK(r.row1 < 64);
        CHECK(r.col1 < 64);
        CHECK(r.row0 <= r.row1);
        CHECK(r.col0 <= r.col1);
        CHECK(!r.contains(a.bs_row, a.bs_col));
    }
    Scene c = generate_scene(8, cfg);
    CHECK((c.bs_row != a.bs_row || c.bs_col != a.bs_col || c.buildings[0].row0 != a.buildings[0].row0));
}

TEST_CASE("generate_scene with zero buildings and invalid configs") {
    SceneConfig cfg;
    cfg.n_buildings = 0;
    Scene s = generate_scene(3, cfg);
    CHECK(s.buildings.empty());
    CHECK(!s.indoor(0, 0));

    SceneConfig tiny = cfg;
    tiny.height_px = 4;
    CHECK_THROWS_AS(generate_scene(0, tiny), usage_error);
    SceneConfig one_ant = cfg;
    one_ant.n_antennas = 1;
    CHECK_THROWS_AS(generate_scene(0, one_ant), usage_error);
}

TEST_CASE("generate_scene reports placement failure when every rect covers the BS") {
    // On an 8x8 grid a max-size rect spans rows/cols 0..6, so any BS inside
    // that block makes placement impossible. Find such a seed first.
    SceneConfig probe;
    probe.height_px = 8;
    probe.width_px = 8;
    probe.n_buildings = 0;
    uint64_t seed = 0;
    bool found = false;
    for (; seed < 64; ++seed) {
        Scene s = generate_scene(seed, probe);
        if (s.bs_row < 7 && s.bs_col < 7) {
            found = true;
            break;
        }
    }
    REQUIRE(found);
    SceneConfig cfg = probe;
    cfg.n_buildings = 1;
    cfg.min_extent_px = 8;
    cfg.max_extent_px = 8;
    cfg.max_tries = 5;
    CHECK_THROWS_AS(generate_scene(seed, cfg), data_error);
}

TEST_CASE("free-space gain: reference distance and inverse-square falloff") {
    Scene s = open_scene(8, 8, 1.0, 0, 0);
    GainMap gm = compute_gain_map(s, clean_prop(2.0));
    // pixel one cell away sits exactly at ref_dist, so gain is -pl0
    CHECK(gm.values.at(0, 0, 1) == doctest::Approx(-40.0).epsilon(1e-6));
    // doubling the distance under exponent 2 costs 20*log10(2) dB
    double drop = gm.values.at(0, 0, 1) - gm.values.at(0, 0, 2);
    CHECK(drop == doctest::Approx(6.0205999).epsilon(1e-4));
}

TEST_CASE("gain decreases monotonically with distance in open space") {
    Scene s = open_scene(16, 16, 1.0, 0, 0);
    GainMap gm = compute_gain_map(s, clean_prop(3.0));
    for (int c = 1; c < 15; ++c)
        CHECK(gm.values.at(0, 0, c) > gm.values.at(0, 0, c + 1));
    for (int r = 1; r < 15; ++r)
        CHECK(gm.values.at(0, r, 0) > gm.values.at(0, r + 1, 0));
}

TEST_CASE("a zero-thickness wall costs exactly wall_loss and counts once") {
    Scene s = open_scene(8, 8, 1.0, 0, 3);
    s.buildings.push_back({2, 0, 2, 7});  // horizontal wall across row 2
    CHECK(count_wall_crossings(s, 0, 3, 4, 3) == 1);
    CHECK(count_wall_crossings(s, 0, 3, 0, 6) == 0);

    GainMap gm = compute_gain_map(s, clean_prop(3.0));
    // (4,3) and (0,7) are both 4 cells from the BS; only the first is blocked
    double blocked = gm.values.at(0, 4, 3);
    double open = gm.values.at(0, 0, 7);
    CHECK(open - blocked == doctest::Approx(10.0).epsilon(1e-4));
}

TEST_CASE("a full rectangle crossed top to bottom counts two wall segments") {
    Scene s = open_scene(8, 8, 1.0, 0, 3);
    s.buildings.push_back({2, 0, 3, 7});
    CHECK(count_wall_crossings(s, 0, 3, 5, 3) == 2);
    // endpoint inside the rect only crosses the near wall
    CHECK(count_wall_crossings(s, 0, 3, 2.5, 3) == 1);
}

TEST_CASE("indoor pixels are floored at g_min") {
    Scene s = open_scene(16, 16, 1.0, 0, 0);
    s.buildings.push_back({8, 8, 11, 11});
    GainMap gm = compute_gain_map(s, clean_prop(3.0));
    for (int r = 8; r <= 11; ++r)
        for (int c = 8; c <= 11; ++c) CHECK(gm.values.at(0, r, c) == gm.g_min);
    CHECK(gm.g_max > gm.g_min);
    // outdoor pixels keep a floor_margin_db cushion above g_min
    for (int c = 0; c < 8; ++c) CHECK(gm.values.at(0, 0, c) >= gm.g_min + 10.0f - 1e-3f);
}

TEST_CASE("shadowing perturbs gain but keeps the seed deterministic") {
    Scene s = open_scene(16, 16, 1.0, 4, 4);
    s.rng_seed = 11;
    PropagationParams p;  // default shadow_sigma = 6
    GainMap a = compute_gain_map(s, p);
    GainMap b = compute_gain_map(s, p);
    for (size_t i = 0; i < a.values.v.size(); ++i) CHECK(a.values.v[i] == b.values.v[i]);

    GainMap clean = compute_gain_map(s, clean_prop(3.0));
    bool differs = false;
    for (size_t i = 0; i < a.values.v.size(); ++i)
        if (a.values.v[i] != clean.values.v[i]) differs = true;
    CHECK(differs);
}

TEST_CASE("quantization round-trips within half a step") {
    Scene s = open_scene(16, 16, 2.0, 3, 5);
    s.rng_seed = 5;
    GainMap gm = compute_gain_map(s, PropagationParams{});
    const float half_step = (gm.g_max - gm.g_min) / 510.0f;
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) {
            float v = std::clamp(gm.values.at(0, r, c), gm.g_min, gm.g_max);
            CHECK(std::abs(gm.dequantize(r, c) - v) <= half_step + 1e-3f);
        }
}

TEST_CASE("quantize_gain rejects an empty range") {
    GainMap gm;
    gm.h = gm.w = 2;
    gm.values = Tensorf(1, 2, 2);
    gm.g_min = gm.g_max = 0.0f;
    CHECK_THROWS_AS(quantize_gain(gm), numeric_error);
}

TEST_CASE("steering vector has unit-modulus entries and known endpoints") {
    auto a0 = steering_vector(0.0, 6);
    for (const auto& x : a0) {
        CHECK(x.real() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(x.imag() == doctest::Approx(0.0).epsilon(1e-12));
    }
    auto a90 = steering_vector(std::numbers::pi / 2, 6);
    for (int n = 0; n < 6; ++n) {
        double want = (n % 2 == 0) ? 1.0 : -1.0;
        CHECK(a90[size_t(n)].real() == doctest::Approx(want).epsilon(1e-9));
        CHECK(std::abs(a90[size_t(n)].imag()) < 1e-9);
    }
    auto a = steering_vector(0.37, 9);
    for (const auto& x : a) CHECK(std::abs(x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(steering_vector(0.0, 0), usage_error);
}

TEST_CASE("single-path covariance is a rank-one projector scaled to the trace") {
    Scene s = open_scene(32, 32, 4.0, 8, 8, 8);
    PropagationParams p = clean_prop(3.0);
    p.n_paths = 1;
    CovarianceMap cm = compute_scm(s, 20, 24, p);
    REQUIRE(cm.R.n == 8);

    double trace = 0;
    for (int i = 0; i < 8; ++i) {
        CHECK(cm.R.at(i, i).imag() == 0.0f);
        CHECK(cm.R.at(i, i).real() == doctest::Approx(1.0).epsilon(1e-5));
        trace += cm.R.at(i, i).real();
    }
    CHECK(trace == doctest::Approx(8.0).epsilon(1e-5));

    // stored matrix is Hermitian bit for bit
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            CHECK(cm.R.at(i, j).real() == cm.R.at(j, i).real());
            CHECK(cm.R.at(i, j).imag() == -cm.R.at(j, i).imag());
        }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcf> es(to_eigen(cm.R));
    auto ev = es.eigenvalues();
    CHECK(ev(7) == doctest::Approx(8.0).epsilon(1e-3));
    for (int i = 0; i < 7; ++i) CHECK(std::abs(ev(i)) < 1e-3);
}

TEST_CASE("two-path covariance matches a direct rank-one sum") {
    Scene s = open_scene(32, 32, 4.0, 4, 4, 6);
    PropagationParams p = clean_prop(3.0);
    p.n_paths = 2;
    p.path_decay = 0.5;
    const int row = 20, col = 10;
    CovarianceMap cm = compute_scm(s, row, col, p);

    // no buildings, so path 1 uses the fallback bearing theta0 + 0.05
    double theta0 = std::atan2(double(col - s.bs_col), double(row - s.bs_row));
    double thetas[2] = {theta0, theta0 + 0.05};
    double powers[2] = {1.0 / 1.5, 0.5 / 1.5};
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            std::complex<double> want(0, 0);
            for (int l = 0; l < 2; ++l) {
                auto ai = std::polar(1.0, std::numbers::pi * i * std::sin(thetas[l]));
                auto aj = std::polar(1.0, std::numbers::pi * j * std::sin(thetas[l]));
                want += powers[l] * ai * std::conj(aj);
            }
            CHECK(std::abs(std::complex<double>(cm.R.at(i, j)) - want) < 2e-6);
        }
}

TEST_CASE("covariance stays positive semidefinite across locations") {
    SceneConfig cfg;
    cfg.n_antennas = 8;
    Scene s = generate_scene(21, cfg);
    PropagationParams p;
    int tested = 0;
    for (int r = 0; r < 32 && tested < 12; r += 5)
        for (int c = 0; c < 32 && tested < 12; c += 7) {
            if (s.indoor(r, c)) continue;
            CovarianceMap cm = compute_scm(s, r, c, p);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcf> es(to_eigen(cm.R));
            CHECK(es.eigenvalues()(0) >= -1e-5f);
            ++tested;
        }
    CHECK(tested >= 8);
}

TEST_CASE("compute_scm validates its location") {
    Scene s = open_scene(8, 8, 1.0, 0, 0);
    s.buildings.push_back({4, 4, 6, 6});
    CHECK_THROWS_AS(compute_scm(s, -1, 0, PropagationParams{}), data_error);
    CHECK_THROWS_AS(compute_scm(s, 0, 9, PropagationParams{}), data_error);
    CHECK_THROWS_AS(compute_scm(s, 5, 5, PropagationParams{}), data_error);
    PropagationParams p;
    p.n_paths = 0;
    CHECK_THROWS_AS(compute_scm(s, 0, 1, p), usage_error);
}

TEST_CASE("oracle mask marks building pixels as indoor") {
    Scene s = open_scene(8, 8, 1.0, 0, 0);
    s.buildings.push_back({2, 3, 4, 5});
    auto m = oracle_mask(s);
    REQUIRE(m.size() == 64);
    int zeros = 0;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            uint8_t want = (r >= 2 && r <= 4 && c >= 3 && c <= 5) ? 0 : 1;
            CHECK(m[size_t(r) * 8 + c] == want);
            zeros += m[size_t(r) * 8 + c] == 0;
        }
    CHECK(zeros == 9);
}

}  // TEST_SUITE("scene")
