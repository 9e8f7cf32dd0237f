#include <doctest.h>

#include <chrono>
#include <cmath>

#include "ckmflow/baselines.hpp"
#include "ckmflow/common.hpp"
#include "ckmflow/rng.hpp"
#include "test_util.hpp"

using namespace ckmflow;

namespace {

Dataset pattern_gain_dataset(int count, int hw) {
    Dataset ds;
    ds.task = Task::gain;
    ds.d0 = uint32_t(hw);
    ds.d1 = uint32_t(hw);
    ds.count = uint64_t(count);
    ds.payload.assign(size_t(count) * ds.record_floats(), 0.0f);
    const size_t plane = size_t(hw) * hw;
    for (int i = 0; i < count; ++i) {
        float* target = &ds.payload[size_t(i) * ds.record_floats()];
        for (int r = 0; r < hw; ++r)
            for (int c = 0; c < hw; ++c)
                target[size_t(r) * hw + c] = float(((r + 2 * c + 3 * i) % 8) * 16);
        for (size_t k = 0; k < plane; ++k) target[plane + k] = 1.0f;
    }
    return ds;
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("method names round-trip and declare their checkpoint needs") {
    for (Method m : {Method::gfm, Method::regression, Method::ddpm, Method::knn,
                     Method::bilinear, Method::bicubic})
        CHECK(parse_method(method_name(m)) == m);
    CHECK_THROWS_AS(parse_method("spline"), usage_error);
    CHECK(method_needs_checkpoint(Method::gfm));
    CHECK(method_needs_checkpoint(Method::regression));
    CHECK(method_needs_checkpoint(Method::ddpm));
    CHECK(!method_needs_checkpoint(Method::knn));
    CHECK(!method_needs_checkpoint(Method::bilinear));
    CHECK(!method_needs_checkpoint(Method::bicubic));
}

TEST_CASE("knn copies exact grid hits and averages the tied center") {
    Tensorf y(1, 2, 2);
    y.at(0, 0, 0) = 10.0f;
    y.at(0, 0, 1) = 20.0f;
    y.at(0, 1, 0) = 30.0f;
    y.at(0, 1, 1) = 40.0f;
    Tensorf out = knn_reconstruct_a(y, 4, 4, 4);
    REQUIRE(out.h == 4);
    CHECK(out.at(0, 0, 0) == 10.0f);
    CHECK(out.at(0, 0, 2) == 20.0f);
    CHECK(out.at(0, 2, 0) == 30.0f);
    CHECK(out.at(0, 2, 2) == 40.0f);
    // (1,1) is equidistant from all four observations: plain mean
    CHECK(out.at(0, 1, 1) == doctest::Approx(25.0f).epsilon(1e-6));
    // (0,1): weights 1,1,1/sqrt(5),1/sqrt(5) -> (10+20+70/sqrt5)/(2+2/sqrt5)
    CHECK(out.at(0, 0, 1) == doctest::Approx(21.18034f).epsilon(1e-5));

    // k = 1 resolves its distance tie toward the lower observation index
    Tensorf k1 = knn_reconstruct_a(y, 4, 4, 1);
    CHECK(k1.at(0, 0, 1) == 10.0f);

    // k beyond the observation count is clamped, not an error
    Tensorf k99 = knn_reconstruct_a(y, 4, 4, 99);
    CHECK(k99.at(0, 1, 1) == doctest::Approx(25.0f).epsilon(1e-6));

    Tensorf c(1, 2, 2);
    c.fill(7.0f);
    Tensorf cc = knn_reconstruct_a(c, 8, 8, 4);
    for (float v : cc.v) CHECK(v == doctest::Approx(7.0f).epsilon(1e-6));

    CHECK_THROWS_AS(knn_reconstruct_a(y, 7, 7, 4), usage_error);
    CHECK_THROWS_AS(knn_reconstruct_a(y, 4, 4, 0), usage_error);
}

TEST_CASE("covariance knn averages neighbors and stays Hermitian") {
    CMatf r(3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r.at(i, j) = {float(i * 3 + j), i == j ? 0.0f : float(i - j)};
    CMatf h = hermitian_project(r);
    std::vector<CMatf> same = {h, h, h};
    CMatf avg = knn_reconstruct_b(same);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            CHECK(avg.at(i, j).real() == doctest::Approx(h.at(i, j).real()).epsilon(1e-6));
            CHECK(avg.at(i, j).imag() == doctest::Approx(h.at(i, j).imag()).epsilon(1e-6));
        }

    CMatf neg(3);
    for (size_t k = 0; k < neg.m.size(); ++k) neg.m[k] = -h.m[k];
    CMatf zero = knn_reconstruct_b({h, neg});
    for (const auto& v : zero.m) CHECK(std::abs(v) < 1e-6f);

    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            CHECK(avg.at(i, j).real() == avg.at(j, i).real());
            CHECK(avg.at(i, j).imag() == -avg.at(j, i).imag());
        }
    CHECK_THROWS_AS(knn_reconstruct_b({}), usage_error);
}

TEST_CASE("interpolation baselines wrap the conditioning upsamplers") {
    Tensorf y(1, 2, 2);
    y.at(0, 0, 0) = 0.0f;
    y.at(0, 0, 1) = 255.0f;
    y.at(0, 1, 0) = 0.0f;
    y.at(0, 1, 1) = 255.0f;
    Tensorf bc = bicubic_reconstruct(y, 4, 4);
    Tensorf bc_ref = upsample_bicubic(y, 4, 4);
    for (size_t i = 0; i < bc.v.size(); ++i) CHECK(bc.v[i] == bc_ref.v[i]);
    Tensorf bl = bilinear_reconstruct(y, 4, 4);
    Tensorf bl_ref = upsample_bilinear(y, 4, 4);
    for (size_t i = 0; i < bl.v.size(); ++i) CHECK(bl.v[i] == bl_ref.v[i]);
}

TEST_CASE("an untrained regression net predicts the per-channel mean") {
    Dataset ds = pattern_gain_dataset(3, 8);
    std::vector<size_t> idx = {0, 1, 2};
    CondConfig cond;
    cond.factor = 2;
    cond.noise_sigma = 5.0f;
    NormStats stats = compute_norm_stats(ds, idx, cond);

    VelocityNetConfig nc;
    nc.in_channels = 4;
    nc.out_channels = 1;
    nc.base_width = 4;
    nc.depth = 1;
    nc.time_embed_dim = 8;
    VelocityNet<float> net(nc);
    net.init_params(3);  // zero head: normalized prediction is exactly 0
    Tensorf p = regression_reconstruct_gain(net, ds, 0, cond, stats);
    for (float v : p.v) CHECK(v == stats.target_mu[0]);

    Tensorf p2 = regression_reconstruct_gain(net, ds, 0, cond, stats);
    for (size_t i = 0; i < p.v.size(); ++i) CHECK(p.v[i] == p2.v[i]);

    CHECK_THROWS_AS(regression_reconstruct_cov(net, ds, 0, cond, stats), usage_error);
}

TEST_CASE("ddpm sampling is seed-deterministic and supports T = 1") {
    VelocityNetConfig nc;
    nc.in_channels = 4;
    nc.out_channels = 1;
    nc.base_width = 4;
    nc.depth = 1;
    nc.time_embed_dim = 8;
    VelocityNet<float> net(nc);
    net.randomize_all(9);
    Tensorf c(3, 8, 8);
    Rng rng(2);
    for (auto& v : c.v) v = float(rng.normal());

    DdpmConfig cfg;
    cfg.steps = 8;
    Tensorf a = ddpm_sample(net, c, cfg, 42);
    Tensorf b = ddpm_sample(net, c, cfg, 42);
    REQUIRE(a.same_shape(Tensorf(1, 8, 8)));
    for (size_t i = 0; i < a.v.size(); ++i) CHECK(a.v[i] == b.v[i]);
    CHECK(a.all_finite());

    Tensorf d = ddpm_sample(net, c, cfg, 43);
    bool differs = false;
    for (size_t i = 0; i < a.v.size(); ++i)
        if (a.v[i] != d.v[i]) differs = true;
    CHECK(differs);

    DdpmConfig one;
    one.steps = 1;
    Tensorf t1 = ddpm_sample(net, c, one, 5);
    CHECK(t1.all_finite());
}

TEST_CASE("ddpm covariance reconstruction is Hermitian, PSD only when clipped") {
    temp_dir td("ddpm_cov");
    DatasetConfig dcfg;
    generate_dataset(Task::covariance, 2, 77, dcfg, td.file("b.ckmf"));
    Dataset ds = load_dataset(td.file("b.ckmf"));
    std::vector<size_t> idx = {0, 1};
    CondConfig cond;
    NormStats stats = compute_norm_stats(ds, idx, cond);

    VelocityNetConfig nc;
    nc.in_channels = 18;
    nc.out_channels = 2;
    nc.base_width = 4;
    nc.depth = 1;
    nc.time_embed_dim = 8;
    VelocityNet<float> net(nc);
    net.randomize_all(4);
    DdpmConfig cfg;
    cfg.steps = 6;
    CMatf r = ddpm_reconstruct_cov(net, ds, 0, cond, stats, cfg, 11);
    for (int i = 0; i < r.n; ++i)
        for (int j = 0; j < r.n; ++j) {
            CHECK(r.at(i, j).real() == r.at(j, i).real());
            CHECK(r.at(i, j).imag() == -r.at(j, i).imag());
        }
}

TEST_CASE("a single regression pass beats ten flow steps on wall time") {
    Dataset ds = pattern_gain_dataset(4, 32);
    std::vector<size_t> idx = {0, 1, 2, 3};
    CondConfig cond;
    cond.factor = 4;
    cond.noise_sigma = 5.0f;
    NormStats stats = compute_norm_stats(ds, idx, cond);

    VelocityNetConfig nc;  // the full-width backbone, untrained
    VelocityNet<float> net(nc);
    net.init_params(1);
    InferenceConfig inf;
    inf.steps = 10;
    inf.seed = 2;

    // warm-up, then mean over the records
    regression_reconstruct_gain(net, ds, 0, cond, stats);
    reconstruct_gain(net, ds, 0, cond, stats, inf);
    double t0 = now_ms();
    for (size_t i = 0; i < 4; ++i) regression_reconstruct_gain(net, ds, i, cond, stats);
    double reg_ms = (now_ms() - t0) / 4.0;
    t0 = now_ms();
    for (size_t i = 0; i < 4; ++i) reconstruct_gain(net, ds, i, cond, stats, inf);
    double flow_ms = (now_ms() - t0) / 4.0;
    CHECK(reg_ms / flow_ms < 0.25);
}

}  // TEST_SUITE("baselines")
