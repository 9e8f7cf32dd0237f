#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ckmflow/checkpoint.hpp"
#include "ckmflow/common.hpp"
#include "ckmflow/config.hpp"
#include "ckmflow/optimizer.hpp"
#include "test_util.hpp"

using namespace ckmflow;

TEST_SUITE("config") {

TEST_CASE("default config survives a dump/parse/dump cycle unchanged") {
    RunConfig base;
    std::string once = dump_run_config(base);
    RunConfig again = parse_run_config(once);
    CHECK(dump_run_config(again) == once);
    CHECK(once.back() == '\n');
}

TEST_CASE("partial documents override only the keys they mention") {
    RunConfig def;
    RunConfig cfg = parse_run_config(
        "{\"seed\": 99, \"train\": {\"epochs\": 7}, "
        "\"degradation\": {\"mask_mode\": \"estimated\"}, "
        "\"inference\": {\"steps\": 25}}");
    CHECK(cfg.seed == 99);
    CHECK(cfg.epochs == 7);
    CHECK(cfg.cond.mask_mode == MaskMode::estimated);
    CHECK(cfg.inference.steps == 25);
    CHECK(cfg.batch_size == def.batch_size);
    CHECK(cfg.scene.height_px == def.scene.height_px);
    CHECK(cfg.lr == def.lr);
    CHECK(cfg.test_fraction == def.test_fraction);
}

TEST_CASE("strict parsing rejects unknown keys and wrong types") {
    CHECK_THROWS_AS(parse_run_config("{\"bogus\": 1}"), usage_error);
    CHECK_THROWS_AS(parse_run_config("{\"scene\": {\"bogus\": 1}}"), usage_error);
    CHECK_THROWS_AS(parse_run_config("{\"seed\": \"abc\"}"), usage_error);
    CHECK_THROWS_AS(parse_run_config("{\"train\": 5}"), usage_error);
    CHECK_THROWS_AS(parse_run_config("{\"degradation\": {\"mask_mode\": \"wat\"}}"),
                    usage_error);
}

TEST_CASE("syntactically broken or missing config files are data errors") {
    CHECK_THROWS_AS(parse_run_config("{nope"), data_error);
    CHECK_THROWS_AS(parse_run_config(""), data_error);
    CHECK_THROWS_AS(load_run_config("/nonexistent/dir/cfg.json"), data_error);

    temp_dir td("config");
    {
        std::ofstream f(td.file("cfg.json"));
        f << "{\"seed\": 3}";
    }
    CHECK(load_run_config(td.file("cfg.json")).seed == 3);
}

TEST_CASE("dataset config inherits the scene, propagation and target knobs") {
    RunConfig cfg;
    cfg.scene.height_px = 48;
    cfg.scene.n_buildings = 9;
    cfg.prop.exponent = 2.5;
    cfg.neighbor_delta_px = 3;
    cfg.target_max_tries = 77;
    DatasetConfig d = dataset_config(cfg);
    CHECK(d.scene.height_px == 48);
    CHECK(d.scene.n_buildings == 9);
    CHECK(d.prop.exponent == 2.5);
    CHECK(d.neighbor_delta_px == 3);
    CHECK(d.max_tries == 77);
}

TEST_CASE("checkpoints restore parameters, optimizer state and the epoch cursor") {
    VelocityNetConfig nc;
    nc.in_channels = 3;
    nc.out_channels = 1;
    nc.base_width = 4;
    nc.depth = 1;
    nc.time_embed_dim = 8;
    VelocityNet<float> net(nc);
    net.randomize_all(77);

    AdamState<float> adam;
    adam.reset(net.param_count());
    std::vector<float> g(net.param_count());
    for (size_t i = 0; i < g.size(); ++i) g[i] = float(i % 7) * 0.01f - 0.02f;
    adam_step(net.params().values, g, adam, 1e-3);

    temp_dir td("ckpt");
    save_checkpoint(td.file("m.ckpt"), net, 5, &adam);
    Checkpoint ck = load_checkpoint(td.file("m.ckpt"));
    CHECK(ck.config.in_channels == 3);
    CHECK(ck.config.out_channels == 1);
    CHECK(ck.config.base_width == 4);
    CHECK(ck.config.depth == 1);
    CHECK(ck.config.time_embed_dim == 8);
    CHECK(ck.next_epoch == 5);
    CHECK(ck.values == net.params().values);
    CHECK(ck.has_adam);
    CHECK(ck.adam_step == 1);
    CHECK(ck.adam_m == adam.m);
    CHECK(ck.adam_v == adam.v);

    // a rebuilt net runs the exact same function
    VelocityNet<float> net2 = net_from_checkpoint(ck);
    Tensorf x(1, 8, 8), c(2, 8, 8);
    for (size_t i = 0; i < x.v.size(); ++i) x.v[i] = float(i % 5) * 0.1f;
    for (size_t i = 0; i < c.v.size(); ++i) c.v[i] = float(i % 3) * 0.2f - 0.1f;
    VelocityNet<float>::Cache c1, c2;
    Tensorf v1 = net.forward(net.params().values, x, 0.4, c, c1);
    Tensorf v2 = net2.forward(net2.params().values, x, 0.4, c, c2);
    CHECK(v1.v == v2.v);

    // without optimizer state the adam block is absent
    save_checkpoint(td.file("bare.ckpt"), net, 2, nullptr);
    Checkpoint bare = load_checkpoint(td.file("bare.ckpt"));
    CHECK_FALSE(bare.has_adam);
    CHECK(bare.adam_m.empty());
    CHECK(bare.next_epoch == 2);
}

TEST_CASE("checkpoint loading rejects wrong magic and truncated files") {
    temp_dir td("ckpt_bad");
    CHECK_THROWS_AS(load_checkpoint(td.file("missing.ckpt")), data_error);

    {
        std::ofstream f(td.file("magic.ckpt"), std::ios::binary);
        f << "XXXXjunkjunkjunk";
    }
    CHECK_THROWS_AS(load_checkpoint(td.file("magic.ckpt")), data_error);

    VelocityNetConfig nc;
    nc.in_channels = 3;
    nc.out_channels = 1;
    nc.base_width = 4;
    nc.depth = 1;
    nc.time_embed_dim = 8;
    VelocityNet<float> net(nc);
    net.init_params(1);
    save_checkpoint(td.file("full.ckpt"), net, 1, nullptr);
    const auto full = std::filesystem::file_size(td.file("full.ckpt"));
    std::filesystem::copy_file(td.file("full.ckpt"), td.file("cut.ckpt"));
    std::filesystem::resize_file(td.file("cut.ckpt"), full - 16);
    CHECK_THROWS_AS(load_checkpoint(td.file("cut.ckpt")), data_error);
}

}  // TEST_SUITE("config")
