#include "ckmflow/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ckmflow {

namespace {

using ojson = nlohmann::ordered_json;

// Strict object walker: every key must be consumed, every value must have
// the expected type.
class obj_reader {
  public:
    obj_reader(const ojson& o, std::string prefix) : o_(o), prefix_(std::move(prefix)) {
        if (!o_.is_object()) throw usage_error("config section '" + label() + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        auto it = o_.find(key);
        if (it == o_.end()) return;
        seen_.insert(key);
        try {
            out = it->get<T>();
        } catch (const ojson::exception&) {
            throw usage_error("config key '" + qualify(key) + "' has the wrong type");
        }
    }

    void get_string(const char* key, std::string& out) { get<std::string>(key, out); }

    void section(const char* key, const std::function<void(obj_reader&)>& fn) {
        auto it = o_.find(key);
        if (it == o_.end()) return;
        seen_.insert(key);
        obj_reader sub(*it, qualify(key));
        fn(sub);
        sub.finish();
    }

    void finish() const {
        for (auto it = o_.begin(); it != o_.end(); ++it)
            if (!seen_.count(it.key()))
                throw usage_error("unknown config key '" + qualify(it.key()) + "'");
    }

  private:
    std::string label() const { return prefix_.empty() ? "<root>" : prefix_; }
    std::string qualify(const std::string& key) const {
        return prefix_.empty() ? key : prefix_ + "." + key;
    }

    const ojson& o_;
    std::string prefix_;
    std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    ojson doc;
    try {
        doc = ojson::parse(json_text);
    } catch (const ojson::parse_error& e) {
        throw data_error(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    obj_reader root(doc, "");
    root.get("seed", cfg.seed);
    root.get_string("out_dir", cfg.out_dir);
    root.section("scene", [&](obj_reader& r) {
        r.get("height_px", cfg.scene.height_px);
        r.get("width_px", cfg.scene.width_px);
        r.get("cell_size", cfg.scene.cell_size);
        r.get("n_antennas", cfg.scene.n_antennas);
        r.get("n_buildings", cfg.scene.n_buildings);
        r.get("min_extent_px", cfg.scene.min_extent_px);
        r.get("max_extent_px", cfg.scene.max_extent_px);
        r.get("max_tries", cfg.scene.max_tries);
        r.get("neighbor_delta_px", cfg.neighbor_delta_px);
        r.get("target_max_tries", cfg.target_max_tries);
    });
    root.section("propagation", [&](obj_reader& r) {
        r.get("pl0", cfg.prop.pl0);
        r.get("ref_dist", cfg.prop.ref_dist);
        r.get("exponent", cfg.prop.exponent);
        r.get("wall_loss", cfg.prop.wall_loss);
        r.get("shadow_sigma", cfg.prop.shadow_sigma);
        r.get("shadow_corr_px", cfg.prop.shadow_corr_px);
        r.get("n_paths", cfg.prop.n_paths);
        r.get("path_decay", cfg.prop.path_decay);
        r.get("floor_margin_db", cfg.prop.floor_margin_db);
    });
    root.section("degradation", [&](obj_reader& r) {
        r.get("factor", cfg.cond.factor);
        r.get("noise_sigma", cfg.cond.noise_sigma);
        r.get("noise_seed", cfg.cond.noise_seed);
        r.get("tau_b", cfg.cond.tau_b);
        std::string mode;
        r.get_string("mask_mode", mode);
        if (!mode.empty()) cfg.cond.mask_mode = parse_mask_mode(mode);
    });
    root.section("net", [&](obj_reader& r) {
        r.get("base_width", cfg.net.base_width);
        r.get("depth", cfg.net.depth);
        r.get("time_embed_dim", cfg.net.time_embed_dim);
    });
    root.section("train", [&](obj_reader& r) {
        r.get("batch_size", cfg.batch_size);
        r.get("lr", cfg.lr);
        r.get("epochs", cfg.epochs);
    });
    root.section("inference", [&](obj_reader& r) {
        r.get("steps", cfg.inference.steps);
        r.get("psd_clip", cfg.inference.psd_clip);
    });
    root.section("ddpm", [&](obj_reader& r) {
        r.get("steps", cfg.ddpm.steps);
        r.get("beta_start", cfg.ddpm.beta_start);
        r.get("beta_end", cfg.ddpm.beta_end);
    });
    root.section("metrics", [&](obj_reader& r) {
        r.get("test_fraction", cfg.test_fraction);
        r.get("knn_k", cfg.knn_k);
    });
    root.finish();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open config: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
    ojson doc;
    doc["seed"] = cfg.seed;
    doc["out_dir"] = cfg.out_dir;
    doc["scene"] = {{"height_px", cfg.scene.height_px},
                    {"width_px", cfg.scene.width_px},
                    {"cell_size", cfg.scene.cell_size},
                    {"n_antennas", cfg.scene.n_antennas},
                    {"n_buildings", cfg.scene.n_buildings},
                    {"min_extent_px", cfg.scene.min_extent_px},
                    {"max_extent_px", cfg.scene.max_extent_px},
                    {"max_tries", cfg.scene.max_tries},
                    {"neighbor_delta_px", cfg.neighbor_delta_px},
                    {"target_max_tries", cfg.target_max_tries}};
    doc["propagation"] = {{"pl0", cfg.prop.pl0},
                          {"ref_dist", cfg.prop.ref_dist},
                          {"exponent", cfg.prop.exponent},
                          {"wall_loss", cfg.prop.wall_loss},
                          {"shadow_sigma", cfg.prop.shadow_sigma},
                          {"shadow_corr_px", cfg.prop.shadow_corr_px},
                          {"n_paths", cfg.prop.n_paths},
                          {"path_decay", cfg.prop.path_decay},
                          {"floor_margin_db", cfg.prop.floor_margin_db}};
    doc["degradation"] = {{"factor", cfg.cond.factor},
                          {"noise_sigma", cfg.cond.noise_sigma},
                          {"noise_seed", cfg.cond.noise_seed},
                          {"tau_b", cfg.cond.tau_b},
                          {"mask_mode", cfg.cond.mask_mode == MaskMode::oracle ? "oracle"
                                                                               : "estimated"}};
    doc["net"] = {{"base_width", cfg.net.base_width},
                  {"depth", cfg.net.depth},
                  {"time_embed_dim", cfg.net.time_embed_dim}};
    doc["train"] = {{"batch_size", cfg.batch_size}, {"lr", cfg.lr}, {"epochs", cfg.epochs}};
    doc["inference"] = {{"steps", cfg.inference.steps}, {"psd_clip", cfg.inference.psd_clip}};
    doc["ddpm"] = {{"steps", cfg.ddpm.steps},
                   {"beta_start", cfg.ddpm.beta_start},
                   {"beta_end", cfg.ddpm.beta_end}};
    doc["metrics"] = {{"test_fraction", cfg.test_fraction}, {"knn_k", cfg.knn_k}};
    return doc.dump(2) + "\n";
}

DatasetConfig dataset_config(const RunConfig& cfg) {
    DatasetConfig d;
    d.scene = cfg.scene;
    d.prop = cfg.prop;
    d.neighbor_delta_px = cfg.neighbor_delta_px;
    d.max_tries = cfg.target_max_tries;
    return d;
}

}  // namespace ckmflow
