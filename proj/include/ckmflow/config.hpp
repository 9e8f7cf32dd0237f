#ifndef CKMFLOW_CONFIG_HPP
#define CKMFLOW_CONFIG_HPP

#include <cstdint>
#include <string>

#include "ckmflow/conditioning.hpp"
#include "ckmflow/dataset.hpp"
#include "ckmflow/flow.hpp"
#include "ckmflow/net.hpp"
#include "ckmflow/scene.hpp"

namespace ckmflow {

// Every tunable in one document. The JSON mirror is strict: unknown keys
// and wrong types are rejected, and every run directory receives the exact
// canonical echo so a run can be replayed from its own artifacts.
struct RunConfig {
    uint64_t seed = 0;
    std::string out_dir;  // empty = resolved from --out / CKMFLOW_OUT / ./runs

    SceneConfig scene;
    int neighbor_delta_px = 2;  // covariance ring spacing
    int target_max_tries = 200;

    PropagationParams prop;
    CondConfig cond;

    VelocityNetConfig net;  // channel counts are derived from the task

    int batch_size = 16;
    double lr = 1e-3;
    int epochs = 20;

    InferenceConfig inference;
    DdpmConfig ddpm;

    double test_fraction = 0.1;
    int knn_k = 4;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& cfg);

DatasetConfig dataset_config(const RunConfig& cfg);

}  // namespace ckmflow

#endif
