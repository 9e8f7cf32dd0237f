#ifndef CKMFLOW_RUN_CMDS_HPP
#define CKMFLOW_RUN_CMDS_HPP

#include <string>
#include <vector>

#include "ckmflow/baselines.hpp"
#include "ckmflow/config.hpp"

namespace ckmflow {

// Record indices for one side of the deterministic split ("test", "train"
// or "all"), always ascending.
std::vector<size_t> select_indices(uint64_t count, double test_fraction,
                                   const std::string& which);

struct GenArgs {
    Task task = Task::gain;
    int count = 0;
    std::string out_file;
};
void cmd_gen(const RunConfig& cfg, const GenArgs& a);

struct TrainArgs {
    Task task = Task::gain;
    TrainMode mode = TrainMode::gfm;
    std::string data;
    std::string run_dir;
};
void cmd_train(const RunConfig& cfg, const TrainArgs& a);

struct InferArgs {
    Method method = Method::gfm;
    std::string checkpoint;
    std::string data;
    int steps = -1;  // -1 means the config value; 0 is rejected as unusable
    std::string split = "test";
    std::string pred_dir;
};
void cmd_infer(const RunConfig& cfg, const InferArgs& a);

struct EvalArgs {
    std::vector<std::string> pred_dirs;
    std::string truth;
    Task task = Task::gain;
    std::string csv_path;
};
void cmd_eval(const RunConfig& cfg, const EvalArgs& a);

struct AblateArgs {
    std::string checkpoint;
    std::string data;
    std::vector<int> steps_list;
    std::string csv_path;
};
void cmd_ablate_steps(const RunConfig& cfg, const AblateArgs& a);

struct BenchArgs {
    std::string data;
    std::vector<Method> methods;  // empty = every method valid for the task
    std::string out_dir;
};
void cmd_bench(const RunConfig& cfg, const BenchArgs& a);

}  // namespace ckmflow

#endif
