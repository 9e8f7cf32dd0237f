#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ckmflow/parallel.hpp"
#include "ckmflow/run_cmds.hpp"

namespace {

using namespace ckmflow;

std::vector<int> parse_steps_list(const std::string& s) {
    std::vector<int> out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        const std::string tok = s.substr(pos, comma - pos);
        if (!tok.empty()) {
            try {
                size_t used = 0;
                const int n = std::stoi(tok, &used);
                if (used != tok.size()) throw std::invalid_argument(tok);
                out.push_back(n);
            } catch (const std::exception&) {
                throw usage_error("--steps-list entry '" + tok + "' is not an integer");
            }
        }
        pos = comma + 1;
    }
    return out;
}

std::string default_out_root(const std::string& cli_out, const std::string& cfg_out) {
    if (!cli_out.empty()) return cli_out;
    if (!cfg_out.empty()) return cfg_out;
    if (const char* env = std::getenv("CKMFLOW_OUT"); env && *env) return env;
    return "runs";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"channel knowledge map construction via guided flow matching"};
    app.require_subcommand(1);

    std::string config_path, out_root;
    uint64_t seed = 0;
    int jobs = 0;
    app.add_option("--config", config_path, "JSON run configuration");
    auto* seed_opt = app.add_option("--seed", seed, "global RNG seed (overrides the config)");
    app.add_option("--jobs", jobs, "worker thread cap; 1 runs fully serial");
    app.add_option("--out", out_root, "output root directory");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    gen->fallthrough();
    std::string gen_task = "a", gen_file;
    int gen_count = 0;
    gen->add_option("--task", gen_task, "a (gain maps) or b (covariance maps)")->required();
    gen->add_option("--count", gen_count, "number of records")->required();
    gen->add_option("--out", gen_file, "dataset file path");

    // train
    auto* train = app.add_subcommand("train", "train a model on a dataset");
    train->fallthrough();
    std::string train_task = "a", train_mode = "gfm", train_data, train_dir;
    train->add_option("--task", train_task, "a or b")->required();
    train->add_option("--data", train_data, "dataset file")->required();
    train->add_option("--mode", train_mode, "gfm, regression or ddpm");
    train->add_option("--out", train_dir, "run directory");

    // infer
    auto* infer = app.add_subcommand("infer", "reconstruct maps from a dataset split");
    infer->fallthrough();
    std::string infer_method = "gfm", infer_ckpt, infer_data, infer_split = "test", infer_dir;
    int infer_steps = -1;
    infer->add_option("--method", infer_method, "gfm, regression, ddpm, knn, bilinear, bicubic");
    infer->add_option("--checkpoint", infer_ckpt, "model checkpoint (learned methods)");
    infer->add_option("--data", infer_data, "dataset file")->required();
    infer->add_option("--steps", infer_steps, "ODE steps for gfm (default from config)");
    infer->add_option("--split", infer_split, "test, train or all");
    infer->add_option("--out", infer_dir, "prediction directory");

    // eval
    auto* eval = app.add_subcommand("eval", "score prediction directories against the truth");
    eval->fallthrough();
    std::vector<std::string> eval_preds;
    std::string eval_truth, eval_task = "a", eval_csv;
    eval->add_option("--pred", eval_preds, "prediction directory (repeatable)")->required();
    eval->add_option("--truth", eval_truth, "truth dataset file")->required();
    eval->add_option("--task", eval_task, "a or b")->required();
    eval->add_option("--out", eval_csv, "metrics CSV path");

    // ablate-steps
    auto* ablate = app.add_subcommand("ablate-steps", "SSIM and wall time across ODE step counts");
    ablate->fallthrough();
    std::string ab_ckpt, ab_data, ab_list = "1,2,4,8,10,20,50", ab_csv;
    ablate->add_option("--checkpoint", ab_ckpt, "gfm checkpoint")->required();
    ablate->add_option("--data", ab_data, "gain-task dataset file")->required();
    ablate->add_option("--steps-list", ab_list, "comma-separated step counts");
    ablate->add_option("--out", ab_csv, "ablation CSV path");

    // bench
    auto* bench = app.add_subcommand("bench", "train all learned methods and compare everything");
    bench->fallthrough();
    std::string bench_data, bench_dir;
    std::vector<std::string> bench_methods;
    bench->add_option("--data", bench_data, "dataset file")->required();
    bench->add_option("--methods", bench_methods, "methods to include (default: all valid)");
    bench->add_option("--out", bench_dir, "bench output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // every parse failure is a usage error
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        if (seed_opt->count() > 0) cfg.seed = seed;
        if (jobs < 0) throw usage_error("--jobs must be >= 0");
        set_jobs(jobs);
        const std::string root = default_out_root(out_root, cfg.out_dir);
        cfg.out_dir = root;  // the config echo records the resolved root

        if (gen->parsed()) {
            GenArgs a;
            a.task = parse_task(gen_task);
            a.count = gen_count;
            a.out_file = gen_file.empty()
                             ? root + "/dataset_" + task_name(a.task) + ".ckmf"
                             : gen_file;
            cmd_gen(cfg, a);
        } else if (train->parsed()) {
            TrainArgs a;
            a.task = parse_task(train_task);
            a.mode = parse_train_mode(train_mode);
            a.data = train_data;
            a.run_dir = train_dir.empty()
                            ? root + "/train_" + task_name(a.task) + "_" + train_mode
                            : train_dir;
            cmd_train(cfg, a);
        } else if (infer->parsed()) {
            InferArgs a;
            a.method = parse_method(infer_method);
            a.checkpoint = infer_ckpt;
            a.data = infer_data;
            a.steps = infer_steps;
            a.split = infer_split;
            a.pred_dir = infer_dir.empty() ? root + "/pred_" + infer_method : infer_dir;
            cmd_infer(cfg, a);
        } else if (eval->parsed()) {
            EvalArgs a;
            a.pred_dirs = eval_preds;
            a.truth = eval_truth;
            a.task = parse_task(eval_task);
            a.csv_path = eval_csv.empty() ? root + "/metrics.csv" : eval_csv;
            cmd_eval(cfg, a);
        } else if (ablate->parsed()) {
            AblateArgs a;
            a.checkpoint = ab_ckpt;
            a.data = ab_data;
            a.steps_list = parse_steps_list(ab_list);
            a.csv_path = ab_csv.empty() ? root + "/ablation.csv" : ab_csv;
            cmd_ablate_steps(cfg, a);
        } else if (bench->parsed()) {
            BenchArgs a;
            a.data = bench_data;
            for (const std::string& m : bench_methods) a.methods.push_back(parse_method(m));
            a.out_dir = bench_dir.empty() ? root + "/bench" : bench_dir;
            cmd_bench(cfg, a);
        }
        return 0;
    } catch (const usage_error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const data_error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const numeric_error& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
