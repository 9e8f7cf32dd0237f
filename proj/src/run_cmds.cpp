#include "ckmflow/run_cmds.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ckmflow/checkpoint.hpp"
#include "ckmflow/image_io.hpp"
#include "ckmflow/metrics.hpp"
#include "ckmflow/parallel.hpp"

namespace ckmflow {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using clock_type = std::chrono::steady_clock;

void ensure_dir(const std::string& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw data_error("cannot create directory " + p + ": " + ec.message());
}

void ensure_parent(const std::string& path) {
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open for writing: " + path);
    f.write(text.data(), std::streamsize(text.size()));
    if (!f) throw data_error("short write: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open: " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

void write_f32(const std::string& path, const float* data, size_t n) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(data), std::streamsize(n * sizeof(float)));
    if (!f) throw data_error("short write: " + path);
}

std::vector<float> read_f32(const std::string& path, size_t expect) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw data_error("cannot open: " + path);
    const auto bytes = size_t(f.tellg());
    if (bytes != expect * sizeof(float))
        throw data_error(path + " holds " + std::to_string(bytes) + " bytes, expected " +
                         std::to_string(expect * sizeof(float)));
    f.seekg(0);
    std::vector<float> v(expect);
    f.read(reinterpret_cast<char*>(v.data()), std::streamsize(bytes));
    if (!f) throw data_error("short read: " + path);
    return v;
}

std::string rec_stem(size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "rec_%05zu", i);
    return buf;
}

std::vector<float> cov_to_planes(const CMatf& m) {
    const size_t n2 = size_t(m.n) * m.n;
    std::vector<float> v(2 * n2);
    for (size_t j = 0; j < n2; ++j) {
        v[j] = m.m[j].real();
        v[n2 + j] = m.m[j].imag();
    }
    return v;
}

CMatf planes_to_cov(const std::vector<float>& v, int n) {
    const size_t n2 = size_t(n) * n;
    if (v.size() != 2 * n2) throw data_error("covariance record has the wrong element count");
    CMatf m(n);
    for (size_t j = 0; j < n2; ++j) m.m[j] = std::complex<float>(v[j], v[n2 + j]);
    return m;
}

// Mean and sample std in ms with the first two samples treated as warm-up
// whenever more than two were measured.
struct TimingSummary {
    double mean_ms = std::numeric_limits<double>::quiet_NaN();
    double std_ms = std::numeric_limits<double>::quiet_NaN();
    size_t used = 0;
};

TimingSummary summarize_times(const std::vector<double>& ms) {
    TimingSummary t;
    const size_t skip = ms.size() > 2 ? 2 : 0;
    const size_t n = ms.size() - skip;
    if (n == 0) return t;
    double sum = 0;
    for (size_t i = skip; i < ms.size(); ++i) sum += ms[i];
    t.mean_ms = sum / double(n);
    double var = 0;
    for (size_t i = skip; i < ms.size(); ++i) var += (ms[i] - t.mean_ms) * (ms[i] - t.mean_ms);
    t.std_ms = n > 1 ? std::sqrt(var / double(n - 1)) : 0.0;
    t.used = n;
    return t;
}

void write_timing_csv(const std::string& path, const std::vector<size_t>& indices,
                      const std::vector<double>& ms) {
    std::string out = "index,ms\n";
    char buf[64];
    for (size_t r = 0; r < ms.size(); ++r) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f\n", indices[r], ms[r]);
        out += buf;
    }
    TimingSummary t = summarize_times(ms);
    if (t.used > 0) {
        std::snprintf(buf, sizeof buf, "mean,%.6f\nstd,%.6f\n", t.mean_ms, t.std_ms);
        out += buf;
    }
    write_text(path, out);
}

double elapsed_ms(clock_type::time_point a, clock_type::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

std::string join(const std::vector<std::string>& xs, const std::string& sep) {
    std::string s;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (i) s += sep;
        s += xs[i];
    }
    return s;
}

int target_channels(Task t) { return t == Task::gain ? 1 : 2; }

int cond_channels(const Dataset& ds) {
    return ds.task == Task::gain ? 3 : 2 * int(ds.d1);
}

void check_net_matches(const Dataset& ds, const VelocityNetConfig& nc) {
    const int tch = target_channels(ds.task);
    const int cch = cond_channels(ds);
    if (nc.out_channels != tch || nc.in_channels != tch + cch)
        throw data_error("checkpoint expects " + std::to_string(nc.in_channels) + "->" +
                         std::to_string(nc.out_channels) +
                         " channels, which does not fit task " + task_name(ds.task));
}

struct LoadedModel {
    VelocityNet<float> net;
    NormStats stats;
    std::string mode;  // from the run directory's meta.json when present
};

LoadedModel load_model(const std::string& ckpt_path) {
    if (!fs::exists(ckpt_path)) throw data_error("checkpoint not found: " + ckpt_path);
    Checkpoint ck = load_checkpoint(ckpt_path);
    const fs::path dir = fs::path(ckpt_path).parent_path();
    const fs::path stats_path = dir / "stats.json";
    if (!fs::exists(stats_path))
        throw data_error("normalization stats missing next to the checkpoint: " +
                         stats_path.string());
    std::string mode;
    const fs::path meta_path = dir / "meta.json";
    if (fs::exists(meta_path)) {
        ojson j;
        try {
            j = ojson::parse(read_text(meta_path.string()));
        } catch (const ojson::exception&) {
            throw data_error("unparseable meta.json in " + dir.string());
        }
        if (j.contains("mode") && j["mode"].is_string()) mode = j["mode"].get<std::string>();
    }
    return LoadedModel{net_from_checkpoint(ck), load_norm_stats(stats_path.string()), mode};
}

TrainMode method_mode(Method m) {
    switch (m) {
        case Method::gfm: return TrainMode::gfm;
        case Method::regression: return TrainMode::regression;
        case Method::ddpm: return TrainMode::ddpm;
        default: throw usage_error("method " + method_name(m) + " has no training mode");
    }
}

TrainConfig make_train_config(const RunConfig& cfg, const Dataset& ds) {
    TrainConfig tc;
    tc.net = cfg.net;
    tc.net.out_channels = target_channels(ds.task);
    tc.net.in_channels = tc.net.out_channels + cond_channels(ds);
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.epochs = cfg.epochs;
    tc.seed = cfg.seed;
    tc.verbose = true;
    return tc;
}

// Per-record prediction dispatch shared by infer and bench. The learned
// pointers stay null for the training-free baselines.
struct Reconstructor {
    const RunConfig* cfg = nullptr;
    const Dataset* ds = nullptr;
    Method method = Method::gfm;
    const VelocityNet<float>* net = nullptr;
    const NormStats* stats = nullptr;
    InferenceConfig inf;
    uint64_t ddpm_seed = 0;

    Tensorf gain(size_t i) const {
        switch (method) {
            case Method::gfm:
                return reconstruct_gain(*net, *ds, i, cfg->cond, *stats, inf);
            case Method::regression:
                return regression_reconstruct_gain(*net, *ds, i, cfg->cond, *stats);
            case Method::ddpm:
                return ddpm_reconstruct_gain(*net, *ds, i, cfg->cond, *stats, cfg->ddpm,
                                             ddpm_seed);
            case Method::knn:
                return knn_reconstruct_a(degraded_observation(*ds, i, cfg->cond), int(ds->d0),
                                         int(ds->d1), cfg->knn_k);
            case Method::bilinear:
                return bilinear_reconstruct(degraded_observation(*ds, i, cfg->cond), int(ds->d0),
                                            int(ds->d1));
            case Method::bicubic:
                return bicubic_reconstruct(degraded_observation(*ds, i, cfg->cond), int(ds->d0),
                                           int(ds->d1));
        }
        throw usage_error("unhandled method");
    }

    CMatf cov(size_t i) const {
        switch (method) {
            case Method::gfm:
                return reconstruct_cov(*net, *ds, i, cfg->cond, *stats, inf);
            case Method::regression:
                return regression_reconstruct_cov(*net, *ds, i, cfg->cond, *stats);
            case Method::ddpm:
                return ddpm_reconstruct_cov(*net, *ds, i, cfg->cond, *stats, cfg->ddpm,
                                            ddpm_seed, inf.psd_clip);
            case Method::knn: {
                std::vector<CMatf> nb;
                nb.reserve(ds->d1);
                for (size_t j = 1; j <= ds->d1; ++j) nb.push_back(ds->cov_matrix(i, j));
                return knn_reconstruct_b(nb);
            }
            default:
                throw usage_error("method " + method_name(method) +
                                  " applies to the gain task only");
        }
    }
};

Reconstructor make_reconstructor(const RunConfig& cfg, const Dataset& ds, Method m,
                                 const LoadedModel* lm, int euler_steps) {
    Reconstructor rc;
    rc.cfg = &cfg;
    rc.ds = &ds;
    rc.method = m;
    if (lm) {
        rc.net = &lm->net;
        rc.stats = &lm->stats;
    }
    rc.inf.steps = euler_steps;
    rc.inf.seed = cfg.seed;
    rc.inf.psd_clip = cfg.inference.psd_clip;
    rc.ddpm_seed = derive_seed(cfg.seed, 0xdd90);
    return rc;
}

MethodScores empty_scores(const std::string& method, Task task) {
    MethodScores s;
    s.method = method;
    s.task = task_name(task);
    s.nmse = std::numeric_limits<double>::quiet_NaN();
    return s;
}

}  // namespace

std::vector<size_t> select_indices(uint64_t count, double test_fraction,
                                   const std::string& which) {
    if (which == "all") {
        std::vector<size_t> idx(static_cast<size_t>(count));
        std::iota(idx.begin(), idx.end(), size_t(0));
        return idx;
    }
    Split sp = split_dataset(count, test_fraction);
    if (which == "test") return sp.test;
    if (which == "train") return sp.train;
    throw usage_error("--split must be 'train', 'test' or 'all', got '" + which + "'");
}

void cmd_gen(const RunConfig& cfg, const GenArgs& a) {
    if (a.count < 1) throw usage_error("--count must be >= 1");
    if (a.out_file.empty()) throw usage_error("gen needs an output file path");
    ensure_parent(a.out_file);
    generate_dataset(a.task, a.count, cfg.seed, dataset_config(cfg), a.out_file);
    const uint64_t h = hash_file(a.out_file);
    std::printf("wrote %d task-%s records to %s\n", a.count, task_name(a.task).c_str(),
                a.out_file.c_str());
    std::printf("fnv1a %016" PRIx64 "\n", h);
}

void cmd_train(const RunConfig& cfg, const TrainArgs& a) {
    if (a.run_dir.empty()) throw usage_error("train needs a run directory");
    Dataset ds = load_dataset(a.data);
    if (ds.task != a.task)
        throw data_error("dataset " + a.data + " holds task " + task_name(ds.task) +
                         " but --task " + task_name(a.task) + " was given");
    Split sp = split_dataset(ds.count, cfg.test_fraction);
    if (sp.train.empty()) throw data_error("training split is empty");
    NormStats stats = compute_norm_stats(ds, sp.train, cfg.cond);

    ensure_dir(a.run_dir);
    write_text(a.run_dir + "/config.json", dump_run_config(cfg));
    save_norm_stats(a.run_dir + "/stats.json", stats);
    ojson meta;
    meta["kind"] = "train";
    meta["task"] = task_name(ds.task);
    meta["mode"] = train_mode_name(a.mode);
    meta["data"] = a.data;
    write_text(a.run_dir + "/meta.json", meta.dump(2) + "\n");

    TrainConfig tc = make_train_config(cfg, ds);
    TrainResult r = train_model(ds, sp.train, cfg.cond, stats, tc, a.mode, cfg.ddpm, a.run_dir);
    if (r.start_epoch > 0)
        std::printf("resumed from epoch %d\n", r.start_epoch);
    std::printf("trained %s on %zu records; best mean loss %.6g at epoch %d\n",
                train_mode_name(a.mode).c_str(), sp.train.size(), r.best_loss, r.best_epoch);
    std::printf("run directory: %s\n", a.run_dir.c_str());
}

void cmd_infer(const RunConfig& cfg, const InferArgs& a) {
    if (a.pred_dir.empty()) throw usage_error("infer needs an output directory");
    Dataset ds = load_dataset(a.data);
    if (ds.task == Task::covariance &&
        (a.method == Method::bilinear || a.method == Method::bicubic))
        throw usage_error("bilinear/bicubic interpolation applies to the gain task only");
    const int euler_steps = a.steps == -1 ? cfg.inference.steps : a.steps;
    if (euler_steps < 1) throw usage_error("--steps must be >= 1");
    std::vector<size_t> idx = select_indices(ds.count, cfg.test_fraction, a.split);
    if (idx.empty()) throw data_error("selected split is empty");

    std::optional<LoadedModel> lm;
    if (method_needs_checkpoint(a.method)) {
        if (a.checkpoint.empty())
            throw usage_error("--checkpoint is required for method " + method_name(a.method));
        lm.emplace(load_model(a.checkpoint));
        if (!lm->mode.empty() && lm->mode != method_name(a.method))
            throw data_error("checkpoint was trained in mode '" + lm->mode +
                             "' but --method is '" + method_name(a.method) + "'");
        check_net_matches(ds, lm->net.config());
    }
    ensure_dir(a.pred_dir);
    Reconstructor rc =
        make_reconstructor(cfg, ds, a.method, lm ? &*lm : nullptr, euler_steps);

    std::vector<double> times;
    times.reserve(idx.size());
    for (size_t r = 0; r < idx.size(); ++r) {
        const size_t i = idx[r];
        const fs::path base = fs::path(a.pred_dir) / rec_stem(i);
        if (ds.task == Task::gain) {
            const auto t0 = clock_type::now();
            Tensorf rec = rc.gain(i);
            times.push_back(elapsed_ms(t0, clock_type::now()));
            write_f32(base.string() + ".bin", rec.v.data(), rec.v.size());
            write_pgm_from_float(base.string() + ".pgm", rec.channel(0), rec.h, rec.w);
        } else {
            const auto t0 = clock_type::now();
            CMatf rec = rc.cov(i);
            times.push_back(elapsed_ms(t0, clock_type::now()));
            std::vector<float> planes = cov_to_planes(rec);
            write_f32(base.string() + ".bin", planes.data(), planes.size());
        }
    }

    ojson meta;
    meta["kind"] = "pred";
    meta["method"] = method_name(a.method);
    meta["task"] = task_name(ds.task);
    meta["steps"] = a.method == Method::gfm  ? euler_steps
                    : a.method == Method::ddpm ? cfg.ddpm.steps
                                               : 0;
    meta["split"] = a.split;
    meta["count"] = idx.size();
    meta["indices"] = idx;
    write_text(a.pred_dir + "/meta.json", meta.dump(2) + "\n");
    write_timing_csv(a.pred_dir + "/timing.csv", idx, times);

    TimingSummary ts = summarize_times(times);
    std::printf("method %s: wrote %zu records to %s (%.3f ms/sample)\n",
                method_name(a.method).c_str(), idx.size(), a.pred_dir.c_str(), ts.mean_ms);
}

void cmd_eval(const RunConfig& cfg, const EvalArgs& a) {
    (void)cfg;
    if (a.pred_dirs.empty()) throw usage_error("at least one --pred directory is required");
    if (a.csv_path.empty()) throw usage_error("eval needs an output CSV path");
    Dataset ds = load_dataset(a.truth);
    if (ds.task != a.task)
        throw data_error("truth dataset holds task " + task_name(ds.task) + " but --task " +
                         task_name(a.task) + " was given");

    std::vector<MethodScores> rows;
    bool any_missing = false;
    for (const std::string& dir : a.pred_dirs) {
        if (!fs::is_directory(dir)) throw data_error("prediction directory not found: " + dir);
        std::string method = fs::path(dir).filename().string();
        std::vector<size_t> indices;
        const fs::path meta_path = fs::path(dir) / "meta.json";
        if (fs::exists(meta_path)) {
            ojson j;
            try {
                j = ojson::parse(read_text(meta_path.string()));
            } catch (const ojson::exception&) {
                throw data_error("unparseable meta.json in " + dir);
            }
            if (j.contains("method") && j["method"].is_string())
                method = j["method"].get<std::string>();
            if (j.contains("task") && j["task"].is_string() &&
                j["task"].get<std::string>() != task_name(ds.task))
                throw data_error("prediction directory " + dir + " holds task " +
                                 j["task"].get<std::string>() + " but the truth is task " +
                                 task_name(ds.task));
            if (j.contains("indices") && j["indices"].is_array())
                for (const auto& e : j["indices"]) indices.push_back(e.get<size_t>());
        }
        if (indices.empty()) {
            for (const auto& de : fs::directory_iterator(dir)) {
                const std::string nm = de.path().filename().string();
                if (nm.size() <= 8 || nm.rfind("rec_", 0) != 0 ||
                    nm.substr(nm.size() - 4) != ".bin")
                    continue;
                try {
                    indices.push_back(std::stoul(nm.substr(4, nm.size() - 8)));
                } catch (const std::exception&) {
                    continue;
                }
            }
            std::sort(indices.begin(), indices.end());
        }
        if (indices.empty()) throw data_error("no prediction records found in " + dir);

        std::vector<Tensorf> ta, pa;
        std::vector<CMatf> tb, pb;
        std::vector<std::string> missing;
        for (size_t i : indices) {
            if (i >= ds.count)
                throw data_error("prediction index " + std::to_string(i) +
                                 " is outside the truth dataset (count " +
                                 std::to_string(ds.count) + ")");
            const std::string name = rec_stem(i) + ".bin";
            const fs::path bin = fs::path(dir) / name;
            if (!fs::exists(bin)) {
                missing.push_back(name);
                continue;
            }
            if (ds.task == Task::gain) {
                Tensorf p(1, int(ds.d0), int(ds.d1));
                p.v = read_f32(bin.string(), p.v.size());
                ta.push_back(ds.gain_target(i));
                pa.push_back(std::move(p));
            } else {
                tb.push_back(ds.cov_matrix(i, 0));
                pb.push_back(planes_to_cov(
                    read_f32(bin.string(), 2 * size_t(ds.d0) * ds.d0), int(ds.d0)));
            }
        }
        MethodScores s = ta.empty() && tb.empty()
                             ? empty_scores(method, ds.task)
                             : ds.task == Task::gain ? evaluate_gain(method, ta, pa)
                                                     : evaluate_cov(method, tb, pb);
        if (!missing.empty()) {
            any_missing = true;
            s.errors = "missing:" + join(missing, ";");
        }
        rows.push_back(std::move(s));
    }

    ensure_parent(a.csv_path);
    write_scores_csv(a.csv_path, rows);
    std::fputs(format_scores_table(rows).c_str(), stdout);
    std::printf("wrote %s\n", a.csv_path.c_str());
    if (any_missing)
        throw data_error("missing prediction files; see the errors column in " + a.csv_path);
}

void cmd_ablate_steps(const RunConfig& cfg, const AblateArgs& a) {
    if (a.csv_path.empty()) throw usage_error("ablate-steps needs an output CSV path");
    if (a.steps_list.empty()) throw usage_error("--steps-list is empty");
    for (int n : a.steps_list)
        if (n < 1) throw usage_error("step counts must be >= 1");
    Dataset ds = load_dataset(a.data);
    if (ds.task != Task::gain)
        throw usage_error("the step ablation reports SSIM and needs a gain-task dataset");
    LoadedModel lm = load_model(a.checkpoint);
    if (!lm.mode.empty() && lm.mode != "gfm")
        throw data_error("the step ablation needs a gfm checkpoint; this one was trained as " +
                         lm.mode);
    check_net_matches(ds, lm.net.config());
    std::vector<size_t> idx = select_indices(ds.count, cfg.test_fraction, "test");
    if (idx.empty()) throw data_error("test split is empty");

    std::string csv = "steps,ssim,time_ms\n";
    std::printf("%6s  %8s  %10s\n", "steps", "ssim", "time_ms");
    char buf[96];
    for (int n : a.steps_list) {
        InferenceConfig inf;
        inf.steps = n;
        inf.seed = cfg.seed;
        double ssim_sum = 0;
        std::vector<double> times;
        times.reserve(idx.size());
        for (size_t i : idx) {
            const auto t0 = clock_type::now();
            Tensorf rec = reconstruct_gain(lm.net, ds, i, cfg.cond, lm.stats, inf);
            times.push_back(elapsed_ms(t0, clock_type::now()));
            ssim_sum += ssim(ds.gain_target(i), rec);
        }
        const double mean_ssim = ssim_sum / double(idx.size());
        const TimingSummary ts = summarize_times(times);
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f\n", n, mean_ssim, ts.mean_ms);
        csv += buf;
        std::printf("%6d  %8.4f  %10.3f\n", n, mean_ssim, ts.mean_ms);
    }
    ensure_parent(a.csv_path);
    write_text(a.csv_path, csv);
    std::printf("wrote %s\n", a.csv_path.c_str());
}

void cmd_bench(const RunConfig& cfg, const BenchArgs& a) {
    if (a.out_dir.empty()) throw usage_error("bench needs an output directory");
    Dataset ds = load_dataset(a.data);
    std::vector<Method> methods = a.methods;
    if (methods.empty()) {
        methods = {Method::gfm, Method::regression, Method::ddpm, Method::knn};
        if (ds.task == Task::gain) {
            methods.push_back(Method::bilinear);
            methods.push_back(Method::bicubic);
        }
    }
    for (Method m : methods)
        if (ds.task == Task::covariance &&
            (m == Method::bilinear || m == Method::bicubic))
            throw usage_error("bilinear/bicubic interpolation applies to the gain task only");

    Split sp = split_dataset(ds.count, cfg.test_fraction);
    if (sp.train.empty() || sp.test.empty())
        throw data_error("bench needs non-empty train and test splits");
    NormStats stats = compute_norm_stats(ds, sp.train, cfg.cond);
    ensure_dir(a.out_dir);

    // train (or resume to completion) each learned backbone on the shared split
    std::map<std::string, LoadedModel> models;
    for (Method m : methods) {
        if (!method_needs_checkpoint(m)) continue;
        const TrainMode mode = method_mode(m);
        const std::string rd = a.out_dir + "/train_" + train_mode_name(mode);
        ensure_dir(rd);
        write_text(rd + "/config.json", dump_run_config(cfg));
        save_norm_stats(rd + "/stats.json", stats);
        ojson meta;
        meta["kind"] = "train";
        meta["task"] = task_name(ds.task);
        meta["mode"] = train_mode_name(mode);
        meta["data"] = a.data;
        write_text(rd + "/meta.json", meta.dump(2) + "\n");
        TrainConfig tc = make_train_config(cfg, ds);
        train_model(ds, sp.train, cfg.cond, stats, tc, mode, cfg.ddpm, rd);
        models.emplace(method_name(m), load_model(rd + "/best.ckpt"));
    }

    // timing runs serially so the ddpm/gfm ratio is a fair per-sample figure
    const int prev_jobs = current_jobs();
    set_jobs(1);
    std::vector<MethodScores> rows;
    double gfm_ms = std::numeric_limits<double>::quiet_NaN();
    double ddpm_ms = std::numeric_limits<double>::quiet_NaN();
    for (Method m : methods) {
        const LoadedModel* lm = nullptr;
        auto it = models.find(method_name(m));
        if (it != models.end()) lm = &it->second;
        Reconstructor rc = make_reconstructor(cfg, ds, m, lm, cfg.inference.steps);

        std::vector<Tensorf> ta, pa;
        std::vector<CMatf> tb, pb;
        std::vector<double> times;
        times.reserve(sp.test.size());
        for (size_t i : sp.test) {
            if (ds.task == Task::gain) {
                const auto t0 = clock_type::now();
                Tensorf rec = rc.gain(i);
                times.push_back(elapsed_ms(t0, clock_type::now()));
                ta.push_back(ds.gain_target(i));
                pa.push_back(std::move(rec));
            } else {
                const auto t0 = clock_type::now();
                CMatf rec = rc.cov(i);
                times.push_back(elapsed_ms(t0, clock_type::now()));
                tb.push_back(ds.cov_matrix(i, 0));
                pb.push_back(std::move(rec));
            }
        }
        MethodScores s = ds.task == Task::gain ? evaluate_gain(method_name(m), ta, pa)
                                               : evaluate_cov(method_name(m), tb, pb);
        const TimingSummary ts = summarize_times(times);
        s.time_ms_per_sample = ts.mean_ms;
        if (m == Method::gfm) gfm_ms = ts.mean_ms;
        if (m == Method::ddpm) ddpm_ms = ts.mean_ms;
        rows.push_back(std::move(s));
        std::printf("bench %s: %.3f ms/sample over %zu test records\n",
                    method_name(m).c_str(), ts.mean_ms, sp.test.size());
    }
    set_jobs(prev_jobs);

    if (std::isfinite(gfm_ms) && std::isfinite(ddpm_ms) && gfm_ms > 0) {
        MethodScores ratio = empty_scores("ddpm_gfm_time_ratio", ds.task);
        ratio.time_ms_per_sample = ddpm_ms / gfm_ms;
        ratio.n_samples = sp.test.size();
        rows.push_back(ratio);
        std::printf("ddpm/gfm time ratio: %.2f\n", ddpm_ms / gfm_ms);
    }

    const std::string csv = a.out_dir + "/bench.csv";
    write_scores_csv(csv, rows);
    std::fputs(format_scores_table(rows).c_str(), stdout);
    std::printf("wrote %s\n", csv.c_str());
}

}  // namespace ckmflow
