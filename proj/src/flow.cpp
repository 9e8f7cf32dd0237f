#include "ckmflow/flow.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "ckmflow/checkpoint.hpp"
#include "ckmflow/optimizer.hpp"
#include "ckmflow/rng.hpp"

namespace ckmflow {

namespace fs = std::filesystem;

Tensorf sample_path(const Tensorf& x0, const Tensorf& x1, float t) {
    if (!x0.same_shape(x1)) throw usage_error("path endpoints differ in shape");
    Tensorf x(x0.c, x0.h, x0.w);
    for (size_t i = 0; i < x.v.size(); ++i) x.v[i] = (1.0f - t) * x0.v[i] + t * x1.v[i];
    return x;
}

Tensorf target_velocity(const Tensorf& x0, const Tensorf& x1) {
    if (!x0.same_shape(x1)) throw usage_error("path endpoints differ in shape");
    Tensorf u(x0.c, x0.h, x0.w);
    for (size_t i = 0; i < u.v.size(); ++i) u.v[i] = x1.v[i] - x0.v[i];
    return u;
}

double gfm_loss(const std::vector<Tensorf>& v, const std::vector<Tensorf>& u) {
    if (v.size() != u.size() || v.empty()) throw usage_error("loss batch size mismatch");
    double sum = 0.0;
    size_t count = 0;
    for (size_t b = 0; b < v.size(); ++b) {
        if (!v[b].same_shape(u[b])) throw usage_error("loss tensor shape mismatch");
        for (size_t i = 0; i < v[b].v.size(); ++i) {
            const double d = double(v[b].v[i]) - double(u[b].v[i]);
            sum += d * d;
        }
        count += v[b].v.size();
    }
    const double loss = sum / double(count);
    if (!std::isfinite(loss)) throw numeric_error("non-finite velocity matching loss");
    return loss;
}

// Upper triangle computed once and mirrored, so max|R - R^H| is exactly 0
// and the diagonal is exactly real.
CMatf hermitian_project(const CMatf& r) {
    CMatf out(r.n);
    for (int i = 0; i < r.n; ++i) {
        out.at(i, i) = std::complex<float>(r.at(i, i).real(), 0.0f);
        for (int j = i + 1; j < r.n; ++j) {
            const std::complex<float> a = r.at(i, j), b = r.at(j, i);
            const std::complex<float> m(0.5f * (a.real() + b.real()),
                                        0.5f * (a.imag() - b.imag()));
            out.at(i, j) = m;
            out.at(j, i) = std::conj(m);
        }
    }
    return out;
}

CMatf psd_clip(const CMatf& r) {
    const int n = r.n;
    Eigen::MatrixXcd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = std::complex<double>(r.at(i, j));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a);
    if (es.info() != Eigen::Success) throw numeric_error("eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXcd out =
        es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
    CMatf res(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) res.at(i, j) = std::complex<float>(out(i, j));
    return hermitian_project(res);
}

std::string train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::gfm: return "gfm";
        case TrainMode::regression: return "regression";
        case TrainMode::ddpm: return "ddpm";
    }
    throw usage_error("unknown train mode");
}

TrainMode parse_train_mode(const std::string& s) {
    if (s == "gfm") return TrainMode::gfm;
    if (s == "regression") return TrainMode::regression;
    if (s == "ddpm") return TrainMode::ddpm;
    throw usage_error("unknown model '" + s + "' (expected gfm, regression or ddpm)");
}

std::vector<double> ddpm_betas(const DdpmConfig& cfg) {
    if (cfg.steps < 1) throw usage_error("ddpm steps must be >= 1");
    if (!(cfg.beta_start > 0.0) || !(cfg.beta_end < 1.0) || cfg.beta_start > cfg.beta_end)
        throw usage_error("ddpm beta schedule must satisfy 0 < beta_start <= beta_end < 1");
    std::vector<double> b(size_t(cfg.steps));
    for (int t = 1; t <= cfg.steps; ++t)
        b[size_t(t - 1)] =
            cfg.steps == 1
                ? cfg.beta_start
                : cfg.beta_start + (cfg.beta_end - cfg.beta_start) * double(t - 1) /
                                       double(cfg.steps - 1);
    return b;
}

std::vector<double> ddpm_alpha_bar(const DdpmConfig& cfg) {
    std::vector<double> ab = ddpm_betas(cfg);
    double prod = 1.0;
    for (double& x : ab) {
        prod *= 1.0 - x;
        x = prod;
    }
    return ab;
}

namespace {

int target_channel_count(Task t) { return t == Task::gain ? 1 : 2; }

int cond_channel_count(const Dataset& ds) {
    return ds.task == Task::gain ? 3 : 2 * int(ds.d1);
}

// Recovers the running best from previously written rows when resuming.
void scan_loss_csv(const std::string& path, double& best, int& best_epoch) {
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        int e = 0;
        double l = 0.0;
        if (std::sscanf(line.c_str(), "%d,%lf", &e, &l) == 2 && l < best) {
            best = l;
            best_epoch = e;
        }
    }
}

}  // namespace

TrainResult train_model(const Dataset& ds, const std::vector<size_t>& train_idx,
                        const CondConfig& cond, const NormStats& stats, const TrainConfig& cfg,
                        TrainMode mode, const DdpmConfig& ddpm, const std::string& run_dir) {
    if (train_idx.empty()) throw usage_error("empty training split");
    if (cfg.batch_size < 1) throw usage_error("batch_size must be >= 1");
    if (cfg.epochs < 1) throw usage_error("epochs must be >= 1");
    if (!(cfg.lr > 0.0)) throw usage_error("learning rate must be positive");
    const int tc = target_channel_count(ds.task);
    if (cfg.net.out_channels != tc ||
        cfg.net.in_channels != tc + cond_channel_count(ds))
        throw usage_error("network channels do not match the dataset task");

    std::vector<double> sqrt_ab, sqrt_1mab;
    if (mode == TrainMode::ddpm) {
        const std::vector<double> ab = ddpm_alpha_bar(ddpm);
        sqrt_ab.resize(ab.size());
        sqrt_1mab.resize(ab.size());
        for (size_t i = 0; i < ab.size(); ++i) {
            sqrt_ab[i] = std::sqrt(ab[i]);
            sqrt_1mab[i] = std::sqrt(1.0 - ab[i]);
        }
    }

    // Conditioning is deterministic per record, so it is assembled once.
    const size_t n = train_idx.size();
    std::vector<Tensorf> cond_n(n), targ_n(n);
    {
        std::atomic<bool> failed{false};
        std::exception_ptr eptr;
#pragma omp parallel for schedule(dynamic)
        for (long long i = 0; i < (long long)n; ++i) {
            if (failed.load(std::memory_order_relaxed)) continue;
            try {
                cond_n[size_t(i)] = normalize(build_condition(ds, train_idx[size_t(i)], cond),
                                              stats.cond_mu, stats.cond_sigma);
                targ_n[size_t(i)] = normalize(build_target(ds, train_idx[size_t(i)]),
                                              stats.target_mu, stats.target_sigma);
            } catch (...) {
#pragma omp critical
                {
                    if (!failed.exchange(true)) eptr = std::current_exception();
                }
            }
        }
        if (failed.load()) std::rethrow_exception(eptr);
    }

    fs::create_directories(run_dir);
    const std::string last_path = run_dir + "/last.ckpt";
    const std::string best_path = run_dir + "/best.ckpt";
    const std::string loss_path = run_dir + "/loss.csv";

    VelocityNet<float> net(cfg.net);
    AdamState<float> adam;
    adam.reset(net.param_count());
    int start_epoch = 0;
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    if (fs::exists(last_path)) {
        Checkpoint ck = load_checkpoint(last_path);
        const VelocityNetConfig& c = ck.config;
        if (c.in_channels != cfg.net.in_channels || c.out_channels != cfg.net.out_channels ||
            c.base_width != cfg.net.base_width || c.depth != cfg.net.depth ||
            c.time_embed_dim != cfg.net.time_embed_dim)
            throw data_error("checkpoint in " + run_dir + " was trained with another config");
        net.params().values = ck.values;
        if (ck.has_adam) {
            adam.m = ck.adam_m;
            adam.v = ck.adam_v;
            adam.step = ck.adam_step;
        }
        start_epoch = int(ck.next_epoch);
        scan_loss_csv(loss_path, best, best_epoch);
    } else {
        net.init_params(derive_seed(cfg.seed, 0x1417));
        std::ofstream f(loss_path);
        f << "epoch,mean_loss\n";
    }

    TrainResult res;
    res.start_epoch = start_epoch;
    res.best_loss = best;
    res.best_epoch = best_epoch;
    if (start_epoch >= cfg.epochs) return res;

    std::vector<float>& theta = net.params().values;
    const size_t pcount = theta.size();
    const Tensorf& t0 = targ_n[0];
    const size_t elems = t0.v.size();
    const int bmax = std::min<int>(cfg.batch_size, int(n));

    std::vector<std::vector<float>> egrad(static_cast<size_t>(bmax));
    for (auto& g : egrad) g.resize(pcount);
    std::vector<VelocityNet<float>::Cache> caches(static_cast<size_t>(bmax));
    std::vector<Tensorf> xin(static_cast<size_t>(bmax)), utgt(static_cast<size_t>(bmax));
    std::vector<double> tfeed(static_cast<size_t>(bmax)), eloss(static_cast<size_t>(bmax));
    std::vector<float> gsum(pcount);
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), size_t(0));

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const uint64_t eseed = derive_seed(derive_seed(cfg.seed, 0xe9), uint64_t(epoch));
        Rng shuffle_rng(derive_seed(eseed, 0));
        Rng draw_rng(derive_seed(eseed, 1));
        std::iota(perm.begin(), perm.end(), size_t(0));
        for (size_t i = n - 1; i > 0; --i) {
            const size_t j = size_t(shuffle_rng.randint(i + 1));
            std::swap(perm[i], perm[j]);
        }

        double loss_sum = 0.0;
        const size_t batches = (n + size_t(cfg.batch_size) - 1) / size_t(cfg.batch_size);
        for (size_t b = 0; b < batches; ++b) {
            const size_t lo = b * size_t(cfg.batch_size);
            const size_t hi = std::min(n, lo + size_t(cfg.batch_size));
            const int bn = int(hi - lo);

            // All stochastic draws happen here, in element order, before the
            // parallel section; the loop below is then order-independent.
            for (int e = 0; e < bn; ++e) {
                const Tensorf& x1 = targ_n[perm[lo + size_t(e)]];
                switch (mode) {
                    case TrainMode::gfm: {
                        const double t = draw_rng.u01();
                        Tensorf x0(x1.c, x1.h, x1.w);
                        for (float& x : x0.v) x = float(draw_rng.normal());
                        xin[size_t(e)] = sample_path(x0, x1, float(t));
                        utgt[size_t(e)] = target_velocity(x0, x1);
                        tfeed[size_t(e)] = t;
                        break;
                    }
                    case TrainMode::regression: {
                        xin[size_t(e)] = Tensorf(x1.c, x1.h, x1.w);
                        utgt[size_t(e)] = x1;
                        tfeed[size_t(e)] = 0.0;
                        break;
                    }
                    case TrainMode::ddpm: {
                        const int tidx = 1 + int(draw_rng.randint(uint64_t(ddpm.steps)));
                        Tensorf xt(x1.c, x1.h, x1.w), eps(x1.c, x1.h, x1.w);
                        for (float& x : eps.v) x = float(draw_rng.normal());
                        for (size_t j = 0; j < xt.v.size(); ++j)
                            xt.v[j] = float(sqrt_ab[size_t(tidx - 1)] * double(x1.v[j]) +
                                            sqrt_1mab[size_t(tidx - 1)] * double(eps.v[j]));
                        xin[size_t(e)] = std::move(xt);
                        utgt[size_t(e)] = std::move(eps);
                        tfeed[size_t(e)] = double(tidx) / double(ddpm.steps);
                        break;
                    }
                }
            }

            {
                std::atomic<bool> failed{false};
                std::exception_ptr eptr;
#pragma omp parallel for schedule(static)
                for (int e = 0; e < bn; ++e) {
                    if (failed.load(std::memory_order_relaxed)) continue;
                    try {
                        Tensorf v = net.forward(theta, xin[size_t(e)], tfeed[size_t(e)],
                                                cond_n[perm[lo + size_t(e)]], caches[size_t(e)]);
                        double s = 0.0;
                        Tensorf gv(v.c, v.h, v.w);
                        const double scale = 2.0 / (double(elems) * double(bn));
                        for (size_t j = 0; j < v.v.size(); ++j) {
                            const double d = double(v.v[j]) - double(utgt[size_t(e)].v[j]);
                            s += d * d;
                            gv.v[j] = float(scale * d);
                        }
                        eloss[size_t(e)] = s / double(elems);
                        std::fill(egrad[size_t(e)].begin(), egrad[size_t(e)].end(), 0.0f);
                        net.backward(theta, caches[size_t(e)], gv, egrad[size_t(e)]);
                    } catch (...) {
#pragma omp critical
                        {
                            if (!failed.exchange(true)) eptr = std::current_exception();
                        }
                    }
                }
                if (failed.load()) std::rethrow_exception(eptr);
            }

            double bl = 0.0;
            for (int e = 0; e < bn; ++e) bl += eloss[size_t(e)];
            bl /= double(bn);
            if (!std::isfinite(bl))
                throw numeric_error("non-finite training loss at epoch " +
                                    std::to_string(epoch) + " batch " + std::to_string(b));
            std::fill(gsum.begin(), gsum.end(), 0.0f);
            for (int e = 0; e < bn; ++e) {
                const std::vector<float>& g = egrad[size_t(e)];
                for (size_t j = 0; j < pcount; ++j) gsum[j] += g[j];
            }
            adam_step(theta, gsum, adam, cfg.lr);
            loss_sum += bl * double(bn);
        }

        const double mean_loss = loss_sum / double(n);
        res.epoch_losses.push_back(mean_loss);
        {
            std::ofstream f(loss_path, std::ios::app);
            char row[64];
            std::snprintf(row, sizeof(row), "%d,%.17g\n", epoch, mean_loss);
            f << row;
        }
        if (mean_loss < best) {
            best = mean_loss;
            best_epoch = epoch;
            save_checkpoint(best_path, net, uint32_t(epoch + 1), nullptr);
        }
        save_checkpoint(last_path, net, uint32_t(epoch + 1), &adam);
        if (cfg.verbose) {
            std::fprintf(stdout, "[%s] epoch %d/%d mean_loss %.6g\n",
                         train_mode_name(mode).c_str(), epoch + 1, cfg.epochs, mean_loss);
            std::fflush(stdout);
        }
    }

    res.best_loss = best;
    res.best_epoch = best_epoch;
    return res;
}

namespace {

Tensorf integrate_record(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                         const CondConfig& cond, const NormStats& stats,
                         const InferenceConfig& inf) {
    const Tensorf c =
        normalize(build_condition(ds, i, cond), stats.cond_mu, stats.cond_sigma);
    Tensorf x0(net.config().out_channels, c.h, c.w);
    Rng rng(derive_seed(inf.seed, i));
    for (float& x : x0.v) x = float(rng.normal());
    VelocityNet<float>::Cache cc;
    const std::vector<float>& theta = net.params().values;
    Tensorf xt = euler_integrate(
        [&](const Tensorf& x, double t) { return net.forward(theta, x, t, c, cc); }, x0,
        inf.steps);
    return denormalize(xt, stats.target_mu, stats.target_sigma);
}

}  // namespace

Tensorf reconstruct_gain(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                         const CondConfig& cond, const NormStats& stats,
                         const InferenceConfig& inf) {
    if (ds.task != Task::gain) throw usage_error("reconstruct_gain needs a gain dataset");
    return integrate_record(net, ds, i, cond, stats, inf);
}

CMatf reconstruct_cov(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                      const CondConfig& cond, const NormStats& stats,
                      const InferenceConfig& inf) {
    if (ds.task != Task::covariance)
        throw usage_error("reconstruct_cov needs a covariance dataset");
    const Tensorf t = integrate_record(net, ds, i, cond, stats, inf);
    CMatf r = hermitian_project(tensor_to_cov(t));
    if (inf.psd_clip) r = psd_clip(r);
    return r;
}

}  // namespace ckmflow
