#include "ckmflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ckmflow/common.hpp"
#include "ckmflow/kernels.hpp"
#include "ckmflow/rng.hpp"

namespace ckmflow {

namespace {

void check_same(const Tensorf& a, const Tensorf& b) {
    if (!a.same_shape(b)) throw usage_error("metric inputs differ in shape");
    if (a.v.empty()) throw usage_error("metric inputs are empty");
}

}  // namespace

double mse(const Tensorf& truth, const Tensorf& pred) {
    check_same(truth, pred);
    double sum = 0.0;
    for (size_t i = 0; i < truth.v.size(); ++i) {
        const double d = double(pred.v[i]) - double(truth.v[i]);
        sum += d * d;
    }
    return sum / double(truth.v.size());
}

double rmse(const Tensorf& truth, const Tensorf& pred) { return std::sqrt(mse(truth, pred)); }

double nmse(const Tensorf& truth, const Tensorf& pred) {
    check_same(truth, pred);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < truth.v.size(); ++i) {
        const double t = double(truth.v[i]);
        const double d = double(pred.v[i]) - t;
        num += d * d;
        den += t * t;
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return num / den;
}

double psnr(const Tensorf& truth, const Tensorf& pred, double peak) {
    const double m = mse(truth, pred);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

namespace {

constexpr int ssim_win = 11;

// 11x11 Gaussian weights, sigma 1.5, normalized to sum 1.
const double* ssim_window() {
    static double w[ssim_win * ssim_win];
    static bool ready = false;
    if (!ready) {
        double sum = 0.0;
        for (int y = 0; y < ssim_win; ++y)
            for (int x = 0; x < ssim_win; ++x) {
                const double dy = y - ssim_win / 2, dx = x - ssim_win / 2;
                const double g = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
                w[y * ssim_win + x] = g;
                sum += g;
            }
        for (double& x : w) x /= sum;
        ready = true;
    }
    return w;
}

}  // namespace

double ssim(const Tensorf& a, const Tensorf& b, double peak) {
    check_same(a, b);
    if (a.c != 1) throw usage_error("ssim expects single-channel images");
    if (a.h < ssim_win || a.w < ssim_win)
        throw usage_error("image smaller than the 11x11 ssim window");
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const double* win = ssim_window();

    double total = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + ssim_win <= a.h; ++y0) {
        for (int x0 = 0; x0 + ssim_win <= a.w; ++x0) {
            double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
            for (int y = 0; y < ssim_win; ++y)
                for (int x = 0; x < ssim_win; ++x) {
                    const double w = win[y * ssim_win + x];
                    const double va = double(a.at(0, y0 + y, x0 + x));
                    const double vb = double(b.at(0, y0 + y, x0 + x));
                    sx += w * va;
                    sy += w * vb;
                    sxx += w * va * va;
                    syy += w * vb * vb;
                    sxy += w * va * vb;
                }
            const double vx = sxx - sx * sx, vy = syy - sy * sy, cxy = sxy - sx * sy;
            const double num = (2.0 * sx * sy + c1) * (2.0 * cxy + c2);
            const double den = (sx * sx + sy * sy + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    }
    return total / double(count);
}

double nmse_cov(const CMatf& truth, const CMatf& pred) {
    if (truth.n != pred.n || truth.n < 1) throw usage_error("metric inputs differ in shape");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < truth.m.size(); ++i) {
        const std::complex<double> t(truth.m[i]);
        const std::complex<double> d = std::complex<double>(pred.m[i]) - t;
        num += std::norm(d);
        den += std::norm(t);
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return num / den;
}

double msi(const CMatf& r, const CMatf& rhat) {
    if (r.n != rhat.n || r.n < 1) throw usage_error("metric inputs differ in shape");
    std::complex<double> tr(0.0, 0.0);
    double nr = 0.0, ng = 0.0;
    for (size_t i = 0; i < r.m.size(); ++i) {
        const std::complex<double> x(r.m[i]), y(rhat.m[i]);
        tr += x * std::conj(y);
        nr += std::norm(x);
        ng += std::norm(y);
    }
    const double den = std::sqrt(nr) * std::sqrt(ng);
    if (den == 0.0) return 0.0;
    return std::abs(tr) / den;
}

FeatureExtractor::FeatureExtractor() {
    const int widths[4] = {1, 16, 32, 64};
    size_t* wofs[3] = {&w1_, &w2_, &w3_};
    size_t* bofs[3] = {&b1_, &b2_, &b3_};
    Rng rng(0xC0FFEE);
    for (int l = 0; l < 3; ++l) {
        const size_t fan_in = size_t(widths[l]) * 9;
        const double bound = std::sqrt(6.0 / double(fan_in));
        *wofs[l] = theta_.size();
        for (size_t i = 0; i < size_t(widths[l + 1]) * fan_in; ++i)
            theta_.push_back(float(rng.uniform(-bound, bound)));
        *bofs[l] = theta_.size();
        theta_.insert(theta_.end(), size_t(widths[l + 1]), 0.0f);
    }
}

namespace {

Tensorf avgpool2(const Tensorf& in) {
    Tensorf out(in.c, in.h / 2, in.w / 2);
    for (int c = 0; c < out.c; ++c)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x)
                out.at(c, y, x) = 0.25f * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                           in.at(c, 2 * y + 1, 2 * x) +
                                           in.at(c, 2 * y + 1, 2 * x + 1));
    return out;
}

}  // namespace

std::vector<double> FeatureExtractor::features(const Tensorf& img01) const {
    if (img01.c != 1) throw usage_error("feature extractor expects single-channel images");
    if (img01.h < 8 || img01.w < 8) throw usage_error("feature extractor needs >= 8x8 images");
    const int widths[3] = {16, 32, 64};
    const size_t w[3] = {w1_, w2_, w3_}, b[3] = {b1_, b2_, b3_};
    Tensorf cur = img01, pre, act;
    for (int l = 0; l < 3; ++l) {
        conv2d_forward(cur, theta_.data() + w[l], theta_.data() + b[l], widths[l], 3, 1, 1, pre);
        silu_forward(pre, act);
        cur = avgpool2(act);
    }
    std::vector<double> f(size_t(dim), 0.0);
    const size_t plane = cur.plane();
    for (int c = 0; c < dim; ++c) {
        double s = 0.0;
        const float* p = cur.channel(c);
        for (size_t i = 0; i < plane; ++i) s += double(p[i]);
        f[size_t(c)] = s / double(plane);
    }
    return f;
}

double fid_from_features(const std::vector<std::vector<double>>& real,
                         const std::vector<std::vector<double>>& gen) {
    if (real.size() < 2 || gen.size() < 2) throw usage_error("fid needs >= 2 samples per set");
    const size_t d = real[0].size();
    for (const auto& f : real)
        if (f.size() != d) throw usage_error("feature dimensions differ");
    for (const auto& f : gen)
        if (f.size() != d) throw usage_error("feature dimensions differ");

    auto fit = [d](const std::vector<std::vector<double>>& set, Eigen::VectorXd& mu,
                   Eigen::MatrixXd& sigma) {
        const size_t n = set.size();
        Eigen::MatrixXd x(n, d);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < d; ++j) x(long(i), long(j)) = set[i][j];
        mu = x.colwise().mean();
        Eigen::MatrixXd xc = x.rowwise() - mu.transpose();
        sigma = xc.transpose() * xc / double(n - 1);
        sigma.diagonal().array() += 1e-6;  // ridge: sample covariances are rank-deficient
    };
    Eigen::VectorXd mu_r, mu_g;
    Eigen::MatrixXd sig_r, sig_g;
    fit(real, mu_r, sig_r);
    fit(gen, mu_g, sig_g);

    auto psd_sqrt = [](const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        if (es.info() != Eigen::Success) throw numeric_error("fid eigendecomposition failed");
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() *
                               es.eigenvectors().transpose());
    };
    const Eigen::MatrixXd root_r = psd_sqrt(sig_r);
    Eigen::MatrixXd inner = root_r * sig_g * root_r;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
    if (es.info() != Eigen::Success) throw numeric_error("fid eigendecomposition failed");
    const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double val =
        (mu_r - mu_g).squaredNorm() + sig_r.trace() + sig_g.trace() - 2.0 * tr_sqrt;
    return val < 0.0 ? 0.0 : val;
}

double fid(const FeatureExtractor& fx, const std::vector<Tensorf>& real,
           const std::vector<Tensorf>& gen, double peak) {
    auto extract = [&fx, peak](const std::vector<Tensorf>& set) {
        std::vector<std::vector<double>> out(set.size());
        for (size_t i = 0; i < set.size(); ++i) {
            Tensorf img = set[i];
            for (float& v : img.v) v = float(double(v) / peak);
            out[i] = fx.features(img);
        }
        return out;
    };
    return fid_from_features(extract(real), extract(gen));
}

MethodScores evaluate_gain(const std::string& method, const std::vector<Tensorf>& truth,
                           const std::vector<Tensorf>& pred) {
    if (truth.size() != pred.size() || truth.empty())
        throw usage_error("evaluation sets differ in size");
    MethodScores s;
    s.method = method;
    s.task = "a";
    s.n_samples = truth.size();
    double sn = 0.0, sp = 0.0, ss = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        sn += nmse(truth[i], pred[i]);
        sp += psnr(truth[i], pred[i]);
        ss += ssim(truth[i], pred[i]);
    }
    s.nmse = sn / double(truth.size());
    s.psnr = sp / double(truth.size());
    s.ssim = ss / double(truth.size());
    if (truth.size() >= 2) {
        FeatureExtractor fx;
        s.fid = fid(fx, truth, pred);
    }
    return s;
}

MethodScores evaluate_cov(const std::string& method, const std::vector<CMatf>& truth,
                          const std::vector<CMatf>& pred) {
    if (truth.size() != pred.size() || truth.empty())
        throw usage_error("evaluation sets differ in size");
    MethodScores s;
    s.method = method;
    s.task = "b";
    s.n_samples = truth.size();
    double sn = 0.0, sm = 0.0;
    auto magnitude01 = [](const CMatf& m) {
        Tensorf img(1, m.n, m.n);
        float peak = 0.0f;
        for (size_t i = 0; i < m.m.size(); ++i) {
            img.v[i] = std::abs(m.m[i]);
            peak = std::max(peak, img.v[i]);
        }
        if (peak > 0.0f)
            for (float& v : img.v) v /= peak;
        return img;
    };
    std::vector<Tensorf> mt(truth.size()), mp(truth.size());
    for (size_t i = 0; i < truth.size(); ++i) {
        sn += nmse_cov(truth[i], pred[i]);
        sm += msi(truth[i], pred[i]);
        mt[i] = magnitude01(truth[i]);
        mp[i] = magnitude01(pred[i]);
    }
    s.nmse = sn / double(truth.size());
    s.msi = sm / double(truth.size());
    if (truth.size() >= 2) {
        FeatureExtractor fx;
        s.fid = fid(fx, mt, mp, 1.0);
    }
    return s;
}

namespace {

std::string cell(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

void write_scores_csv(const std::string& path, const std::vector<MethodScores>& rows) {
    std::ofstream f(path);
    if (!f) throw data_error("cannot open for writing: " + path);
    f << "method,task,nmse,psnr,ssim,fid,msi,time_ms_per_sample,n_samples,errors\n";
    for (const MethodScores& r : rows) {
        f << r.method << ',' << r.task << ',' << cell(r.nmse) << ',' << cell(r.psnr) << ','
          << cell(r.ssim) << ',' << cell(r.fid) << ',' << cell(r.msi) << ','
          << cell(r.time_ms_per_sample) << ',' << r.n_samples << ',' << r.errors << '\n';
    }
}

std::string format_scores_table(const std::vector<MethodScores>& rows) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-12s %-4s %12s %10s %8s %10s %8s %12s %9s\n", "method",
                  "task", "nmse", "psnr", "ssim", "fid", "msi", "time_ms", "samples");
    out << line;
    for (const MethodScores& r : rows) {
        std::snprintf(line, sizeof(line), "%-12s %-4s %12s %10s %8s %10s %8s %12s %9zu\n",
                      r.method.c_str(), r.task.c_str(), cell(r.nmse).c_str(),
                      cell(r.psnr).c_str(), cell(r.ssim).c_str(), cell(r.fid).c_str(),
                      cell(r.msi).c_str(), cell(r.time_ms_per_sample).c_str(), r.n_samples);
        out << line;
    }
    return out.str();
}

}  // namespace ckmflow
