#ifndef CKMFLOW_METRICS_HPP
#define CKMFLOW_METRICS_HPP

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "ckmflow/tensor.hpp"

namespace ckmflow {

double mse(const Tensorf& truth, const Tensorf& pred);
double rmse(const Tensorf& truth, const Tensorf& pred);

// ||pred - truth||^2 / ||truth||^2
double nmse(const Tensorf& truth, const Tensorf& pred);

// 10 log10(peak^2 / mse); +infinity when the inputs are identical.
double psnr(const Tensorf& truth, const Tensorf& pred, double peak = 255.0);

// Mean SSIM over all fully-interior 11x11 windows, Gaussian-weighted with
// sigma 1.5, K1 = 0.01, K2 = 0.03.
double ssim(const Tensorf& a, const Tensorf& b, double peak = 255.0);

double nmse_cov(const CMatf& truth, const CMatf& pred);

// |tr(R Rhat^H)| / (||R||_F ||Rhat||_F); 1 for aligned eigenstructure,
// 0 for orthogonal supports.
double msi(const CMatf& r, const CMatf& rhat);

// Frozen random-weight feature network: three blocks of 3x3 conv, SiLU and
// 2x2 average pooling (widths 16, 32, 64), then global average pooling.
// Weights come from one pinned seed, so features never drift between runs.
class FeatureExtractor {
  public:
    static constexpr int dim = 64;

    FeatureExtractor();
    // img01: 1 x h x w with values in [0,1], h and w at least 8
    std::vector<double> features(const Tensorf& img01) const;

  private:
    std::vector<float> theta_;
    size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0;
};

// Frechet distance between Gaussian fits of the two feature sets. Sample
// covariances use the n-1 convention and get a 1e-6 diagonal ridge before
// the matrix square root; the result is clamped at 0.
double fid_from_features(const std::vector<std::vector<double>>& real,
                         const std::vector<std::vector<double>>& gen);

// Images are divided by peak before feature extraction.
double fid(const FeatureExtractor& fx, const std::vector<Tensorf>& real,
           const std::vector<Tensorf>& gen, double peak = 255.0);

// One comparison row. Fields that do not apply to the task stay NaN and are
// rendered as empty CSV cells; time is NaN unless the caller measured it.
struct MethodScores {
    std::string method;
    std::string task;
    double nmse = 0.0;
    double psnr = std::numeric_limits<double>::quiet_NaN();
    double ssim = std::numeric_limits<double>::quiet_NaN();
    double fid = std::numeric_limits<double>::quiet_NaN();
    double msi = std::numeric_limits<double>::quiet_NaN();
    double time_ms_per_sample = std::numeric_limits<double>::quiet_NaN();
    size_t n_samples = 0;
    std::string errors;
};

MethodScores evaluate_gain(const std::string& method, const std::vector<Tensorf>& truth,
                           const std::vector<Tensorf>& pred);

// Covariance rows score NMSE/MSI directly on the matrices; fid sees each
// magnitude image |R| rescaled by its own peak value.
MethodScores evaluate_cov(const std::string& method, const std::vector<CMatf>& truth,
                          const std::vector<CMatf>& pred);

// Columns: method,task,nmse,psnr,ssim,fid,msi,time_ms_per_sample,n_samples,errors
void write_scores_csv(const std::string& path, const std::vector<MethodScores>& rows);
std::string format_scores_table(const std::vector<MethodScores>& rows);

}  // namespace ckmflow

#endif
