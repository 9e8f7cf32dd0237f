#ifndef CKMFLOW_FLOW_HPP
#define CKMFLOW_FLOW_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ckmflow/common.hpp"
#include "ckmflow/conditioning.hpp"
#include "ckmflow/dataset.hpp"
#include "ckmflow/net.hpp"
#include "ckmflow/tensor.hpp"

namespace ckmflow {

// Linear transport path x_t = (1 - t) x0 + t x1.
Tensorf sample_path(const Tensorf& x0, const Tensorf& x1, float t);

// Constant path velocity u = x1 - x0.
Tensorf target_velocity(const Tensorf& x0, const Tensorf& x1);

// Mean of ||v - u||^2 over every element of every batch member.
double gfm_loss(const std::vector<Tensorf>& v, const std::vector<Tensorf>& u);

// (R + R^H) / 2, the Frobenius-nearest Hermitian matrix.
CMatf hermitian_project(const CMatf& r);

// Eigendecomposes a Hermitian matrix and clamps negative eigenvalues to 0.
CMatf psd_clip(const CMatf& r);

// Fixed-step Euler from t=0 to t=1: x += v(x, i/N) * (1/N) for i = 0..N-1.
// The field is any callable (const Tensorf&, double) -> Tensorf with the
// condition already bound. The state is checked for finiteness every step.
template <typename Field>
Tensorf euler_integrate(Field&& field, const Tensorf& x0, int steps) {
    if (steps < 1) throw usage_error("integration steps must be >= 1");
    Tensorf x = x0;
    const double dt = 1.0 / double(steps);
    for (int i = 0; i < steps; ++i) {
        const double t = double(i) / double(steps);
        Tensorf v = field(x, t);
        if (!v.same_shape(x)) throw usage_error("velocity field changed tensor shape");
        for (size_t j = 0; j < x.v.size(); ++j) x.v[j] += float(dt * double(v.v[j]));
        if (!x.all_finite())
            throw numeric_error("euler state non-finite after step " + std::to_string(i));
    }
    return x;
}

// What the shared trainer regresses. gfm learns the path velocity from
// (x_t, t); regression maps the condition straight to the target with a
// zero state and t = 0; ddpm learns epsilon from (x_t, t/T).
enum class TrainMode { gfm, regression, ddpm };

std::string train_mode_name(TrainMode m);
TrainMode parse_train_mode(const std::string& s);

struct DdpmConfig {
    int steps = 250;          // T
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

// beta_t for t = 1..T at index t-1, linear between the endpoints.
std::vector<double> ddpm_betas(const DdpmConfig& cfg);
// alpha_bar_t = prod_{s<=t} (1 - beta_s), same indexing.
std::vector<double> ddpm_alpha_bar(const DdpmConfig& cfg);

struct TrainConfig {
    VelocityNetConfig net;
    int batch_size = 16;
    double lr = 1e-3;
    int epochs = 20;
    uint64_t seed = 0;
    bool verbose = true;
};

struct TrainResult {
    std::vector<double> epoch_losses;  // this invocation only, one per epoch run
    double best_loss = 0.0;            // lowest mean epoch loss across all epochs
    int best_epoch = -1;
    int start_epoch = 0;               // first epoch index this invocation ran
};

// One pass of the shared training loop. Writes into run_dir: loss.csv
// (appended across resumes), last.ckpt every epoch with optimizer state,
// best.ckpt whenever the mean epoch loss improves. Resumes from last.ckpt
// when present. Per-epoch RNG streams are derived from (seed, epoch), so a
// resumed run continues the exact sequence of the uninterrupted one.
TrainResult train_model(const Dataset& ds, const std::vector<size_t>& train_idx,
                        const CondConfig& cond, const NormStats& stats, const TrainConfig& cfg,
                        TrainMode mode, const DdpmConfig& ddpm, const std::string& run_dir);

struct InferenceConfig {
    int steps = 10;
    uint64_t seed = 0;
    bool psd_clip = false;  // covariance task: also clamp negative eigenvalues
};

// Integrates the learned field in the normalized domain and denormalizes.
// The per-record noise seed is derive_seed(seed, record_index).
// Gain values stay on the unclamped 0..255 scale; clamping is an export step.
Tensorf reconstruct_gain(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                         const CondConfig& cond, const NormStats& stats,
                         const InferenceConfig& inf);

// Same, then rebuilds the matrix and applies the Hermitian projection
// (and the optional eigenvalue clamp).
CMatf reconstruct_cov(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                      const CondConfig& cond, const NormStats& stats,
                      const InferenceConfig& inf);

}  // namespace ckmflow

#endif
