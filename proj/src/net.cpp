#include "ckmflow/net.hpp"

#include <algorithm>

namespace ckmflow {

GradCheckReport grad_check(const VelocityNetConfig& cfg, uint64_t seed, double eps,
                           int min_per_layer, int total_min) {
    VelocityNet<double> net(cfg);
    net.randomize_all(derive_seed(seed, 1));
    std::vector<double> theta = net.params().values;

    const int div = 1 << cfg.depth;
    const int hw = std::max(8, div * 2);
    Rng rng(derive_seed(seed, 2));
    Tensord x(cfg.out_channels, hw, hw), c(cfg.in_channels - cfg.out_channels, hw, hw);
    for (auto& v : x.v) v = rng.normal();
    for (auto& v : c.v) v = rng.normal();
    const double t = 0.37;

    // scalar probe L(theta) = sum(v * r) with a fixed random weighting r,
    // so dL/dv = r and every output element participates
    Tensord r(cfg.out_channels, hw, hw);
    for (auto& v : r.v) v = rng.normal();

    VelocityNet<double>::Cache cache;
    net.forward(theta, x, t, c, cache);
    std::vector<double> grad(theta.size(), 0.0);
    net.backward(theta, cache, r, grad);

    auto loss_at = [&](std::vector<double>& th) {
        VelocityNet<double>::Cache cc;
        Tensord v = net.forward(th, x, t, c, cc);
        double acc = 0;
        for (size_t i = 0; i < v.v.size(); ++i) acc += v.v[i] * r.v[i];
        return acc;
    };

    // sample coordinates: a floor per slice plus uniform extras
    std::vector<size_t> coords;
    for (const auto& s : net.params().slices) {
        const int take = int(std::min<size_t>(size_t(min_per_layer), s.size));
        for (int i = 0; i < take; ++i) coords.push_back(s.offset + rng.randint(s.size));
    }
    while (int(coords.size()) < total_min) coords.push_back(rng.randint(theta.size()));
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());

    GradCheckReport rep;
    for (const auto& s : net.params().slices) rep.layers.push_back({s.name, 0.0, 0});
    for (size_t idx : coords) {
        const double keep = theta[idx];
        theta[idx] = keep + eps;
        const double lp = loss_at(theta);
        theta[idx] = keep - eps;
        const double lm = loss_at(theta);
        theta[idx] = keep;
        const double num = (lp - lm) / (2.0 * eps);
        const double ana = grad[idx];
        const double rel =
            std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-8});

        const auto& slice = net.params().containing(idx);
        for (auto& e : rep.layers) {
            if (e.layer == slice.name) {
                e.max_rel_err = std::max(e.max_rel_err, rel);
                e.sampled += 1;
                break;
            }
        }
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        rep.total_sampled += 1;
    }
    return rep;
}

}  // namespace ckmflow
