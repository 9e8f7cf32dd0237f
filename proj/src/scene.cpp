#include "ckmflow/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "ckmflow/common.hpp"
#include "ckmflow/rng.hpp"

namespace ckmflow {

Scene generate_scene(uint64_t seed, const SceneConfig& cfg) {
    if (cfg.height_px < 8 || cfg.width_px < 8)
        throw usage_error("scene grid must be at least 8x8");
    if (cfg.n_buildings < 0) throw usage_error("n_buildings must be >= 0");
    if (cfg.n_antennas < 2) throw usage_error("n_antennas must be >= 2");

    Scene s;
    s.height_px = cfg.height_px;
    s.width_px = cfg.width_px;
    s.cell_size = cfg.cell_size;
    s.n_antennas = cfg.n_antennas;
    s.rng_seed = seed;

    Rng rng(derive_seed(seed, 0x5ce11e));
    s.bs_row = int(rng.randint(uint64_t(cfg.height_px)));
    s.bs_col = int(rng.randint(uint64_t(cfg.width_px)));

    for (int b = 0; b < cfg.n_buildings; ++b) {
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_tries; ++attempt) {
            int eh = cfg.min_extent_px +
                     int(rng.randint(uint64_t(cfg.max_extent_px - cfg.min_extent_px + 1)));
            int ew = cfg.min_extent_px +
                     int(rng.randint(uint64_t(cfg.max_extent_px - cfg.min_extent_px + 1)));
            eh = std::min(eh, cfg.height_px - 1);
            ew = std::min(ew, cfg.width_px - 1);
            BuildingRect r;
            r.row0 = int(rng.randint(uint64_t(cfg.height_px - eh)));
            r.col0 = int(rng.randint(uint64_t(cfg.width_px - ew)));
            r.row1 = r.row0 + eh - 1;
            r.col1 = r.col0 + ew - 1;
            if (r.contains(s.bs_row, s.bs_col)) continue;
            s.buildings.push_back(r);
            placed = true;
            break;
        }
        if (!placed)
            throw data_error("placement-failure: building rejected " +
                             std::to_string(cfg.max_tries) + " times (covers the BS)");
    }
    return s;
}

namespace {

inline double cross_z(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

// strict proper intersection of segments (a0,a1) and (b0,b1)
bool segments_cross(double a0r, double a0c, double a1r, double a1c,
                    double b0r, double b0c, double b1r, double b1c) {
    double d1 = cross_z(a1r - a0r, a1c - a0c, b0r - a0r, b0c - a0c);
    double d2 = cross_z(a1r - a0r, a1c - a0c, b1r - a0r, b1c - a0c);
    double d3 = cross_z(b1r - b0r, b1c - b0c, a0r - b0r, a0c - b0c);
    double d4 = cross_z(b1r - b0r, b1c - b0c, a1r - b0r, a1c - b0c);
    return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
           ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

// Clipped-window box mean along rows then columns, in place.
void box_smooth(std::vector<double>& f, int h, int w, int k) {
    if (k <= 1) return;
    int lo = (k - 1) / 2, hi = k / 2;
    std::vector<double> tmp(f.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            int c0 = std::max(0, c - lo), c1 = std::min(w - 1, c + hi);
            double acc = 0;
            for (int x = c0; x <= c1; ++x) acc += f[size_t(r) * w + x];
            tmp[size_t(r) * w + c] = acc / double(c1 - c0 + 1);
        }
    }
    for (int c = 0; c < w; ++c) {
        for (int r = 0; r < h; ++r) {
            int r0 = std::max(0, r - lo), r1 = std::min(h - 1, r + hi);
            double acc = 0;
            for (int y = r0; y <= r1; ++y) acc += tmp[size_t(y) * w + c];
            f[size_t(r) * w + c] = acc / double(r1 - r0 + 1);
        }
    }
}

}  // namespace

int count_wall_crossings(const Scene& scene, double r0, double c0, double r1, double c1) {
    int count = 0;
    for (const auto& b : scene.buildings) {
        // edge list with degenerate duplicates removed
        const double R0 = b.row0, C0 = b.col0, R1 = b.row1, C1 = b.col1;
        if (segments_cross(r0, c0, r1, c1, R0, C0, R0, C1)) ++count;  // top
        if (R1 != R0 && segments_cross(r0, c0, r1, c1, R1, C0, R1, C1)) ++count;  // bottom
        if (R1 != R0) {
            if (segments_cross(r0, c0, r1, c1, R0, C0, R1, C0)) ++count;  // left
            if (C1 != C0 && segments_cross(r0, c0, r1, c1, R0, C1, R1, C1)) ++count;  // right
        }
    }
    return count;
}

void quantize_gain(GainMap& gm) {
    if (!(gm.g_max > gm.g_min)) throw numeric_error("quantize_gain: g_max must exceed g_min");
    gm.quantized.resize(size_t(gm.h) * gm.w);
    const float scale = 255.0f / (gm.g_max - gm.g_min);
    for (size_t i = 0; i < gm.quantized.size(); ++i) {
        float q = std::round((gm.values.v[i] - gm.g_min) * scale);
        gm.quantized[i] = uint8_t(std::clamp(q, 0.0f, 255.0f));
    }
}

GainMap compute_gain_map(const Scene& scene, const PropagationParams& p) {
    const int h = scene.height_px, w = scene.width_px;
    GainMap gm;
    gm.h = h;
    gm.w = w;
    gm.values = Tensorf(1, h, w);

    std::vector<double> shadow;
    if (p.shadow_sigma > 0.0) {
        shadow.resize(size_t(h) * w);
        Rng rng(derive_seed(scene.rng_seed, 0x5ad0));
        for (auto& x : shadow) x = rng.normal();
        box_smooth(shadow, h, w, p.shadow_corr_px);
        double mean = 0;
        for (double x : shadow) mean += x;
        mean /= double(shadow.size());
        double var = 0;
        for (double x : shadow) var += (x - mean) * (x - mean);
        var /= double(shadow.size());
        double sd = std::sqrt(var);
        double scale = sd > 0 ? p.shadow_sigma / sd : 0.0;
        for (auto& x : shadow) x = (x - mean) * scale;
    }

    double gmax = -1e300, gmin_outdoor = 1e300;
    std::vector<char> indoor(size_t(h) * w, 0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            size_t i = size_t(r) * w + c;
            if (scene.indoor(r, c)) {
                indoor[i] = 1;
                continue;
            }
            double d = scene.cell_size * std::hypot(double(r - scene.bs_row),
                                                    double(c - scene.bs_col));
            double pl = p.pl0 + 10.0 * p.exponent *
                                    std::log10(std::max(d, p.ref_dist) / p.ref_dist);
            int walls = count_wall_crossings(scene, scene.bs_row, scene.bs_col, r, c);
            double g = -pl - p.wall_loss * walls;
            if (!shadow.empty()) g += shadow[i];
            gm.values.v[i] = float(g);
            gmax = std::max(gmax, g);
            gmin_outdoor = std::min(gmin_outdoor, g);
        }
    }

    gm.g_min = float(gmin_outdoor - p.floor_margin_db);
    gm.g_max = float(gmax);
    if (!(gm.g_max > gm.g_min)) gm.g_max = gm.g_min + 1.0f;
    for (size_t i = 0; i < indoor.size(); ++i)
        if (indoor[i]) gm.values.v[i] = gm.g_min;

    quantize_gain(gm);
    return gm;
}

std::vector<std::complex<double>> steering_vector(double theta, int n_antennas) {
    if (n_antennas < 1) throw usage_error("steering_vector: n_antennas must be >= 1");
    std::vector<std::complex<double>> a(static_cast<size_t>(n_antennas));
    const double s = std::sin(theta);
    for (int n = 0; n < n_antennas; ++n) {
        double phase = std::numbers::pi * double(n) * s;
        a[size_t(n)] = std::complex<double>(std::cos(phase), std::sin(phase));
    }
    return a;
}

CovarianceMap compute_scm(const Scene& scene, int row, int col, const PropagationParams& p) {
    if (row < 0 || row >= scene.height_px || col < 0 || col >= scene.width_px)
        throw data_error("compute_scm: location out of bounds");
    if (scene.indoor(row, col)) throw data_error("compute_scm: location is indoor");
    if (p.n_paths < 1) throw usage_error("compute_scm: n_paths must be >= 1");

    const int nt = scene.n_antennas;
    const int L = p.n_paths;

    auto bearing = [&](double sr, double sc) {
        return std::atan2(double(col) - sc, double(row) - sr);
    };
    const double theta0 = bearing(scene.bs_row, scene.bs_col);

    // distinct building corners ordered by (distance to loc, row, col)
    std::set<std::pair<int, int>> uniq;
    for (const auto& b : scene.buildings) {
        uniq.insert({b.row0, b.col0});
        uniq.insert({b.row0, b.col1});
        uniq.insert({b.row1, b.col0});
        uniq.insert({b.row1, b.col1});
    }
    std::vector<std::pair<int, int>> corners(uniq.begin(), uniq.end());
    std::sort(corners.begin(), corners.end(), [&](const auto& a, const auto& b) {
        long da = long(a.first - row) * (a.first - row) + long(a.second - col) * (a.second - col);
        long db = long(b.first - row) * (b.first - row) + long(b.second - col) * (b.second - col);
        if (da != db) return da < db;
        return a < b;
    });

    std::vector<double> thetas(static_cast<size_t>(L));
    std::vector<double> powers(static_cast<size_t>(L));
    double psum = 0;
    for (int l = 0; l < L; ++l) {
        if (l == 0) {
            thetas[0] = theta0;
        } else if (size_t(l - 1) < corners.size()) {
            thetas[size_t(l)] = bearing(corners[size_t(l - 1)].first, corners[size_t(l - 1)].second);
        } else {
            thetas[size_t(l)] = theta0 + 0.05 * double(l);
        }
        powers[size_t(l)] = std::pow(p.path_decay, double(l));
        psum += powers[size_t(l)];
    }

    // deterministic sum of rank-1 terms; upper triangle computed in double,
    // lower triangle mirrored so R == R^H holds bitwise in the stored floats
    std::vector<std::vector<std::complex<double>>> steer(static_cast<size_t>(L));
    for (int l = 0; l < L; ++l) steer[size_t(l)] = steering_vector(thetas[size_t(l)], nt);

    CovarianceMap out;
    out.R = CMatf(nt);
    out.row = row;
    out.col = col;
    for (int i = 0; i < nt; ++i) {
        for (int j = i; j < nt; ++j) {
            std::complex<double> acc(0, 0);
            for (int l = 0; l < L; ++l)
                acc += (powers[size_t(l)] / psum) * steer[size_t(l)][size_t(i)] *
                       std::conj(steer[size_t(l)][size_t(j)]);
            if (i == j) acc = std::complex<double>(acc.real(), 0.0);
            std::complex<float> value(float(acc.real()), float(acc.imag()));
            out.R.at(i, j) = value;
            if (i != j) out.R.at(j, i) = std::conj(value);
        }
    }
    return out;
}

std::vector<uint8_t> oracle_mask(const Scene& scene) {
    std::vector<uint8_t> m(size_t(scene.height_px) * scene.width_px, 1);
    for (int r = 0; r < scene.height_px; ++r)
        for (int c = 0; c < scene.width_px; ++c)
            if (scene.indoor(r, c)) m[size_t(r) * scene.width_px + c] = 0;
    return m;
}

}  // namespace ckmflow
