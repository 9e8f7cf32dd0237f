#include "ckmflow/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ckmflow/common.hpp"
#include "ckmflow/rng.hpp"

namespace ckmflow {

Task parse_task(const std::string& s) {
    if (s == "a" || s == "A") return Task::gain;
    if (s == "b" || s == "B") return Task::covariance;
    throw usage_error("unknown task '" + s + "' (expected a or b)");
}

std::string task_name(Task t) { return t == Task::gain ? "a" : "b"; }

std::vector<std::pair<int, int>> neighbor_ring(int delta_px) {
    if (delta_px < 1) throw usage_error("neighbor_delta_px must be >= 1");
    const int d = delta_px;
    return {{-d, 0}, {-d, d}, {0, d}, {d, d}, {d, 0}, {d, -d}, {0, -d}, {-d, -d}};
}

namespace {

void put_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& f, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t get_u64(std::ifstream& f) {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

void write_cmat(float* dst, const CMatf& m) {
    const size_t n2 = size_t(m.n) * m.n;
    for (size_t k = 0; k < n2; ++k) dst[k] = m.m[k].real();
    for (size_t k = 0; k < n2; ++k) dst[n2 + k] = m.m[k].imag();
}

void fill_gain_record(float* dst, uint64_t rec_seed, const DatasetConfig& cfg) {
    Scene scene = generate_scene(rec_seed, cfg.scene);
    GainMap gm = compute_gain_map(scene, cfg.prop);
    std::vector<uint8_t> mask = oracle_mask(scene);
    const size_t hw = size_t(gm.h) * gm.w;
    for (size_t k = 0; k < hw; ++k) dst[k] = float(gm.quantized[k]);
    for (size_t k = 0; k < hw; ++k) dst[hw + k] = float(mask[k]);
}

void fill_cov_record(float* dst, uint64_t rec_seed, const DatasetConfig& cfg) {
    Scene scene = generate_scene(rec_seed, cfg.scene);
    auto ring = neighbor_ring(cfg.neighbor_delta_px);
    Rng rng(derive_seed(rec_seed, 0x10c));

    int row = -1, col = -1;
    for (int attempt = 0; attempt < cfg.max_tries; ++attempt) {
        int r = int(rng.randint(uint64_t(scene.height_px)));
        int c = int(rng.randint(uint64_t(scene.width_px)));
        if (scene.indoor(r, c)) continue;
        bool ok = true;
        for (auto [dr, dc] : ring) {
            int nr = r + dr, nc = c + dc;
            if (nr < 0 || nr >= scene.height_px || nc < 0 || nc >= scene.width_px ||
                scene.indoor(nr, nc)) {
                ok = false;
                break;
            }
        }
        if (ok) {
            row = r;
            col = c;
            break;
        }
    }
    if (row < 0)
        throw data_error("covariance target placement failed after " +
                         std::to_string(cfg.max_tries) + " tries");

    const size_t n2x2 = size_t(2) * scene.n_antennas * scene.n_antennas;
    write_cmat(dst, compute_scm(scene, row, col, cfg.prop).R);
    for (size_t j = 0; j < ring.size(); ++j) {
        CovarianceMap nb =
            compute_scm(scene, row + ring[j].first, col + ring[j].second, cfg.prop);
        write_cmat(dst + (j + 1) * n2x2, nb.R);
    }
}

}  // namespace

void generate_dataset(Task task, int n_records, uint64_t seed, const DatasetConfig& cfg,
                      const std::string& path) {
    if (n_records < 1) throw usage_error("n_records must be >= 1");

    uint32_t d0, d1;
    if (task == Task::gain) {
        d0 = uint32_t(cfg.scene.height_px);
        d1 = uint32_t(cfg.scene.width_px);
    } else {
        d0 = uint32_t(cfg.scene.n_antennas);
        d1 = 8;
    }
    const size_t rec_floats = task == Task::gain ? size_t(2) * d0 * d1
                                                 : size_t(1 + d1) * 2 * d0 * d0;
    std::vector<float> payload(size_t(n_records) * rec_floats);

    // each record is a pure function of (seed, index), so slices fill in parallel
    std::atomic<bool> failed{false};
    std::string fail_msg;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n_records; ++i) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
            float* dst = payload.data() + size_t(i) * rec_floats;
            uint64_t rec_seed = derive_seed(seed, uint64_t(i));
            if (task == Task::gain)
                fill_gain_record(dst, rec_seed, cfg);
            else
                fill_cov_record(dst, rec_seed, cfg);
        } catch (const std::exception& e) {
#pragma omp critical
            {
                failed = true;
                fail_msg = e.what();
            }
        }
    }
    if (failed) throw data_error("record generation failed: " + fail_msg);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw data_error("cannot open for writing: " + path);
    f.write("CKMF", 4);
    put_u32(f, 1);
    char tag = char(uint8_t(task));
    f.write(&tag, 1);
    put_u64(f, uint64_t(n_records));
    put_u32(f, d0);
    put_u32(f, d1);
    f.write(reinterpret_cast<const char*>(payload.data()),
            std::streamsize(payload.size() * sizeof(float)));
    if (!f) throw data_error("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open dataset: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "CKMF", 4) != 0)
        throw data_error("bad dataset magic: " + path);
    uint32_t version = get_u32(f);
    if (version != 1) throw data_error("unsupported dataset version " + std::to_string(version));
    char tag;
    f.read(&tag, 1);
    if (tag != 0 && tag != 1) throw data_error("bad task tag in " + path);

    Dataset ds;
    ds.task = Task(uint8_t(tag));
    ds.count = get_u64(f);
    ds.d0 = get_u32(f);
    ds.d1 = get_u32(f);
    if (!f || ds.d0 == 0 || ds.d1 == 0 || ds.count == 0)
        throw data_error("bad dataset header: " + path);

    ds.payload.resize(size_t(ds.count) * ds.record_floats());
    f.read(reinterpret_cast<char*>(ds.payload.data()),
           std::streamsize(ds.payload.size() * sizeof(float)));
    if (!f) throw data_error("truncated dataset payload: " + path);
    char extra;
    if (f.read(&extra, 1)) throw data_error("trailing bytes in dataset: " + path);
    return ds;
}

Tensorf Dataset::gain_target(size_t i) const {
    if (task != Task::gain) throw data_error("gain_target on covariance dataset");
    Tensorf t(1, int(d0), int(d1));
    const float* r = record(i);
    std::copy(r, r + t.v.size(), t.v.begin());
    return t;
}

Tensorf Dataset::gain_mask(size_t i) const {
    if (task != Task::gain) throw data_error("gain_mask on covariance dataset");
    Tensorf t(1, int(d0), int(d1));
    const float* r = record(i) + size_t(d0) * d1;
    std::copy(r, r + t.v.size(), t.v.begin());
    return t;
}

CMatf Dataset::cov_matrix(size_t i, size_t j) const {
    if (task != Task::covariance) throw data_error("cov_matrix on gain dataset");
    if (j > d1) throw usage_error("neighbor index out of range");
    CMatf m(static_cast<int>(d0));
    const size_t n2 = size_t(d0) * d0;
    const float* r = record(i) + j * 2 * n2;
    for (size_t k = 0; k < n2; ++k) m.m[k] = std::complex<float>(r[k], r[n2 + k]);
    return m;
}

Split split_dataset(uint64_t count, double test_fraction) {
    if (test_fraction < 0 || test_fraction >= 1)
        throw usage_error("test_fraction must lie in [0, 1)");
    std::vector<size_t> order(static_cast<size_t>(count));
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(), [](size_t a, size_t b) {
        uint64_t ha = splitmix64(uint64_t(a)), hb = splitmix64(uint64_t(b));
        if (ha != hb) return ha < hb;
        return a < b;
    });
    size_t n_test = size_t(double(count) * test_fraction);
    Split s;
    s.test.assign(order.begin(), order.begin() + ptrdiff_t(n_test));
    s.train.assign(order.begin() + ptrdiff_t(n_test), order.end());
    std::sort(s.test.begin(), s.test.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

uint64_t hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open for hashing: " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (f.read(buf, sizeof buf) || f.gcount() > 0) {
        std::streamsize n = f.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= uint8_t(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!f) break;
    }
    return h;
}

}  // namespace ckmflow
