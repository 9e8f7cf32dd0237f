#ifndef CKMFLOW_DATASET_HPP
#define CKMFLOW_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ckmflow/scene.hpp"
#include "ckmflow/tensor.hpp"

namespace ckmflow {

enum class Task : uint8_t { gain = 0, covariance = 1 };

Task parse_task(const std::string& s);           // "a"/"A" or "b"/"B"
std::string task_name(Task t);                   // "a" or "b"

struct DatasetConfig {
    SceneConfig scene;
    PropagationParams prop;
    int neighbor_delta_px = 2;  // ring spacing for covariance records
    int max_tries = 200;        // target placement resampling budget
};

// Offsets of the 8 ring neighbors in (row, col), order N NE E SE S SW W NW.
std::vector<std::pair<int, int>> neighbor_ring(int delta_px);

// In-memory view of one file: header plus the contiguous f32 payload.
// Gain records hold quantized values then the outdoor mask (d0*d1 each).
// Covariance records hold the target then K neighbors, each as a real
// plane followed by an imag plane of d0*d0 floats.
struct Dataset {
    Task task = Task::gain;
    uint32_t d0 = 0, d1 = 0;  // gain: H,W  covariance: N_t,K
    uint64_t count = 0;
    std::vector<float> payload;

    size_t record_floats() const {
        if (task == Task::gain) return size_t(2) * d0 * d1;
        return size_t(1 + d1) * 2 * d0 * d0;
    }
    const float* record(size_t i) const { return payload.data() + i * record_floats(); }

    Tensorf gain_target(size_t i) const;       // 1 x H x W, values in [0,255]
    Tensorf gain_mask(size_t i) const;         // 1 x H x W, 1 = outdoor
    CMatf cov_matrix(size_t i, size_t j) const;  // j = 0 target, 1..K neighbors
};

void generate_dataset(Task task, int n_records, uint64_t seed, const DatasetConfig& cfg,
                      const std::string& path);

Dataset load_dataset(const std::string& path);

// Deterministic 90/10-style split: records ranked by hash of their index,
// lowest floor(count * test_fraction) become the test set.
struct Split {
    std::vector<size_t> train, test;
};
Split split_dataset(uint64_t count, double test_fraction = 0.1);

uint64_t hash_file(const std::string& path);  // FNV-1a over raw bytes

}  // namespace ckmflow

#endif
