#ifndef CKMFLOW_CHECKPOINT_HPP
#define CKMFLOW_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ckmflow/net.hpp"
#include "ckmflow/optimizer.hpp"

namespace ckmflow {

// On-disk model state, little-endian: magic "CKMW", version u32=1, config
// echo (in_channels, out_channels, base_width, depth, time_embed_dim as
// u32), next_epoch u32, slice table (count u32, then per slice: name_len
// u32 + bytes, offset u64, ndims u32, dims u32[]), value count u64, f32
// values, has_adam u8, then optionally step u64 + f32 m[] + f32 v[].
struct Checkpoint {
    VelocityNetConfig config;
    uint32_t next_epoch = 0;
    std::vector<float> values;
    bool has_adam = false;
    uint64_t adam_step = 0;
    std::vector<float> adam_m, adam_v;
};

void save_checkpoint(const std::string& path, const VelocityNet<float>& net,
                     uint32_t next_epoch, const AdamState<float>* adam);

Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the network, verifying the stored slice table against the layout
// implied by the config echo, and installs the stored values.
VelocityNet<float> net_from_checkpoint(const Checkpoint& ck);

}  // namespace ckmflow

#endif
