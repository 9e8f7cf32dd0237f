#include "ckmflow/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ckmflow/common.hpp"

namespace ckmflow {

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

void put_floats(std::ofstream& f, const std::vector<float>& v) {
    f.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 4));
}

void get_floats(std::ifstream& f, std::vector<float>& v, size_t n) {
    v.resize(n);
    f.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * 4));
}

}  // namespace

void save_checkpoint(const std::string& path, const VelocityNet<float>& net,
                     uint32_t next_epoch, const AdamState<float>* adam) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw data_error("cannot write checkpoint: " + path);
    const auto& cfg = net.config();
    const auto& ps = net.params();

    f.write("CKMW", 4);
    put_u32(f, 1);
    put_u32(f, uint32_t(cfg.in_channels));
    put_u32(f, uint32_t(cfg.out_channels));
    put_u32(f, uint32_t(cfg.base_width));
    put_u32(f, uint32_t(cfg.depth));
    put_u32(f, uint32_t(cfg.time_embed_dim));
    put_u32(f, next_epoch);

    put_u32(f, uint32_t(ps.slices.size()));
    for (const auto& s : ps.slices) {
        put_u32(f, uint32_t(s.name.size()));
        f.write(s.name.data(), std::streamsize(s.name.size()));
        put_u64(f, uint64_t(s.offset));
        put_u32(f, uint32_t(s.shape.size()));
        for (int d : s.shape) put_u32(f, uint32_t(d));
    }
    put_u64(f, uint64_t(ps.values.size()));
    put_floats(f, ps.values);

    const uint8_t has_adam = adam != nullptr && adam->m.size() == ps.values.size() ? 1 : 0;
    f.write(reinterpret_cast<const char*>(&has_adam), 1);
    if (has_adam) {
        put_u64(f, uint64_t(adam->step));
        put_floats(f, adam->m);
        put_floats(f, adam->v);
    }
    if (!f) throw data_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "CKMW", 4) != 0)
        throw data_error("bad checkpoint magic: " + path);
    if (get_u32(f) != 1) throw data_error("unsupported checkpoint version: " + path);

    Checkpoint ck;
    ck.config.in_channels = int(get_u32(f));
    ck.config.out_channels = int(get_u32(f));
    ck.config.base_width = int(get_u32(f));
    ck.config.depth = int(get_u32(f));
    ck.config.time_embed_dim = int(get_u32(f));
    ck.next_epoch = get_u32(f);

    const uint32_t n_slices = get_u32(f);
    // the table is validated against the rebuilt layout, not trusted
    std::vector<ParamStore<float>::Slice> table(n_slices);
    for (auto& s : table) {
        const uint32_t len = get_u32(f);
        if (len > 256) throw data_error("corrupt checkpoint slice name: " + path);
        s.name.resize(len);
        f.read(s.name.data(), len);
        s.offset = size_t(get_u64(f));
        const uint32_t nd = get_u32(f);
        if (nd > 8) throw data_error("corrupt checkpoint slice dims: " + path);
        s.shape.resize(nd);
        s.size = 1;
        for (auto& d : s.shape) {
            d = int(get_u32(f));
            s.size *= size_t(d);
        }
    }

    const uint64_t total = get_u64(f);
    if (!f || total > (uint64_t(1) << 32)) throw data_error("corrupt checkpoint: " + path);
    get_floats(f, ck.values, size_t(total));

    uint8_t has_adam = 0;
    f.read(reinterpret_cast<char*>(&has_adam), 1);
    if (!f) throw data_error("truncated checkpoint: " + path);
    if (has_adam) {
        ck.has_adam = true;
        ck.adam_step = get_u64(f);
        get_floats(f, ck.adam_m, size_t(total));
        get_floats(f, ck.adam_v, size_t(total));
        if (!f) throw data_error("truncated optimizer state: " + path);
    }

    // cross-check the slice table against the config echo
    VelocityNet<float> probe(ck.config);
    const auto& want = probe.params().slices;
    if (want.size() != table.size() || probe.param_count() != ck.values.size())
        throw data_error("checkpoint layout mismatch: " + path);
    for (size_t i = 0; i < table.size(); ++i) {
        if (table[i].name != want[i].name || table[i].offset != want[i].offset ||
            table[i].shape != want[i].shape)
            throw data_error("checkpoint slice mismatch at " + table[i].name + ": " + path);
    }
    return ck;
}

VelocityNet<float> net_from_checkpoint(const Checkpoint& ck) {
    VelocityNet<float> net(ck.config);
    if (net.param_count() != ck.values.size())
        throw data_error("checkpoint value count does not match config");
    net.params().values = ck.values;
    return net;
}

}  // namespace ckmflow
