#pragma once

#include "socmpc/ad/tensor.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <string>

namespace socmpc::ad {

static_assert(sizeof(double) == 8, "checkpoint format requires 8-byte doubles");

inline constexpr char kCheckpointMagic[8] = {'S', 'O', 'C', 'M', 'P', 'C', 'A', 'D'};
inline constexpr uint32_t kCheckpointVersion = 1;

/// Writes named parameters as flat little-endian binary:
/// magic, version, count, then per tensor (name length, name, rank, shape, payload).
inline void save_checkpoint(const std::map<std::string, Tensor>& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TensorError("cannot open checkpoint for writing: " + path);
    out.write(kCheckpointMagic, 8);
    const uint32_t version = kCheckpointVersion;
    const uint32_t count = static_cast<uint32_t>(params.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& [name, t] : params) {
        const uint32_t name_len = static_cast<uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&name_len), 4);
        out.write(name.data(), name_len);
        const uint32_t rank = static_cast<uint32_t>(t.rank());
        out.write(reinterpret_cast<const char*>(&rank), 4);
        for (int d : t.shape()) {
            const int64_t dim = d;
            out.write(reinterpret_cast<const char*>(&dim), 8);
        }
        out.write(reinterpret_cast<const char*>(t.values().data()),
                  static_cast<std::streamsize>(t.size() * 8));
    }
    if (!out) throw TensorError("checkpoint write failed: " + path);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TensorError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw TensorError("not a checkpoint file: " + path);
    uint32_t version = 0, count = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&count), 4);
    if (version != kCheckpointVersion)
        throw TensorError("unsupported checkpoint version " + std::to_string(version));
    std::map<std::string, Tensor> params;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), 4);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint32_t rank = 0;
        in.read(reinterpret_cast<char*>(&rank), 4);
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) {
            int64_t dim = 0;
            in.read(reinterpret_cast<char*>(&dim), 8);
            shape[d] = static_cast<int>(dim);
        }
        std::vector<double> data(static_cast<size_t>(detail::numel(shape)));
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 8));
        if (!in) throw TensorError("truncated checkpoint: " + path);
        params.emplace(std::move(name), Tensor::param(std::move(shape), std::move(data)));
    }
    return params;
}

}  // namespace socmpc::ad
