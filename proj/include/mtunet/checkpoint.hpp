#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtunet/model.hpp"
#include "mtunet/tensor.hpp"

namespace mtunet {

// Parameter values (network weights and sigmas) captured at one epoch.
template <typename T>
struct Checkpoint {
    struct Entry {
        std::string id;
        Tensor<T> value;
        bool operator==(const Entry&) const = default;
    };
    std::vector<Entry> entries;
    int epoch = 0;
    double val_loss = 0.0;

    bool operator==(const Checkpoint&) const = default;
};

template <typename T>
Checkpoint<T> snapshot(const ParamRefs<T>& params, int epoch = 0, double val_loss = 0.0) {
    Checkpoint<T> c;
    c.epoch = epoch;
    c.val_loss = val_loss;
    c.entries.reserve(params.size());
    for (const auto* p : params) c.entries.push_back({p->id, p->value});
    return c;
}

// Every parameter must be present in the checkpoint with a matching shape.
template <typename T>
void restore(const ParamRefs<T>& params, const Checkpoint<T>& c) {
    for (auto* p : params) {
        const typename Checkpoint<T>::Entry* hit = nullptr;
        for (const auto& e : c.entries)
            if (e.id == p->id) {
                hit = &e;
                break;
            }
        if (!hit) throw FormatError("checkpoint has no entry for parameter '" + p->id + "'");
        if (hit->value.shape() != p->value.shape())
            throw ShapeError("checkpoint entry '" + p->id + "' has shape " + shape_str(hit->value.shape()) +
                             ", parameter expects " + shape_str(p->value.shape()));
        p->value = hit->value;
    }
}

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Writes `manifest` (JSON) plus a sibling blob of little-endian float32
// values concatenated in manifest order. `meta` is stored verbatim.
void save_checkpoint(const std::filesystem::path& manifest, const Checkpoint<float>& c,
                     const nlohmann::json& meta = nlohmann::json::object());

struct LoadedCheckpoint {
    Checkpoint<float> checkpoint;
    nlohmann::json meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& manifest);

// Little-endian float32 helpers shared with the dataset format.
void append_f32_le(std::vector<unsigned char>& out, float v);
float read_f32_le(const unsigned char* p);
void append_u32_le(std::vector<unsigned char>& out, std::uint32_t v);
std::uint32_t read_u32_le(const unsigned char* p);

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);
std::uint32_t crc32_of(const std::vector<unsigned char>& bytes);

}  // namespace mtunet
