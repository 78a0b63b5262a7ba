#include "mtunet/checkpoint.hpp"

#include <bit>
#include <fstream>

#include <zlib.h>

namespace mtunet {

namespace fs = std::filesystem;
using nlohmann::json;

void append_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_f32_le(std::vector<unsigned char>& out, float v) { append_u32_le(out, std::bit_cast<std::uint32_t>(v)); }

float read_f32_le(const unsigned char* p) { return std::bit_cast<float>(read_u32_le(p)); }

std::vector<unsigned char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

std::uint32_t crc32_of(const std::vector<unsigned char>& bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

json to_json(const ModelConfig& c) {
    return {{"height", c.height},
            {"width", c.width},
            {"depth", c.depth},
            {"base_features", c.base_features},
            {"num_classes", c.num_classes},
            {"variant", std::string(to_string(c.variant))},
            {"dropout_rate", c.dropout_rate},
            {"head_hidden", c.head_hidden}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    try {
        c.height = j.value("height", c.height);
        c.width = j.value("width", c.width);
        c.depth = j.value("depth", c.depth);
        c.base_features = j.value("base_features", c.base_features);
        c.num_classes = j.value("num_classes", c.num_classes);
        if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
        c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
        c.head_hidden = j.value("head_hidden", c.head_hidden);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
    c.validate();
    return c;
}

void save_checkpoint(const fs::path& manifest, const Checkpoint<float>& c, const json& meta) {
    fs::path blob_path = manifest;
    blob_path.replace_extension(".bin");

    std::vector<unsigned char> blob;
    json params = json::array();
    for (const auto& e : c.entries) {
        params.push_back({{"id", e.id}, {"shape", e.value.shape()}});
        for (float v : e.value.data()) append_f32_le(blob, v);
    }
    json m = {{"format", "mtunet-checkpoint"},
              {"version", 1},
              {"dtype", "float32-le"},
              {"blob", blob_path.filename().string()},
              {"blob_bytes", blob.size()},
              {"blob_crc32", crc32_of(blob)},
              {"epoch", c.epoch},
              {"val_loss", c.val_loss},
              {"parameters", params},
              {"meta", meta}};
    if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
    write_file(blob_path, blob);
    const std::string text = m.dump(2) + "\n";
    write_file(manifest, std::vector<unsigned char>(text.begin(), text.end()));
}

LoadedCheckpoint load_checkpoint(const fs::path& manifest) {
    json m;
    try {
        const auto bytes = read_file(manifest);
        m = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw FormatError("malformed checkpoint manifest " + manifest.string() + ": " + e.what());
    }
    LoadedCheckpoint out;
    try {
        if (m.at("format") != "mtunet-checkpoint") throw FormatError("not a checkpoint manifest");
        const auto blob = read_file(manifest.parent_path() / m.at("blob").get<std::string>());
        if (blob.size() != m.at("blob_bytes").get<std::size_t>())
            throw FormatError("checkpoint blob truncated: expected " +
                              std::to_string(m.at("blob_bytes").get<std::size_t>()) + " bytes, found " +
                              std::to_string(blob.size()));
        if (crc32_of(blob) != m.at("blob_crc32").get<std::uint32_t>())
            throw FormatError("checkpoint blob checksum mismatch");
        std::size_t offset = 0;
        for (const auto& p : m.at("parameters")) {
            Shape shape = p.at("shape").get<Shape>();
            const std::size_t n = shape_size(shape);
            if (offset + 4 * n > blob.size()) throw FormatError("checkpoint blob shorter than manifest");
            std::vector<float> values(n);
            for (std::size_t i = 0; i < n; ++i) values[i] = read_f32_le(blob.data() + offset + 4 * i);
            offset += 4 * n;
            out.checkpoint.entries.push_back({p.at("id").get<std::string>(), Tensor<float>(shape, std::move(values))});
        }
        if (offset != blob.size()) throw FormatError("checkpoint blob longer than manifest");
        out.checkpoint.epoch = m.at("epoch").get<int>();
        out.checkpoint.val_loss = m.at("val_loss").get<double>();
        out.meta = m.value("meta", json::object());
    } catch (const json::exception& e) {
        throw FormatError("malformed checkpoint manifest " + manifest.string() + ": " + e.what());
    }
    return out;
}

}  // namespace mtunet
