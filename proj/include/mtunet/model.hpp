#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtunet/rng.hpp"
#include "mtunet/tape.hpp"
#include "mtunet/tensor.hpp"

namespace mtunet {

// MT: head sees pooled bottleneck and top-decoder features.
// MT_B / MT_T: bottleneck only / top decoder only.
// UNET_S: saliency only. UNET_C: classification head on the bottleneck only.
enum class Variant { MT, MT_B, MT_T, UNET_S, UNET_C };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

inline bool has_saliency_head(Variant v) { return v != Variant::UNET_C; }
inline bool has_class_head(Variant v) { return v != Variant::UNET_S; }

struct ModelConfig {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t depth = 3;
    std::size_t base_features = 8;
    std::size_t num_classes = 3;
    Variant variant = Variant::MT;
    double dropout_rate = 0.25;
    std::size_t head_hidden = 32;

    void validate() const;
    // Feature count at encoder level `level`; level == depth is the bottleneck.
    std::size_t features_at(std::size_t level) const { return base_features << level; }
    std::size_t head_input_width() const;

    bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ModelOutput {
    std::optional<Tensor<T>> saliency;  // [H,W]
    std::optional<Tensor<T>> classes;   // [C]
};

template <typename T>
struct GraphOutput {
    std::optional<Var<T>> saliency;
    std::optional<Var<T>> classes;
};

struct ForwardOptions {
    bool train = false;
    SeededRng* rng = nullptr;  // required when train is set and dropout > 0
    // Replace the skip tensor of this encoder level with zeros. Probe only.
    std::optional<std::size_t> drop_skip_level;
};

template <typename T>
class Model {
public:
    static Model build(const ModelConfig& config, SeededRng& rng);

    const ModelConfig& config() const { return config_; }

    // Records the forward pass on `tape`. When `track_params` is false the
    // weights enter the tape as constants and no parameter gradients flow.
    GraphOutput<T> forward_graph(Tape<T>& tape, Var<T> x, const ForwardOptions& opts,
                                 bool track_params = true);

    ModelOutput<T> forward(const Tensor<T>& x, const ForwardOptions& opts = {});

    std::size_t parameter_count() const;
    ParamRefs<T> parameters();
    std::vector<const Parameter<T>*> parameters() const;
    Parameter<T>* find(std::string_view id);

    void zero_grad();

    template <typename U>
    Model<U> cast() const {
        Model<U> out;
        out.config_ = config_;
        out.layout_ = layout_;
        for (const auto& p : params_) out.params_.emplace_back(p.id, p.value.template cast<U>());
        return out;
    }

private:
    template <typename>
    friend class Model;

    struct Conv {
        std::size_t weight = 0, bias = 0;
    };
    struct Block {
        Conv first, second;
    };
    struct DecoderLevel {
        Conv up;
        Block block;
    };
    struct Layout {
        std::vector<Block> encoder;
        Block bottleneck;
        std::vector<DecoderLevel> decoder;
        std::optional<Conv> saliency_head;
        std::optional<Conv> fc1, fc2;
    };

    Conv add_conv(const std::string& name, std::size_t fin, std::size_t fout, std::size_t k, SeededRng& rng);
    Conv add_dense(const std::string& name, std::size_t fin, std::size_t fout, SeededRng& rng);

    ModelConfig config_;
    Layout layout_;
    std::vector<Parameter<T>> params_;
};

}  // namespace mtunet
