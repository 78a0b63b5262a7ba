#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "mtunet/tensor.hpp"

namespace mtunet {

struct Sample {
    Tensor<float> image;     // [1,H,W], values k/255
    Tensor<float> saliency;  // [H,W], non-negative, sums to 1
    int label = 0;

    bool operator==(const Sample&) const = default;
};

struct Dataset {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t num_classes = 0;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    bool operator==(const Dataset&) const = default;
};

struct SynthConfig {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t num_classes = 3;
    std::size_t samples_per_class = 300;
    double noise = 0.3;        // background is uniform in [0, noise]
    double blob_spread = 6.0;  // saliency Gaussian standard deviation in pixels
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

// Class 0 draws one disc, class 1 a large ellipse, class 2 two discs, each at
// a seeded random pose over uniform noise. The saliency target is an
// isotropic Gaussian on the disc, the ellipse centre, or the midpoint of the
// disc pair. Samples are ordered class-major.
Dataset generate(const SynthConfig& config);

struct SplitSpec {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Split {
    std::vector<std::size_t> train, val, test;  // indices into the dataset
};

// Per class: seeded shuffle, then contiguous train/val/test cuts of
// floor(fraction * n) each; the remainder goes to train.
Split stratified_split(const Dataset& dataset, const SplitSpec& spec);

// Directory layout: dataset.json, images/NNNNN.pgm (P5, 8-bit) and
// saliency/NNNNN.bin (u32 H, u32 W, then H*W float32, all little-endian).
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                  const nlohmann::json& provenance = nlohmann::json::object());
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<unsigned char> encode_pgm(const Tensor<float>& image);
Tensor<float> decode_pgm(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> encode_saliency(const Tensor<float>& saliency);
Tensor<float> decode_saliency(const std::vector<unsigned char>& bytes);

}  // namespace mtunet
