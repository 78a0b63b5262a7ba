#include "mtunet/model.hpp"

#include <cmath>

namespace mtunet {

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::MT: return "MT";
        case Variant::MT_B: return "MT-B";
        case Variant::MT_T: return "MT-T";
        case Variant::UNET_S: return "UNET-S";
        case Variant::UNET_C: return "UNET-C";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : {Variant::MT, Variant::MT_B, Variant::MT_T, Variant::UNET_S, Variant::UNET_C})
        if (to_string(v) == name) return v;
    throw ConfigError("unknown variant '" + std::string(name) + "' (expected MT, MT-B, MT-T, UNET-S, UNET-C)");
}

void ModelConfig::validate() const {
    if (depth < 1) throw ConfigError("depth must be >= 1");
    if (base_features < 1) throw ConfigError("base_features must be >= 1");
    const std::size_t unit = std::size_t{1} << depth;
    if (height == 0 || width == 0 || height % unit != 0 || width % unit != 0)
        throw ConfigError("input extents " + std::to_string(height) + "x" + std::to_string(width) +
                          " must be positive multiples of 2^depth = " + std::to_string(unit));
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0,1)");
    if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
}

std::size_t ModelConfig::head_input_width() const {
    switch (variant) {
        case Variant::MT: return features_at(depth) + base_features;
        case Variant::MT_B:
        case Variant::UNET_C: return features_at(depth);
        case Variant::MT_T: return base_features;
        case Variant::UNET_S: return 0;
    }
    return 0;
}

template <typename T>
typename Model<T>::Conv Model<T>::add_conv(const std::string& name, std::size_t fin, std::size_t fout,
                                           std::size_t k, SeededRng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fin * k * k));
    Tensor<T> w({fout, fin, k, k});
    for (auto& v : w.data()) v = static_cast<T>(rng.normal() * stddev);
    Conv c;
    c.weight = params_.size();
    params_.emplace_back(name + ".weight", std::move(w));
    c.bias = params_.size();
    params_.emplace_back(name + ".bias", Tensor<T>({fout}));
    return c;
}

template <typename T>
typename Model<T>::Conv Model<T>::add_dense(const std::string& name, std::size_t fin, std::size_t fout,
                                            SeededRng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fin));
    Tensor<T> w({fout, fin});
    for (auto& v : w.data()) v = static_cast<T>(rng.normal() * stddev);
    Conv c;
    c.weight = params_.size();
    params_.emplace_back(name + ".weight", std::move(w));
    c.bias = params_.size();
    params_.emplace_back(name + ".bias", Tensor<T>({fout}));
    return c;
}

template <typename T>
Model<T> Model<T>::build(const ModelConfig& config, SeededRng& rng) {
    config.validate();
    Model m;
    m.config_ = config;
    const std::size_t depth = config.depth;

    // The trunk is built identically for every variant so parameter streams
    // line up across variants for a given seed.
    std::size_t fin = 1;
    for (std::size_t l = 0; l < depth; ++l) {
        const std::size_t f = config.features_at(l);
        const std::string name = "enc" + std::to_string(l);
        Block b;
        b.first = m.add_conv(name + ".conv1", fin, f, 3, rng);
        b.second = m.add_conv(name + ".conv2", f, f, 3, rng);
        m.layout_.encoder.push_back(b);
        fin = f;
    }
    const std::size_t fb = config.features_at(depth);
    m.layout_.bottleneck.first = m.add_conv("bottleneck.conv1", fin, fb, 3, rng);
    m.layout_.bottleneck.second = m.add_conv("bottleneck.conv2", fb, fb, 3, rng);

    m.layout_.decoder.resize(depth);
    for (std::size_t l = depth; l-- > 0;) {
        const std::size_t f = config.features_at(l);
        const std::string name = "dec" + std::to_string(l);
        DecoderLevel d;
        d.up = m.add_conv(name + ".up", config.features_at(l + 1), f, 3, rng);
        d.block.first = m.add_conv(name + ".conv1", 2 * f, f, 3, rng);
        d.block.second = m.add_conv(name + ".conv2", f, f, 3, rng);
        m.layout_.decoder[l] = d;
    }

    if (has_saliency_head(config.variant))
        m.layout_.saliency_head = m.add_conv("saliency_head", config.base_features, 1, 1, rng);
    if (has_class_head(config.variant)) {
        m.layout_.fc1 = m.add_dense("class_head.fc1", config.head_input_width(), config.head_hidden, rng);
        m.layout_.fc2 = m.add_dense("class_head.fc2", config.head_hidden, config.num_classes, rng);
    }
    return m;
}

template <typename T>
GraphOutput<T> Model<T>::forward_graph(Tape<T>& tape, Var<T> x, const ForwardOptions& opts, bool track_params) {
    const auto& xs = x.shape();
    if (xs.size() != 3 || xs[0] != 1 || xs[1] != config_.height || xs[2] != config_.width)
        throw ShapeError("model input must be [1," + std::to_string(config_.height) + "," +
                         std::to_string(config_.width) + "], got " + shape_str(xs));

    auto bind = [&](std::size_t idx) {
        return track_params ? tape.param(params_[idx]) : tape.constant(params_[idx].value);
    };
    auto conv = [&](Var<T> h, const Conv& c) { return conv2d(h, bind(c.weight), bind(c.bias)); };
    auto block = [&](Var<T> h, const Block& b) { return relu(conv(relu(conv(h, b.first)), b.second)); };

    const Variant variant = config_.variant;
    std::vector<Var<T>> skips;
    Var<T> h = x;
    for (const auto& level : layout_.encoder) {
        h = block(h, level);
        skips.push_back(h);
        h = max_pool2(h);
    }
    const Var<T> bottleneck = block(h, layout_.bottleneck);

    GraphOutput<T> out;
    std::optional<Var<T>> top;
    if (variant != Variant::UNET_C) {
        h = bottleneck;
        for (std::size_t l = config_.depth; l-- > 0;) {
            const auto& d = layout_.decoder[l];
            h = relu(upsample2(h, bind(d.up.weight), bind(d.up.bias)));
            Var<T> skip = skips[l];
            if (opts.drop_skip_level && *opts.drop_skip_level == l) skip = tape.constant(Tensor<T>(skip.shape()));
            h = block(concat_features(skip, h), d.block);
        }
        top = h;
    }

    if (layout_.saliency_head) out.saliency = softmax_spatial(conv(*top, *layout_.saliency_head));

    if (layout_.fc1) {
        Var<T> features = [&] {
            switch (variant) {
                case Variant::MT: return concat_features(global_avg_pool(bottleneck), global_avg_pool(*top));
                case Variant::MT_T: return global_avg_pool(*top);
                default: return global_avg_pool(bottleneck);
            }
        }();
        Var<T> z = relu(dense(features, bind(layout_.fc1->weight), bind(layout_.fc1->bias)));
        if (opts.train && config_.dropout_rate > 0.0) {
            if (!opts.rng) throw ConfigError("train-mode forward needs an rng for dropout");
            z = dropout(z, config_.dropout_rate, true, *opts.rng);
        }
        z = dense(z, bind(layout_.fc2->weight), bind(layout_.fc2->bias));
        out.classes = softmax_vec(z);
    }
    return out;
}

template <typename T>
ModelOutput<T> Model<T>::forward(const Tensor<T>& x, const ForwardOptions& opts) {
    Tape<T> tape;
    auto g = forward_graph(tape, tape.constant(x), opts, false);
    ModelOutput<T> out;
    if (g.saliency) {
        const auto& v = g.saliency->value();
        out.saliency = Tensor<T>({config_.height, config_.width}, std::vector<T>(v.data().begin(), v.data().end()));
    }
    if (g.classes) out.classes = g.classes->value();
    return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

template <typename T>
ParamRefs<T> Model<T>::parameters() {
    ParamRefs<T> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
}

template <typename T>
std::vector<const Parameter<T>*> Model<T>::parameters() const {
    std::vector<const Parameter<T>*> out;
    for (const auto& p : params_) out.push_back(&p);
    return out;
}

template <typename T>
Parameter<T>* Model<T>::find(std::string_view id) {
    for (auto& p : params_)
        if (p.id == id) return &p;
    return nullptr;
}

template <typename T>
void Model<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template class Model<float>;
template class Model<double>;

}  // namespace mtunet
