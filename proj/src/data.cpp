#include "mtunet/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "mtunet/checkpoint.hpp"
#include "mtunet/rng.hpp"

namespace mtunet {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthConfig::validate() const {
    if (height < 16 || width < 16) throw ConfigError("synthetic images must be at least 16x16");
    if (num_classes < 2 || num_classes > 3) throw ConfigError("synthetic generator supports 2 or 3 classes");
    if (samples_per_class < 1) throw ConfigError("samples_per_class must be >= 1");
    if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("noise must lie in [0,1)");
    if (!(blob_spread > 0.0)) throw ConfigError("blob_spread must be positive");
}

json to_json(const SynthConfig& c) {
    return {{"height", c.height},
            {"width", c.width},
            {"num_classes", c.num_classes},
            {"samples_per_class", c.samples_per_class},
            {"noise", c.noise},
            {"blob_spread", c.blob_spread},
            {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const json& j) {
    SynthConfig c;
    try {
        c.height = j.value("height", c.height);
        c.width = j.value("width", c.width);
        c.num_classes = j.value("num_classes", c.num_classes);
        c.samples_per_class = j.value("samples_per_class", c.samples_per_class);
        c.noise = j.value("noise", c.noise);
        c.blob_spread = j.value("blob_spread", c.blob_spread);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad synth config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

struct Point {
    double x, y;
};

// Membership test in image coordinates (pixel centres at integer + 0.5).
using Mask = std::vector<unsigned char>;

void paint_disc(Mask& m, std::size_t h, std::size_t w, Point c, double r) {
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = x + 0.5 - c.x, dy = y + 0.5 - c.y;
            if (dx * dx + dy * dy <= r * r) m[y * w + x] = 1;
        }
}

void paint_ellipse(Mask& m, std::size_t h, std::size_t w, Point c, double a, double b, double angle) {
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = x + 0.5 - c.x, dy = y + 0.5 - c.y;
            const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
            if ((u * u) / (a * a) + (v * v) / (b * b) <= 1.0) m[y * w + x] = 1;
        }
}

Tensor<float> gaussian_map(std::size_t h, std::size_t w, Point c, double spread) {
    std::vector<double> g(h * w);
    double z = 0.0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = x + 0.5 - c.x, dy = y + 0.5 - c.y;
            g[y * w + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * spread * spread));
            z += g[y * w + x];
        }
    Tensor<float> out({h, w});
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = static_cast<float>(g[i] / z);
    return out;
}

Sample make_sample(const SynthConfig& cfg, int label, SeededRng& rng) {
    const std::size_t h = cfg.height, w = cfg.width;
    const double s = static_cast<double>(std::min(h, w)) / 64.0;
    auto pick = [&](double margin) {
        return Point{rng.uniform(margin, static_cast<double>(w) - margin),
                     rng.uniform(margin, static_cast<double>(h) - margin)};
    };

    Mask mask(h * w, 0);
    Point focus{};
    switch (label) {
        case 0: {
            const double r = rng.uniform(4.0, 6.0) * s;
            focus = pick(r + 2.0 * s);
            paint_disc(mask, h, w, focus, r);
            break;
        }
        case 1: {
            const double a = rng.uniform(11.0, 15.0) * s;
            const double b = rng.uniform(6.0, 9.0) * s;
            const double angle = rng.uniform(0.0, std::numbers::pi);
            focus = pick(a + 2.0 * s);
            paint_ellipse(mask, h, w, focus, a, b, angle);
            break;
        }
        default: {
            const double r = rng.uniform(3.5, 5.0) * s;
            const double half = rng.uniform(6.0, 9.0) * s;
            const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
            focus = pick(half + r + 2.0 * s);
            const Point d{half * std::cos(angle), half * std::sin(angle)};
            paint_disc(mask, h, w, {focus.x + d.x, focus.y + d.y}, r);
            paint_disc(mask, h, w, {focus.x - d.x, focus.y - d.y}, r);
            break;
        }
    }

    const double intensity = rng.uniform(0.55, 0.7);
    Tensor<float> image({1, h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        double v = rng.uniform(0.0, cfg.noise);
        if (mask[i]) v += intensity;
        const auto q = static_cast<long>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        image[i] = static_cast<float>(q) / 255.0f;
    }
    return {std::move(image), gaussian_map(h, w, focus, cfg.blob_spread * s), label};
}

}  // namespace

Dataset generate(const SynthConfig& config) {
    config.validate();
    Dataset d;
    d.height = config.height;
    d.width = config.width;
    d.num_classes = config.num_classes;
    SeededRng rng(config.seed);
    for (std::size_t c = 0; c < config.num_classes; ++c)
        for (std::size_t i = 0; i < config.samples_per_class; ++i)
            d.samples.push_back(make_sample(config, static_cast<int>(c), rng));
    return d;
}

void SplitSpec::validate() const {
    if (train < 0.0 || val < 0.0 || test < 0.0 || std::abs(train + val + test - 1.0) > 1e-9)
        throw ConfigError("split fractions must be non-negative and sum to 1");
}

Split stratified_split(const Dataset& dataset, const SplitSpec& spec) {
    spec.validate();
    std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const int label = dataset.samples[i].label;
        if (label < 0 || static_cast<std::size_t>(label) >= dataset.num_classes)
            throw FormatError("sample " + std::to_string(i) + " has out-of-range label");
        by_class[static_cast<std::size_t>(label)].push_back(i);
    }
    auto cut = [](double fraction, std::size_t n) {
        return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    };
    Split out;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (members.size() < 3)
            throw ConfigError("class " + std::to_string(c) + " has fewer than 3 samples; cannot split");
        SeededRng rng(SeededRng::derive(spec.seed, c));
        rng.shuffle(members);
        const std::size_t n_val = cut(spec.val, members.size());
        const std::size_t n_test = cut(spec.test, members.size());
        const std::size_t n_train = members.size() - n_val - n_test;
        out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.val.insert(out.val.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                       members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                        members.end());
    }
    return out;
}

std::vector<unsigned char> encode_pgm(const Tensor<float>& image) {
    if (image.rank() != 3 || image.dim(0) != 1) throw ShapeError("PGM images must be [1,H,W]");
    const std::string header = fmt::format("P5\n{} {}\n255\n", image.dim(2), image.dim(1));
    std::vector<unsigned char> out(header.begin(), header.end());
    for (float v : image.data()) {
        const long q = std::lround(static_cast<double>(v) * 255.0);
        if (q < 0 || q > 255 || static_cast<float>(q) / 255.0f != v)
            throw FormatError("image value not representable as 8-bit gray level");
        out.push_back(static_cast<unsigned char>(q));
    }
    return out;
}

Tensor<float> decode_pgm(const std::vector<unsigned char>& bytes) {
    std::size_t pos = 0;
    auto token = [&]() {
        std::string t;
        while (pos < bytes.size()) {
            const char ch = static_cast<char>(bytes[pos]);
            if (ch == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(ch))) {
                ++pos;
            } else {
                break;
            }
        }
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
        return t;
    };
    if (token() != "P5") throw FormatError("not a binary PGM (P5) image");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(token());
        h = std::stoul(token());
        maxval = std::stoul(token());
    } catch (const std::exception&) {
        throw FormatError("malformed PGM header");
    }
    if (maxval != 255) throw FormatError("only 8-bit PGM images are supported");
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos || bytes.size() - pos != w * h)
        throw FormatError("PGM pixel data truncated: expected " + std::to_string(w * h) + " bytes");
    Tensor<float> img({1, h, w});
    for (std::size_t i = 0; i < w * h; ++i) img[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
    return img;
}

std::vector<unsigned char> encode_saliency(const Tensor<float>& saliency) {
    if (saliency.rank() != 2) throw ShapeError("saliency maps must be [H,W]");
    std::vector<unsigned char> out;
    out.reserve(8 + 4 * saliency.size());
    append_u32_le(out, static_cast<std::uint32_t>(saliency.dim(0)));
    append_u32_le(out, static_cast<std::uint32_t>(saliency.dim(1)));
    for (float v : saliency.data()) append_f32_le(out, v);
    return out;
}

Tensor<float> decode_saliency(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 8) throw FormatError("saliency blob truncated: missing extents");
    const std::size_t h = read_u32_le(bytes.data()), w = read_u32_le(bytes.data() + 4);
    if (bytes.size() != 8 + 4 * h * w)
        throw FormatError("saliency blob truncated: expected " + std::to_string(8 + 4 * h * w) + " bytes, found " +
                          std::to_string(bytes.size()));
    Tensor<float> out({h, w});
    for (std::size_t i = 0; i < h * w; ++i) out[i] = read_f32_le(bytes.data() + 8 + 4 * i);
    return out;
}

void save_dataset(const Dataset& dataset, const fs::path& dir, const json& provenance) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "saliency");
    json samples = json::array();
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        const std::string img_name = fmt::format("images/{:05d}.pgm", i);
        const std::string sal_name = fmt::format("saliency/{:05d}.bin", i);
        const auto img = encode_pgm(s.image);
        const auto sal = encode_saliency(s.saliency);
        write_file(dir / img_name, img);
        write_file(dir / sal_name, sal);
        samples.push_back({{"image", img_name},
                           {"saliency", sal_name},
                           {"label", s.label},
                           {"image_crc32", crc32_of(img)},
                           {"saliency_crc32", crc32_of(sal)}});
    }
    json manifest = {{"format", "mtunet-dataset"},
                     {"version", 1},
                     {"height", dataset.height},
                     {"width", dataset.width},
                     {"num_classes", dataset.num_classes},
                     {"sample_count", dataset.samples.size()},
                     {"provenance", provenance},
                     {"samples", samples}};
    const std::string text = manifest.dump(1) + "\n";
    write_file(dir / "dataset.json", std::vector<unsigned char>(text.begin(), text.end()));
}

Dataset load_dataset(const fs::path& dir) {
    json m;
    try {
        const auto bytes = read_file(dir / "dataset.json");
        m = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw FormatError("malformed dataset manifest: " + std::string(e.what()));
    }
    Dataset d;
    try {
        if (m.at("format") != "mtunet-dataset") throw FormatError("not a dataset manifest");
        d.height = m.at("height").get<std::size_t>();
        d.width = m.at("width").get<std::size_t>();
        d.num_classes = m.at("num_classes").get<std::size_t>();
        const auto& entries = m.at("samples");
        if (entries.size() != m.at("sample_count").get<std::size_t>())
            throw FormatError("manifest sample_count disagrees with sample list");
        for (const auto& e : entries) {
            const auto img_bytes = read_file(dir / e.at("image").get<std::string>());
            if (crc32_of(img_bytes) != e.at("image_crc32").get<std::uint32_t>())
                throw FormatError("checksum mismatch for " + e.at("image").get<std::string>());
            const auto sal_bytes = read_file(dir / e.at("saliency").get<std::string>());
            Sample s;
            s.saliency = decode_saliency(sal_bytes);
            if (crc32_of(sal_bytes) != e.at("saliency_crc32").get<std::uint32_t>())
                throw FormatError("checksum mismatch for " + e.at("saliency").get<std::string>());
            s.image = decode_pgm(img_bytes);
            s.label = e.at("label").get<int>();
            if (s.image.dim(1) != d.height || s.image.dim(2) != d.width || s.saliency.dim(0) != d.height ||
                s.saliency.dim(1) != d.width)
                throw FormatError("sample extents disagree with manifest");
            if (s.label < 0 || static_cast<std::size_t>(s.label) >= d.num_classes)
                throw FormatError("sample label out of range");
            d.samples.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw FormatError("malformed dataset manifest: " + std::string(e.what()));
    }
    return d;
}

}  // namespace mtunet
