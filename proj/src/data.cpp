#include "gravilon/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "gravilon/error.hpp"

namespace gravilon::data {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                        const char* field) {
    if (bytes.size() < offset + 4) {
        throw FormatError(std::string("truncated IDX header: missing ") + field);
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void check_magic(std::uint32_t magic, std::uint32_t expected) {
    if (magic != expected) {
        std::ostringstream msg;
        msg << "bad IDX magic: expected " << expected << ", found " << magic;
        throw FormatError(msg.str());
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

std::filesystem::path find_file(const std::filesystem::path& dir, const std::string& stem,
                                const std::string& kind) {
    for (const auto& name : {stem + "-" + kind, stem + "." + kind}) {
        auto p = dir / name;
        if (std::filesystem::exists(p)) return p;
    }
    throw IoError("missing " + stem + "-" + kind + " in " + dir.string());
}

}  // namespace

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
    check_magic(read_be32(bytes, 0, "magic"), kIdxImagesMagic);
    IdxImages img;
    img.count = read_be32(bytes, 4, "image count");
    img.rows = read_be32(bytes, 8, "row count");
    img.cols = read_be32(bytes, 12, "column count");
    if (img.rows != kImageSide || img.cols != kImageSide) {
        std::ostringstream msg;
        msg << "image dimensions must be 28x28, found " << img.rows << "x" << img.cols;
        throw FormatError(msg.str());
    }
    const std::size_t payload = img.count * img.rows * img.cols;
    if (bytes.size() - 16 != payload) {
        std::ostringstream msg;
        msg << "image payload holds " << bytes.size() - 16 << " bytes, header promises "
            << payload;
        throw FormatError(msg.str());
    }
    img.pixels.assign(bytes.begin() + 16, bytes.end());
    return img;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
    check_magic(read_be32(bytes, 0, "magic"), kIdxLabelsMagic);
    const std::size_t count = read_be32(bytes, 4, "label count");
    if (bytes.size() - 8 != count) {
        std::ostringstream msg;
        msg << "label payload holds " << bytes.size() - 8 << " bytes, header promises " << count;
        throw FormatError(msg.str());
    }
    std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.end());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= kClasses) {
            std::ostringstream msg;
            msg << "label " << i << " has value " << int{labels[i]} << ", expected 0..9";
            throw FormatError(msg.str());
        }
    }
    return labels;
}

IdxImages load_idx_images(const std::filesystem::path& path) {
    return parse_idx_images(read_file(path));
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
    return parse_idx_labels(read_file(path));
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
    if (images.pixels.size() != images.count * images.rows * images.cols) {
        throw ContractError("IDX image payload size does not match its dimensions");
    }
    std::vector<std::uint8_t> out;
    out.reserve(16 + images.pixels.size());
    write_be32(out, kIdxImagesMagic);
    write_be32(out, static_cast<std::uint32_t>(images.count));
    write_be32(out, static_cast<std::uint32_t>(images.rows));
    write_be32(out, static_cast<std::uint32_t>(images.cols));
    out.insert(out.end(), images.pixels.begin(), images.pixels.end());
    return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + labels.size());
    write_be32(out, kIdxLabelsMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
    write_file(path, encode_idx_images(images));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
    write_file(path, encode_idx_labels(labels));
}

Matrix normalize(const IdxImages& raw) {
    const std::size_t pixels = raw.rows * raw.cols;
    std::vector<double> values(raw.pixels.size());
    std::transform(raw.pixels.begin(), raw.pixels.end(), values.begin(),
                   [](std::uint8_t p) { return static_cast<double>(p) / 255.0; });
    return Matrix(raw.count, pixels, std::move(values));
}

Dataset make_dataset(const IdxImages& raw, std::span<const std::uint8_t> labels, std::string name) {
    if (raw.count != labels.size()) {
        std::ostringstream msg;
        msg << name << ": " << raw.count << " images but " << labels.size() << " labels";
        throw FormatError(msg.str());
    }
    Dataset ds;
    ds.images = normalize(raw);
    ds.labels.reserve(labels.size());
    for (auto l : labels) {
        if (l >= kClasses) throw FormatError("label out of range 0..9");
        ds.labels.push_back(l);
    }
    ds.name = std::move(name);
    return ds;
}

Batch gather(const Dataset& data, std::span<const std::size_t> indices) {
    const std::size_t n = indices.size();
    const std::size_t features = data.images.cols();
    Batch batch;
    batch.inputs = Matrix(features, n);
    batch.labels.reserve(n);
    batch.indices.assign(indices.begin(), indices.end());
    auto out = batch.inputs.data();
    for (std::size_t j = 0; j < n; ++j) {
        if (indices[j] >= data.size()) throw ContractError("batch index out of range");
        const auto src = data.images.row(indices[j]);
        for (std::size_t f = 0; f < features; ++f) out[f * n + j] = src[f];
        batch.labels.push_back(data.labels[indices[j]]);
    }
    return batch;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices, std::string name) {
    const std::size_t features = data.images.cols();
    Dataset out;
    out.images = Matrix(indices.size(), features);
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= data.size()) throw ContractError("subset index out of range");
        const auto src = data.images.row(indices[i]);
        std::copy(src.begin(), src.end(), out.images.row(i).begin());
        out.labels.push_back(data.labels[indices[i]]);
    }
    out.name = std::move(name);
    return out;
}

Split split_at(const Dataset& source, std::size_t train_count, std::uint64_t seed) {
    if (train_count == 0 || train_count >= source.size()) {
        throw InvalidInput("train count must leave both partitions nonempty");
    }
    std::vector<std::size_t> order(source.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    shuffle(std::span(order), rng);
    const auto cut = order.begin() + static_cast<std::ptrdiff_t>(train_count);
    Split s;
    s.train = subset(source, std::span(order.begin(), cut), source.name + "/train");
    s.test = subset(source, std::span(cut, order.end()), source.name + "/test");
    s.seed = seed;
    return s;
}

Split split(const Dataset& source, std::uint64_t seed) {
    if (source.size() != kSourceCount) {
        std::ostringstream msg;
        msg << "split expects " << kSourceCount << " source images, got " << source.size();
        throw InvalidInput(msg.str());
    }
    return split_at(source, kTrainCount, seed);
}

Split load_mnist(const std::filesystem::path& dir, SplitMode mode, std::uint64_t seed) {
    const auto train_images = load_idx_images(find_file(dir, "train-images", "idx3-ubyte"));
    const auto train_labels = load_idx_labels(find_file(dir, "train-labels", "idx1-ubyte"));
    Dataset source = make_dataset(train_images, train_labels, "mnist");
    if (mode == SplitMode::holdout) return split(source, seed);

    const auto test_images = load_idx_images(find_file(dir, "t10k-images", "idx3-ubyte"));
    const auto test_labels = load_idx_labels(find_file(dir, "t10k-labels", "idx1-ubyte"));
    Split s;
    s.train = std::move(source);
    s.train.name = "mnist/train";
    s.test = make_dataset(test_images, test_labels, "mnist/t10k");
    s.seed = seed;
    return s;
}

IdxImages synthetic_images(std::size_t count, std::uint64_t seed, std::vector<std::uint8_t>& labels) {
    Rng rng(seed);
    // Each prototype is a sum of a few Gaussian blobs on the 28x28 grid.
    std::vector<std::vector<double>> prototypes(kClasses, std::vector<double>(kPixels, 0.0));
    for (auto& proto : prototypes) {
        for (int blob = 0; blob < 4; ++blob) {
            const double cy = uniform(rng, 6.0, 22.0);
            const double cx = uniform(rng, 6.0, 22.0);
            const double radius = uniform(rng, 2.0, 5.0);
            for (std::size_t y = 0; y < kImageSide; ++y) {
                for (std::size_t x = 0; x < kImageSide; ++x) {
                    const double dy = static_cast<double>(y) - cy;
                    const double dx = static_cast<double>(x) - cx;
                    proto[y * kImageSide + x] +=
                        std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
                }
            }
        }
        for (double& p : proto) p = std::min(p, 1.0);
    }

    IdxImages img{count, kImageSide, kImageSide, std::vector<std::uint8_t>(count * kPixels)};
    labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto label = static_cast<std::size_t>(uniform_index(rng, kClasses));
        labels[i] = static_cast<std::uint8_t>(label);
        const double contrast = uniform(rng, 0.6, 1.0);
        for (std::size_t p = 0; p < kPixels; ++p) {
            const double v = contrast * prototypes[label][p] + uniform(rng, -0.35, 0.35);
            img.pixels[i * kPixels + p] =
                static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
        }
    }
    return img;
}

Dataset synthetic_dataset(std::size_t count, std::uint64_t seed) {
    std::vector<std::uint8_t> labels;
    const auto img = synthetic_images(count, seed, labels);
    return make_dataset(img, labels, "synthetic");
}

BatchPlan::BatchPlan(std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
    if (batch_size == 0) throw InvalidInput("batch size must be positive");
}

void BatchPlan::reshuffle(std::size_t dataset_size) {
    order_.resize(dataset_size);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    shuffle(std::span(order_), rng_);
    cursor_ = 0;
}

std::vector<std::size_t> BatchPlan::next_indices(std::size_t dataset_size) {
    if (dataset_size == 0) throw InvalidInput("cannot draw a batch from an empty dataset");
    if (order_.size() != dataset_size) {
        // First call, or a different dataset: start over.
        reshuffle(dataset_size);
        epoch_ = 0;
    } else if (cursor_ >= order_.size()) {
        reshuffle(dataset_size);
        ++epoch_;
    }
    const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end;
    return out;
}

Batch next_batch(BatchPlan& plan, const Dataset& train) {
    if (train.size() == 0) throw InvalidInput("cannot draw a batch from an empty dataset");
    const auto indices = plan.next_indices(train.size());
    return gather(train, indices);
}

}  // namespace gravilon::data
