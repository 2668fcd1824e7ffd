#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gravilon/matrix.hpp"
#include "gravilon/random.hpp"

namespace gravilon::data {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // 2049
inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kPixels = kImageSide * kImageSide;
inline constexpr std::size_t kClasses = 10;

// Raw IDX image payload: count images of rows x cols unsigned bytes.
struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;

    bool operator==(const IdxImages&) const = default;
};

// IDX readers. Big-endian header, raw payload. Throws FormatError naming the
// field at fault (magic, dimension, payload, label value); IoError if the
// file cannot be opened.
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);
IdxImages load_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

// Images are stored one per row (count x 784) so that gathering a batch reads
// contiguous memory; batches handed to the network are transposed to 784 x N.
struct Dataset {
    Matrix images;
    std::vector<int> labels;
    std::string name;

    std::size_t size() const { return labels.size(); }
};

// pixel / 255 as double, one image per row.
Matrix normalize(const IdxImages& raw);

// Checks count agreement and label range.
Dataset make_dataset(const IdxImages& raw, std::span<const std::uint8_t> labels, std::string name);

struct Batch {
    Matrix inputs;  // 784 x N
    std::vector<int> labels;
    std::vector<std::size_t> indices;
};

// Columns of the batch follow the order of indices.
Batch gather(const Dataset& data, std::span<const std::size_t> indices);

// Subset as its own dataset, rows in the order given.
Dataset subset(const Dataset& data, std::span<const std::size_t> indices, std::string name);

struct Split {
    Dataset train;
    Dataset test;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kSourceCount = 60000;
inline constexpr std::size_t kTrainCount = 50000;

// Seeded uniform permutation of the 60000 source images; the first 50000 go to
// train and the rest to test. Throws InvalidInput for any other source size.
Split split(const Dataset& source, std::uint64_t seed);
// Same rule with an arbitrary train count, 0 < train_count < source size.
Split split_at(const Dataset& source, std::size_t train_count, std::uint64_t seed);

enum class SplitMode { holdout, canonical };

// Locates the four MNIST files in dir; accepts both the "-idx3-ubyte" and
// ".idx3-ubyte" spellings. holdout mode splits the 60k training archive 50k/10k,
// canonical mode uses the archive as train and t10k as test.
Split load_mnist(const std::filesystem::path& dir, SplitMode mode, std::uint64_t seed);

// Offline stand-in for MNIST: every class has a random blob-shaped prototype,
// samples are noisy copies quantized to bytes. Deterministic per seed.
IdxImages synthetic_images(std::size_t count, std::uint64_t seed, std::vector<std::uint8_t>& labels);
Dataset synthetic_dataset(std::size_t count, std::uint64_t seed);

// Mini-batch sampler without replacement. Each epoch is a fresh seeded
// permutation of [0, dataset size); the last batch of an epoch may be short.
class BatchPlan {
public:
    BatchPlan(std::size_t batch_size, std::uint64_t seed);

    std::size_t batch_size() const { return batch_size_; }
    std::size_t epoch() const { return epoch_; }
    std::size_t cursor() const { return cursor_; }
    const std::vector<std::size_t>& order() const { return order_; }

    // Next batch_size indices of the current epoch; starts a new epoch when
    // the current one is exhausted. Throws InvalidInput on an empty dataset.
    std::vector<std::size_t> next_indices(std::size_t dataset_size);

private:
    void reshuffle(std::size_t dataset_size);

    std::size_t batch_size_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::size_t epoch_ = 0;
};

Batch next_batch(BatchPlan& plan, const Dataset& train);

}  // namespace gravilon::data
