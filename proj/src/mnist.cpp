#include "grokforge/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

namespace grokforge {

namespace {

std::uint32_t read_be32(std::istream& is, const std::filesystem::path& path)
{
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw IdxError(IdxErrorKind::truncated, "truncated IDX header in " + path.string());
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& os, std::uint32_t v)
{
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::ifstream open_idx(const std::filesystem::path& path, std::uint32_t magic)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IdxError(IdxErrorKind::io, "cannot open IDX file " + path.string());
    const auto found = read_be32(is, path);
    if (found != magic) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "bad IDX magic 0x%08x (expected 0x%08x) in ", found, magic);
        throw IdxError(IdxErrorKind::bad_magic, buf + path.string());
    }
    return is;
}

std::vector<std::uint8_t> read_payload(std::istream& is, std::size_t bytes, const std::filesystem::path& path)
{
    std::vector<std::uint8_t> data(bytes);
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes)))
        throw IdxError(IdxErrorKind::truncated, "truncated IDX payload in " + path.string() + ": expected " +
                                                   std::to_string(bytes) + " bytes");
    return data;
}

} // namespace

ImageDataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels)
{
    auto is = open_idx(images, kIdxImagesMagic);
    const std::size_t n = read_be32(is, images);
    const std::size_t rows = read_be32(is, images);
    const std::size_t cols = read_be32(is, images);
    const auto pixels = read_payload(is, n * rows * cols, images);

    auto ls = open_idx(labels, kIdxLabelsMagic);
    const std::size_t n_labels = read_be32(ls, labels);
    if (n_labels != n)
        throw IdxError(IdxErrorKind::dimension_mismatch, "image file holds " + std::to_string(n) +
                                                             " items but label file holds " + std::to_string(n_labels));
    const auto raw_labels = read_payload(ls, n, labels);

    ImageDataset ds;
    ds.rows = rows;
    ds.cols = cols;
    ds.pixels.resize(pixels.size());
    std::transform(pixels.begin(), pixels.end(), ds.pixels.begin(), [](std::uint8_t v) { return float(v) / 255.0f; });
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (raw_labels[i] > 9)
            throw IdxError(IdxErrorKind::bad_label, "label " + std::to_string(raw_labels[i]) + " at index " +
                                                        std::to_string(i) + " outside [0, 9]");
        ds.labels[i] = raw_labels[i];
    }
    return ds;
}

void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels)
{
    if (rows * cols == 0 || pixels.size() % (rows * cols) != 0)
        throw ShapeError("pixel buffer is not a whole number of images");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IdxError(IdxErrorKind::io, "cannot open " + path.string() + " for writing");
    write_be32(os, kIdxImagesMagic);
    write_be32(os, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
    write_be32(os, static_cast<std::uint32_t>(rows));
    write_be32(os, static_cast<std::uint32_t>(cols));
    os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IdxError(IdxErrorKind::io, "cannot open " + path.string() + " for writing");
    write_be32(os, kIdxLabelsMagic);
    write_be32(os, static_cast<std::uint32_t>(labels.size()));
    os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

std::vector<std::size_t> sample_subset(std::size_t n, std::size_t count, std::uint64_t seed)
{
    if (count > n)
        throw ConfigError("subset of " + std::to_string(count) + " requested from " + std::to_string(n) + " items");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
}

MnistTask::MnistTask(ImageDataset train, ImageDataset test, std::size_t subset_size, std::uint64_t seed)
    : test_set_(std::move(test))
{
    if (train.feature_dim() != test_set_.feature_dim())
        throw IdxError(IdxErrorKind::dimension_mismatch, "train and test images differ in size");
    const auto subset = sample_subset(train.size(), subset_size, seed);
    const std::size_t dim = train.feature_dim();
    train_set_.rows = train.rows;
    train_set_.cols = train.cols;
    train_set_.pixels.reserve(subset.size() * dim);
    for (const auto i : subset) {
        train_set_.pixels.insert(train_set_.pixels.end(), train.pixels.begin() + std::ptrdiff_t(i * dim),
                                 train.pixels.begin() + std::ptrdiff_t((i + 1) * dim));
        train_set_.labels.push_back(train.labels[i]);
    }
    train_.resize(train_set_.size());
    std::iota(train_.begin(), train_.end(), std::size_t{0});
    val_.resize(test_set_.size());
    std::iota(val_.begin(), val_.end(), train_set_.size());
}

Batch MnistTask::gather(std::span<const std::size_t> ids) const
{
    Batch b;
    b.size = ids.size();
    b.feature_dim = train_set_.feature_dim();
    b.features.reserve(ids.size() * b.feature_dim);
    b.targets.reserve(ids.size());
    b.example_ids.assign(ids.begin(), ids.end());
    for (const auto id : ids) {
        const bool is_train = id < train_set_.size();
        const auto& src = is_train ? train_set_ : test_set_;
        const std::size_t row = is_train ? id : id - train_set_.size();
        if (row >= src.size())
            throw Error("example id " + std::to_string(id) + " out of range");
        b.features.insert(b.features.end(), src.pixels.begin() + std::ptrdiff_t(row * b.feature_dim),
                          src.pixels.begin() + std::ptrdiff_t((row + 1) * b.feature_dim));
        b.targets.push_back(src.labels[row]);
    }
    return b;
}

} // namespace grokforge
