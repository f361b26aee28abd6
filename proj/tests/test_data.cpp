#include "grokforge/data.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

using namespace grokforge;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir()
    {
        path = fs::temp_directory_path() / ("gf_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes)
{
    std::ofstream os(p, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

std::vector<unsigned char> read_bytes(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

IdxErrorKind idx_error_kind(const fs::path& images, const fs::path& labels)
{
    try {
        load_mnist_idx(images, labels);
    } catch (const IdxError& e) {
        return e.kind();
    }
    FAIL("expected an IdxError");
    return IdxErrorKind::io;
}

} // namespace

TEST_CASE("modular dataset holds every pair exactly once")
{
    const auto d = gen_modular(97, BinaryOp::mul, 0.5, 1);
    CHECK(d.size() == 9409);
    CHECK(d.train_ids().size() == 4704); // floor(0.5 * 9409)
    CHECK(d.val_ids().size() == 4705);
    std::vector<std::size_t> all = d.train_ids();
    all.insert(all.end(), d.val_ids().begin(), d.val_ids().end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(9409);
    std::iota(expected.begin(), expected.end(), std::size_t{0});
    CHECK(all == expected);
    std::set<std::pair<int, int>> pairs;
    for (const auto& e : d.examples()) {
        pairs.insert({e.x, e.y});
        CHECK(e.answer == (e.x * e.y) % 97);
    }
    CHECK(pairs.size() == 9409);
}

TEST_CASE("modular examples and tokenization")
{
    const auto d = gen_modular(5, BinaryOp::mul, 0.5, 0);
    const auto& ex = d.examples();
    const auto it = std::find_if(ex.begin(), ex.end(), [](auto& e) { return e.x == 2 && e.y == 4; });
    REQUIRE(it != ex.end());
    CHECK(it->answer == 3);
    const std::size_t id = std::size_t(it - ex.begin());
    const auto b = d.gather(std::span(&id, 1));
    CHECK(b.tokens == std::vector<std::int32_t>{2, 5, 4, 6});
    CHECK(b.targets == std::vector<std::int32_t>{3});
    CHECK(b.example_ids == std::vector<std::size_t>{id});
    CHECK(modular_vocab_size(5) == 7);

    const auto a = gen_modular(7, BinaryOp::add, 0.3, 0);
    for (const auto& e : a.examples())
        CHECK(e.answer == (e.x + e.y) % 7);
}

TEST_CASE("modular splits are deterministic in the seed")
{
    const auto a = gen_modular(31, BinaryOp::mul, 0.4, 9);
    const auto b = gen_modular(31, BinaryOp::mul, 0.4, 9);
    const auto c = gen_modular(31, BinaryOp::mul, 0.4, 10);
    CHECK(a.train_ids() == b.train_ids());
    CHECK(a.train_ids() != c.train_ids());
}

TEST_CASE("modular dataset rejects degenerate splits")
{
    CHECK_THROWS_AS(gen_modular(1, BinaryOp::mul, 0.5, 0), ConfigError);
    CHECK_THROWS_AS(gen_modular(5, BinaryOp::mul, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(gen_modular(5, BinaryOp::mul, 0.0, 0), ConfigError);
    CHECK_THROWS_AS(gen_modular(5, BinaryOp::mul, 0.03, 0), ConfigError); // floor(0.75) = 0 training pairs
    CHECK(gen_modular(5, BinaryOp::mul, 0.999, 0).val_ids().size() == 1);
    CHECK_THROWS_AS(parse_binary_op("div"), ConfigError);
}

TEST_CASE("batches drop the remainder and reshuffle every epoch")
{
    BatchSampler s(4704, 512, 3);
    CHECK(s.batches_per_epoch() == 9);
    std::set<std::size_t> seen;
    for (std::int64_t t = 0; t < 9; ++t) {
        const auto idx = s.indices(t);
        CHECK(idx.size() == 512);
        seen.insert(idx.begin(), idx.end());
    }
    CHECK(seen.size() == 9 * 512); // no repeats within an epoch
    CHECK(s.indices(9) != s.indices(0));

    // Random access gives the same stream as sequential access.
    BatchSampler r(4704, 512, 3);
    const auto late = r.indices(40);
    const auto early = r.indices(2);
    BatchSampler q(4704, 512, 3);
    CHECK(q.indices(2) == early);
    CHECK(q.indices(40) == late);

    BatchSampler full(10, 10, 1);
    auto a = full.indices(0), b = full.indices(1);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);

    CHECK_THROWS_AS(BatchSampler(10, 11, 0), ConfigError);
    CHECK_THROWS_AS(BatchSampler(10, 0, 0), ConfigError);
    CHECK_THROWS_AS(BatchSampler(0, 1, 0), Error);
}

TEST_CASE("training batches only draw training examples")
{
    const auto d = gen_modular(23, BinaryOp::mul, 0.5, 4);
    const std::set<std::size_t> train(d.train_ids().begin(), d.train_ids().end());
    for (std::int64_t t = 0; t < 30; ++t) {
        const auto b = make_batch(d, 64, 5, t);
        CHECK(b.size == 64);
        for (auto id : b.example_ids)
            CHECK(train.count(id) == 1);
    }
    CHECK(make_batch(d, 64, 5, 7).example_ids == make_batch(d, 64, 5, 7).example_ids);
    CHECK(make_batch(d, 64, 5, 7).example_ids != make_batch(d, 64, 6, 7).example_ids);
}

TEST_CASE("sub-seeds differ per stream and are deterministic")
{
    CHECK(derive_seed(0, seed_stream::data) == derive_seed(0, seed_stream::data));
    CHECK(derive_seed(0, seed_stream::data) != derive_seed(0, seed_stream::init));
    CHECK(derive_seed(0, seed_stream::init) != derive_seed(1, seed_stream::init));
}

TEST_CASE("IDX files round-trip exactly")
{
    TempDir tmp;
    const std::size_t n = 7, rows = 3, cols = 4;
    std::vector<std::uint8_t> pixels(n * rows * cols), labels(n);
    for (std::size_t i = 0; i < pixels.size(); ++i)
        pixels[i] = std::uint8_t(i * 37 % 256);
    for (std::size_t i = 0; i < n; ++i)
        labels[i] = std::uint8_t(i % 10);
    write_idx_images(tmp.path / "img", rows, cols, pixels);
    write_idx_labels(tmp.path / "lbl", labels);

    const auto bytes = read_bytes(tmp.path / "img");
    REQUIRE(bytes.size() == 16 + pixels.size());
    CHECK(std::vector<unsigned char>(bytes.begin(), bytes.begin() + 8) ==
          std::vector<unsigned char>{0, 0, 8, 3, 0, 0, 0, 7}); // big-endian magic and count

    const auto ds = load_mnist_idx(tmp.path / "img", tmp.path / "lbl");
    CHECK(ds.size() == n);
    CHECK(ds.rows == rows);
    CHECK(ds.cols == cols);
    for (std::size_t i = 0; i < pixels.size(); ++i)
        CHECK(ds.pixels[i] == float(pixels[i]) / 255.0f);
    for (std::size_t i = 0; i < n; ++i)
        CHECK(ds.labels[i] == labels[i]);
}

TEST_CASE("IDX parser reports distinct errors")
{
    TempDir tmp;
    const std::vector<std::uint8_t> pixels(4 * 2 * 2, 9), labels = {1, 2, 3, 4};
    write_idx_images(tmp.path / "img", 2, 2, pixels);
    write_idx_labels(tmp.path / "lbl", labels);
    write_idx_labels(tmp.path / "lbl3", std::vector<std::uint8_t>{1, 2, 3});
    write_idx_labels(tmp.path / "lbl_bad", std::vector<std::uint8_t>{1, 2, 3, 12});

    auto img = read_bytes(tmp.path / "img");
    img.resize(img.size() - 1);
    write_bytes(tmp.path / "img_short", img);
    auto magic = read_bytes(tmp.path / "img");
    magic[3] = 0x01;
    write_bytes(tmp.path / "img_magic", magic);
    write_bytes(tmp.path / "img_header", {0, 0, 8});

    CHECK(idx_error_kind(tmp.path / "missing", tmp.path / "lbl") == IdxErrorKind::io);
    CHECK(idx_error_kind(tmp.path / "img_magic", tmp.path / "lbl") == IdxErrorKind::bad_magic);
    CHECK(idx_error_kind(tmp.path / "img", tmp.path / "img") == IdxErrorKind::bad_magic);
    CHECK(idx_error_kind(tmp.path / "img_short", tmp.path / "lbl") == IdxErrorKind::truncated);
    CHECK(idx_error_kind(tmp.path / "img_header", tmp.path / "lbl") == IdxErrorKind::truncated);
    CHECK(idx_error_kind(tmp.path / "img", tmp.path / "lbl3") == IdxErrorKind::dimension_mismatch);
    CHECK(idx_error_kind(tmp.path / "img", tmp.path / "lbl_bad") == IdxErrorKind::bad_label);
}

TEST_CASE("MNIST task keeps a seeded training subset and the whole test set")
{
    TempDir tmp;
    const std::size_t n = 50;
    std::vector<std::uint8_t> pixels(n * 4), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = std::uint8_t(i % 10);
        for (std::size_t j = 0; j < 4; ++j)
            pixels[i * 4 + j] = std::uint8_t(i);
    }
    write_idx_images(tmp.path / "img", 2, 2, pixels);
    write_idx_labels(tmp.path / "lbl", labels);
    auto train = load_mnist_idx(tmp.path / "img", tmp.path / "lbl");
    auto test = train;

    const auto subset = sample_subset(n, 20, 3);
    CHECK(subset.size() == 20);
    CHECK(std::is_sorted(subset.begin(), subset.end()));
    CHECK(std::adjacent_find(subset.begin(), subset.end()) == subset.end());
    CHECK(sample_subset(n, 20, 3) == subset);
    CHECK(sample_subset(60000, 1000, 3).size() == 1000);
    CHECK_THROWS_AS(sample_subset(5, 6, 0), ConfigError);

    MnistTask task(train, test, 20, 3);
    CHECK(task.train_ids().size() == 20);
    CHECK(task.val_ids().size() == n);
    const auto b = task.gather(task.train_ids());
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(b.features[i * 4] == float(subset[i]) / 255.0f);
        CHECK(b.targets[i] == std::int32_t(subset[i] % 10));
    }
    const auto v = task.gather(task.val_ids());
    for (std::size_t i = 0; i < n; ++i)
        CHECK(v.targets[i] == std::int32_t(i % 10));
}
