#include "grokforge/checkpoint.hpp"

#include "grokforge/errors.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace grokforge {

namespace {

template <typename U>
void put_le(std::ostream& os, U v)
{
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i)
        bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& is, const std::filesystem::path& path)
{
    unsigned char bytes[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U)))
        throw Error("truncated checkpoint header in " + path.string());
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
}

} // namespace

std::vector<ManifestEntry> manifest_of(const ParamStore& params)
{
    std::vector<ManifestEntry> manifest;
    std::uint64_t offset = 0;
    for (const auto& p : params) {
        manifest.push_back({p.name, {p.shape.begin(), p.shape.end()}, offset});
        offset += p.size();
    }
    return manifest;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<ManifestEntry>& manifest,
                      std::span<const float> values)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw Error("cannot open " + path.string() + " for writing");
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_le<std::uint32_t>(os, kCheckpointVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(manifest.size()));
    for (const auto& e : manifest) {
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape)
            put_le<std::uint64_t>(os, d);
        put_le<std::uint64_t>(os, e.offset);
    }
    put_le<std::uint64_t>(os, values.size());
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (float v : values)
            put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
    }
    if (!os.flush())
        throw Error("failed writing checkpoint " + path.string());
}

void write_checkpoint(const std::filesystem::path& path, const ParamStore& params)
{
    const auto flat = params.flatten_values();
    write_checkpoint(path, manifest_of(params), flat);
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error("cannot open checkpoint " + path.string());
    char magic[sizeof(kCheckpointMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw Error("bad checkpoint magic in " + path.string());
    const auto version = get_le<std::uint32_t>(is, path);
    if (version != kCheckpointVersion)
        throw Error("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());

    Checkpoint ck;
    const auto entries = get_le<std::uint32_t>(is, path);
    for (std::uint32_t i = 0; i < entries; ++i) {
        ManifestEntry e;
        const auto len = get_le<std::uint32_t>(is, path);
        e.name.resize(len);
        if (!is.read(e.name.data(), len))
            throw Error("truncated checkpoint manifest in " + path.string());
        const auto rank = get_le<std::uint32_t>(is, path);
        for (std::uint32_t r = 0; r < rank; ++r)
            e.shape.push_back(get_le<std::uint64_t>(is, path));
        e.offset = get_le<std::uint64_t>(is, path);
        ck.manifest.push_back(std::move(e));
    }
    const auto total = get_le<std::uint64_t>(is, path);
    ck.values.resize(total);
    if constexpr (std::endian::native == std::endian::little) {
        if (!is.read(reinterpret_cast<char*>(ck.values.data()), static_cast<std::streamsize>(total * sizeof(float))))
            throw Error("truncated checkpoint payload in " + path.string());
    } else {
        for (auto& v : ck.values)
            v = std::bit_cast<float>(get_le<std::uint32_t>(is, path));
    }
    return ck;
}

std::string snapshot_file_name(std::int64_t iteration)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "snap_%08lld.bin", static_cast<long long>(iteration));
    return buf;
}

} // namespace grokforge
