#pragma once

// Parameter checkpoint files.
//
// Layout, all integers little-endian:
//   char[8]  magic "GRKFCKPT"
//   u32      version (1)
//   u32      entry count
//   per entry: u32 name length, name bytes, u32 rank, u64 dims[rank], u64 offset
//   u64      total element count
//   f32      payload[total], little-endian, in manifest order

#include "grokforge/param_store.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace grokforge {

inline constexpr char kCheckpointMagic[8] = {'G', 'R', 'K', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ManifestEntry {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::uint64_t offset = 0; // in elements

    bool operator==(const ManifestEntry&) const = default;
};

struct Checkpoint {
    std::vector<ManifestEntry> manifest;
    std::vector<float> values;
};

std::vector<ManifestEntry> manifest_of(const ParamStore& params);

void write_checkpoint(const std::filesystem::path& path, const std::vector<ManifestEntry>& manifest,
                      std::span<const float> values);
void write_checkpoint(const std::filesystem::path& path, const ParamStore& params);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// "snap_00001234.bin"
std::string snapshot_file_name(std::int64_t iteration);

} // namespace grokforge
