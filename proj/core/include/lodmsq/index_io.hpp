#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lodmsq/index.hpp"

namespace lodmsq {

inline constexpr std::array<char, 8> kIndexMagic = {'L', 'O', 'D', 'M', 'S', 'Q', 'I', 'X'};
inline constexpr std::uint32_t kIndexVersion = 1;

/// Binary container; layout documented in docs/index_format.md.
std::vector<std::uint8_t> index_to_bytes(const Index& index);
/// Throws FormatError on truncation or checksum mismatch, VersionError on bad magic/version.
Index index_from_bytes(std::span<const std::uint8_t> bytes);

void serialize_index(const Index& index, const std::filesystem::path& path);
Index deserialize_index(const std::filesystem::path& path);

}  // namespace lodmsq
