#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sensemap/gridmap.hpp"

namespace sensemap {

/// Encode an observation map as a 3-channel 8-bit PNG. Per cell exactly one
/// channel is 255: blue for Free, green for Uncertain, red for Obstacle.
std::vector<std::uint8_t> encode_obs_image(const TrinaryMap& map);

/// Inverse of encode_obs_image. Throws FormatError if the image is not
/// 3-channel 8-bit or any pixel does not have exactly one channel at 255
/// (the message names the pixel).
TrinaryMap decode_obs_image(const std::vector<std::uint8_t>& bytes);

/// Encode a binary ground-truth map as a single-channel 8-bit PNG,
/// obstacle = 255, free = 0. Throws DomainError if the map has Uncertain cells.
std::vector<std::uint8_t> encode_gt_image(const TrinaryMap& map);

/// Inverse of encode_gt_image. Throws FormatError for non-grayscale images or
/// pixel values outside {0, 255}.
TrinaryMap decode_gt_image(const std::vector<std::uint8_t>& bytes);

/// Whole-file helpers. Throw IoError naming the path on failure.
std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

TrinaryMap read_obs_image(const std::string& path);
TrinaryMap read_gt_image(const std::string& path);
void write_obs_image(const std::string& path, const TrinaryMap& map);
void write_gt_image(const std::string& path, const TrinaryMap& map);

/// FNV-1a 64-bit hash, used for provenance/tamper checks on emitted files.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string fnv1a64_hex(const std::vector<std::uint8_t>& bytes);

} // namespace sensemap
