#pragma once

#include <filesystem>
#include <vector>

#include "rstab/geometry.hpp"
#include "rstab/grid.hpp"
#include "rstab/trajectory.hpp"

namespace rstab {

// All readers throw IoError with the offending path in the message.

// 8-bit PNG (gray, RGB, RGBA, palette, 16-bit all accepted) or binary PPM (P6).
Image read_image(const std::filesystem::path& path);
// Writes 8-bit RGB PNG. Values are clamped to [0,1] and rounded to 1/255 steps.
void write_png(const Image& image, const std::filesystem::path& path);
void write_mask_png(const Mask& mask, const std::filesystem::path& path);
Mask read_mask_png(const std::filesystem::path& path);

// Grayscale portable float map ("Pf"). Written little-endian (negative scale),
// rows bottom-to-top; big-endian files are accepted on read.
DepthMap read_pfm(const std::filesystem::path& path);
void write_pfm(const DepthMap& depth, const std::filesystem::path& path);

// Middlebury .flo: "PIEH", int32 width, int32 height, row-major float32 (u, v).
FlowField read_flo(const std::filesystem::path& path);
void write_flo(const FlowField& flow, const std::filesystem::path& path);

// One line per frame: "t qw qx qy qz tx ty tz" (camera-to-world). '#' starts a comment.
PoseSequence read_poses(const std::filesystem::path& path);
void write_poses(const PoseSequence& seq, const std::filesystem::path& path);

// "fx fy cx cy width height"
Intrinsics read_intrinsics(const std::filesystem::path& path);
void write_intrinsics(const Intrinsics& k, const std::filesystem::path& path);

// Byte-level helpers shared by the binary formats.
std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

}  // namespace rstab
