#pragma once

#include <filesystem>
#include <stdexcept>

#include "hgan/image.hpp"

namespace hgan {

class ImageReadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads a single-channel raster (8/16-bit integer or float; PNG, TIFF, ...)
/// keeping raw intensity values.
Image read_image(const std::filesystem::path& path);

/// Writes raw intensities as 16-bit grey, rounded and clamped to [0, 65535].
void write_image_u16(const std::filesystem::path& path, const Image& raw);

/// Writes a unit-range image as 8-bit grey.
void write_unit_image(const std::filesystem::path& path, const Image& unit);

/// Reads an integer label raster (8/16-bit, or 32-bit integer TIFF).
LabelImage read_label_image(const std::filesystem::path& path);

/// Writes labels as 16-bit grey; throws std::out_of_range above 65535.
void write_label_image(const std::filesystem::path& path, const LabelImage& labels);

}  // namespace hgan
