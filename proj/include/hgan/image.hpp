#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgan {

/// Row-major single-channel 2-D grid.
template <class T>
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int w, int h, T fill = T(0)) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill)
    {
        if (w < 0 || h < 0)
            throw std::invalid_argument("Grid: negative dimensions");
    }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    const T& at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    bool operator==(const Grid&) const = default;
};

using Image = Grid<float>;
using LabelImage = Grid<std::int32_t>;

/// Value range a patch is declared to live in.
enum class RangeTag { raw, unit, signed_unit };

std::string to_string(RangeTag r);
RangeTag parse_range_tag(const std::string& s);

struct Patch {
    Image pixels;
    RangeTag range = RangeTag::raw;
    std::string slide_id;
    int grid_x = 0;
    int grid_y = 0;

    int side() const { return pixels.width; }
};

/// Throws std::domain_error if any pixel violates the declared range.
void check_range(const Image& img, RangeTag range);

/// [0,1] -> [-1,1] and back.
Image to_signed(const Image& unit);
Image to_unit(const Image& signed_img);

}  // namespace hgan
