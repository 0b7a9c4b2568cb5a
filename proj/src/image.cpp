#include "hgan/image.hpp"

#include <algorithm>
#include <cmath>

namespace hgan {

std::string to_string(RangeTag r)
{
    switch (r) {
    case RangeTag::raw:
        return "raw";
    case RangeTag::unit:
        return "unit";
    case RangeTag::signed_unit:
        return "signed";
    }
    return "raw";
}

RangeTag parse_range_tag(const std::string& s)
{
    if (s == "raw")
        return RangeTag::raw;
    if (s == "unit")
        return RangeTag::unit;
    if (s == "signed")
        return RangeTag::signed_unit;
    throw std::invalid_argument("unknown range tag '" + s + "'");
}

void check_range(const Image& img, RangeTag range)
{
    if (range == RangeTag::raw)
        return;
    const float lo = range == RangeTag::unit ? 0.0f : -1.0f;
    for (float v : img.data)
        if (!(v >= lo && v <= 1.0f))
            throw std::domain_error("pixel value " + std::to_string(v) + " outside the " + to_string(range) +
                                    " range");
}

Image to_signed(const Image& unit)
{
    Image out(unit.width, unit.height);
    std::transform(unit.data.begin(), unit.data.end(), out.data.begin(), [](float v) { return 2.0f * v - 1.0f; });
    return out;
}

Image to_unit(const Image& signed_img)
{
    Image out(signed_img.width, signed_img.height);
    std::transform(signed_img.data.begin(), signed_img.data.end(), out.data.begin(),
                   [](float v) { return std::clamp(0.5f * (v + 1.0f), 0.0f, 1.0f); });
    return out;
}

}  // namespace hgan
