#include "hgan/io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace hgan {

namespace {

cv::Mat read_single_channel(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw ImageReadError("no such image: " + path.string());
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
    if (m.empty())
        throw ImageReadError("cannot decode image " + path.string());
    if (m.channels() != 1)
        throw ImageReadError(path.string() + " has " + std::to_string(m.channels()) + " channels, expected 1");
    return m;
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& m)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m))
        throw std::runtime_error("cannot write image " + path.string());
}

}  // namespace

Image read_image(const std::filesystem::path& path)
{
    cv::Mat m = read_single_channel(path);
    cv::Mat f;
    m.convertTo(f, CV_32F);
    Image out(f.cols, f.rows);
    for (int y = 0; y < f.rows; ++y)
        std::copy_n(f.ptr<float>(y), f.cols, &out.at(0, y));
    return out;
}

void write_image_u16(const std::filesystem::path& path, const Image& raw)
{
    cv::Mat m(raw.height, raw.width, CV_16U);
    for (int y = 0; y < raw.height; ++y)
        for (int x = 0; x < raw.width; ++x)
            m.at<std::uint16_t>(y, x) =
                static_cast<std::uint16_t>(std::clamp(std::lround(raw.at(x, y)), 0L, 65535L));
    write_or_throw(path, m);
}

void write_unit_image(const std::filesystem::path& path, const Image& unit)
{
    cv::Mat m(unit.height, unit.width, CV_8U);
    for (int y = 0; y < unit.height; ++y)
        for (int x = 0; x < unit.width; ++x)
            m.at<std::uint8_t>(y, x) =
                static_cast<std::uint8_t>(std::clamp(std::lround(unit.at(x, y) * 255.0f), 0L, 255L));
    write_or_throw(path, m);
}

LabelImage read_label_image(const std::filesystem::path& path)
{
    cv::Mat m = read_single_channel(path);
    if (m.depth() == CV_32F || m.depth() == CV_64F)
        throw ImageReadError(path.string() + " stores floating-point values, expected integer labels");
    cv::Mat l;
    m.convertTo(l, CV_32S);
    LabelImage out(l.cols, l.rows);
    for (int y = 0; y < l.rows; ++y)
        std::copy_n(l.ptr<std::int32_t>(y), l.cols, &out.at(0, y));
    return out;
}

void write_label_image(const std::filesystem::path& path, const LabelImage& labels)
{
    cv::Mat m(labels.height, labels.width, CV_16U);
    for (int y = 0; y < labels.height; ++y)
        for (int x = 0; x < labels.width; ++x) {
            const auto v = labels.at(x, y);
            if (v < 0 || v > 65535)
                throw std::out_of_range("label " + std::to_string(v) + " does not fit a 16-bit raster");
            m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(v);
        }
    write_or_throw(path, m);
}

}  // namespace hgan
