#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgan {

class ShapeMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Activation layout is channel-major: (channels, batch, height, width).
/// Every channel is one contiguous row of n*h*w values, so a convolution over
/// the whole batch is a single GEMM and channel concatenation is a row append.
struct Shape {
    int c = 0;
    int n = 0;
    int h = 0;
    int w = 0;

    std::size_t plane() const { return static_cast<std::size_t>(n) * h * w; }
    std::size_t count() const { return static_cast<std::size_t>(c) * plane(); }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

inline std::string Shape::str() const
{
    return "(" + std::to_string(c) + "," + std::to_string(n) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.count(), fill) {}

    const Shape& shape() const { return shape_; }
    int channels() const { return shape_.c; }
    int batch() const { return shape_.n; }
    int height() const { return shape_.h; }
    int width() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    T* channel(int c) { return data_.data() + c * shape_.plane(); }
    const T* channel(int c) const { return data_.data() + c * shape_.plane(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int c, int n, int y, int x)
    {
        return data_[((static_cast<std::size_t>(c) * shape_.n + n) * shape_.h + y) * shape_.w + x];
    }
    const T& at(int c, int n, int y, int x) const
    {
        return data_[((static_cast<std::size_t>(c) * shape_.n + n) * shape_.h + y) * shape_.w + x];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <class U>
    Tensor<U> cast() const
    {
        Tensor<U> out(shape_);
        std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
        return out;
    }

private:
    Shape shape_{};
    std::vector<T> data_;
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what)
{
    if (!(a == b))
        throw ShapeMismatch(std::string(what) + ": shape " + a.str() + " vs " + b.str());
}

/// Stacks tensors along the channel axis. All parts must agree on (n, h, w).
template <class T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts)
{
    if (parts.empty())
        throw ShapeMismatch("concat_channels: no inputs");
    Shape s = parts.front()->shape();
    s.c = 0;
    for (const auto* p : parts) {
        const auto& ps = p->shape();
        if (ps.n != s.n || ps.h != s.h || ps.w != s.w)
            throw ShapeMismatch("concat_channels: " + ps.str() + " does not match batch/spatial dims");
        s.c += ps.c;
    }
    Tensor<T> out(s);
    T* dst = out.data();
    for (const auto* p : parts)
        dst = std::copy(p->values().begin(), p->values().end(), dst);
    return out;
}

template <class T>
Tensor<T> concat_channels(std::initializer_list<const Tensor<T>*> parts)
{
    std::vector<const Tensor<T>*> v(parts);
    return concat_channels<T>(std::span<const Tensor<T>* const>(v));
}

/// Inverse of concat_channels: copies channels [first, first+count) out.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, int first, int count)
{
    if (first < 0 || count < 0 || first + count > x.channels())
        throw ShapeMismatch("slice_channels: range out of bounds for " + x.shape().str());
    Shape s = x.shape();
    s.c = count;
    Tensor<T> out(s);
    std::copy(x.channel(first), x.channel(first) + s.count(), out.data());
    return out;
}

/// Elementwise convex blend beta * fake + (1 - beta) * real.
template <class T>
Tensor<T> composite(const Tensor<T>& fake, const Tensor<T>& real, double beta)
{
    require_same_shape(fake.shape(), real.shape(), "composite");
    if (!(beta >= 0.0 && beta <= 1.0))
        throw std::invalid_argument("composite: beta must lie in [0, 1], got " + std::to_string(beta));
    Tensor<T> out(fake.shape());
    const T b = static_cast<T>(beta);
    const T a = static_cast<T>(1.0 - beta);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = b * fake[i] + a * real[i];
    return out;
}

}  // namespace hgan
