#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hgan/kernels.hpp"
#include "hgan/rng.hpp"
#include "hgan/tensor.hpp"

namespace hgan {

template <class T>
struct Param {
    std::string name;
    std::vector<T> value;
    std::vector<T> grad;

    Param() = default;
    Param(std::string n, std::size_t size) : name(std::move(n)), value(size, T(0)), grad(size, T(0)) {}
    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <class T>
using ParamRefs = std::vector<Param<T>*>;

/// Non-trainable state that still belongs in a checkpoint (running statistics).
template <class T>
using BufferRefs = std::vector<std::pair<std::string, std::vector<T>*>>;

template <class T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, int in_channels, int out_channels, ConvGeometry g, bool bias);

    Tensor<T> forward(const Tensor<T>& x) const;
    /// Returns dx (empty when !need_dx). Weight gradients accumulate when param_grads.
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy, bool need_dx, bool param_grads = true);

    void init(Rng& rng);
    void collect(ParamRefs<T>& out);

    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    ConvGeometry geometry() const { return geom_; }

private:
    int in_ = 0;
    int out_ = 0;
    ConvGeometry geom_{};
    Param<T> weight_;
    Param<T> bias_;
};

template <class T>
class ConvTranspose2d {
public:
    ConvTranspose2d() = default;
    ConvTranspose2d(std::string name, int in_channels, int out_channels, ConvGeometry g, bool bias);

    Tensor<T> forward(const Tensor<T>& x) const;
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy, bool need_dx, bool param_grads = true);

    void init(Rng& rng);
    void collect(ParamRefs<T>& out);

    int in_channels() const { return in_; }
    int out_channels() const { return out_; }

private:
    int in_ = 0;
    int out_ = 0;
    ConvGeometry geom_{};
    Param<T> weight_;
    Param<T> bias_;
};

template <class T>
struct BatchNormCache {
    std::vector<T> mean;
    std::vector<T> inv_std;
    bool train = true;
};

template <class T>
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(std::string name, int channels);

    /// Training mode normalizes with batch statistics and updates the running
    /// estimates; inference mode uses the running estimates.
    Tensor<T> forward(const Tensor<T>& x, bool train, BatchNormCache<T>& cache);
    Tensor<T> backward(const Tensor<T>& x, const BatchNormCache<T>& cache, const Tensor<T>& dy,
                       bool param_grads = true);

    void init(Rng& rng);
    void collect(ParamRefs<T>& out);
    void collect_buffers(BufferRefs<T>& out);
    int channels() const { return static_cast<int>(gamma_.size()); }

    static constexpr double eps = 1e-5;
    static constexpr double momentum = 0.1;

private:
    std::string name_;
    Param<T> gamma_;
    Param<T> beta_;
    std::vector<T> running_mean_;
    std::vector<T> running_var_;
};

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class ConvTranspose2d<float>;
extern template class ConvTranspose2d<double>;
extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;

}  // namespace hgan
