#include "hgan/layers.hpp"

#include <cmath>

namespace hgan {

namespace {

// DCGAN-style initialization used throughout the pix2pix lineage.
constexpr double kInitStd = 0.02;

template <class T>
void fill_normal(std::vector<T>& v, Rng& rng, double mean, double stddev)
{
    std::normal_distribution<double> dist(mean, stddev);
    for (auto& x : v)
        x = static_cast<T>(dist(rng));
}

template <class T>
std::span<T> grad_span(Param<T>& p, bool enabled)
{
    return enabled ? std::span<T>(p.grad) : std::span<T>();
}

}  // namespace

template <class T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, ConvGeometry g, bool bias)
    : in_(in_channels),
      out_(out_channels),
      geom_(g),
      weight_(name + ".weight", static_cast<std::size_t>(out_channels) * in_channels * g.kernel * g.kernel)
{
    if (bias)
        bias_ = Param<T>(name + ".bias", out_channels);
}

template <class T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const
{
    if (x.channels() != in_)
        throw ShapeMismatch("Conv2d " + weight_.name + ": expected " + std::to_string(in_) + " channels, got " +
                            x.shape().str());
    return kernels::conv2d_forward<T>(x, weight_.value, bias_.value, out_, geom_);
}

template <class T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy, bool need_dx, bool param_grads)
{
    Tensor<T> dx;
    kernels::conv2d_backward<T>(x, weight_.value, dy, geom_, need_dx ? &dx : nullptr, grad_span(weight_, param_grads),
                                grad_span(bias_, param_grads));
    return dx;
}

template <class T>
void Conv2d<T>::init(Rng& rng)
{
    fill_normal(weight_.value, rng, 0.0, kInitStd);
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <class T>
void Conv2d<T>::collect(ParamRefs<T>& out)
{
    out.push_back(&weight_);
    if (bias_.size() > 0)
        out.push_back(&bias_);
}

template <class T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, int in_channels, int out_channels, ConvGeometry g, bool bias)
    : in_(in_channels),
      out_(out_channels),
      geom_(g),
      weight_(name + ".weight", static_cast<std::size_t>(in_channels) * out_channels * g.kernel * g.kernel)
{
    if (bias)
        bias_ = Param<T>(name + ".bias", out_channels);
}

template <class T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x) const
{
    if (x.channels() != in_)
        throw ShapeMismatch("ConvTranspose2d " + weight_.name + ": expected " + std::to_string(in_) +
                            " channels, got " + x.shape().str());
    return kernels::conv_transpose2d_forward<T>(x, weight_.value, bias_.value, out_, geom_);
}

template <class T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy, bool need_dx, bool param_grads)
{
    Tensor<T> dx;
    kernels::conv_transpose2d_backward<T>(x, weight_.value, dy, geom_, need_dx ? &dx : nullptr,
                                          grad_span(weight_, param_grads), grad_span(bias_, param_grads));
    return dx;
}

template <class T>
void ConvTranspose2d<T>::init(Rng& rng)
{
    fill_normal(weight_.value, rng, 0.0, kInitStd);
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <class T>
void ConvTranspose2d<T>::collect(ParamRefs<T>& out)
{
    out.push_back(&weight_);
    if (bias_.size() > 0)
        out.push_back(&bias_);
}

template <class T>
BatchNorm2d<T>::BatchNorm2d(std::string name, int channels)
    : name_(name),
      gamma_(name + ".gamma", channels),
      beta_(name + ".beta", channels),
      running_mean_(channels, T(0)),
      running_var_(channels, T(1))
{
    std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
}

template <class T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, bool train, BatchNormCache<T>& cache)
{
    Tensor<T> y;
    cache.train = train;
    if (!train) {
        kernels::batchnorm_forward_eval<T>(x, gamma_.value, beta_.value, running_mean_, running_var_, T(eps), y);
        return y;
    }
    kernels::batchnorm_forward_train<T>(x, gamma_.value, beta_.value, T(eps), y, cache.mean, cache.inv_std);
    const double count = static_cast<double>(x.shape().plane());
    const double unbias = count > 1 ? count / (count - 1) : 1.0;
    for (int c = 0; c < channels(); ++c) {
        const double var = 1.0 / (double(cache.inv_std[c]) * cache.inv_std[c]) - eps;
        running_mean_[c] = static_cast<T>((1 - momentum) * running_mean_[c] + momentum * cache.mean[c]);
        running_var_[c] = static_cast<T>((1 - momentum) * running_var_[c] + momentum * var * unbias);
    }
    return y;
}

template <class T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& x, const BatchNormCache<T>& cache, const Tensor<T>& dy,
                                   bool param_grads)
{
    Tensor<T> dx;
    if (cache.train) {
        std::vector<T> scratch_g;
        std::vector<T> scratch_b;
        std::span<T> dg = gamma_.grad;
        std::span<T> db = beta_.grad;
        if (!param_grads) {
            scratch_g.assign(channels(), T(0));
            scratch_b.assign(channels(), T(0));
            dg = scratch_g;
            db = scratch_b;
        }
        kernels::batchnorm_backward<T>(x, gamma_.value, cache.mean, cache.inv_std, dy, dx, dg, db);
        return dx;
    }
    dx = Tensor<T>(x.shape());
    const std::size_t p = x.shape().plane();
    for (int c = 0; c < channels(); ++c) {
        const double is = 1.0 / std::sqrt(double(running_var_[c]) + eps);
        const T* in = x.channel(c);
        const T* g = dy.channel(c);
        T* out = dx.channel(c);
        double sg = 0;
        double sb = 0;
        for (std::size_t i = 0; i < p; ++i) {
            out[i] = static_cast<T>(g[i] * gamma_.value[c] * is);
            sg += g[i] * (in[i] - running_mean_[c]) * is;
            sb += g[i];
        }
        if (param_grads) {
            gamma_.grad[c] += static_cast<T>(sg);
            beta_.grad[c] += static_cast<T>(sb);
        }
    }
    return dx;
}

template <class T>
void BatchNorm2d<T>::init(Rng& rng)
{
    fill_normal(gamma_.value, rng, 1.0, kInitStd);
    std::fill(beta_.value.begin(), beta_.value.end(), T(0));
}

template <class T>
void BatchNorm2d<T>::collect(ParamRefs<T>& out)
{
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

template <class T>
void BatchNorm2d<T>::collect_buffers(BufferRefs<T>& out)
{
    out.emplace_back(name_ + ".running_mean", &running_mean_);
    out.emplace_back(name_ + ".running_var", &running_var_);
}

template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;

}  // namespace hgan
