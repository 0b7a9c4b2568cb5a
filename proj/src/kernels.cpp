#include "hgan/kernels.hpp"

#include <cblas.h>

#include <Eigen/Core>

#include <cmath>
#include <cstring>

namespace hgan {

namespace {

std::uint64_t splitmix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

bool dropout_keep(std::uint64_t seed, std::uint64_t index, double rate)
{
    const std::uint64_t h = splitmix64(seed ^ splitmix64(index));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u >= rate;
}

namespace kernels {

template <>
void gemm<float>(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc)
{
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
                alpha, a, lda, b, ldb, beta, c, ldc);
}

// Double precision only serves gradient verification. It goes through Eigen
// because the AVX-512 DGEMM kernels of the system OpenBLAS (0.3.20) return
// wrong products for some shapes (e.g. m=16, n=256, k=300); SGEMM is unaffected.
template <>
void gemm<double>(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
                  const double* b, int ldb, double beta, double* c, int ldc)
{
    using Stride = Eigen::OuterStride<>;
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using ColMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
    // A row-major r x c block with leading dimension ld is a column-major c x r block.
    Eigen::Map<RowMajor, 0, Stride> cm(c, m, n, Stride(ldc));
    auto product = [&](const auto& lhs, const auto& rhs) {
        if (beta == 0.0)
            cm.noalias() = alpha * (lhs * rhs);
        else {
            cm *= beta;
            cm.noalias() += alpha * (lhs * rhs);
        }
    };
    const Eigen::Map<const RowMajor, 0, Stride> a_n(a, trans_a ? 0 : m, trans_a ? 0 : k, Stride(lda));
    const Eigen::Map<const ColMajor, 0, Stride> a_t(a, trans_a ? m : 0, trans_a ? k : 0, Stride(lda));
    const Eigen::Map<const RowMajor, 0, Stride> b_n(b, trans_b ? 0 : k, trans_b ? 0 : n, Stride(ldb));
    const Eigen::Map<const ColMajor, 0, Stride> b_t(b, trans_b ? k : 0, trans_b ? n : 0, Stride(ldb));
    if (!trans_a && !trans_b)
        product(a_n, b_n);
    else if (!trans_a)
        product(a_n, b_t);
    else if (!trans_b)
        product(a_t, b_n);
    else
        product(a_t, b_t);
}

template <class T>
void im2col(const Tensor<T>& x, ConvGeometry g, int out_h, int out_w, std::vector<T>& cols)
{
    const auto& s = x.shape();
    const int kk = g.kernel * g.kernel;
    const std::size_t p = static_cast<std::size_t>(s.n) * out_h * out_w;
    cols.assign(static_cast<std::size_t>(s.c) * kk * p, T(0));
    const int rows = s.c * kk;

#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const int c = r / kk;
        const int ky = (r % kk) / g.kernel;
        const int kx = r % g.kernel;
        T* dst = cols.data() + static_cast<std::size_t>(r) * p;
        const T* src = x.channel(c);
        for (int n = 0; n < s.n; ++n) {
            const T* img = src + static_cast<std::size_t>(n) * s.h * s.w;
            for (int oy = 0; oy < out_h; ++oy) {
                const int iy = oy * g.stride - g.pad + ky;
                T* row = dst + (static_cast<std::size_t>(n) * out_h + oy) * out_w;
                if (iy < 0 || iy >= s.h)
                    continue;
                const T* line = img + static_cast<std::size_t>(iy) * s.w;
                for (int ox = 0; ox < out_w; ++ox) {
                    const int ix = ox * g.stride - g.pad + kx;
                    if (ix >= 0 && ix < s.w)
                        row[ox] = line[ix];
                }
            }
        }
    }
}

template <class T>
void col2im(const T* cols, ConvGeometry g, int out_h, int out_w, Tensor<T>& x)
{
    const auto& s = x.shape();
    const int kk = g.kernel * g.kernel;
    const std::size_t p = static_cast<std::size_t>(s.n) * out_h * out_w;

    // One channel per task: the k*k rows of a channel only touch that channel.
#pragma omp parallel for schedule(static)
    for (int c = 0; c < s.c; ++c) {
        T* dst = x.channel(c);
        for (int k = 0; k < kk; ++k) {
            const int ky = k / g.kernel;
            const int kx = k % g.kernel;
            const T* src = cols + (static_cast<std::size_t>(c) * kk + k) * p;
            for (int n = 0; n < s.n; ++n) {
                T* img = dst + static_cast<std::size_t>(n) * s.h * s.w;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= s.h)
                        continue;
                    const T* row = src + (static_cast<std::size_t>(n) * out_h + oy) * out_w;
                    T* line = img + static_cast<std::size_t>(iy) * s.w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < s.w)
                            line[ix] += row[ox];
                    }
                }
            }
        }
    }
}

namespace {

template <class T>
void add_bias(Tensor<T>& y, std::span<const T> bias)
{
    if (bias.empty())
        return;
    const std::size_t p = y.shape().plane();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < y.channels(); ++c) {
        T* row = y.channel(c);
        for (std::size_t i = 0; i < p; ++i)
            row[i] += bias[c];
    }
}

template <class T>
void accumulate_bias_grad(const Tensor<T>& dy, std::span<T> dbias)
{
    if (dbias.empty())
        return;
    const std::size_t p = dy.shape().plane();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < dy.channels(); ++c) {
        const T* row = dy.channel(c);
        T acc = 0;
        for (std::size_t i = 0; i < p; ++i)
            acc += row[i];
        dbias[c] += acc;
    }
}

}  // namespace

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int out_channels,
                         ConvGeometry g)
{
    const auto& s = x.shape();
    const int oh = conv_output_size(s.h, g);
    const int ow = conv_output_size(s.w, g);
    const int r = s.c * g.kernel * g.kernel;
    if (weight.size() != static_cast<std::size_t>(out_channels) * r)
        throw ShapeMismatch("conv2d_forward: weight size does not match input channels");
    std::vector<T> cols;
    im2col(x, g, oh, ow, cols);
    Tensor<T> y(Shape{out_channels, s.n, oh, ow});
    const int p = static_cast<int>(y.shape().plane());
    gemm<T>(false, false, out_channels, p, r, T(1), weight.data(), r, cols.data(), p, T(0), y.data(), p);
    add_bias(y, bias);
    return y;
}

template <class T>
void conv2d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, ConvGeometry g,
                     Tensor<T>* dx, std::span<T> dweight, std::span<T> dbias)
{
    const auto& s = x.shape();
    const int oh = dy.height();
    const int ow = dy.width();
    const int cout = dy.channels();
    const int r = s.c * g.kernel * g.kernel;
    const int p = static_cast<int>(dy.shape().plane());
    std::vector<T> cols;
    if (!dweight.empty()) {
        im2col(x, g, oh, ow, cols);
        gemm<T>(false, true, cout, r, p, T(1), dy.data(), p, cols.data(), p, T(1), dweight.data(), r);
    }
    accumulate_bias_grad(dy, dbias);
    if (dx) {
        cols.resize(static_cast<std::size_t>(r) * p);
        gemm<T>(true, false, r, p, cout, T(1), weight.data(), r, dy.data(), p, T(0), cols.data(), p);
        *dx = Tensor<T>(s);
        col2im(cols.data(), g, oh, ow, *dx);
    }
}

template <class T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                                   int out_channels, ConvGeometry g)
{
    const auto& s = x.shape();
    const int kk = g.kernel * g.kernel;
    const int r = out_channels * kk;
    if (weight.size() != static_cast<std::size_t>(s.c) * r)
        throw ShapeMismatch("conv_transpose2d_forward: weight size does not match input channels");
    const int p = static_cast<int>(s.plane());
    std::vector<T> cols(static_cast<std::size_t>(r) * p);
    gemm<T>(true, false, r, p, s.c, T(1), weight.data(), r, x.data(), p, T(0), cols.data(), p);
    Tensor<T> y(Shape{out_channels, s.n, deconv_output_size(s.h, g), deconv_output_size(s.w, g)});
    col2im(cols.data(), g, s.h, s.w, y);
    add_bias(y, bias);
    return y;
}

template <class T>
void conv_transpose2d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, ConvGeometry g,
                               Tensor<T>* dx, std::span<T> dweight, std::span<T> dbias)
{
    const auto& s = x.shape();
    const int r = dy.channels() * g.kernel * g.kernel;
    const int p = static_cast<int>(s.plane());
    std::vector<T> dcols;
    im2col(dy, g, s.h, s.w, dcols);
    if (!dweight.empty())
        gemm<T>(false, true, s.c, r, p, T(1), x.data(), p, dcols.data(), p, T(1), dweight.data(), r);
    accumulate_bias_grad(dy, dbias);
    if (dx) {
        *dx = Tensor<T>(s);
        gemm<T>(false, false, s.c, p, r, T(1), weight.data(), r, dcols.data(), p, T(0), dx->data(), p);
    }
}

template <class T>
void batchnorm_forward_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta, T eps,
                             Tensor<T>& y, std::vector<T>& mean, std::vector<T>& inv_std)
{
    const int c = x.channels();
    const std::size_t p = x.shape().plane();
    y = Tensor<T>(x.shape());
    mean.assign(c, T(0));
    inv_std.assign(c, T(0));
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const T* in = x.channel(ch);
        double sum = 0;
        for (std::size_t i = 0; i < p; ++i)
            sum += in[i];
        const double m = sum / static_cast<double>(p);
        double sq = 0;
        for (std::size_t i = 0; i < p; ++i) {
            const double d = in[i] - m;
            sq += d * d;
        }
        const double is = 1.0 / std::sqrt(sq / static_cast<double>(p) + eps);
        mean[ch] = static_cast<T>(m);
        inv_std[ch] = static_cast<T>(is);
        const T scale = static_cast<T>(gamma[ch] * is);
        const T shift = static_cast<T>(beta[ch] - gamma[ch] * m * is);
        T* out = y.channel(ch);
        for (std::size_t i = 0; i < p; ++i)
            out[i] = in[i] * scale + shift;
    }
}

template <class T>
void batchnorm_forward_eval(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                            std::span<const T> running_mean, std::span<const T> running_var, T eps, Tensor<T>& y)
{
    const int c = x.channels();
    const std::size_t p = x.shape().plane();
    y = Tensor<T>(x.shape());
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const T is = T(1) / std::sqrt(running_var[ch] + eps);
        const T scale = gamma[ch] * is;
        const T shift = beta[ch] - running_mean[ch] * scale;
        const T* in = x.channel(ch);
        T* out = y.channel(ch);
        for (std::size_t i = 0; i < p; ++i)
            out[i] = in[i] * scale + shift;
    }
}

template <class T>
void batchnorm_backward(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> mean,
                        std::span<const T> inv_std, const Tensor<T>& dy, Tensor<T>& dx, std::span<T> dgamma,
                        std::span<T> dbeta)
{
    const int c = x.channels();
    const std::size_t p = x.shape().plane();
    dx = Tensor<T>(x.shape());
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const T* in = x.channel(ch);
        const T* g = dy.channel(ch);
        const double m = mean[ch];
        const double is = inv_std[ch];
        double sum_dy = 0;
        double sum_dy_xhat = 0;
        for (std::size_t i = 0; i < p; ++i) {
            sum_dy += g[i];
            sum_dy_xhat += g[i] * (in[i] - m) * is;
        }
        dgamma[ch] += static_cast<T>(sum_dy_xhat);
        dbeta[ch] += static_cast<T>(sum_dy);
        const double np = static_cast<double>(p);
        const double k = gamma[ch] * is / np;
        T* out = dx.channel(ch);
        for (std::size_t i = 0; i < p; ++i) {
            const double xhat = (in[i] - m) * is;
            out[i] = static_cast<T>(k * (np * g[i] - sum_dy - xhat * sum_dy_xhat));
        }
    }
}

template <class T>
void leaky_relu_forward(Tensor<T>& x, T slope)
{
    T* d = x.data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        if (d[i] < T(0))
            d[i] *= slope;
}

template <class T>
void leaky_relu_backward(const Tensor<T>& out, T slope, Tensor<T>& grad)
{
    require_same_shape(out.shape(), grad.shape(), "leaky_relu_backward");
    const T* o = out.data();
    T* g = grad.data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        if (!(o[i] > T(0)))
            g[i] *= slope;
}

template <class T>
void tanh_forward(Tensor<T>& x)
{
    T* d = x.data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        d[i] = std::tanh(d[i]);
}

template <class T>
void tanh_backward(const Tensor<T>& out, Tensor<T>& grad)
{
    require_same_shape(out.shape(), grad.shape(), "tanh_backward");
    const T* o = out.data();
    T* g = grad.data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        g[i] *= T(1) - o[i] * o[i];
}

template <class T>
void dropout_forward(Tensor<T>& x, std::uint64_t seed, double rate)
{
    T* d = x.data();
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        d[i] = dropout_keep(seed, static_cast<std::uint64_t>(i), rate) ? d[i] * scale : T(0);
}

template <class T>
void dropout_backward(Tensor<T>& grad, std::uint64_t seed, double rate)
{
    dropout_forward(grad, seed, rate);
}

template <class T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y)
{
    require_same_shape(x.shape(), y.shape(), "axpy");
    const T* a = x.data();
    T* b = y.data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        b[i] += alpha * a[i];
}

#define HGAN_INSTANTIATE_KERNELS(T)                                                                              \
    template void im2col<T>(const Tensor<T>&, ConvGeometry, int, int, std::vector<T>&);                          \
    template void col2im<T>(const T*, ConvGeometry, int, int, Tensor<T>&);                                       \
    template Tensor<T> conv2d_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, int,          \
                                         ConvGeometry);                                                          \
    template void conv2d_backward<T>(const Tensor<T>&, std::span<const T>, const Tensor<T>&, ConvGeometry,       \
                                     Tensor<T>*, std::span<T>, std::span<T>);                                    \
    template Tensor<T> conv_transpose2d_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, int, \
                                                   ConvGeometry);                                                \
    template void conv_transpose2d_backward<T>(const Tensor<T>&, std::span<const T>, const Tensor<T>&,           \
                                               ConvGeometry, Tensor<T>*, std::span<T>, std::span<T>);            \
    template void batchnorm_forward_train<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, T,        \
                                             Tensor<T>&, std::vector<T>&, std::vector<T>&);                      \
    template void batchnorm_forward_eval<T>(const Tensor<T>&, std::span<const T>, std::span<const T>,            \
                                            std::span<const T>, std::span<const T>, T, Tensor<T>&);              \
    template void batchnorm_backward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>,                \
                                        std::span<const T>, const Tensor<T>&, Tensor<T>&, std::span<T>,          \
                                        std::span<T>);                                                           \
    template void leaky_relu_forward<T>(Tensor<T>&, T);                                                          \
    template void leaky_relu_backward<T>(const Tensor<T>&, T, Tensor<T>&);                                       \
    template void tanh_forward<T>(Tensor<T>&);                                                                   \
    template void tanh_backward<T>(const Tensor<T>&, Tensor<T>&);                                                \
    template void dropout_forward<T>(Tensor<T>&, std::uint64_t, double);                                         \
    template void dropout_backward<T>(Tensor<T>&, std::uint64_t, double);                                        \
    template void axpy<T>(T, const Tensor<T>&, Tensor<T>&);

HGAN_INSTANTIATE_KERNELS(float)
HGAN_INSTANTIATE_KERNELS(double)

}  // namespace kernels
}  // namespace hgan
