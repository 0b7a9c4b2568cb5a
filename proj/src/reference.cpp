#include "hgan/reference.hpp"

#include <cmath>

namespace hgan::reference {

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int out_channels,
                         ConvGeometry g)
{
    const auto& s = x.shape();
    const int oh = conv_output_size(s.h, g);
    const int ow = conv_output_size(s.w, g);
    Tensor<T> y(Shape{out_channels, s.n, oh, ow});
    for (int co = 0; co < out_channels; ++co)
        for (int n = 0; n < s.n; ++n)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[co];
                    for (int ci = 0; ci < s.c; ++ci)
                        for (int ky = 0; ky < g.kernel; ++ky)
                            for (int kx = 0; kx < g.kernel; ++kx) {
                                const int iy = oy * g.stride - g.pad + ky;
                                const int ix = ox * g.stride - g.pad + kx;
                                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w)
                                    continue;
                                acc += double(weight[((co * s.c + ci) * g.kernel + ky) * g.kernel + kx]) *
                                       x.at(ci, n, iy, ix);
                            }
                    y.at(co, n, oy, ox) = static_cast<T>(acc);
                }
    return y;
}

template <class T>
void conv2d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, ConvGeometry g,
                     Tensor<T>* dx, std::span<T> dweight, std::span<T> dbias)
{
    const auto& s = x.shape();
    if (dx)
        *dx = Tensor<T>(s);
    for (int co = 0; co < dy.channels(); ++co)
        for (int n = 0; n < s.n; ++n)
            for (int oy = 0; oy < dy.height(); ++oy)
                for (int ox = 0; ox < dy.width(); ++ox) {
                    const T go = dy.at(co, n, oy, ox);
                    if (!dbias.empty())
                        dbias[co] += go;
                    for (int ci = 0; ci < s.c; ++ci)
                        for (int ky = 0; ky < g.kernel; ++ky)
                            for (int kx = 0; kx < g.kernel; ++kx) {
                                const int iy = oy * g.stride - g.pad + ky;
                                const int ix = ox * g.stride - g.pad + kx;
                                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w)
                                    continue;
                                const std::size_t wi = ((co * s.c + ci) * g.kernel + ky) * g.kernel + kx;
                                dweight[wi] += go * x.at(ci, n, iy, ix);
                                if (dx)
                                    dx->at(ci, n, iy, ix) += go * weight[wi];
                            }
                }
}

// A transposed convolution scatters every input pixel through the kernel:
// out[co, oy*s - p + ky, ox*s - p + kx] += w[ci, co, ky, kx] * in[ci, oy, ox].
template <class T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                                   int out_channels, ConvGeometry g)
{
    const auto& s = x.shape();
    const int oh = deconv_output_size(s.h, g);
    const int ow = deconv_output_size(s.w, g);
    Tensor<T> y(Shape{out_channels, s.n, oh, ow});
    for (int co = 0; co < out_channels; ++co)
        for (int n = 0; n < s.n; ++n)
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx)
                    y.at(co, n, yy, xx) = bias.empty() ? T(0) : bias[co];
    for (int ci = 0; ci < s.c; ++ci)
        for (int n = 0; n < s.n; ++n)
            for (int iy = 0; iy < s.h; ++iy)
                for (int ix = 0; ix < s.w; ++ix)
                    for (int co = 0; co < out_channels; ++co)
                        for (int ky = 0; ky < g.kernel; ++ky)
                            for (int kx = 0; kx < g.kernel; ++kx) {
                                const int oy = iy * g.stride - g.pad + ky;
                                const int ox = ix * g.stride - g.pad + kx;
                                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow)
                                    continue;
                                y.at(co, n, oy, ox) +=
                                    weight[((ci * out_channels + co) * g.kernel + ky) * g.kernel + kx] *
                                    x.at(ci, n, iy, ix);
                            }
    return y;
}

template <class T>
void conv_transpose2d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, ConvGeometry g,
                               Tensor<T>* dx, std::span<T> dweight, std::span<T> dbias)
{
    const auto& s = x.shape();
    const int cout = dy.channels();
    if (dx)
        *dx = Tensor<T>(s);
    if (!dbias.empty())
        for (int co = 0; co < cout; ++co)
            for (int n = 0; n < s.n; ++n)
                for (int yy = 0; yy < dy.height(); ++yy)
                    for (int xx = 0; xx < dy.width(); ++xx)
                        dbias[co] += dy.at(co, n, yy, xx);
    for (int ci = 0; ci < s.c; ++ci)
        for (int n = 0; n < s.n; ++n)
            for (int iy = 0; iy < s.h; ++iy)
                for (int ix = 0; ix < s.w; ++ix)
                    for (int co = 0; co < cout; ++co)
                        for (int ky = 0; ky < g.kernel; ++ky)
                            for (int kx = 0; kx < g.kernel; ++kx) {
                                const int oy = iy * g.stride - g.pad + ky;
                                const int ox = ix * g.stride - g.pad + kx;
                                if (oy < 0 || oy >= dy.height() || ox < 0 || ox >= dy.width())
                                    continue;
                                const std::size_t wi = ((ci * cout + co) * g.kernel + ky) * g.kernel + kx;
                                const T go = dy.at(co, n, oy, ox);
                                dweight[wi] += go * x.at(ci, n, iy, ix);
                                if (dx)
                                    dx->at(ci, n, iy, ix) += go * weight[wi];
                            }
}

template <class T>
void batchnorm_forward_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta, T eps,
                             Tensor<T>& y, std::vector<T>& mean, std::vector<T>& inv_std)
{
    const auto& s = x.shape();
    y = Tensor<T>(s);
    mean.assign(s.c, T(0));
    inv_std.assign(s.c, T(0));
    const double count = static_cast<double>(s.n) * s.h * s.w;
    for (int c = 0; c < s.c; ++c) {
        double sum = 0;
        for (int n = 0; n < s.n; ++n)
            for (int i = 0; i < s.h; ++i)
                for (int j = 0; j < s.w; ++j)
                    sum += x.at(c, n, i, j);
        const double m = sum / count;
        double var = 0;
        for (int n = 0; n < s.n; ++n)
            for (int i = 0; i < s.h; ++i)
                for (int j = 0; j < s.w; ++j)
                    var += (x.at(c, n, i, j) - m) * (x.at(c, n, i, j) - m);
        var /= count;
        mean[c] = static_cast<T>(m);
        inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
        for (int n = 0; n < s.n; ++n)
            for (int i = 0; i < s.h; ++i)
                for (int j = 0; j < s.w; ++j)
                    y.at(c, n, i, j) = static_cast<T>(gamma[c] * (x.at(c, n, i, j) - m) / std::sqrt(var + eps) +
                                                      beta[c]);
    }
}

// Written as the chain rule through mean and variance rather than the
// collapsed closed form used by the parallel kernel.
template <class T>
void batchnorm_backward(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> mean,
                        std::span<const T> inv_std, const Tensor<T>& dy, Tensor<T>& dx, std::span<T> dgamma,
                        std::span<T> dbeta)
{
    const auto& s = x.shape();
    dx = Tensor<T>(s);
    const double count = static_cast<double>(s.n) * s.h * s.w;
    for (int c = 0; c < s.c; ++c) {
        const double m = mean[c];
        const double is = inv_std[c];
        double dvar = 0;
        double dmean = 0;
        for (int n = 0; n < s.n; ++n)
            for (int i = 0; i < s.h; ++i)
                for (int j = 0; j < s.w; ++j) {
                    const double xc = x.at(c, n, i, j) - m;
                    const double dxhat = dy.at(c, n, i, j) * gamma[c];
                    dgamma[c] += static_cast<T>(dy.at(c, n, i, j) * xc * is);
                    dbeta[c] += dy.at(c, n, i, j);
                    dvar += dxhat * xc * -0.5 * is * is * is;
                    dmean += -dxhat * is;
                }
        double sum_xc = 0;
        for (int n = 0; n < s.n; ++n)
            for (int i = 0; i < s.h; ++i)
                for (int j = 0; j < s.w; ++j)
                    sum_xc += x.at(c, n, i, j) - m;
        dmean += dvar * -2.0 * sum_xc / count;
        for (int n = 0; n < s.n; ++n)
            for (int i = 0; i < s.h; ++i)
                for (int j = 0; j < s.w; ++j) {
                    const double xc = x.at(c, n, i, j) - m;
                    const double dxhat = dy.at(c, n, i, j) * gamma[c];
                    dx.at(c, n, i, j) = static_cast<T>(dxhat * is + dvar * 2.0 * xc / count + dmean / count);
                }
    }
}

#define HGAN_INSTANTIATE_REFERENCE(T)                                                                            \
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
    template void batchnorm_backward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>,                \
                                        std::span<const T>, const Tensor<T>&, Tensor<T>&, std::span<T>,          \
                                        std::span<T>);

HGAN_INSTANTIATE_REFERENCE(float)
HGAN_INSTANTIATE_REFERENCE(double)

}  // namespace hgan::reference
