#pragma once

// OpenMP-parallel compute kernels. Convolutions lower to im2col/col2im plus a
// BLAS GEMM over the whole batch; everything else is a data-parallel loop over
// channels or elements. The serial direct-loop counterparts in reference.hpp
// are the test oracle for every kernel here.

#include <cstdint>
#include <span>
#include <vector>

#include "hgan/tensor.hpp"

namespace hgan {

struct ConvGeometry {
    int kernel = 4;
    int stride = 2;
    int pad = 1;
};

inline int conv_output_size(int in, ConvGeometry g) { return (in + 2 * g.pad - g.kernel) / g.stride + 1; }
inline int deconv_output_size(int in, ConvGeometry g) { return (in - 1) * g.stride - 2 * g.pad + g.kernel; }

/// Keep-mask for inverted dropout, a pure function of (seed, element index) so
/// the mask does not depend on thread scheduling.
bool dropout_keep(std::uint64_t seed, std::uint64_t index, double rate);

namespace kernels {

/// Row-major C = alpha * op(A) * op(B) + beta * C.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b, int ldb,
          T beta, T* c, int ldc);

/// cols has shape [c*k*k, n*out_h*out_w].
template <class T>
void im2col(const Tensor<T>& x, ConvGeometry g, int out_h, int out_w, std::vector<T>& cols);

/// Scatter-adds cols back into x (which must already have its final shape).
template <class T>
void col2im(const T* cols, ConvGeometry g, int out_h, int out_w, Tensor<T>& x);

/// weight is [out_channels, in_channels*k*k]; bias may be empty.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int out_channels,
                         ConvGeometry g);

/// Accumulates into dweight/dbias (skipped when empty); dx is overwritten when non-null.
template <class T>
void conv2d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, ConvGeometry g,
                     Tensor<T>* dx, std::span<T> dweight, std::span<T> dbias);

/// weight is [in_channels, out_channels*k*k].
template <class T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                                   int out_channels, ConvGeometry g);

template <class T>
void conv_transpose2d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, ConvGeometry g,
                               Tensor<T>* dx, std::span<T> dweight, std::span<T> dbias);

/// Per-channel statistics over (n, h, w) with the biased variance.
template <class T>
void batchnorm_forward_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta, T eps,
                             Tensor<T>& y, std::vector<T>& mean, std::vector<T>& inv_std);

template <class T>
void batchnorm_forward_eval(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                           std::span<const T> running_mean, std::span<const T> running_var, T eps, Tensor<T>& y);

/// Gradient through training-mode batch normalization given the saved input
/// and its batch statistics. dgamma/dbeta accumulate.
template <class T>
void batchnorm_backward(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> mean,
                        std::span<const T> inv_std, const Tensor<T>& dy, Tensor<T>& dx, std::span<T> dgamma,
                        std::span<T> dbeta);

/// slope 0 gives a plain rectifier.
template <class T>
void leaky_relu_forward(Tensor<T>& x, T slope);

/// Uses the activation output: out > 0 iff in > 0 for any slope >= 0.
template <class T>
void leaky_relu_backward(const Tensor<T>& out, T slope, Tensor<T>& grad);

template <class T>
void tanh_forward(Tensor<T>& x);

template <class T>
void tanh_backward(const Tensor<T>& out, Tensor<T>& grad);

template <class T>
void dropout_forward(Tensor<T>& x, std::uint64_t seed, double rate);

template <class T>
void dropout_backward(Tensor<T>& grad, std::uint64_t seed, double rate);

/// y += alpha * x
template <class T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y);

}  // namespace kernels
}  // namespace hgan
