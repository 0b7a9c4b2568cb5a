#pragma once

// Serial direct-loop implementations of the convolution and normalization
// kernels. Slow and obvious on purpose; kept for tests and the benchmark.

#include <span>
#include <vector>

#include "hgan/kernels.hpp"
#include "hgan/tensor.hpp"

namespace hgan::reference {

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int out_channels,
                         ConvGeometry g);

template <class T>
void conv2d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, ConvGeometry g,
                     Tensor<T>* dx, std::span<T> dweight, std::span<T> dbias);

template <class T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                                   int out_channels, ConvGeometry g);

template <class T>
void conv_transpose2d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, ConvGeometry g,
                               Tensor<T>* dx, std::span<T> dweight, std::span<T> dbias);

template <class T>
void batchnorm_forward_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta, T eps,
                             Tensor<T>& y, std::vector<T>& mean, std::vector<T>& inv_std);

template <class T>
void batchnorm_backward(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> mean,
                        std::span<const T> inv_std, const Tensor<T>& dy, Tensor<T>& dx, std::span<T> dgamma,
                        std::span<T> dbeta);

}  // namespace hgan::reference
