#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cbgt/numerics/tape.hpp"

// Differentiable ops recorded on a Tape. Image tensors are channels-last:
// (batch, height, width, channels). Shape errors throw std::invalid_argument.
namespace cbgt::numerics {

template <typename T> Var add(Tape<T>& tape, Var a, Var b);
template <typename T> Var mul(Tape<T>& tape, Var a, Var b);
template <typename T> Var scale(Tape<T>& tape, Var a, T factor);
/// Sum of all elements, shape (1).
template <typename T> Var sum(Tape<T>& tape, Var a);
template <typename T> Var reshape(Tape<T>& tape, Var a, Shape shape);

/// (M,K) x (K,N) -> (M,N).
template <typename T> Var matmul(Tape<T>& tape, Var a, Var b);

/// Fully connected layer: x (N,D), weight (O,D), bias (O) -> (N,O).
template <typename T> Var dense(Tape<T>& tape, Var x, Var weight, Var bias);

/// x (N,H,W,C), weight (O,kh,kw,C), bias (O) -> (N,Ho,Wo,O) with zero padding.
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weight, Var bias, std::size_t stride, std::size_t pad);

/// Non-overlapping k x k mean pooling; H and W must be multiples of k.
template <typename T> Var avg_pool(Tape<T>& tape, Var x, std::size_t k);

/// Trainable LeNet-style subsampling: coeff[c] * mean(k x k window) + bias[c].
template <typename T> Var subsample(Tape<T>& tape, Var x, Var coeff, Var bias, std::size_t k);

template <typename T> Var relu(Tape<T>& tape, Var x);
template <typename T> Var tanh(Tape<T>& tape, Var x);
template <typename T> Var sigmoid(Tape<T>& tape, Var x);

/// Per-channel normalisation over every axis but the last, using batch
/// statistics. The running estimates are updated as
/// running = momentum * running + (1 - momentum) * batch (unbiased variance).
template <typename T>
Var batch_norm_train(Tape<T>& tape, Var x, Var gamma, Var beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, T momentum = T(0.9), T eps = T(1e-5));

/// Same normalisation with fixed (running) statistics.
template <typename T>
Var batch_norm_eval(Tape<T>& tape, Var x, Var gamma, Var beta, const Tensor<T>& mean,
                    const Tensor<T>& var, T eps = T(1e-5));

/// Row-wise softmax of an (N,K) tensor.
template <typename T> Var softmax_rows(Tape<T>& tape, Var x);

/// Mean over rows of -log(max(p[r, target[r]], kLogFloor)); p is (N,K).
template <typename T>
Var cross_entropy(Tape<T>& tape, Var probs, std::span<const std::size_t> targets);

/// Copy of base (B,K) with src row i added into row rows[i]; rows are distinct.
template <typename T>
Var scatter_add_rows(Tape<T>& tape, Var base, Var src, std::span<const std::size_t> rows);

/// Columns [begin, end) of an (N,D) tensor.
template <typename T> Var slice_cols(Tape<T>& tape, Var x, std::size_t begin, std::size_t end);

}  // namespace cbgt::numerics
