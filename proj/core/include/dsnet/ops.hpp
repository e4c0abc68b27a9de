#pragma once

#include <cstddef>
#include <random>
#include <span>

#include "dsnet/graph.hpp"
#include "dsnet/tensor.hpp"

/// Differentiable primitives. Every op checks its output for NaN/Inf and,
/// when the graph records and an input requires grad, appends a backward
/// node to the graph.
namespace dsnet::ops {

enum class Mode { kTrain, kEval };

struct Padding {
  std::size_t h = 0;
  std::size_t w = 0;
};

struct Window {
  std::size_t h = 2;
  std::size_t w = 2;
};

enum class Activation { kRelu, kSigmoid, kTanh };

// Running statistics owned by a batch-norm layer. momentum weights the new
// batch statistic.
struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Stride-1 cross-correlation. input N×Cin×H×W, kernel Cout×Cin×Kh×Kw (odd
// sizes), bias Cout. Output spatial size is H + 2p - K + 1.
Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding pad);

// Non-overlapping max pool, stride == window; trailing rows/cols that do not
// fill a window are dropped. Ties go to the first element in row-major order.
Tensor maxpool2d(Graph& g, const Tensor& input, Window window = {});

// input N×Din · weight Din×Dout + bias Dout.
Tensor affine(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias);

// a M×K (or K×M with transpose_a) times b K×N.
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b, bool transpose_a = false);

// Per-channel normalization of N×C or N×C×H×W input. Train mode uses batch
// statistics (population variance) and updates `stats`; eval mode uses stats.
Tensor batchnorm(Graph& g, const Tensor& input, const Tensor& scale, const Tensor& shift,
                 BatchNormStats& stats, Mode mode);

Tensor activation(Graph& g, const Tensor& input, Activation kind);
inline Tensor relu(Graph& g, const Tensor& x) { return activation(g, x, Activation::kRelu); }
inline Tensor sigmoid(Graph& g, const Tensor& x) { return activation(g, x, Activation::kSigmoid); }
inline Tensor tanh(Graph& g, const Tensor& x) { return activation(g, x, Activation::kTanh); }

Tensor softmax(Graph& g, const Tensor& input, std::size_t axis);

// Inverted dropout. Identity in eval mode or at rate 0.
Tensor dropout(Graph& g, const Tensor& input, double rate, Mode mode, std::mt19937_64& rng);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& x, double factor);

Tensor sum(Graph& g, const Tensor& x);
Tensor square_sum(Graph& g, const Tensor& x);
Tensor sum_axis(Graph& g, const Tensor& x, std::size_t axis);
Tensor mean_axis(Graph& g, const Tensor& x, std::size_t axis);

Tensor reshape(Graph& g, const Tensor& x, Shape shape);
// (..., A, B) -> (..., B, A)
Tensor swap_last_axes(Graph& g, const Tensor& x);
// Concatenate along the last axis.
Tensor concat_last(Graph& g, const Tensor& a, const Tensor& b);

// Copy that never carries gradient back to `x`.
Tensor stop_gradient(const Tensor& x);

// Column-wise z-score of an N×D matrix: (x - mean) / max(population std, eps).
// Columns whose spread is below eps are only centered and scaled by 1/eps.
Tensor zscore_columns(Graph& g, const Tensor& x, double eps);

// Row-wise KL(p_i || q_i) of two N×D row-stochastic matrices, natural log,
// arguments clamped to eps inside the log. Returns a length-N vector.
Tensor kl_rows(Graph& g, const Tensor& p, const Tensor& q, double eps);

// -(1/N) Σ ln(max(probs[i, labels[i]], eps)) for N×C probabilities.
Tensor nll(Graph& g, const Tensor& probs, std::span<const int> labels, double eps);

}  // namespace dsnet::ops
