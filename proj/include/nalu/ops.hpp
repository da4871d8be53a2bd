#pragma once

#include <string_view>
#include <utility>

#include "nalu/tape.hpp"
#include "nalu/tensor.hpp"

// Differentiable primitives. Every op records its result on the tape and
// throws NumericError if the result is not finite.
namespace nalu::ops {

enum class Padding { Same, Valid };
enum class Mode { Train, Infer };

enum class UnaryKind {
  Sigmoid,
  Tanh,
  Relu,
  LeakyRelu,
  Elu,
  Prelu,
  HardSigmoid,
  Linear,
  Exp,
  Log,
  Abs,
};

UnaryKind parse_unary_kind(std::string_view name);
std::string_view to_string(UnaryKind kind);

inline constexpr float kLeakySlope = 0.01f;
inline constexpr float kEluAlpha = 1.0f;
inline constexpr float kPreluInit = 0.25f;
inline constexpr float kBatchNormEps = 1e-5f;
inline constexpr float kBatchNormMomentum = 0.9f;

// Scalar reference implementations shared by the ops and the gate functions.
float sigmoid(float x);
float hard_sigmoid(float x);

// Elementwise; operands must have identical shapes.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, float s);
Var add_scalar(Tape& t, Var a, float s);

// Reductions return shape {1}; accumulation is done in double.
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
Var mse(Tape& t, Var pred, Var target);

// [m,k] x [k,n] -> [m,n], accumulated in double.
Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);
// Same elements in row-major order under a new shape of equal size.
Var reshape(Tape& t, Var a, Shape shape);
// x [rows, n] + b [n] broadcast over rows.
Var add_row_bias(Tape& t, Var x, Var b);
// x [N,C,H,W] + b [C] broadcast over N,H,W.
Var add_channel_bias(Tape& t, Var x, Var b);

// Cross-correlation (no kernel flip). x [N,C,H,W], k [F,C,kh,kw].
Var conv2d(Tape& t, Var x, Var k, Padding pad);
// 2x2 stride-2 max pool. Ties route the gradient to the first window
// element in row-major order.
Var maxpool2(Tape& t, Var x);
// Nearest-neighbour upsampling by replicating each pixel into an f x f block.
Var upsample_repeat(Tape& t, Var x, std::size_t f);

struct BatchNormState {
  Tensor running_mean;  // [C], starts at 0
  Tensor running_var;   // [C], starts at 1
  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(Shape{channels}, 0.0f), running_var(Shape{channels}, 1.0f) {}
};

// Per-channel normalization over N,H,W. Train mode uses batch statistics and
// updates `state`; Infer mode uses the running statistics.
Var batchnorm(Tape& t, Var x, Var gamma, Var beta, BatchNormState& state, Mode mode);

// Concatenate along dim 1 of two [N,C,H,W] tensors.
Var concat_channels(Tape& t, Var a, Var b);
// Inverse of concat_channels on plain values: channels [0,c1) and [c1,C).
std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::size_t c1);

// Elementwise activation. Prelu needs a slope parameter; use prelu() for it.
Var unary(Tape& t, Var x, UnaryKind kind);
// Per-channel learnable negative slope; the channel axis is dim 1 (rank 2 or 4).
Var prelu(Tape& t, Var x, Var slope);

// [N,C,H,W] -> [N*H*W, C], one row per pixel.
Var channels_to_rows(Tape& t, Var x);
// [N*H*W, C] -> [N,C,H,W].
Var rows_to_channels(Tape& t, Var rows, std::size_t n, std::size_t h, std::size_t w);

}  // namespace nalu::ops
