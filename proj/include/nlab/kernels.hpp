#pragma once

#include <span>

#include "nlab/matrix.hpp"

// Dense kernels behind the training core.
//
// Every kernel exists twice: a serial reference and an OpenMP version. Both
// accumulate each output element over the same index sequence, so their
// results are bit-identical for any thread count. The unqualified entry points
// pick the OpenMP version once the work is large enough to amortize a
// parallel region.
namespace nlab::kernels {

// Weights are stored out x in; `x` is batch x in, `out` is batch x out.
//   out[b][o] = bias[o] + sum_i w[o][i] * x[b][i]
// delta is batch x out, act is batch x in.
//   grad_w[o][i] = sum_b delta[b][o] * act[b][i]
//   grad_b[o]    = sum_b delta[b][o]
//   grad_x[b][i] = sum_o delta[b][o] * w[o][i]

namespace serial {
void affine(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& out);
void softmax_rows(Matrix& z);
void weight_grad(const Matrix& delta, const Matrix& act, Matrix& grad_w,
                 std::span<double> grad_b);
void input_grad(const Matrix& delta, const Matrix& w, Matrix& grad_x);
}  // namespace serial

namespace omp {
void affine(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& out);
void softmax_rows(Matrix& z);
void weight_grad(const Matrix& delta, const Matrix& act, Matrix& grad_w,
                 std::span<double> grad_b);
void input_grad(const Matrix& delta, const Matrix& w, Matrix& grad_x);
}  // namespace omp

// Multiply-adds below which the serial kernel is used.
inline constexpr std::size_t kParallelWorkThreshold = std::size_t{1} << 16;

void affine(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& out);
void softmax_rows(Matrix& z);
void weight_grad(const Matrix& delta, const Matrix& act, Matrix& grad_w,
                 std::span<double> grad_b);
void input_grad(const Matrix& delta, const Matrix& w, Matrix& grad_x);

}  // namespace nlab::kernels
