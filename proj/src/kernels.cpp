#include "nlab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "nlab/error.hpp"

namespace nlab::kernels {
namespace {

void check_affine(const Matrix& x, const Matrix& w, std::span<const double> bias) {
  if (x.cols != w.cols || bias.size() != w.rows) {
    throw DimensionError("affine: input has " + std::to_string(x.cols) +
                         " columns, layer expects " + std::to_string(w.cols));
  }
}

void check_weight_grad(const Matrix& delta, const Matrix& act) {
  if (delta.rows != act.rows) {
    throw DimensionError("weight_grad: batch size mismatch");
  }
}

void check_input_grad(const Matrix& delta, const Matrix& w) {
  if (delta.cols != w.rows) {
    throw DimensionError("input_grad: delta width does not match layer");
  }
}

inline void softmax_row(std::span<double> r) {
  const double top = *std::max_element(r.begin(), r.end());
  double sum = 0.0;
  for (double& v : r) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : r) v /= sum;
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

namespace serial {

void affine(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& out) {
  check_affine(x, w, bias);
  out = Matrix(x.rows, w.rows);
  for (std::size_t b = 0; b < x.rows; ++b) {
    const double* xr = x.data.data() + b * x.cols;
    for (std::size_t o = 0; o < w.rows; ++o) {
      out(b, o) = dot(w.data.data() + o * w.cols, xr, w.cols) + bias[o];
    }
  }
}

void softmax_rows(Matrix& z) {
  if (z.cols == 0) return;
  for (std::size_t b = 0; b < z.rows; ++b) softmax_row(z.row(b));
}

void weight_grad(const Matrix& delta, const Matrix& act, Matrix& grad_w,
                 std::span<double> grad_b) {
  check_weight_grad(delta, act);
  grad_w = Matrix(delta.cols, act.cols);
  std::fill(grad_b.begin(), grad_b.end(), 0.0);
  for (std::size_t b = 0; b < delta.rows; ++b) {
    for (std::size_t o = 0; o < delta.cols; ++o) {
      const double d = delta(b, o);
      grad_b[o] += d;
      double* gw = grad_w.data.data() + o * act.cols;
      const double* a = act.data.data() + b * act.cols;
      for (std::size_t i = 0; i < act.cols; ++i) gw[i] += d * a[i];
    }
  }
}

void input_grad(const Matrix& delta, const Matrix& w, Matrix& grad_x) {
  check_input_grad(delta, w);
  grad_x = Matrix(delta.rows, w.cols);
  for (std::size_t b = 0; b < delta.rows; ++b) {
    double* gx = grad_x.data.data() + b * w.cols;
    for (std::size_t o = 0; o < w.rows; ++o) {
      const double d = delta(b, o);
      const double* wr = w.data.data() + o * w.cols;
      for (std::size_t i = 0; i < w.cols; ++i) gx[i] += d * wr[i];
    }
  }
}

}  // namespace serial

namespace omp {

void affine(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& out) {
  check_affine(x, w, bias);
  out = Matrix(x.rows, w.rows);
  const auto rows = static_cast<std::ptrdiff_t>(x.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < rows; ++b) {
    const double* xr = x.data.data() + b * x.cols;
    double* zr = out.data.data() + b * out.cols;
    for (std::size_t o = 0; o < w.rows; ++o) {
      zr[o] = dot(w.data.data() + o * w.cols, xr, w.cols) + bias[o];
    }
  }
}

void softmax_rows(Matrix& z) {
  if (z.cols == 0) return;
  const auto rows = static_cast<std::ptrdiff_t>(z.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < rows; ++b) softmax_row(z.row(static_cast<std::size_t>(b)));
}

void weight_grad(const Matrix& delta, const Matrix& act, Matrix& grad_w,
                 std::span<double> grad_b) {
  check_weight_grad(delta, act);
  grad_w = Matrix(delta.cols, act.cols);
  const auto outs = static_cast<std::ptrdiff_t>(delta.cols);
  // Each thread owns whole output rows; the batch index is always the
  // innermost reduction, in ascending order, as in the serial kernel.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < outs; ++o) {
    double* gw = grad_w.data.data() + o * act.cols;
    double gb = 0.0;
    for (std::size_t b = 0; b < delta.rows; ++b) {
      const double d = delta(b, static_cast<std::size_t>(o));
      gb += d;
      const double* a = act.data.data() + b * act.cols;
      for (std::size_t i = 0; i < act.cols; ++i) gw[i] += d * a[i];
    }
    grad_b[static_cast<std::size_t>(o)] = gb;
  }
}

void input_grad(const Matrix& delta, const Matrix& w, Matrix& grad_x) {
  check_input_grad(delta, w);
  grad_x = Matrix(delta.rows, w.cols);
  const auto rows = static_cast<std::ptrdiff_t>(delta.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < rows; ++b) {
    double* gx = grad_x.data.data() + b * w.cols;
    for (std::size_t o = 0; o < w.rows; ++o) {
      const double d = delta(static_cast<std::size_t>(b), o);
      const double* wr = w.data.data() + o * w.cols;
      for (std::size_t i = 0; i < w.cols; ++i) gx[i] += d * wr[i];
    }
  }
}

}  // namespace omp

namespace {
bool parallel_worthwhile(std::size_t work) { return work >= kParallelWorkThreshold; }
}  // namespace

void affine(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& out) {
  if (parallel_worthwhile(x.rows * w.rows * w.cols)) {
    omp::affine(x, w, bias, out);
  } else {
    serial::affine(x, w, bias, out);
  }
}

void softmax_rows(Matrix& z) {
  if (parallel_worthwhile(z.rows * z.cols * 8)) {
    omp::softmax_rows(z);
  } else {
    serial::softmax_rows(z);
  }
}

void weight_grad(const Matrix& delta, const Matrix& act, Matrix& grad_w,
                 std::span<double> grad_b) {
  if (parallel_worthwhile(delta.rows * delta.cols * act.cols)) {
    omp::weight_grad(delta, act, grad_w, grad_b);
  } else {
    serial::weight_grad(delta, act, grad_w, grad_b);
  }
}

void input_grad(const Matrix& delta, const Matrix& w, Matrix& grad_x) {
  if (parallel_worthwhile(delta.rows * w.rows * w.cols)) {
    omp::input_grad(delta, w, grad_x);
  } else {
    serial::input_grad(delta, w, grad_x);
  }
}

}  // namespace nlab::kernels
