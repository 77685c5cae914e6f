#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "geoshift/errors.hpp"

namespace geoshift {

/// Row-major dense matrix of doubles.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(size_t r, size_t c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols) throw shape_error("Matrix: data length != rows*cols");
  }

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }

  bool is_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Matrix&) const = default;
};

/// a * b with a fixed summation order: each output element accumulates
/// over the inner index k in ascending order, so the result is
/// bit-identical no matter how the loops are scheduled.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw shape_error("matmul: a.cols != b.rows");
  Matrix c(a.rows, b.cols, 0.0);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[i * a.cols];
    double* crow = &c.data[i * b.cols];
    for (size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = &b.data[k * b.cols];
      for (size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (size_t r = 0; r < m.rows; ++r)
    for (size_t c = 0; c < m.cols; ++c) t.data[c * m.rows + r] = m.data[r * m.cols + c];
  return t;
}

/// H x W x C image, row-major [y][x][channel], intensities in [0,1].
struct ImageTensor {
  size_t height = 0;
  size_t width = 0;
  size_t channels = 0;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(size_t h, size_t w, size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}
  ImageTensor(size_t h, size_t w, size_t c, std::vector<double> d)
      : height(h), width(w), channels(c), data(std::move(d)) {
    if (data.size() != height * width * channels)
      throw shape_error("ImageTensor: data length != H*W*C");
  }

  double& at(size_t y, size_t x, size_t ch) { return data[(y * width + x) * channels + ch]; }
  double at(size_t y, size_t x, size_t ch) const {
    return data[(y * width + x) * channels + ch];
  }

  size_t size() const { return data.size(); }

  void clamp01() {
    for (double& v : data) v = std::clamp(v, 0.0, 1.0);
  }

  bool operator==(const ImageTensor&) const = default;
};

}  // namespace geoshift
