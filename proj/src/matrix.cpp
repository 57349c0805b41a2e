#include "tcl/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "tcl/error.hpp"

namespace tcl {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, "matrix data length does not match shape");
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r].size() == m.cols(), "ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void affine(const Matrix& weight, std::span<const double> bias,
            std::span<const double> x, std::span<double> out) {
  require(weight.cols() == x.size() && weight.rows() == out.size() &&
              bias.size() == out.size(),
          "affine: dimension mismatch");
  for (std::size_t r = 0; r < weight.rows(); ++r) {
    out[r] = bias[r] + dot(weight.row(r), x);
  }
}

void add_transposed_product(const Matrix& weight, std::span<const double> g,
                            std::span<double> out) {
  require(weight.rows() == g.size() && weight.cols() == out.size(),
          "transposed product: dimension mismatch");
  for (std::size_t r = 0; r < weight.rows(); ++r) {
    if (g[r] != 0.0) axpy(g[r], weight.row(r), out);
  }
}

void add_outer(std::span<const double> g, std::span<const double> x, Matrix& grad_w) {
  require(grad_w.rows() == g.size() && grad_w.cols() == x.size(),
          "outer product: dimension mismatch");
  for (std::size_t r = 0; r < g.size(); ++r) {
    if (g[r] != 0.0) axpy(g[r], x, grad_w.row(r));
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace tcl
