#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cgnnse::numerics {

/// Dense row-major matrix of 64-bit reals. Immutable by convention once it
/// leaves a constructor or kernel: the free functions below return fresh
/// values and verify that every entry of their result is finite.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
  static Matrix filled(std::size_t rows, std::size_t cols, double value);
  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(const std::vector<double>& values);
  static Matrix row(const std::vector<double>& values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const double& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool all_finite() const;
  /// Throws NumericalError naming `what` if any entry is NaN/Inf.
  void require_finite(const char* what) const;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Throws InputError naming both shapes unless a.cols == b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);

Matrix relu(const Matrix& a);
Matrix leaky_relu(const Matrix& a, double slope);
Matrix exp_elementwise(const Matrix& a);
/// Row-wise softmax; every output row sums to 1 within 1e-12.
Matrix softmax_rows(const Matrix& a);

double max_abs(const Matrix& a);
double frobenius_norm(const Matrix& a);
double sum(const Matrix& a);

std::string shape_string(const Matrix& a);

}  // namespace cgnnse::numerics
