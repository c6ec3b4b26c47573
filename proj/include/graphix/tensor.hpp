#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace graphix {

// Dense row-major f64 matrix. The only tensor type used in this project.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  bool all_finite() const;
  // Exact element-wise equality (used by bit-identity checks).
  bool operator==(const Matrix& o) const;
  bool operator!=(const Matrix& o) const { return !(*this == o); }

  double max_abs_diff(const Matrix& o) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Forward ops. All throw std::invalid_argument on shape mismatch and
// std::domain_error when an input contains non-finite values.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix relu(const Matrix& a);
Matrix row_softmax(const Matrix& a);
// Per-row zero mean / unit variance; no learned affine (gain 1, bias 0).
Matrix layer_norm(const Matrix& a, double eps);
Matrix concat_cols(const std::vector<Matrix>& xs);
Matrix scale(const Matrix& a, double s);
Matrix transpose(const Matrix& a);

void check_finite(const Matrix& m, const std::string& what);

// Deterministic RNG with a portable uniform mapping so that the same seed
// reproduces bit-identical parameters on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  std::size_t below(std::size_t n);       // [0, n)
  Rng fork(std::uint64_t stream);         // independent child stream

 private:
  std::uint64_t state_[4];
};

Matrix xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace graphix
