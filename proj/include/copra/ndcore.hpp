// Copyright 2026 The CopRA Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense row-major matrices of doubles and the handful of kernels needed to
// run and differentiate a small fully connected classifier.

#ifndef COPRA_NDCORE_HPP_
#define COPRA_NDCORE_HPP_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace copra {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws DimensionError if data.size() != rows * cols and NumericError on
  // non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix FromRows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix Identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  bool SameShape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string ShapeString() const;

  // Numeric equality (0.0 == -0.0). Use BitwiseEqual for exact bit patterns.
  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

bool BitwiseEqual(const Matrix& a, const Matrix& b);

// Throws NumericError naming `context` if any entry is NaN or infinite.
void RequireFinite(const Matrix& m, std::string_view context);

Matrix MatMul(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose.
Matrix MatMulTransB(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix MatMulTransA(const Matrix& a, const Matrix& b);
Matrix Transpose(const Matrix& a);
Matrix Add(const Matrix& a, const Matrix& b);
Matrix Subtract(const Matrix& a, const Matrix& b);
Matrix Scale(const Matrix& a, double s);
// y += s * x, in place.
void AddScaledInPlace(Matrix& y, const Matrix& x, double s);
double FrobeniusNorm(const Matrix& a);
// Adds a row vector (1 x cols) to every row.
Matrix AddRowBroadcast(const Matrix& a, const Matrix& row);
// Column sums as a 1 x cols matrix.
Matrix ColumnSums(const Matrix& a);

Matrix Relu(const Matrix& x);
// Passes upstream where x > 0; the subgradient at 0 is 0.
Matrix ReluBackward(const Matrix& x, const Matrix& upstream);

struct CrossEntropyResult {
  double loss = 0.0;
  Matrix grad_logits;
};

// Mean cross-entropy of row-wise softmax(logits) against integer labels,
// stabilized by subtracting the row max. grad = (softmax - onehot) / batch.
CrossEntropyResult SoftmaxCrossEntropy(const Matrix& logits,
                                       std::span<const int> labels);

// Row-wise argmax; the first maximal index wins ties.
std::vector<int> ArgMaxRows(const Matrix& logits);

struct Svd {
  Matrix u;
  std::vector<double> singular_values;  // descending
  Matrix v;
};

// Thin SVD a = U diag(s) V^T.
Svd ComputeSvd(const Matrix& a);
std::vector<double> SingularValues(const Matrix& a);

// Compares `analytic` gradients with central differences of `f` around
// `params` and returns max_i |g_a - g_n| / max(1e-8, |g_a| + |g_n|).
double FiniteDifferenceCheck(
    const std::function<double(const std::vector<Matrix>&)>& f,
    const std::vector<Matrix>& params, const std::vector<Matrix>& analytic,
    double h);

}  // namespace copra

#endif  // COPRA_NDCORE_HPP_
