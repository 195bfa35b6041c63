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

#include "copra/ndcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <utility>

#include <Eigen/Dense>

#include "copra/errors.hpp"

namespace copra {

namespace {

void RequireSameShape(const Matrix& a, const Matrix& b, std::string_view op) {
  if (!a.SameShape(b)) {
    std::ostringstream msg;
    msg << op << ": shape mismatch " << a.ShapeString() << " vs "
        << b.ShapeString();
    throw DimensionError(msg.str());
  }
}

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix FromEigen(const Eigen::MatrixXd& m) {
  Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  return out;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) throw NumericError("Matrix: non-finite fill value");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream msg;
    msg << "Matrix: data length " << data_.size() << " does not match shape ("
        << rows_ << "x" << cols_ << ")";
    throw DimensionError(msg.str());
  }
  RequireFinite(*this, "Matrix construction");
}

Matrix Matrix::FromRows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Matrix::FromRows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::Identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::ShapeString() const {
  std::ostringstream s;
  s << "(" << rows_ << "x" << cols_ << ")";
  return s.str();
}

bool BitwiseEqual(const Matrix& a, const Matrix& b) {
  if (!a.SameShape(b)) return false;
  return a.size() == 0 ||
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

void RequireFinite(const Matrix& m, std::string_view context) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) {
      std::ostringstream msg;
      msg << context << ": non-finite entry at flat index " << i << " of "
          << m.ShapeString();
      throw NumericError(msg.str());
    }
  }
}

Matrix MatMul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.ShapeString() + " by " +
                         b.ShapeString());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  RequireFinite(out, "matmul");
  return out;
}

Matrix MatMulTransB(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_trans_b: cannot multiply " + a.ShapeString() +
                         " by transpose of " + b.ShapeString());
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto b_row = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  RequireFinite(out, "matmul_trans_b");
  return out;
}

Matrix MatMulTransA(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_trans_a: cannot multiply transpose of " +
                         a.ShapeString() + " by " + b.ShapeString());
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto a_row = a.row(k);
    const auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  RequireFinite(out, "matmul_trans_a");
  return out;
}

Matrix Transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Matrix Add(const Matrix& a, const Matrix& b) {
  RequireSameShape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  RequireFinite(out, "add");
  return out;
}

Matrix Subtract(const Matrix& a, const Matrix& b) {
  RequireSameShape(a, b, "subtract");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  RequireFinite(out, "subtract");
  return out;
}

Matrix Scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  RequireFinite(out, "scale");
  return out;
}

void AddScaledInPlace(Matrix& y, const Matrix& x, double s) {
  RequireSameShape(y, x, "add_scaled");
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += s * x.data()[i];
  RequireFinite(y, "add_scaled");
}

double FrobeniusNorm(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

Matrix AddRowBroadcast(const Matrix& a, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row_broadcast: row " + row.ShapeString() +
                         " incompatible with " + a.ShapeString());
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) r[j] += row(0, j);
  }
  RequireFinite(out, "add_row_broadcast");
  return out;
}

Matrix ColumnSums(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += r[j];
  }
  return out;
}

Matrix Relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix ReluBackward(const Matrix& x, const Matrix& upstream) {
  RequireSameShape(x, upstream, "relu_backward");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.data()[i] > 0.0) out.data()[i] = upstream.data()[i];
  }
  return out;
}

CrossEntropyResult SoftmaxCrossEntropy(const Matrix& logits,
                                       std::span<const int> labels) {
  if (logits.rows() != labels.size()) {
    std::ostringstream msg;
    msg << "softmax_cross_entropy: " << labels.size() << " labels for logits "
        << logits.ShapeString();
    throw DimensionError(msg.str());
  }
  if (logits.rows() == 0) throw DimensionError("softmax_cross_entropy: empty batch");
  const std::size_t classes = logits.cols();
  const double inv_batch = 1.0 / static_cast<double>(logits.rows());
  CrossEntropyResult result;
  result.grad_logits = Matrix(logits.rows(), classes);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      std::ostringstream msg;
      msg << "softmax_cross_entropy: label " << label << " at row " << i
          << " outside [0, " << classes << ")";
      throw IndexError(msg.str());
    }
    const auto z = logits.row(i);
    const auto top = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    const double max_z = z[top];
    // The top term is exactly 1; summing the rest separately keeps log1p and
    // expm1 accurate for confident rows.
    double rest = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      if (j != top) rest += std::exp(z[j] - max_z);
    }
    const double log_denom = std::log1p(rest);
    const auto y = static_cast<std::size_t>(label);
    total += log_denom - (z[y] - max_z);
    auto g = result.grad_logits.row(i);
    for (std::size_t j = 0; j < classes; ++j) {
      const double log_p = z[j] - max_z - log_denom;
      g[j] = (j == y ? std::expm1(log_p) : std::exp(log_p)) * inv_batch;
    }
  }
  result.loss = total * inv_batch;
  if (!std::isfinite(result.loss)) throw NumericError("softmax_cross_entropy: non-finite loss");
  return result;
}

std::vector<int> ArgMaxRows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    out[i] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

Svd ComputeSvd(const Matrix& a) {
  RequireFinite(a, "svd");
  Eigen::Map<const EigenRowMajor> m(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                                    static_cast<Eigen::Index>(a.cols()));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(m),
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  Svd out;
  out.u = FromEigen(svd.matrixU());
  out.v = FromEigen(svd.matrixV());
  const auto& s = svd.singularValues();
  out.singular_values.assign(s.data(), s.data() + s.size());
  RequireFinite(out.u, "svd");
  RequireFinite(out.v, "svd");
  return out;
}

std::vector<double> SingularValues(const Matrix& a) {
  RequireFinite(a, "singular_values");
  Eigen::Map<const EigenRowMajor> m(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                                    static_cast<Eigen::Index>(a.cols()));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(m)};
  const auto& s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

double FiniteDifferenceCheck(
    const std::function<double(const std::vector<Matrix>&)>& f,
    const std::vector<Matrix>& params, const std::vector<Matrix>& analytic,
    double h) {
  if (!(h > 0.0)) throw ConfigError("finite_difference_check: h must be positive");
  if (params.size() != analytic.size()) {
    throw DimensionError("finite_difference_check: parameter/gradient count mismatch");
  }
  std::vector<Matrix> probe = params;
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    RequireSameShape(params[p], analytic[p], "finite_difference_check");
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double origin = params[p].data()[i];
      probe[p].data()[i] = origin + h;
      const double up = f(probe);
      probe[p].data()[i] = origin - h;
      const double down = f(probe);
      probe[p].data()[i] = origin;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finite_difference_check: objective is not finite");
      }
      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic[p].data()[i];
      const double denom = std::max(1e-8, std::abs(exact) + std::abs(numeric));
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace copra
