#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gravilon {

// Dense row-major matrix of doubles. Column vectors are n x 1.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix column(std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    std::span<const double> row(std::size_t r) const { return data().subspan(r * cols_, cols_); }
    std::span<double> row(std::size_t r) { return data().subspan(r * cols_, cols_); }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// m(:, j) += column for every j.
void add_column_broadcast(Matrix& m, const Matrix& column);

// rows x 1 vector of row sums.
Matrix row_sums(const Matrix& m);

// Copies columns [first, first + count) into a new matrix.
Matrix column_block(const Matrix& m, std::size_t first, std::size_t count);

}  // namespace gravilon
