#include "gravilon/matrix.hpp"

#include <Eigen/Core>
#include <sstream>

#include "gravilon/error.hpp"

namespace gravilon {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMajor>;
using View = Eigen::Map<RowMajor>;

ConstView view(const Matrix& m) {
    return ConstView(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                     static_cast<Eigen::Index>(m.cols()));
}

View view(Matrix& m) {
    return View(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    std::ostringstream msg;
    msg << op << ": incompatible shapes " << a.rows() << "x" << a.cols() << " and " << b.rows()
        << "x" << b.cols();
    throw ContractError(msg.str());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ContractError("matrix data length does not equal rows * cols");
    }
}

Matrix Matrix::column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Matrix(n, 1, std::move(values));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    Matrix out(a.rows(), b.cols());
    view(out).noalias() = view(a) * view(b);
    return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) shape_error("matmul_at_b", a, b);
    Matrix out(a.cols(), b.cols());
    view(out).noalias() = view(a).transpose() * view(b);
    return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) shape_error("matmul_a_bt", a, b);
    Matrix out(a.rows(), b.rows());
    view(out).noalias() = view(a) * view(b).transpose();
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    view(out) = view(m).transpose();
    return out;
}

void add_column_broadcast(Matrix& m, const Matrix& column) {
    if (column.cols() != 1 || column.rows() != m.rows()) shape_error("add_column_broadcast", m, column);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double b = column(r, 0);
        for (double& x : m.row(r)) x += b;
    }
}

Matrix row_sums(const Matrix& m) {
    Matrix out(m.rows(), 1);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double sum = 0.0;
        for (double x : m.row(r)) sum += x;
        out(r, 0) = sum;
    }
    return out;
}

Matrix column_block(const Matrix& m, std::size_t first, std::size_t count) {
    if (first + count > m.cols()) throw ContractError("column_block out of range");
    Matrix out(m.rows(), count);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto src = m.row(r).subspan(first, count);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

}  // namespace gravilon
