#pragma once

#include <cstddef>
#include <vector>

#include "powerprof/common.hpp"

namespace powerprof {

// Row-major dense matrix of doubles. Rows are samples, columns are features.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    static Matrix from_row(const std::vector<double>& v) {
        Matrix m(1, v.size());
        m.data = v;
        return m;
    }

    std::vector<double> row_vec(std::size_t r) const {
        return std::vector<double>(row(r), row(r) + cols);
    }
};

// y = x * W^T + b, with x (batch x in), W (out x in), b (out).
Matrix affine_forward(const Matrix& x, const Matrix& w, const std::vector<double>& b);

// dx = dy * W
Matrix affine_backward_input(const Matrix& dy, const Matrix& w);

// dW += dy^T * x ; db += column sums of dy
void affine_backward_params(const Matrix& dy, const Matrix& x, Matrix& dw, std::vector<double>& db);

double squared_l2(const double* a, const double* b, std::size_t n);

}  // namespace powerprof
