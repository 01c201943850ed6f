#include "powerprof/matrix.hpp"

namespace powerprof {

Matrix affine_forward(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
    if (x.cols != w.cols) throw ConfigError("affine_forward: input width mismatch");
    Matrix y(x.rows, w.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double* yi = y.row(i);
        for (std::size_t o = 0; o < w.rows; ++o) {
            const double* wo = w.row(o);
            double acc = b[o];
            for (std::size_t k = 0; k < x.cols; ++k) acc += xi[k] * wo[k];
            yi[o] = acc;
        }
    }
    return y;
}

Matrix affine_backward_input(const Matrix& dy, const Matrix& w) {
    Matrix dx(dy.rows, w.cols);
    for (std::size_t i = 0; i < dy.rows; ++i) {
        const double* dyi = dy.row(i);
        double* dxi = dx.row(i);
        for (std::size_t o = 0; o < w.rows; ++o) {
            const double g = dyi[o];
            if (g == 0.0) continue;
            const double* wo = w.row(o);
            for (std::size_t k = 0; k < w.cols; ++k) dxi[k] += g * wo[k];
        }
    }
    return dx;
}

void affine_backward_params(const Matrix& dy, const Matrix& x, Matrix& dw,
                            std::vector<double>& db) {
    for (std::size_t i = 0; i < dy.rows; ++i) {
        const double* dyi = dy.row(i);
        const double* xi = x.row(i);
        for (std::size_t o = 0; o < dy.cols; ++o) {
            const double g = dyi[o];
            db[o] += g;
            if (g == 0.0) continue;
            double* dwo = dw.row(o);
            for (std::size_t k = 0; k < x.cols; ++k) dwo[k] += g * xi[k];
        }
    }
}

double squared_l2(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace powerprof
