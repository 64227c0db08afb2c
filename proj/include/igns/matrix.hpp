#pragma once

// Dense row-major matrix used throughout the simulator. Precision is a
// template parameter: double for verification, float for fast training.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace igns {

template <typename Real>
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<Real> v;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, Real(0)) {
        if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative shape");
    }
    Matrix(int r, int c, Real fill) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    static Matrix zeros(int r, int c) { return Matrix(r, c); }

    static Matrix from_rows(std::initializer_list<std::initializer_list<Real>> rs) {
        Matrix m(static_cast<int>(rs.size()), rs.size() ? static_cast<int>(rs.begin()->size()) : 0);
        int i = 0;
        for (const auto& row : rs) {
            if (static_cast<int>(row.size()) != m.cols)
                throw std::invalid_argument("Matrix::from_rows: ragged rows");
            int j = 0;
            for (Real x : row) m(i, j++) = x;
            ++i;
        }
        return m;
    }

    Real& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    Real operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return v.size(); }
    Real* data() { return v.data(); }
    const Real* data() const { return v.data(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (Real x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    Matrix transposed() const {
        Matrix t(cols, rows);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
        return t;
    }
};

template <typename Real>
Real max_abs(const Matrix<Real>& m) {
    Real best = 0;
    for (Real x : m.v) best = std::max(best, std::abs(x));
    return best;
}

template <typename Real>
Real max_abs_diff(const Matrix<Real>& a, const Matrix<Real>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    Real best = 0;
    for (size_t i = 0; i < a.v.size(); ++i) best = std::max(best, std::abs(a.v[i] - b.v[i]));
    return best;
}

// C += A * B, naive but cache-friendly (ikj); fine at simulator scale.
template <typename Real>
void matmul_acc(const Matrix<Real>& a, const Matrix<Real>& b, Matrix<Real>& c) {
    for (int i = 0; i < a.rows; ++i) {
        const Real* arow = a.data() + static_cast<size_t>(i) * a.cols;
        Real* crow = c.data() + static_cast<size_t>(i) * b.cols;
        for (int k = 0; k < a.cols; ++k) {
            const Real aik = arow[k];
            if (aik == Real(0)) continue;
            const Real* brow = b.data() + static_cast<size_t>(k) * b.cols;
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
}

template <typename Real>
Matrix<Real> matmul(const Matrix<Real>& a, const Matrix<Real>& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: inner dims " + std::to_string(a.cols) + " vs " +
                                    std::to_string(b.rows));
    Matrix<Real> c(a.rows, b.cols);
    matmul_acc(a, b, c);
    return c;
}

}  // namespace igns
