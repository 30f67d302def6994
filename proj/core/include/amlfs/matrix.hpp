#pragma once

#include <cstddef>
#include <vector>

namespace amlfs {

// Dense row-major matrix of doubles. Enough for desk-scale models; nothing
// here ever needs BLAS.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) {
        return data[static_cast<std::size_t>(i) * cols + j];
    }
    double operator()(int i, int j) const {
        return data[static_cast<std::size_t>(i) * cols + j];
    }

    double* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }

    bool operator==(const Matrix&) const = default;
};

} // namespace amlfs
