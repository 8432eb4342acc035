#pragma once

// Minimal dense-matrix helper for the small (d <= 8) symmetric matrices this
// library manipulates: diffusion matrices Sigma(x), their square roots, and
// Stein-field Hessians.  Row-major storage, no expression templates -- heavy
// numerics (eigendecomposition) are delegated to Eigen inside the library.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace sgld {

class Matrix {
  public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, 0.0) {}

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * cols_ + j]; }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::span<double> data() { return a_; }
    std::span<const double> data() const { return a_; }

    // y = M x
    void multiply(std::span<const double> x, std::span<double> y) const {
        for (int i = 0; i < rows_; ++i) {
            double acc = 0.0;
            for (int j = 0; j < cols_; ++j) acc += (*this)(i, j) * x[j];
            y[i] = acc;
        }
    }

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> a_;
};

inline double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return std::sqrt(s);
}

inline double max_asymmetry(const Matrix& m) {
    double worst = 0.0;
    for (int i = 0; i < m.rows(); ++i)
        for (int j = i + 1; j < m.cols(); ++j) worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
    return worst;
}

// Hilbert-Schmidt (Frobenius) inner product <A, B> = sum_ij A_ij B_ij.
inline double hs_inner(const Matrix& a, const Matrix& b) {
    double s = 0.0;
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) s += da[i] * db[i];
    return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace sgld
