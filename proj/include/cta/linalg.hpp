#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cta {

using Vec = std::vector<double>;

// Row-major dense matrix. Dimensions here stay small (<= a few hundred),
// so no blocked or sparse storage.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    static Mat zeros(std::size_t r, std::size_t c) { return Mat(r, c); }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Mat& m) {
    for (double x : m.data)
        if (!std::isfinite(x)) return false;
    return true;
}

// y = M x
inline Vec matvec(const Mat& m, const Vec& x) {
    if (m.cols != x.size())
        throw std::invalid_argument("matvec: shape mismatch, " +
                                    std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                                    " * vec[" + std::to_string(x.size()) + "]");
    Vec y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        const double* row = m.data.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

// y = M^T x
inline Vec matvec_t(const Mat& m, const Vec& x) {
    if (m.rows != x.size())
        throw std::invalid_argument("matvec_t: shape mismatch, " +
                                    std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                                    "^T * vec[" + std::to_string(x.size()) + "]");
    Vec y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double xi = x[i];
        const double* row = m.data.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += row[j] * xi;
    }
    return y;
}

inline Vec relu(const Vec& x) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec add(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("add: length mismatch");
    Vec y(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
    return y;
}

inline Vec sub(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("sub: length mismatch");
    Vec y(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] - b[i];
    return y;
}

inline Vec scaled(const Vec& a, double c) {
    Vec y(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = c * a[i];
    return y;
}

// M += a b^T  (a spans rows, b spans cols)
inline void add_outer(Mat& m, const Vec& a, const Vec& b) {
    if (m.rows != a.size() || m.cols != b.size())
        throw std::invalid_argument("add_outer: shape mismatch");
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double ai = a[i];
        double* row = m.data.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) row[j] += ai * b[j];
    }
}

// Central-difference gradient, (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
// Test oracle for the hand-derived backward passes.
inline Vec finite_diff_grad(const std::function<double(const Vec&)>& f, Vec theta, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step size must be positive");
    Vec g(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + h;
        const double fp = f(theta);
        theta[i] = saved - h;
        const double fm = f(theta);
        theta[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: function value not finite");
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace cta
