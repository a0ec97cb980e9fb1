#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace levysde {

using Vec = std::vector<double>;

// Small dense square matrix, row-major. Dimensions here are the jump/state
// dimensions of an SDE model, i.e. single digits.
struct Mat {
    int n = 0;
    std::vector<double> a;

    Mat() = default;
    explicit Mat(int dim) : n(dim), a(static_cast<std::size_t>(dim) * dim, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }

    static Mat identity(int dim) {
        Mat m(dim);
        for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline double frobenius_norm(const Mat& m) {
    double s = 0.0;
    for (double x : m.a) s += x * x;
    return std::sqrt(s);
}

inline Mat mat_mul(const Mat& x, const Mat& y) {
    Mat r(x.n);
    for (int i = 0; i < x.n; ++i)
        for (int k = 0; k < x.n; ++k) {
            const double v = x(i, k);
            if (v == 0.0) continue;
            for (int j = 0; j < x.n; ++j) r(i, j) += v * y(k, j);
        }
    return r;
}

inline Mat mat_sub(const Mat& x, const Mat& y) {
    Mat r(x.n);
    for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] = x.a[i] - y.a[i];
    return r;
}

// Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues and
// fills vecs with the orthonormal eigenvectors as columns.
inline Vec sym_eigen(const Mat& m, Mat& vecs) {
    const int n = m.n;
    Mat a = m;
    vecs = Mat::identity(n);
    for (int sweep = 0; sweep < 128; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = vecs(k, p), vkq = vecs(k, q);
                    vecs(k, p) = c * vkp - s * vkq;
                    vecs(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    Vec ev(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
    return ev;
}

// Symmetric PSD square root via eigendecomposition. Eigenvalues in
// [-clamp_tol, 0) are clamped to zero; anything more negative is an error.
// The magnitude of the largest clamp applied is reported through max_clamp.
inline Mat sym_psd_sqrt(const Mat& m, double clamp_tol = 1e-12,
                        double* max_clamp = nullptr) {
    Mat v;
    Vec ev = sym_eigen(m, v);
    double scale = 0.0;
    for (double e : ev) scale = std::max(scale, std::abs(e));
    double clamped = 0.0;
    const int n = m.n;
    Mat r(n);
    for (int k = 0; k < n; ++k) {
        double lam = ev[static_cast<std::size_t>(k)];
        if (lam < 0.0) {
            if (lam < -clamp_tol * std::max(1.0, scale)) {
                throw std::runtime_error(
                    "matrix is not PSD within tolerance: eigenvalue " +
                    std::to_string(lam));
            }
            clamped = std::max(clamped, -lam);
            lam = 0.0;
        }
        const double s = std::sqrt(lam);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) r(i, j) += s * v(i, k) * v(j, k);
    }
    // symmetrize away rotation round-off
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (r(i, j) + r(j, i));
            r(i, j) = avg;
            r(j, i) = avg;
        }
    if (max_clamp) *max_clamp = clamped;
    return r;
}

} // namespace levysde
