#pragma once

// Test-only reference computations. None of these call into the library's
// numerical routines, so they stay independent of the paths they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "specxai/linalg.hpp"

namespace specxai::testing {

/// c_ij = sum_k a_ik b_kj, textbook triple loop.
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                        std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
            c[i * n + j] = s;
        }
    return c;
}

/// Eigenvalues of a symmetric matrix by the classical two-sided Jacobi method,
/// sorted descending.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, std::size_t n) {
    auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) off += at(i, j) * at(i, j);
        if (off < 1e-28) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(at(p, q)) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = at(i, i);
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return ev;
}

/// Direct evaluation of the convolution sum on an H x W x C input with kernel
/// [KH, KW, C, C'], zero padding.
inline std::vector<double> direct_conv(const std::vector<double>& kernel, std::size_t kh, std::size_t kw,
                                       std::size_t cin, std::size_t cout, const std::vector<double>& z, std::size_t h,
                                       std::size_t w, const linalg::ConvGeometry& g) {
    const long oh = (static_cast<long>(h + 2 * g.pad_h) - static_cast<long>(g.dilation_h * (kh - 1) + 1)) /
                        static_cast<long>(g.stride_h) + 1;
    const long ow = (static_cast<long>(w + 2 * g.pad_w) - static_cast<long>(g.dilation_w * (kw - 1) + 1)) /
                        static_cast<long>(g.stride_w) + 1;
    std::vector<double> out(static_cast<std::size_t>(oh * ow) * cout, 0.0);
    auto input = [&](long y, long x, std::size_t c) -> double {
        if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
        return z[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * cin + c];
    };
    for (long yo = 0; yo < oh; ++yo)
        for (long xo = 0; xo < ow; ++xo)
            for (std::size_t co = 0; co < cout; ++co) {
                double s = 0.0;
                for (std::size_t eta = 0; eta < kh; ++eta)
                    for (std::size_t omega = 0; omega < kw; ++omega)
                        for (std::size_t kappa = 0; kappa < cin; ++kappa) {
                            const long y = yo * static_cast<long>(g.stride_h) + static_cast<long>(eta * g.dilation_h) -
                                           static_cast<long>(g.pad_h);
                            const long x = xo * static_cast<long>(g.stride_w) +
                                           static_cast<long>(omega * g.dilation_w) - static_cast<long>(g.pad_w);
                            s += kernel[((eta * kw + omega) * cin + kappa) * cout + co] * input(y, x, kappa);
                        }
                out[(static_cast<std::size_t>(yo * ow + xo)) * cout + co] = s;
            }
    return out;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    return Matrix(rows, cols, random_vector(rng, rows * cols, -scale, scale));
}

inline std::vector<double> unit_vector(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> dist;
    std::vector<double> v(n);
    double s = 0.0;
    for (double& x : v) {
        x = dist(rng);
        s += x * x;
    }
    s = std::sqrt(s);
    for (double& x : v) x /= s;
    return v;
}

inline double max_abs_deviation_from_identity(const Matrix& q) {
    // max |Q^T Q - I|
    double worst = 0.0;
    for (std::size_t i = 0; i < q.cols(); ++i)
        for (std::size_t j = 0; j < q.cols(); ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < q.rows(); ++r) s += q(r, i) * q(r, j);
            worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    return worst;
}

inline double relative_reconstruction_error(const Matrix& m, const SvdResult& s) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) {
            double v = 0.0;
            for (std::size_t k = 0; k < s.sigma.size(); ++k) v += s.U(i, k) * s.sigma[k] * s.V(j, k);
            num += (v - m(i, j)) * (v - m(i, j));
            den += m(i, j) * m(i, j);
        }
    return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

}  // namespace specxai::testing
