#include "specxai/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <sstream>

#include "specxai/error.hpp"

namespace specxai {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), 0.0) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape_size(shape) != data.size()) {
        throw DimensionError("tensor shape " + shape_to_string(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    }
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (rows_ * cols_ != data_.size()) {
        throw DimensionError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                             std::to_string(data_.size()) + " values");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols()) throw DimensionError("ragged rows in Matrix::from_rows");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

std::vector<double> Matrix::col(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace linalg {

std::size_t element_budget() {
    if (const char* env = std::getenv("SPECXAI_BUDGET")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return kDefaultElementBudget;
}

void check_budget(std::size_t rows, std::size_t cols, std::size_t budget, const std::string& what) {
    if (cols != 0 && rows > budget / cols) {
        throw ResourceError(what + ": explicit " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " matrix exceeds element budget " + std::to_string(budget));
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                             std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* crow = c.row(i).data();
        const auto arow = a.row(i);
        // k runs left to right so every entry accumulates in index order.
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
    return t;
}

std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
    if (m.cols() != x.size()) {
        throw DimensionError("matvec: matrix has " + std::to_string(m.cols()) + " columns, vector has " +
                             std::to_string(x.size()) + " entries");
    }
    std::vector<double> y(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
    return y;
}

std::vector<double> vecmat(std::span<const double> x, const Matrix& m) {
    if (m.rows() != x.size()) throw DimensionError("vecmat: length mismatch");
    std::vector<double> y(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        const auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) y[c] += xr * row[c];
    }
    return y;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("add: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Matrix scale_rows(std::span<const double> d, const Matrix& m) {
    if (d.size() != m.rows()) throw DimensionError("scale_rows: length mismatch");
    Matrix out = m;
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (double& v : out.row(r)) v *= d[r];
    return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows()) throw DimensionError("select_rows: row index out of range");
        std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("max_abs_diff: length mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double frobenius(const Matrix& m) { return norm2(m.data()); }

namespace {

// Column-major scratch storage for the orthogonalisation kernels.
struct ColumnMajor {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;

    ColumnMajor(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    explicit ColumnMajor(const Matrix& m) : ColumnMajor(m.rows(), m.cols()) {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) v[j * rows + i] = m(i, j);
    }
    double* col(std::size_t j) { return v.data() + j * rows; }
    const double* col(std::size_t j) const { return v.data() + j * rows; }
    Matrix to_matrix() const {
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) m(i, j) = v[j * rows + i];
        return m;
    }
};

double col_dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void require_finite(const Matrix& m, const char* op) {
    if (!m.all_finite()) throw NumericError(std::string(op) + ": non-finite input");
}


// Completes the columns of `u` flagged in `missing` to an orthonormal set using
// Gram-Schmidt against the unit basis vectors.
void complete_orthonormal(ColumnMajor& u, const std::vector<bool>& missing) {
    const std::size_t n = u.rows;
    std::size_t next_basis = 0;
    for (std::size_t j = 0; j < u.cols; ++j) {
        if (!missing[j]) continue;
        bool placed = false;
        while (!placed && next_basis < n) {
            std::vector<double> cand(n, 0.0);
            cand[next_basis++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t k = 0; k < u.cols; ++k) {
                    if (k == j || (missing[k] && k > j)) continue;
                    const double p = col_dot(cand.data(), u.col(k), n);
                    for (std::size_t i = 0; i < n; ++i) cand[i] -= p * u.col(k)[i];
                }
            }
            const double nrm = std::sqrt(col_dot(cand.data(), cand.data(), n));
            if (nrm > 1e-6) {
                for (std::size_t i = 0; i < n; ++i) u.col(j)[i] = cand[i] / nrm;
                placed = true;
            }
        }
    }
}

// One-sided Jacobi on a square (or tall) matrix held column-major. On return the
// columns of `g` are mutually orthogonal and `v` holds the accumulated rotations.
void jacobi_orthogonalize(ColumnMajor& g, ColumnMajor& v) {
    const std::size_t m = g.rows;
    const std::size_t n = g.cols;
    constexpr double tol = 1e-15;
    constexpr int max_sweeps = 80;
    std::vector<double> sq(n);
    for (std::size_t j = 0; j < n; ++j) sq[j] = col_dot(g.col(j), g.col(j), m);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = sq[p];
                const double beta = sq[q];
                if (alpha == 0.0 || beta == 0.0) continue;
                double* gp = g.col(p);
                double* gq = g.col(q);
                const double gamma = col_dot(gp, gq, m);
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double a = gp[i];
                    const double b = gq[i];
                    gp[i] = c * a - s * b;
                    gq[i] = s * a + c * b;
                }
                double* vp = v.col(p);
                double* vq = v.col(q);
                for (std::size_t i = 0; i < v.rows; ++i) {
                    const double a = vp[i];
                    const double b = vq[i];
                    vp[i] = c * a - s * b;
                    vq[i] = s * a + c * b;
                }
                sq[p] = col_dot(gp, gp, m);
                sq[q] = col_dot(gq, gq, m);
            }
        }
        if (!rotated) return;
    }
}

// SVD of a square n x n matrix (the R factor) via one-sided Jacobi.
SvdResult square_jacobi_svd(const Matrix& r) {
    const std::size_t n = r.cols();
    ColumnMajor g(r);
    ColumnMajor v(n, n);
    for (std::size_t i = 0; i < n; ++i) v.col(i)[i] = 1.0;
    jacobi_orthogonalize(g, v);

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(col_dot(g.col(j), g.col(j), g.rows));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    // Columns at roundoff level carry no direction; their U columns are completed instead.
    const double sigma_max = n ? sigma[order[0]] : 0.0;
    const double floor = std::max(std::numeric_limits<double>::min() * 1e8,
                                  sigma_max * static_cast<double>(n) * std::numeric_limits<double>::epsilon());
    ColumnMajor u(g.rows, n);
    ColumnMajor vs(n, n);
    std::vector<bool> missing(n, false);
    SvdResult out;
    out.sigma.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        std::copy(v.col(j), v.col(j) + n, vs.col(k));
        out.sigma[k] = sigma[j];
        if (sigma[j] > floor) {
            for (std::size_t i = 0; i < g.rows; ++i) u.col(k)[i] = g.col(j)[i] / sigma[j];
        } else {
            missing[k] = true;
        }
    }
    if (std::any_of(missing.begin(), missing.end(), [](bool b) { return b; })) complete_orthonormal(u, missing);
    out.U = u.to_matrix();
    out.V = vs.to_matrix();
    return out;
}

// Tall case rows >= cols: QR first, Jacobi on the triangular factor.
SvdResult tall_svd(const Matrix& m) {
    if (m.cols() == 0) {
        SvdResult s;
        s.U = Matrix(m.rows(), 0);
        s.V = Matrix(0, 0);
        return s;
    }
    QrResult qr = householder_qr(m);
    SvdResult core = square_jacobi_svd(qr.R);
    core.U = matmul(qr.Q, core.U);
    return core;
}

}  // namespace

void apply_sign_convention(SvdResult& s) {
    for (std::size_t k = 0; k < s.V.cols(); ++k) {
        std::size_t best = 0;
        double best_abs = -1.0;
        for (std::size_t i = 0; i < s.V.rows(); ++i) {
            const double a = std::abs(s.V(i, k));
            if (a > best_abs) {
                best_abs = a;
                best = i;
            }
        }
        if (s.V.rows() > 0 && s.V(best, k) < 0.0) {
            for (std::size_t i = 0; i < s.V.rows(); ++i) s.V(i, k) = -s.V(i, k);
            for (std::size_t i = 0; i < s.U.rows(); ++i) s.U(i, k) = -s.U(i, k);
        }
    }
}

void set_rank(SvdResult& s, double rank_tol) {
    s.rank_used = 0;
    if (s.sigma.empty() || s.sigma.front() <= 0.0) return;
    const double cut = rank_tol * s.sigma.front();
    s.rank_used = static_cast<std::size_t>(
        std::count_if(s.sigma.begin(), s.sigma.end(), [cut](double v) { return v > cut; }));
}

QrResult householder_qr(const Matrix& m) {
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    if (rows < cols) throw DimensionError("householder_qr requires rows >= cols");
    ColumnMajor a(m);
    std::vector<std::vector<double>> reflectors(cols);

    for (std::size_t k = 0; k < cols; ++k) {
        double* ak = a.col(k);
        const std::size_t len = rows - k;
        double nrm = 0.0;
        for (std::size_t i = k; i < rows; ++i) nrm += ak[i] * ak[i];
        nrm = std::sqrt(nrm);
        std::vector<double>& w = reflectors[k];
        w.assign(len, 0.0);
        if (nrm == 0.0) continue;
        const double alpha = ak[k] >= 0.0 ? -nrm : nrm;
        for (std::size_t i = 0; i < len; ++i) w[i] = ak[k + i];
        w[0] -= alpha;
        const double wn = std::sqrt(col_dot(w.data(), w.data(), len));
        if (wn == 0.0) {
            w.assign(len, 0.0);
            continue;
        }
        for (double& x : w) x /= wn;
        for (std::size_t j = k; j < cols; ++j) {
            double* aj = a.col(j) + k;
            const double p = 2.0 * col_dot(w.data(), aj, len);
            for (std::size_t i = 0; i < len; ++i) aj[i] -= p * w[i];
        }
    }

    Matrix r(cols, cols);
    for (std::size_t i = 0; i < cols; ++i)
        for (std::size_t j = i; j < cols; ++j) r(i, j) = a.col(j)[i];

    ColumnMajor q(rows, cols);
    for (std::size_t j = 0; j < cols; ++j) q.col(j)[j] = 1.0;
    for (std::size_t kk = cols; kk-- > 0;) {
        const std::vector<double>& w = reflectors[kk];
        const std::size_t len = rows - kk;
        for (std::size_t j = kk; j < cols; ++j) {
            double* qj = q.col(j) + kk;
            const double p = 2.0 * col_dot(w.data(), qj, len);
            if (p == 0.0) continue;
            for (std::size_t i = 0; i < len; ++i) qj[i] -= p * w[i];
        }
    }
    return {q.to_matrix(), std::move(r)};
}

SvdResult thin_svd(const Matrix& m, double rank_tol) {
    require_finite(m, "thin_svd");
    SvdResult s;
    if (m.rows() >= m.cols()) {
        s = tall_svd(m);
    } else {
        s = tall_svd(transpose(m));
        std::swap(s.U, s.V);
    }
    apply_sign_convention(s);
    set_rank(s, rank_tol);
    return s;
}

SvdResult factored_svd(const Matrix& left, const Matrix& right, double rank_tol) {
    if (left.cols() != right.rows()) throw DimensionError("factored_svd: inner dimensions differ");
    require_finite(left, "factored_svd");
    require_finite(right, "factored_svd");
    const std::size_t w = left.cols();
    if (w > left.rows() || w > right.cols()) return thin_svd(matmul(left, right), rank_tol);

    QrResult ql = householder_qr(left);
    QrResult qr = householder_qr(transpose(right));
    // left*right = Ql Rl Rr^T Qr^T
    SvdResult core = tall_svd(matmul(ql.R, transpose(qr.R)));
    SvdResult s;
    s.sigma = std::move(core.sigma);
    s.U = matmul(ql.Q, core.U);
    s.V = matmul(qr.Q, core.V);
    apply_sign_convention(s);
    set_rank(s, rank_tol);
    return s;
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad,
                               std::size_t dilation) {
    if (kernel == 0 || stride == 0 || dilation == 0) throw DimensionError("convolution with zero-sized parameter");
    const std::size_t span = dilation * (kernel - 1) + 1;
    const std::size_t padded = in + 2 * pad;
    if (span > padded) {
        throw DimensionError("kernel extent " + std::to_string(span) + " exceeds padded input " +
                             std::to_string(padded));
    }
    return (padded - span) / stride + 1;
}

Matrix conv2d_to_matrix(const Tensor& kernel, const Shape& in_shape, const ConvGeometry& g, std::size_t budget) {
    if (kernel.rank() != 4) throw DimensionError("conv kernel must have shape [KH,KW,C,C']");
    if (in_shape.size() != 3) throw DimensionError("conv input must have shape [H,W,C]");
    const std::size_t kh = kernel.shape[0], kw = kernel.shape[1], cin = kernel.shape[2], cout = kernel.shape[3];
    const std::size_t h = in_shape[0], w = in_shape[1], c = in_shape[2];
    if (cin != c) throw DimensionError("conv kernel expects " + std::to_string(cin) + " channels, input has " +
                                       std::to_string(c));
    const std::size_t oh = conv_output_extent(h, kh, g.stride_h, g.pad_h, g.dilation_h);
    const std::size_t ow = conv_output_extent(w, kw, g.stride_w, g.pad_w, g.dilation_w);
    const std::size_t rows = oh * ow * cout;
    const std::size_t cols = h * w * c;
    check_budget(rows, cols, budget, "conv2d_to_matrix");

    Matrix m(rows, cols);
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride_h + ky * g.dilation_h) -
                                          static_cast<std::ptrdiff_t>(g.pad_h);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride_w + kx * g.dilation_w) -
                                              static_cast<std::ptrdiff_t>(g.pad_w);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    for (std::size_t ci = 0; ci < c; ++ci) {
                        const std::size_t col = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c + ci;
                        for (std::size_t co = 0; co < cout; ++co) {
                            const std::size_t row = (y * ow + x) * cout + co;
                            m(row, col) += kernel.data[((ky * kw + kx) * cin + ci) * cout + co];
                        }
                    }
                }
            }
        }
    }
    return m;
}

}  // namespace linalg
}  // namespace specxai
