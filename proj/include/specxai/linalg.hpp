#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace specxai {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of doubles.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s);
    Tensor(Shape s, std::vector<double> values);

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    bool all_finite() const;
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);
    /// Builds from nested rows; all rows must share a length.
    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::vector<double> col(std::size_t c) const;

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool all_finite() const;
    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Thin SVD m = U diag(sigma) V^T. Columns of V are the right singular vectors.
struct SvdResult {
    Matrix U;                   // m x r
    std::vector<double> sigma;  // r, descending
    Matrix V;                   // n x r
    std::size_t rank_used = 0;
};

namespace linalg {

inline constexpr std::size_t kDefaultElementBudget = std::size_t{1} << 26;
inline constexpr double kDefaultRankTol = 1e-10;

/// Element budget for explicit operators: SPECXAI_BUDGET if set and valid, else 2^26.
std::size_t element_budget();

/// Throws ResourceError if rows*cols exceeds budget; `what` names the offender.
void check_budget(std::size_t rows, std::size_t cols, std::size_t budget, const std::string& what);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
std::vector<double> matvec(const Matrix& m, std::span<const double> x);
/// x^T m, i.e. a row vector times the matrix.
std::vector<double> vecmat(std::span<const double> x, const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
/// diag(d) * m
Matrix scale_rows(std::span<const double> d, const Matrix& m);
/// Selects rows by index.
Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double max_abs(std::span<const double> a);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
double frobenius(const Matrix& m);

/// Householder QR of a matrix with rows >= cols. Q is rows x cols with orthonormal
/// columns, R is cols x cols upper triangular.
struct QrResult {
    Matrix Q;
    Matrix R;
};
QrResult householder_qr(const Matrix& m);

/// Makes the largest-magnitude entry of each V column positive (lowest index on
/// ties), flipping the paired U column with it.
void apply_sign_convention(SvdResult& s);
/// rank_used = count of sigma[i] > rank_tol * sigma[0].
void set_rank(SvdResult& s, double rank_tol);

/// One-sided Jacobi thin SVD, r = min(rows, cols). Each V column has its
/// largest-magnitude entry positive.
SvdResult thin_svd(const Matrix& m, double rank_tol = kDefaultRankTol);

/// SVD of left * right without forming the product; r = left.cols() when that is
/// the narrowest dimension. left is m x w, right is w x n.
SvdResult factored_svd(const Matrix& left, const Matrix& right, double rank_tol = kDefaultRankTol);

struct ConvGeometry {
    std::size_t stride_h = 1, stride_w = 1;
    std::size_t pad_h = 0, pad_w = 0;
    std::size_t dilation_h = 1, dilation_w = 1;
    friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

/// Output spatial size of a (possibly padded, strided, dilated) window sweep.
/// Throws DimensionError when the window does not fit in the padded input.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad,
                               std::size_t dilation);

/// Explicit matrix of a 2-D convolution acting on a flattened H x W x C input.
/// kernel has shape [KH, KW, C, C']; the result has shape (H'W'C') x (HWC).
Matrix conv2d_to_matrix(const Tensor& kernel, const Shape& in_shape, const ConvGeometry& geometry,
                        std::size_t budget = element_budget());

}  // namespace linalg
}  // namespace specxai
