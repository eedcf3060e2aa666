#include <doctest.h>

#include <cmath>
#include <random>

#include "specxai/error.hpp"
#include "specxai/linalg.hpp"
#include "support/oracles.hpp"

using namespace specxai;
using specxai::testing::random_matrix;

TEST_CASE("matmul identity and projector") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(linalg::matmul(Matrix::identity(2), a) == a);

    const Matrix p = Matrix::from_rows({{1, 0}, {0, 0}});
    const Matrix v = Matrix::from_rows({{5}, {7}});
    CHECK(linalg::matmul(p, v) == Matrix::from_rows({{5}, {0}}));
}

TEST_CASE("matmul matches the triple-loop oracle") {
    std::mt19937_64 rng(11);
    const Matrix a = random_matrix(rng, 3, 4);
    const Matrix b = random_matrix(rng, 4, 2);
    const auto expected = testing::naive_matmul(a.data(), b.data(), 3, 4, 2);
    CHECK(linalg::max_abs_diff(linalg::matmul(a, b).data(), expected) < 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes") {
    CHECK_THROWS_AS(linalg::matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
}

TEST_CASE("matmul chains are associative") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> dim(1, 12);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t count = 2 + static_cast<std::size_t>(trial % 5);  // 2..6 matrices
        std::vector<std::size_t> dims(count + 1);
        for (auto& d : dims) d = dim(rng);
        std::vector<Matrix> ms;
        for (std::size_t i = 0; i < count; ++i) ms.push_back(random_matrix(rng, dims[i], dims[i + 1]));
        Matrix left = ms[0];
        for (std::size_t i = 1; i < count; ++i) left = linalg::matmul(left, ms[i]);
        Matrix right = ms[count - 1];
        for (std::size_t i = count - 1; i-- > 0;) right = linalg::matmul(ms[i], right);
        const double scale = std::max(1.0, linalg::max_abs(left.data()));
        CHECK(linalg::max_abs_diff(left.data(), right.data()) <= 1e-9 * scale);
    }
}

TEST_CASE("thin_svd of diagonal and identity matrices") {
    const auto d = linalg::thin_svd(Matrix::from_rows({{3, 0}, {0, -2}}));
    REQUIRE(d.sigma.size() == 2);
    CHECK(d.sigma[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(d.sigma[1] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(d.rank_used == 2);

    const auto i3 = linalg::thin_svd(Matrix::identity(3));
    for (double s : i3.sigma) CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("thin_svd agrees with the eigenvalues of m^T m") {
    std::mt19937_64 rng(2024);
    const Matrix m = random_matrix(rng, 6, 4);
    const auto s = linalg::thin_svd(m);
    CHECK(testing::relative_reconstruction_error(m, s) < 1e-9);

    const auto mtm = testing::naive_matmul(linalg::transpose(m).data(), m.data(), 4, 6, 4);
    const auto ev = testing::symmetric_eigenvalues(mtm, 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(s.sigma[i] - std::sqrt(ev[i])) < 1e-8);
}

TEST_CASE("thin_svd invariants on random shapes") {
    std::mt19937_64 rng(99);
    const std::vector<std::pair<std::size_t, std::size_t>> shapes = {
        {1, 1}, {1, 7}, {7, 1}, {5, 5}, {12, 3}, {3, 12}, {40, 40}, {64, 17}, {17, 64}, {128, 96}, {512, 512}};
    for (auto [r, c] : shapes) {
        CAPTURE(r);
        CAPTURE(c);
        const Matrix m = random_matrix(rng, r, c);
        const auto s = linalg::thin_svd(m);
        REQUIRE(s.sigma.size() == std::min(r, c));
        CHECK(s.U.rows() == r);
        CHECK(s.V.rows() == c);
        for (std::size_t i = 0; i + 1 < s.sigma.size(); ++i) CHECK(s.sigma[i] >= s.sigma[i + 1]);
        for (double v : s.sigma) CHECK(v >= 0.0);
        CHECK(testing::max_abs_deviation_from_identity(s.U) <= 1e-10);
        CHECK(testing::max_abs_deviation_from_identity(s.V) <= 1e-10);
        CHECK(testing::relative_reconstruction_error(m, s) <= 1e-9);
    }
}

TEST_CASE("thin_svd handles rank deficiency") {
    std::mt19937_64 rng(3);
    const Matrix a = random_matrix(rng, 20, 3);
    const Matrix b = random_matrix(rng, 3, 15);
    const Matrix m = linalg::matmul(a, b);
    const auto s = linalg::thin_svd(m);
    CHECK(s.rank_used == 3);
    CHECK(testing::max_abs_deviation_from_identity(s.U) <= 1e-10);
    CHECK(testing::max_abs_deviation_from_identity(s.V) <= 1e-10);

    const auto z = linalg::thin_svd(Matrix(4, 3));
    CHECK(z.rank_used == 0);
    CHECK(testing::max_abs_deviation_from_identity(z.U) <= 1e-10);
}

TEST_CASE("thin_svd sign convention") {
    std::mt19937_64 rng(17);
    const auto s = linalg::thin_svd(random_matrix(rng, 9, 6));
    for (std::size_t k = 0; k < s.V.cols(); ++k) {
        const auto col = s.V.col(k);
        const auto it = std::max_element(col.begin(), col.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
        CHECK(*it > 0.0);
    }
}

TEST_CASE("thin_svd rejects non-finite input") {
    Matrix m(2, 2);
    m(0, 1) = std::nan("");
    CHECK_THROWS_AS(linalg::thin_svd(m), NumericError);
}

TEST_CASE("factored_svd matches thin_svd of the product") {
    std::mt19937_64 rng(8);
    const Matrix a = random_matrix(rng, 50, 4);
    const Matrix b = random_matrix(rng, 4, 70);
    const auto f = linalg::factored_svd(a, b);
    const auto t = linalg::thin_svd(linalg::matmul(a, b));
    REQUIRE(f.sigma.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(f.sigma[i] - t.sigma[i]) < 1e-10 * t.sigma[0]);
    CHECK(testing::relative_reconstruction_error(linalg::matmul(a, b), f) < 1e-9);
    CHECK(testing::max_abs_deviation_from_identity(f.V) <= 1e-10);
    // Same sign convention, so the leading vectors coincide.
    for (std::size_t i = 0; i < 70; ++i) CHECK(std::abs(f.V(i, 0) - t.V(i, 0)) < 1e-8);
}

TEST_CASE("householder_qr factors a tall matrix") {
    std::mt19937_64 rng(1);
    const Matrix m = random_matrix(rng, 10, 4);
    const auto qr = linalg::householder_qr(m);
    CHECK(testing::max_abs_deviation_from_identity(qr.Q) < 1e-12);
    CHECK(linalg::max_abs_diff(linalg::matmul(qr.Q, qr.R).data(), m.data()) < 1e-12);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < i; ++j) CHECK(qr.R(i, j) == 0.0);
}

TEST_CASE("conv2d_to_matrix small cases") {
    const Tensor one({1, 1, 1, 1}, {2.0});
    const Matrix m = linalg::conv2d_to_matrix(one, {2, 2, 1}, {});
    Matrix expected = Matrix::identity(4);
    for (double& v : expected.data()) v *= 2.0;
    CHECK(m == expected);

    const Tensor avg({2, 2, 1, 1}, {0.25, 0.25, 0.25, 0.25});
    const Matrix a = linalg::conv2d_to_matrix(avg, {2, 2, 1}, {});
    CHECK(a == Matrix::from_rows({{0.25, 0.25, 0.25, 0.25}}));
}

TEST_CASE("conv2d_to_matrix matches direct convolution") {
    std::mt19937_64 rng(4242);
    const Tensor kernel({3, 3, 2, 2}, testing::random_vector(rng, 36));
    const std::vector<double> z = testing::random_vector(rng, 5 * 5 * 2);
    const Matrix m = linalg::conv2d_to_matrix(kernel, {5, 5, 2}, {});
    const auto expected = testing::direct_conv(kernel.data, 3, 3, 2, 2, z, 5, 5, {});
    CHECK(linalg::max_abs_diff(linalg::matvec(m, z), expected) < 1e-12);
}

TEST_CASE("conv2d_to_matrix over random geometries") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<std::size_t> small(1, 3), spatial(3, 7), pad(0, 2);
    int checked = 0;
    while (checked < 200) {
        const std::size_t kh = small(rng), kw = small(rng), cin = small(rng), cout = small(rng);
        const std::size_t h = spatial(rng), w = spatial(rng);
        linalg::ConvGeometry g{small(rng), small(rng), pad(rng), pad(rng), small(rng), small(rng)};
        const Tensor kernel({kh, kw, cin, cout}, testing::random_vector(rng, kh * kw * cin * cout));
        Matrix m;
        try {
            m = linalg::conv2d_to_matrix(kernel, {h, w, cin}, g);
        } catch (const DimensionError&) {
            continue;  // window larger than the padded input
        }
        const std::vector<double> z = testing::random_vector(rng, h * w * cin);
        const auto expected = testing::direct_conv(kernel.data, kh, kw, cin, cout, z, h, w, g);
        REQUIRE(m.rows() == expected.size());
        CHECK(linalg::max_abs_diff(linalg::matvec(m, z), expected) <= 1e-12);
        ++checked;
    }
}

TEST_CASE("conv2d_to_matrix errors") {
    const Tensor big({5, 5, 1, 1}, std::vector<double>(25, 1.0));
    CHECK_THROWS_AS(linalg::conv2d_to_matrix(big, {3, 3, 1}, {}), DimensionError);
    const Tensor k({1, 1, 1, 1}, {1.0});
    CHECK_THROWS_AS(linalg::conv2d_to_matrix(k, {64, 64, 1}, {}, 1000), ResourceError);
}
