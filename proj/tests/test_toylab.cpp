#include <doctest.h>

#include <cmath>
#include <numeric>

#include "specxai/error.hpp"
#include "specxai/pwa.hpp"
#include "specxai/toylab.hpp"
#include "support/random_models.hpp"

using namespace specxai;

namespace {

double lit(const std::vector<double>& img) { return std::accumulate(img.begin(), img.end(), 0.0); }

// Area covered by the rotated square, estimated by supersampling each pixel.
double supersampled_area(double angle_deg, int sub) {
    const double t = angle_deg * M_PI / 180.0;
    const double c = std::cos(t), s = std::sin(t);
    long inside = 0;
    for (int r = 0; r < 64 * sub; ++r)
        for (int q = 0; q < 64 * sub; ++q) {
            const double dx = (q + 0.5) / sub - 32.0, dy = (r + 0.5) / sub - 32.0;
            if (std::abs(c * dx + s * dy) < 16.0 && std::abs(-s * dx + c * dy) < 16.0) ++inside;
        }
    return static_cast<double>(inside) / (sub * sub);
}

toylab::TrainConfig small_config() {
    toylab::TrainConfig tc;
    tc.widths = {256, 48, 16, 8, 16, 48, 256};
    tc.epochs = 8;
    tc.batch_size = 16;
    tc.learning_rate = 0.1;
    tc.seed = 3;
    return tc;
}

toylab::SquaresDataset small_squares(std::size_t count = 128, std::uint64_t seed = 5) {
    toylab::SquaresConfig sc;
    sc.canvas = 16;
    sc.square_side = 8;
    sc.count = count;
    sc.seed = seed;
    return toylab::generate_squares(sc);
}

}  // namespace

TEST_CASE("axis-aligned square") {
    const auto img = toylab::render_square(0.0);
    CHECK(lit(img) == 1024.0);
    CHECK(img[16 * 64 + 16] == 1.0);
    CHECK(img[15 * 64 + 16] == 0.0);
    CHECK(img[47 * 64 + 47] == 1.0);
    CHECK(img[48 * 64 + 47] == 0.0);
}

TEST_CASE("square symmetry at ninety degrees") {
    CHECK(toylab::render_square(90.0) == toylab::render_square(0.0));
}

TEST_CASE("rotated square area") {
    const double area = lit(toylab::render_square(45.0));
    CHECK(area >= 960.0);
    CHECK(area <= 1100.0);
    const double oracle = supersampled_area(45.0, 16);
    CHECK(std::abs(oracle - 1024.0) < 0.01 * 1024.0);
    CHECK(std::abs(area - oracle) < 64.0);
}

TEST_CASE("dataset generation") {
    const auto a = small_squares(64, 9);
    const auto b = small_squares(64, 9);
    CHECK(a.images == b.images);
    CHECK(a.angles == b.angles);
    CHECK(a.image_shape == Shape{16, 16, 1});
    for (double t : a.angles) {
        CHECK(t >= 0.0);
        CHECK(t < 90.0);
    }
    for (double v : a.images.data()) CHECK((v == 0.0 || v == 1.0));
    CHECK(small_squares(64, 10).images != a.images);

    toylab::SquaresConfig bad;
    bad.square_side = 48;
    CHECK_THROWS_AS(toylab::generate_squares(bad), DimensionError);
}

TEST_CASE("zero-epoch training returns the initial model") {
    const auto ds = small_squares(16);
    auto tc = small_config();
    tc.epochs = 0;
    const auto r = toylab::train_autoencoder(ds.images, ds.image_shape, tc);
    CHECK(r.loss.empty());
    CHECK(r.model.layers.size() == 12);
    CHECK(spectral::block_count(r.model) == 6);
    CHECK(toylab::reconstruction_mse(r.model, ds.images) == doctest::Approx(r.initial_loss).epsilon(1e-5));
}

TEST_CASE("all-zero data is reconstructed exactly") {
    for (bool bias : {false, true}) {
        auto tc = small_config();
        tc.use_bias = bias;
        tc.epochs = 50;
        const Matrix zeros(32, 256);
        const auto r = toylab::train_autoencoder(zeros, {16, 16, 1}, tc);
        REQUIRE(r.loss.size() == 50);
        CHECK(r.loss.back() <= 1e-6);
    }
}

TEST_CASE("training is deterministic and reduces the loss") {
    const auto ds = small_squares();
    const auto tc = small_config();
    const auto a = toylab::train_autoencoder(ds.images, ds.image_shape, tc);
    const auto b = toylab::train_autoencoder(ds.images, ds.image_shape, tc);
    CHECK(a.loss == b.loss);
    CHECK(a.loss.back() < a.initial_loss);
    CHECK(toylab::reconstruction_mse(a.model, ds.images) == doctest::Approx(a.loss.back()).epsilon(1e-4));
}

TEST_CASE("divergence raises a training error") {
    const auto ds = small_squares(32);
    auto tc = small_config();
    tc.learning_rate = 1e6;
    tc.output_init_gain = 1.0;
    CHECK_THROWS_AS(toylab::train_autoencoder(ds.images, ds.image_shape, tc), TrainingError);
}

TEST_CASE("configuration checks") {
    const auto ds = small_squares(8);
    auto tc = small_config();
    tc.widths = {256, 8, 255};
    CHECK_THROWS_AS(toylab::train_autoencoder(ds.images, ds.image_shape, tc), DimensionError);
    tc = small_config();
    tc.widths = {100, 8, 100};
    CHECK_THROWS_AS(toylab::train_autoencoder(ds.images, ds.image_shape, tc), DimensionError);
}

TEST_CASE("data matrix svd") {
    SUBCASE("repeated image has rank one") {
        Matrix m(5, 64 * 64);
        const auto img = toylab::render_square(30.0);
        for (std::size_t r = 0; r < 5; ++r) std::copy(img.begin(), img.end(), m.row(r).begin());
        const auto s = toylab::data_matrix_svd(m);
        CHECK(s.rank_used == 1);
        CHECK(testing::max_abs_deviation_from_identity(s.U) <= 1e-12);
    }
    SUBCASE("orthogonal images") {
        Matrix m(2, 8);
        m(0, 1) = 1.0;
        m(1, 5) = 2.0;
        const auto s = toylab::data_matrix_svd(m);
        CHECK(s.rank_used == 2);
        CHECK(s.sigma[0] == doctest::Approx(2.0));
        CHECK(s.sigma[1] == doctest::Approx(1.0));
    }
    SUBCASE("agrees with the jacobi svd") {
        const auto ds = small_squares(40);
        const auto a = toylab::data_matrix_svd(ds.images);
        const auto b = linalg::thin_svd(ds.images);
        for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(a.sigma[i] - b.sigma[i]) <= 1e-9 * b.sigma[0]);
        CHECK(testing::max_abs_deviation_from_identity(a.V) <= 1e-10);
        CHECK(testing::max_abs_deviation_from_identity(a.U) <= 1e-10);
        for (std::size_t i = 0; i < a.V.rows(); ++i) CHECK(std::abs(a.V(i, 0) - b.V(i, 0)) <= 1e-8);
    }
    CHECK_THROWS_AS(toylab::data_matrix_svd(Matrix(1, 4)), DimensionError);
}

TEST_CASE("angular variance") {
    // A centred disc barely changes under rotation; an off-centre blob does.
    std::vector<double> disc(32 * 32, 0.0), blob(32 * 32, 0.0);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) {
            const double dx = c + 0.5 - 16, dy = r + 0.5 - 16;
            if (dx * dx + dy * dy < 100) disc[r * 32 + c] = 1.0;
            if (r >= 2 && r < 8 && c >= 12 && c < 20) blob[r * 32 + c] = 1.0;
        }
    CHECK(toylab::angular_variance(disc, 32, 32) < 0.1);
    CHECK(toylab::angular_variance(blob, 32, 32) > 1.0);
    CHECK(toylab::angular_variance(std::vector<double>(16, 0.0), 4, 4) == 0.0);
}

TEST_CASE("compare spectra") {
    const auto ds = small_squares(48);
    SUBCASE("zero-weight model is flagged degenerate") {
        auto tc = small_config();
        tc.epochs = 0;
        auto model = toylab::train_autoencoder(ds.images, ds.image_shape, tc).model;
        for (auto& l : model.layers)
            if (auto* d = std::get_if<net::Dense>(&l.op)) std::fill(d->weight.data().begin(), d->weight.data().end(), 0.0);
        const auto rep = toylab::compare_spectra(model, ds, {0, 1});
        CHECK(rep.degenerate);
        CHECK(rep.max_operator_rank == 0);
    }
    SUBCASE("trained model respects the bottleneck") {
        const auto r = toylab::train_autoencoder(ds.images, ds.image_shape, small_config());
        const auto rep = toylab::compare_spectra(r.model, ds, {0, 1, 2});
        CHECK(rep.max_operator_rank <= 8);
        CHECK(rep.data_top_v.size() == 4);
        for (const auto& s : rep.samples) {
            CHECK(s.sigma.size() <= 8);
            CHECK(s.contractions.size() == s.top_v.size());
            for (const auto& v : s.top_v) CHECK(std::abs(linalg::norm2(v) - 1.0) < 1e-10);
        }
    }
}

TEST_CASE("bias study") {
    const auto ds = small_squares(48);
    SUBCASE("no-bias model has zero betas") {
        const auto r = toylab::train_autoencoder(ds.images, ds.image_shape, small_config());
        const auto st = toylab::bias_study(r.model, ds.image(0));
        CHECK(st.layers.empty());
        for (double v : st.total) CHECK(v == 0.0);
    }
    SUBCASE("single biased identity layer") {
        net::NetworkModel m{"id", {3}, {{net::Dense{Matrix::identity(3), {0.5, -1, 2}}}}};
        const auto st = toylab::bias_study(m, Tensor({3}, {1, 1, 1}));
        REQUIRE(st.betas.size() == 1);
        CHECK(st.betas[0] == std::vector<double>{0.5, -1, 2});
    }
    SUBCASE("biased autoencoder") {
        auto tc = small_config();
        tc.use_bias = true;
        const auto r = toylab::train_autoencoder(ds.images, ds.image_shape, tc);
        const auto st = toylab::bias_study(r.model, ds.image(3));
        CHECK(st.layers.size() == 6);
        CHECK(std::count(st.decoder.begin(), st.decoder.end(), true) == 3);
        CHECK(st.residual <= 1e-7);
    }
}
