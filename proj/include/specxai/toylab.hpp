#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "specxai/linalg.hpp"
#include "specxai/netgraph.hpp"
#include "specxai/spectral.hpp"

namespace specxai::toylab {

struct SquaresConfig {
    std::size_t canvas = 64;
    std::size_t square_side = 32;
    std::size_t count = 2048;
    std::uint64_t seed = 0;
    double angle_min = 0.0;   // degrees
    double angle_max = 90.0;  // degrees, exclusive

    /// Throws DimensionError if a rotated square would leave the canvas.
    void validate() const;
};

struct SquaresDataset {
    Matrix images;  // count x canvas^2, one flattened image per row
    std::vector<double> angles;
    Shape image_shape;  // {canvas, canvas, 1}

    std::size_t count() const { return images.rows(); }
    Tensor image(std::size_t i) const;
};

/// Binary image of a square rotated by `angle_deg` about the canvas centre. A
/// pixel is lit iff its centre, rotated back, lies strictly inside the square.
std::vector<double> render_square(double angle_deg, std::size_t canvas = 64, std::size_t side = 32);

SquaresDataset generate_squares(const SquaresConfig& cfg);

struct TrainConfig {
    std::vector<std::size_t> widths{4096, 512, 64, 8, 64, 512, 4096};
    bool use_bias = false;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    /// Multiplies the He initialisation of the output layer. A small value starts
    /// the reconstruction near zero so early updates do not drive every unit of
    /// a bias-free ReLU stack negative.
    double output_init_gain = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainResult {
    net::NetworkModel model;
    double initial_loss = 0.0;  // full-data MSE before the first update
    std::vector<double> loss;   // full-data MSE after each epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Mini-batch momentum SGD on the mean squared reconstruction error. ReLU
/// after every layer but the last. Throws TrainingError if the loss diverges.
TrainResult train_autoencoder(const Matrix& data, const Shape& image_shape, const TrainConfig& cfg,
                              const EpochCallback& on_epoch = {});

/// Full-data mean squared reconstruction error of `model`.
double reconstruction_mse(const net::NetworkModel& model, const Matrix& data);

/// Thin SVD of the raw (uncentred) data matrix; V columns live in image space.
/// Uses the same sign convention as linalg::thin_svd.
SvdResult data_matrix_svd(const Matrix& data, double rank_tol = linalg::kDefaultRankTol);

/// sigma[k] / sigma[0], or 0 when the spectrum has no index k or sigma[0] == 0.
double normalized_sigma(const std::vector<double>& sigma, std::size_t k);

/// Mean over rotations by 15, 30, ..., 345 degrees of |R v - v|^2 / |v|^2,
/// with bilinear resampling about the image centre.
double angular_variance(const std::vector<double>& image, std::size_t height, std::size_t width);

struct SampleSpectrum {
    std::size_t sample = 0;
    std::vector<double> sigma;
    std::size_t rank_used = 0;
    std::vector<double> coefficients;            // c_i at the whole-network split
    std::vector<std::vector<double>> top_v;      // leading right singular vectors (image space)
    std::vector<std::vector<double>> top_u;      // matching left singular vectors (output space)
    std::vector<spectral::ContractionMap> contractions;
};

struct SpectraReport {
    std::vector<double> data_sigma;
    std::vector<std::vector<double>> data_top_v;
    std::vector<SampleSpectrum> samples;
    std::size_t max_operator_rank = 0;
    bool degenerate = false;  // some operator spectrum is identically zero
};

SpectraReport compare_spectra(const net::NetworkModel& model, const SquaresDataset& data,
                              const std::vector<std::size_t>& sample_indices, std::size_t top = 4);
/// Same, reusing a precomputed data-matrix SVD.
SpectraReport compare_spectra(const net::NetworkModel& model, const SquaresDataset& data, const SvdResult& data_svd,
                              const std::vector<std::size_t>& sample_indices, std::size_t top = 4);

struct BiasStudy {
    std::vector<std::size_t> layers;          // 1-based positions of bias-carrying layers
    std::vector<bool> decoder;                // layer sits after the narrowest layer
    std::vector<std::vector<double>> betas;   // one per entry of `layers`
    std::vector<double> total;                // sum of all betas
    std::vector<double> ux;
    std::vector<double> y;
    double residual = 0.0;                    // |y - ux - total|_inf
};

BiasStudy bias_study(const net::NetworkModel& model, const Tensor& x);

}  // namespace specxai::toylab
