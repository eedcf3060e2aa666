#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "specxai/linalg.hpp"
#include "specxai/netgraph.hpp"
#include "specxai/pwa.hpp"

namespace specxai::spectral {

/// The operator chain cut after block `split_layer`: u = left * right.
struct SpectralSplit {
    std::size_t split_layer = 0;   // 1-based block index
    std::size_t layer_count = 0;   // number of layers in the right piece
    std::size_t output_index = 0;
    Shape input_shape;
    std::vector<double> x;         // flattened input
    Matrix right;                  // dz_{l_s}/dx
    Matrix left;                   // remaining chain
    SvdResult svd;                 // of right
    Matrix left_hat;               // left * U
    std::vector<double> coefficients;  // c_i = sigma_i (phi_i . x)
    std::vector<double> bias;      // whole-network b
    std::vector<double> y;         // whole-network output
    std::size_t narrowest_width = 0;   // smallest width the right piece factors through

    double y_j() const { return y.at(output_index); }
    double b_j() const { return bias.at(output_index); }
    std::size_t rank() const { return svd.sigma.size(); }
    /// Column k of V, reshaped to the input shape.
    Tensor singular_vector(std::size_t k) const;
};

struct SplitOptions {
    pwa::Options pwa;
    double rank_tol = linalg::kDefaultRankTol;
};

std::size_t block_count(const net::NetworkModel& model);

/// Throws DimensionError if split_layer is outside [1, block_count].
SpectralSplit split_at(const net::NetworkModel& model, const Tensor& x, std::size_t split_layer,
                       std::size_t output_index, const SplitOptions& opts = {});
/// Same, reusing a linearization of `model` at x.
SpectralSplit split_at(const net::NetworkModel& model, const net::Linearized& lin, std::size_t split_layer,
                       std::size_t output_index, const SplitOptions& opts = {});

/// Index of the largest model output at x.
std::size_t argmax_output(const net::NetworkModel& model, const Tensor& x);

struct AlphaDecomposition {
    std::vector<double> alphas;  // psi_k c_k
    std::vector<double> psi;     // row output_index of left_hat
    double residual_bias = 0.0;  // b_j
    double y = 0.0;

    double sum() const;
};

AlphaDecomposition alpha_decomposition(const SpectralSplit& split);

struct ReducedCoefficients {
    std::vector<double> a_hat;                // homogeneous sign
    std::vector<double> a_tilde;              // a_hat / sum(a_hat)
    std::vector<std::size_t> spectral_index;  // contributing singular vector of each entry
    std::size_t iterations = 0;
    std::vector<double> pass_sums;            // sum after each pass
    bool cancelled = false;                   // contributions summed to exactly zero
    std::string warning;
};

/// One pairing pass: positives and negatives, each ordered by descending
/// magnitude, are added order-wise and the unpaired tail is kept. Zero entries
/// are dropped. Values and spectral indices are updated in place.
void reduction_pass(std::vector<double>& values, std::vector<std::size_t>& index);

/// Repeats reduction_pass until all entries share a sign, then normalises.
ReducedCoefficients reduce_coefficients(const std::vector<double>& alphas);

struct ContractionMap {
    Shape shape;
    std::vector<double> values;
    std::size_t spectral_index = 0;

    double sum() const;
};

/// Channel axis used by default: the last axis of rank-3 ([H,W,C]) inputs,
/// none otherwise (each entry is its own location).
std::optional<std::size_t> default_channel_axis(const Shape& shape);

/// c_loc = sum over `axis` of phi * x. Without an axis, the element-wise product.
ContractionMap feature_contraction(const Tensor& phi, const Tensor& x, std::optional<std::size_t> axis);
/// Mean of phi over `axis`.
ContractionMap feature_average(const Tensor& phi, std::optional<std::size_t> axis);

struct SymbolicTerm {
    std::size_t spectral_index = 0;
    double coefficient = 0.0;  // alpha (or a_hat when reduced); enters the reconstruction
    double alpha_tilde = 0.0;  // normalised share; equals coefficient / sum when not reduced
    ContractionMap c_hat;      // sums to one
    double raw_sum = 0.0;      // phi_k . x
};

struct SymbolicDecomposition {
    std::vector<SymbolicTerm> terms;  // ranked by |alpha_tilde|
    ContractionMap bias_map;          // b_j spread uniformly
    ContractionMap remainder_map;     // dropped coefficients spread uniformly
    double remainder = 0.0;
    double y = 0.0;
    double bias = 0.0;
    double reconstructed = 0.0;       // grid sum of every map times its coefficient
    bool reduced = false;
    std::size_t iterations = 0;
    std::string warning;
};

struct SymbolicOptions {
    bool reduce = false;
    /// Terms whose |alpha_tilde| falls below this are folded into the remainder.
    std::optional<double> prune_threshold;
    std::optional<std::size_t> channel_axis;  // defaults to default_channel_axis
    bool use_default_axis = true;
};

SymbolicDecomposition symbolic(const SpectralSplit& split, const SymbolicOptions& opts = {});
SymbolicDecomposition symbolic(const net::NetworkModel& model, const Tensor& x, std::size_t split_layer,
                               std::size_t output_index, const SymbolicOptions& opts = {},
                               const SplitOptions& split_opts = {});

/// Plain projection of x on the singular vectors; diagnostic only.
struct ChangeOfBasis {
    std::vector<double> projections;  // phi_k . x
    double residual_norm = 0.0;       // |x - sum_k (phi_k . x) phi_k|
};
ChangeOfBasis change_of_basis(const SpectralSplit& split);

/// Pairwise inner products of unit vectors. Throws NormalizationError when a
/// vector's norm deviates from one by more than `tol`.
Matrix sv_similarity(const std::vector<std::vector<double>>& svs, double tol = 1e-8);

struct SweepEntry {
    std::size_t split_layer = 0;
    bool ok = false;
    std::string error;
    std::vector<double> sigma;
    std::size_t rank_used = 0;
    ReducedCoefficients reduced;
    std::size_t top_index = 0;  // spectral index of the largest |a_tilde|
    ContractionMap top_map;
    double y = 0.0;
    double reconstruction = 0.0;  // sum(alpha) + b_j
};

/// One entry per block; resource errors are recorded and the sweep continues.
std::vector<SweepEntry> layer_sweep(const net::NetworkModel& model, const Tensor& x, std::size_t output_index,
                                    const SplitOptions& opts = {});

/// Fraction of sum |c| carried by the `top` largest |c|.
double top_mass(const std::vector<double>& c, std::size_t top);

}  // namespace specxai::spectral
