#pragma once

#include <vector>

#include "specxai/linalg.hpp"
#include "specxai/netgraph.hpp"

namespace specxai::pwa {

/// The network's exact affine form y = u x + b at one input.
struct AffineOperator {
    Matrix u;                        // N x M
    std::vector<double> b;           // f(x_ref) - u x_ref
    std::vector<double> b_layers;    // sum of per-layer bias contributions
    std::vector<double> y;           // f(x_ref)
    net::Signature signature;
    Tensor x_ref;

    /// max |b - b_layers|
    double bias_disagreement() const;
};

struct Options {
    net::SmoothMode smooth_mode = net::SmoothMode::Secant;
    std::size_t budget = linalg::element_budget();
    /// Relative tolerance for the two bias computations, scaled by 1 + |f(x)|_inf.
    double bias_tolerance = 1e-8;

    net::LinearizeOptions linearize_options() const { return {smooth_mode, budget}; }
};

/// Throws NumericError if the two bias computations disagree beyond tolerance.
AffineOperator extract_affine(const net::NetworkModel& model, const Tensor& x, const Options& opts = {});

/// Builds the operator from an existing linearization of `model` at its input.
AffineOperator assemble_affine(const net::NetworkModel& model, const net::Linearized& lin, const Options& opts = {});

struct BiasDecomposition {
    /// beta[l] = W_L ... W_{l+1} b_l for every layer, zero for layers without bias.
    std::vector<std::vector<double>> betas;
    std::vector<bool> carries_bias;
    std::vector<double> total;
};

BiasDecomposition bias_decomposition(const net::NetworkModel& model, const Tensor& x, const Options& opts = {});
BiasDecomposition bias_decomposition(const net::Linearized& lin);

struct JacobianCheck {
    double max_abs_error = 0.0;
    double step_used = 0.0;
    int shrinks = 0;
};

/// Compares u against central finite differences. The step is halved (at most
/// `max_shrinks` times) until every probe keeps the activation signature of x;
/// throws RegionBoundaryError if x is on a boundary or no such step is found.
JacobianCheck jacobian_check(const net::NetworkModel& model, const Tensor& x, double step, int max_shrinks = 20,
                             const Options& opts = {});

/// True iff both inputs share an activation signature. Networks with smooth
/// activations have no constant regions, so only identical inputs qualify.
bool same_region(const net::NetworkModel& model, const Tensor& x1, const Tensor& x2);

}  // namespace specxai::pwa
