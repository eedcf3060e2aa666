#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "specxai/linalg.hpp"

namespace specxai::net {

enum class LayerKind { Dense, Conv2d, AvgPool, MaxPool, ReLU, Sigmoid, Tanh, Flatten, Residual, Concat };

std::string_view kind_name(LayerKind kind);

struct Layer;

/// y = W flatten(z) + b; an empty bias means no bias.
struct Dense {
    Matrix weight;
    std::vector<double> bias;
};

/// Kernel shape [KH, KW, C, C'] on H x W x C inputs; bias has C' entries or is empty.
struct Conv2d {
    Tensor kernel;
    std::vector<double> bias;
    linalg::ConvGeometry geometry;
};

struct PoolWindow {
    std::size_t window_h = 2, window_w = 2;
    std::size_t stride_h = 2, stride_w = 2;
};

struct AvgPool {
    PoolWindow window;
};

struct MaxPool {
    PoolWindow window;
};

struct ReLU {};
struct Sigmoid {};
struct Tanh {};
struct Flatten {};

/// y = skip z + inner(z). A missing skip is the identity.
struct Residual {
    std::vector<Layer> inner;
    std::optional<Matrix> skip;
};

/// y = sum_i combine[i] branch_i(z) + bias.
struct Concat {
    std::vector<std::vector<Layer>> branches;
    std::vector<Matrix> combine;
    std::vector<double> bias;
};

struct Layer {
    std::variant<Dense, Conv2d, AvgPool, MaxPool, ReLU, Sigmoid, Tanh, Flatten, Residual, Concat> op;

    LayerKind kind() const noexcept { return static_cast<LayerKind>(op.index()); }
    /// Element-wise layers that attach to the preceding block.
    bool is_elementwise() const noexcept;
};

struct NetworkModel {
    std::string name;
    Shape input_shape;
    std::vector<Layer> layers;
};

/// Shape produced by `layer` on inputs of shape `in`; throws DimensionError on mismatch.
Shape output_shape(const Layer& layer, const Shape& in);
/// Shapes z_0 .. z_L through a layer chain.
std::vector<Shape> shape_chain(std::span<const Layer> layers, const Shape& in);
/// Throws DimensionError if the model is empty or its shapes do not chain.
void validate(const NetworkModel& model);

Tensor apply_layer(const Layer& layer, const Tensor& z);
/// Returns z_0 = x through z_L.
std::vector<Tensor> forward(const NetworkModel& model, const Tensor& x);
std::vector<Tensor> forward(std::span<const Layer> layers, const Tensor& x);

/// Representation used for Sigmoid/Tanh.
///   Secant:   sigma(z) = diag((sigma(z) - sigma(0)) / z) z + sigma(0)
///   Gradient: sigma(z) = diag(sigma'(z)) z + (sigma(z) - sigma'(z) z)
enum class SmoothMode { Secant, Gradient };

/// Indicator states recorded while linearizing. ReLU entries are 1 (on), 0 (off) or
/// 2 (pre-activation exactly zero); max-pool entries are the in-window argmax.
struct Signature {
    std::vector<std::int32_t> codes;
    std::size_t boundary_count = 0;
    bool smooth = false;  // contains Sigmoid/Tanh states, which are not region-constant

    void append(const Signature& other);
    bool on_boundary() const noexcept { return boundary_count > 0; }
    friend bool operator==(const Signature& a, const Signature& b) {
        return a.smooth == b.smooth && a.codes == b.codes;
    }
};

/// W_eff z_in + b_eff == layer(z_in). Element-wise layers keep only the diagonal.
struct LayerLinearization {
    Matrix weight;
    std::optional<std::vector<double>> diagonal;
    std::vector<double> bias;  // empty means zero
    Signature signature;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;

    Matrix explicit_weight() const;
    std::vector<double> apply(std::span<const double> z) const;
    /// W_eff v, ignoring the bias.
    std::vector<double> apply_linear(std::span<const double> v) const;
    bool has_bias() const noexcept { return !bias.empty(); }
};

struct LinearizeOptions {
    SmoothMode smooth_mode = SmoothMode::Secant;
    std::size_t budget = linalg::element_budget();
};

LayerLinearization linearize_layer(const Layer& layer, const Tensor& z_in, const LinearizeOptions& opts = {});

struct Linearized {
    std::vector<Tensor> activations;  // z_0 .. z_L
    std::vector<LayerLinearization> layers;
};

Linearized linearize(const NetworkModel& model, const Tensor& x, const LinearizeOptions& opts = {});
Linearized linearize(std::span<const Layer> layers, const Tensor& x, const LinearizeOptions& opts = {});

/// Indicator states of one layer at z_in, without building any matrix.
Signature layer_signature(const Layer& layer, const Tensor& z_in);
/// Concatenated layer signatures along the forward pass.
Signature activation_pattern(const NetworkModel& model, const Tensor& x);

/// Product W_L ... W_1 of a run of linearizations. Diagonal factors are folded
/// into their neighbours and the remaining chain is multiplied in the order with
/// the fewest flops. `what` names the chain in budget errors.
Matrix chain_product(std::span<const LayerLinearization> layers, std::size_t in_dim, std::size_t budget,
                     const std::string& what);

/// Pushes v through the linear parts of `layers`, adding each layer's bias.
std::vector<double> propagate(std::span<const LayerLinearization> layers, std::vector<double> v, bool with_bias);

/// End index (exclusive) of each block. A block is a structural layer plus any
/// element-wise layers (ReLU, Sigmoid, Tanh, Flatten) that follow it.
std::vector<std::size_t> block_ends(const NetworkModel& model);

}  // namespace specxai::net
