#include "specxai/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "specxai/error.hpp"

namespace specxai::net {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

struct PoolDims {
    std::size_t h, w, c, oh, ow;
};

PoolDims pool_dims(const PoolWindow& p, const Shape& in) {
    if (in.size() != 3) throw DimensionError("pooling expects [H,W,C] input, got " + shape_to_string(in));
    return {in[0], in[1], in[2], linalg::conv_output_extent(in[0], p.window_h, p.stride_h, 0, 1),
            linalg::conv_output_extent(in[1], p.window_w, p.stride_w, 0, 1)};
}

// Flat input index of each window's maximum; ties go to the lowest in-window index.
// When `sig` is given, the in-window codes and tie count are recorded there.
std::vector<std::size_t> maxpool_argmax(const PoolWindow& p, const Tensor& z, Signature* sig) {
    const auto d = pool_dims(p, z.shape);
    std::vector<std::size_t> winners;
    winners.reserve(d.oh * d.ow * d.c);
    for (std::size_t y = 0; y < d.oh; ++y)
        for (std::size_t x = 0; x < d.ow; ++x)
            for (std::size_t ch = 0; ch < d.c; ++ch) {
                std::size_t best_flat = 0;
                std::int32_t best_code = 0;
                double best = -std::numeric_limits<double>::infinity();
                bool tie = false;
                std::int32_t code = 0;
                for (std::size_t ky = 0; ky < p.window_h; ++ky)
                    for (std::size_t kx = 0; kx < p.window_w; ++kx, ++code) {
                        const std::size_t flat = ((y * p.stride_h + ky) * d.w + x * p.stride_w + kx) * d.c + ch;
                        const double v = z.data[flat];
                        if (v > best) {
                            best = v;
                            best_flat = flat;
                            best_code = code;
                            tie = false;
                        } else if (v == best) {
                            tie = true;
                        }
                    }
                winners.push_back(best_flat);
                if (sig) {
                    sig->codes.push_back(best_code);
                    if (tie) ++sig->boundary_count;
                }
            }
    return winners;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// (sigma(z) - sigma(0)) / z computed without cancellation.
double sigmoid_secant(double z) {
    if (std::abs(z) < 1e-12) return 0.25;
    return 0.5 * std::tanh(0.5 * z) / z;
}

double tanh_secant(double z) {
    if (std::abs(z) < 1e-12) return 1.0;
    return std::tanh(z) / z;
}

void check_vector(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected " + std::to_string(want) + " entries, got " +
                             std::to_string(got));
    }
}

}  // namespace

std::string_view kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::ReLU: return "relu";
        case LayerKind::Sigmoid: return "sigmoid";
        case LayerKind::Tanh: return "tanh";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Residual: return "residual";
        case LayerKind::Concat: return "concat";
    }
    return "unknown";
}

bool Layer::is_elementwise() const noexcept {
    switch (kind()) {
        case LayerKind::ReLU:
        case LayerKind::Sigmoid:
        case LayerKind::Tanh:
        case LayerKind::Flatten: return true;
        default: return false;
    }
}

Shape output_shape(const Layer& layer, const Shape& in) {
    const std::size_t in_dim = shape_size(in);
    return std::visit(
        overloaded{
            [&](const Dense& d) -> Shape {
                if (d.weight.cols() != in_dim) {
                    throw DimensionError("dense layer expects " + std::to_string(d.weight.cols()) + " inputs, got " +
                                         shape_to_string(in));
                }
                if (!d.bias.empty()) check_vector(d.bias.size(), d.weight.rows(), "dense bias");
                return {d.weight.rows()};
            },
            [&](const Conv2d& c) -> Shape {
                if (in.size() != 3) throw DimensionError("conv2d expects [H,W,C] input, got " + shape_to_string(in));
                if (c.kernel.rank() != 4) throw DimensionError("conv2d kernel must be [KH,KW,C,C']");
                if (c.kernel.shape[2] != in[2]) throw DimensionError("conv2d channel mismatch");
                if (!c.bias.empty()) check_vector(c.bias.size(), c.kernel.shape[3], "conv2d bias");
                const auto& g = c.geometry;
                return {linalg::conv_output_extent(in[0], c.kernel.shape[0], g.stride_h, g.pad_h, g.dilation_h),
                        linalg::conv_output_extent(in[1], c.kernel.shape[1], g.stride_w, g.pad_w, g.dilation_w),
                        c.kernel.shape[3]};
            },
            [&](const AvgPool& p) -> Shape {
                const auto d = pool_dims(p.window, in);
                return {d.oh, d.ow, d.c};
            },
            [&](const MaxPool& p) -> Shape {
                const auto d = pool_dims(p.window, in);
                return {d.oh, d.ow, d.c};
            },
            [&](const ReLU&) -> Shape { return in; },
            [&](const Sigmoid&) -> Shape { return in; },
            [&](const Tanh&) -> Shape { return in; },
            [&](const Flatten&) -> Shape { return {in_dim}; },
            [&](const Residual& r) -> Shape {
                if (r.inner.empty()) throw DimensionError("residual layer needs a non-empty inner network");
                const Shape out = shape_chain(r.inner, in).back();
                const std::size_t out_dim = shape_size(out);
                if (r.skip) {
                    if (r.skip->rows() != out_dim || r.skip->cols() != in_dim)
                        throw DimensionError("residual skip matrix must be " + std::to_string(out_dim) + "x" +
                                             std::to_string(in_dim));
                } else if (out_dim != in_dim) {
                    throw DimensionError("residual without skip matrix needs matching dimensions");
                }
                return out;
            },
            [&](const Concat& c) -> Shape {
                if (c.branches.empty() || c.branches.size() != c.combine.size())
                    throw DimensionError("concat needs one combining matrix per branch");
                std::size_t out_dim = c.combine.front().rows();
                for (std::size_t i = 0; i < c.branches.size(); ++i) {
                    if (c.branches[i].empty()) throw DimensionError("concat branch is empty");
                    const std::size_t bdim = shape_size(shape_chain(c.branches[i], in).back());
                    if (c.combine[i].cols() != bdim || c.combine[i].rows() != out_dim)
                        throw DimensionError("concat combining matrix " + std::to_string(i) + " has wrong shape");
                }
                if (!c.bias.empty()) check_vector(c.bias.size(), out_dim, "concat bias");
                return {out_dim};
            },
        },
        layer.op);
}

std::vector<Shape> shape_chain(std::span<const Layer> layers, const Shape& in) {
    std::vector<Shape> shapes{in};
    shapes.reserve(layers.size() + 1);
    for (const Layer& l : layers) shapes.push_back(output_shape(l, shapes.back()));
    return shapes;
}

void validate(const NetworkModel& model) {
    if (model.layers.empty()) throw DimensionError("model '" + model.name + "' has no layers");
    if (model.input_shape.empty() || shape_size(model.input_shape) == 0)
        throw DimensionError("model '" + model.name + "' has an empty input shape");
    shape_chain(model.layers, model.input_shape);
}

Tensor apply_layer(const Layer& layer, const Tensor& z) {
    const Shape out_shape = output_shape(layer, z.shape);
    Tensor out(out_shape);
    std::visit(
        overloaded{
            [&](const Dense& d) {
                out.data = linalg::matvec(d.weight, z.data);
                for (std::size_t i = 0; i < d.bias.size(); ++i) out.data[i] += d.bias[i];
            },
            [&](const Conv2d& c) {
                const std::size_t h = z.shape[0], w = z.shape[1], cin = z.shape[2];
                const std::size_t kh = c.kernel.shape[0], kw = c.kernel.shape[1], cout = c.kernel.shape[3];
                const std::size_t oh = out_shape[0], ow = out_shape[1];
                const auto& g = c.geometry;
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t x = 0; x < ow; ++x)
                        for (std::size_t co = 0; co < cout; ++co) {
                            double acc = c.bias.empty() ? 0.0 : c.bias[co];
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                const auto iy = static_cast<std::ptrdiff_t>(y * g.stride_h + ky * g.dilation_h) -
                                                static_cast<std::ptrdiff_t>(g.pad_h);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    const auto ix = static_cast<std::ptrdiff_t>(x * g.stride_w + kx * g.dilation_w) -
                                                    static_cast<std::ptrdiff_t>(g.pad_w);
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                    for (std::size_t ci = 0; ci < cin; ++ci) {
                                        acc += c.kernel.data[((ky * kw + kx) * cin + ci) * cout + co] *
                                               z.data[(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin + ci];
                                    }
                                }
                            }
                            out.data[(y * ow + x) * cout + co] = acc;
                        }
            },
            [&](const AvgPool& p) {
                const auto d = pool_dims(p.window, z.shape);
                const double inv = 1.0 / static_cast<double>(p.window.window_h * p.window.window_w);
                for (std::size_t y = 0; y < d.oh; ++y)
                    for (std::size_t x = 0; x < d.ow; ++x)
                        for (std::size_t ch = 0; ch < d.c; ++ch) {
                            double acc = 0.0;
                            for (std::size_t ky = 0; ky < p.window.window_h; ++ky)
                                for (std::size_t kx = 0; kx < p.window.window_w; ++kx)
                                    acc += z.data[((y * p.window.stride_h + ky) * d.w + x * p.window.stride_w + kx) * d.c + ch];
                            out.data[(y * d.ow + x) * d.c + ch] = acc * inv;
                        }
            },
            [&](const MaxPool& p) {
                const auto d = pool_dims(p.window, z.shape);
                for (std::size_t y = 0; y < d.oh; ++y)
                    for (std::size_t x = 0; x < d.ow; ++x)
                        for (std::size_t ch = 0; ch < d.c; ++ch) {
                            double best = -std::numeric_limits<double>::infinity();
                            for (std::size_t ky = 0; ky < p.window.window_h; ++ky)
                                for (std::size_t kx = 0; kx < p.window.window_w; ++kx)
                                    best = std::max(best, z.data[((y * p.window.stride_h + ky) * d.w + x * p.window.stride_w + kx) * d.c + ch]);
                            out.data[(y * d.ow + x) * d.c + ch] = best;
                        }
            },
            [&](const ReLU&) {
                for (std::size_t i = 0; i < z.size(); ++i) out.data[i] = z.data[i] > 0.0 ? z.data[i] : 0.0;
            },
            [&](const Sigmoid&) {
                for (std::size_t i = 0; i < z.size(); ++i) out.data[i] = sigmoid(z.data[i]);
            },
            [&](const Tanh&) {
                for (std::size_t i = 0; i < z.size(); ++i) out.data[i] = std::tanh(z.data[i]);
            },
            [&](const Flatten&) { out.data = z.data; },
            [&](const Residual& r) {
                const Tensor inner = forward(r.inner, z).back();
                out.data = r.skip ? linalg::matvec(*r.skip, z.data) : z.data;
                for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += inner.data[i];
            },
            [&](const Concat& c) {
                std::fill(out.data.begin(), out.data.end(), 0.0);
                for (std::size_t b = 0; b < c.branches.size(); ++b) {
                    const Tensor zb = forward(c.branches[b], z).back();
                    const std::vector<double> part = linalg::matvec(c.combine[b], zb.data);
                    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += part[i];
                }
                for (std::size_t i = 0; i < c.bias.size(); ++i) out.data[i] += c.bias[i];
            },
        },
        layer.op);
    return out;
}

std::vector<Tensor> forward(std::span<const Layer> layers, const Tensor& x) {
    std::vector<Tensor> zs{x};
    zs.reserve(layers.size() + 1);
    for (const Layer& l : layers) zs.push_back(apply_layer(l, zs.back()));
    return zs;
}

std::vector<Tensor> forward(const NetworkModel& model, const Tensor& x) {
    if (x.shape != model.input_shape) {
        throw DimensionError("input shape " + shape_to_string(x.shape) + " does not match model input " +
                             shape_to_string(model.input_shape));
    }
    return forward(std::span<const Layer>(model.layers), x);
}

void Signature::append(const Signature& other) {
    codes.insert(codes.end(), other.codes.begin(), other.codes.end());
    boundary_count += other.boundary_count;
    smooth = smooth || other.smooth;
}

Matrix LayerLinearization::explicit_weight() const {
    if (diagonal) return Matrix::diagonal(*diagonal);
    return weight;
}

std::vector<double> LayerLinearization::apply_linear(std::span<const double> v) const {
    if (diagonal) {
        check_vector(v.size(), diagonal->size(), "linearization input");
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (*diagonal)[i] * v[i];
        return out;
    }
    return linalg::matvec(weight, v);
}

std::vector<double> LayerLinearization::apply(std::span<const double> z) const {
    std::vector<double> out = apply_linear(z);
    for (std::size_t i = 0; i < bias.size(); ++i) out[i] += bias[i];
    return out;
}

namespace {

LayerLinearization diagonal_linearization(std::vector<double> diag) {
    LayerLinearization lin;
    lin.in_dim = lin.out_dim = diag.size();
    lin.diagonal = std::move(diag);
    return lin;
}

LayerLinearization explicit_linearization(Matrix w, std::vector<double> b) {
    LayerLinearization lin;
    lin.in_dim = w.cols();
    lin.out_dim = w.rows();
    lin.weight = std::move(w);
    lin.bias = std::move(b);
    return lin;
}

// Affine form of a nested chain (residual body or concat branch) at z.
std::pair<Matrix, std::vector<double>> nested_affine(std::span<const Layer> layers, const Tensor& z,
                                                     const LinearizeOptions& opts, const std::string& what) {
    Linearized lin = linearize(layers, z, opts);
    Matrix w = chain_product(lin.layers, z.size(), opts.budget, what);
    std::vector<double> b = propagate(lin.layers, std::vector<double>(z.size(), 0.0), true);
    return {std::move(w), std::move(b)};
}

}  // namespace

LayerLinearization linearize_layer(const Layer& layer, const Tensor& z_in, const LinearizeOptions& opts) {
    const Shape out_shape = output_shape(layer, z_in.shape);
    const std::size_t in_dim = z_in.size();
    const std::size_t out_dim = shape_size(out_shape);

    return std::visit(
        overloaded{
            [&](const Dense& d) { return explicit_linearization(d.weight, d.bias); },
            [&](const Conv2d& c) {
                Matrix w = linalg::conv2d_to_matrix(c.kernel, z_in.shape, c.geometry, opts.budget);
                std::vector<double> b;
                if (!c.bias.empty()) {
                    const std::size_t cout = c.bias.size();
                    b.resize(out_dim);
                    for (std::size_t i = 0; i < out_dim; ++i) b[i] = c.bias[i % cout];
                }
                return explicit_linearization(std::move(w), std::move(b));
            },
            [&](const AvgPool& p) {
                const auto d = pool_dims(p.window, z_in.shape);
                linalg::check_budget(out_dim, in_dim, opts.budget, "avgpool");
                Matrix w(out_dim, in_dim);
                const double inv = 1.0 / static_cast<double>(p.window.window_h * p.window.window_w);
                for (std::size_t y = 0; y < d.oh; ++y)
                    for (std::size_t x = 0; x < d.ow; ++x)
                        for (std::size_t ch = 0; ch < d.c; ++ch)
                            for (std::size_t ky = 0; ky < p.window.window_h; ++ky)
                                for (std::size_t kx = 0; kx < p.window.window_w; ++kx)
                                    w((y * d.ow + x) * d.c + ch,
                                      ((y * p.window.stride_h + ky) * d.w + x * p.window.stride_w + kx) * d.c + ch) += inv;
                return explicit_linearization(std::move(w), {});
            },
            [&](const MaxPool& p) {
                linalg::check_budget(out_dim, in_dim, opts.budget, "maxpool");
                Matrix w(out_dim, in_dim);
                const std::vector<std::size_t> winners = maxpool_argmax(p.window, z_in, nullptr);
                for (std::size_t o = 0; o < out_dim; ++o) w(o, winners[o]) = 1.0;
                LayerLinearization lin = explicit_linearization(std::move(w), {});
                lin.signature = layer_signature(layer, z_in);
                return lin;
            },
            [&](const ReLU&) {
                std::vector<double> diag(in_dim);
                for (std::size_t i = 0; i < in_dim; ++i) diag[i] = z_in.data[i] > 0.0 ? 1.0 : 0.0;
                LayerLinearization lin = diagonal_linearization(std::move(diag));
                lin.signature = layer_signature(layer, z_in);
                return lin;
            },
            [&](const Sigmoid&) {
                std::vector<double> diag(in_dim);
                std::vector<double> bias(in_dim);
                for (std::size_t i = 0; i < in_dim; ++i) {
                    const double v = z_in.data[i];
                    if (opts.smooth_mode == SmoothMode::Secant) {
                        diag[i] = sigmoid_secant(v);
                        bias[i] = 0.5;
                    } else {
                        const double s = sigmoid(v);
                        diag[i] = s * (1.0 - s);
                        bias[i] = s - diag[i] * v;
                    }
                }
                LayerLinearization lin = diagonal_linearization(std::move(diag));
                lin.bias = std::move(bias);
                lin.signature.smooth = true;
                return lin;
            },
            [&](const Tanh&) {
                std::vector<double> diag(in_dim);
                std::vector<double> bias;
                if (opts.smooth_mode == SmoothMode::Gradient) bias.resize(in_dim);
                for (std::size_t i = 0; i < in_dim; ++i) {
                    const double v = z_in.data[i];
                    if (opts.smooth_mode == SmoothMode::Secant) {
                        diag[i] = tanh_secant(v);
                    } else {
                        const double t = std::tanh(v);
                        diag[i] = 1.0 - t * t;
                        bias[i] = t - diag[i] * v;
                    }
                }
                LayerLinearization lin = diagonal_linearization(std::move(diag));
                lin.bias = std::move(bias);
                lin.signature.smooth = true;
                return lin;
            },
            [&](const Flatten&) { return diagonal_linearization(std::vector<double>(in_dim, 1.0)); },
            [&](const Residual& r) {
                auto [w, b] = nested_affine(r.inner, z_in, opts, "residual body");
                if (r.skip) {
                    w = linalg::add(w, *r.skip);
                } else {
                    for (std::size_t i = 0; i < in_dim; ++i) w(i, i) += 1.0;
                }
                LayerLinearization lin = explicit_linearization(std::move(w), std::move(b));
                lin.signature = layer_signature(layer, z_in);
                return lin;
            },
            [&](const Concat& c) {
                Matrix w(out_dim, in_dim);
                std::vector<double> b(out_dim, 0.0);
                for (std::size_t i = 0; i < c.branches.size(); ++i) {
                    auto [bw, bb] = nested_affine(c.branches[i], z_in, opts, "concat branch " + std::to_string(i));
                    w = linalg::add(w, linalg::matmul(c.combine[i], bw));
                    const std::vector<double> part = linalg::matvec(c.combine[i], bb);
                    for (std::size_t k = 0; k < out_dim; ++k) b[k] += part[k];
                }
                for (std::size_t k = 0; k < c.bias.size(); ++k) b[k] += c.bias[k];
                LayerLinearization lin = explicit_linearization(std::move(w), std::move(b));
                lin.signature = layer_signature(layer, z_in);
                return lin;
            },
        },
        layer.op);
}

Linearized linearize(std::span<const Layer> layers, const Tensor& x, const LinearizeOptions& opts) {
    Linearized out;
    out.activations = forward(layers, x);
    out.layers.reserve(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        try {
            out.layers.push_back(linearize_layer(layers[i], out.activations[i], opts));
        } catch (const ResourceError& e) {
            throw ResourceError("layer " + std::to_string(i + 1) + " (" + std::string(kind_name(layers[i].kind())) +
                                "): " + e.what());
        }
    }
    return out;
}

Linearized linearize(const NetworkModel& model, const Tensor& x, const LinearizeOptions& opts) {
    if (x.shape != model.input_shape) {
        throw DimensionError("input shape " + shape_to_string(x.shape) + " does not match model input " +
                             shape_to_string(model.input_shape));
    }
    return linearize(std::span<const Layer>(model.layers), x, opts);
}

Signature layer_signature(const Layer& layer, const Tensor& z_in) {
    Signature sig;
    auto nested = [&](std::span<const Layer> layers) {
        const std::vector<Tensor> zs = forward(layers, z_in);
        for (std::size_t i = 0; i < layers.size(); ++i) sig.append(layer_signature(layers[i], zs[i]));
    };
    switch (layer.kind()) {
        case LayerKind::ReLU:
            sig.codes.resize(z_in.size());
            for (std::size_t i = 0; i < z_in.size(); ++i) {
                const double v = z_in.data[i];
                sig.codes[i] = v > 0.0 ? 1 : (v == 0.0 ? 2 : 0);
                if (v == 0.0) ++sig.boundary_count;
            }
            break;
        case LayerKind::MaxPool: maxpool_argmax(std::get<MaxPool>(layer.op).window, z_in, &sig); break;
        case LayerKind::Sigmoid:
        case LayerKind::Tanh: sig.smooth = true; break;
        case LayerKind::Residual: nested(std::get<Residual>(layer.op).inner); break;
        case LayerKind::Concat:
            for (const auto& branch : std::get<Concat>(layer.op).branches) nested(branch);
            break;
        default: break;
    }
    return sig;
}

Signature activation_pattern(const NetworkModel& model, const Tensor& x) {
    const std::vector<Tensor> zs = forward(model, x);
    Signature sig;
    for (std::size_t i = 0; i < model.layers.size(); ++i) sig.append(layer_signature(model.layers[i], zs[i]));
    return sig;
}

Matrix chain_product(std::span<const LayerLinearization> layers, std::size_t in_dim, std::size_t budget,
                     const std::string& what) {
    // Explicit factors in layer order; diagonals are folded as row or column scalings.
    std::vector<Matrix> factors;
    std::vector<std::size_t> origin;             // layer position of each factor
    std::optional<std::vector<double>> pending;  // diagonal preceding every explicit factor
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const LayerLinearization& l = layers[li];
        if (l.diagonal) {
            if (!factors.empty()) {
                factors.back() = linalg::scale_rows(*l.diagonal, factors.back());
            } else if (pending) {
                for (std::size_t i = 0; i < pending->size(); ++i) (*pending)[i] *= (*l.diagonal)[i];
            } else {
                pending = *l.diagonal;
            }
        } else {
            Matrix w = l.weight;
            if (factors.empty() && pending) {
                for (std::size_t r = 0; r < w.rows(); ++r) {
                    auto row = w.row(r);
                    for (std::size_t c = 0; c < row.size(); ++c) row[c] *= (*pending)[c];
                }
                pending.reset();
            }
            factors.push_back(std::move(w));
            origin.push_back(li + 1);
        }
    }
    if (factors.empty()) {
        linalg::check_budget(in_dim, in_dim, budget, what);
        return pending ? Matrix::diagonal(*pending) : Matrix::identity(in_dim);
    }
    const std::size_t n = factors.size();
    if (n == 1) return std::move(factors.front());

    // dims[i] is the input width of factor i; dims[n] the output width of the chain.
    std::vector<double> dims(n + 1);
    for (std::size_t i = 0; i < n; ++i) dims[i] = static_cast<double>(factors[i].cols());
    dims[n] = static_cast<double>(factors.back().rows());

    // cost[i][j]: cheapest product of factors i..j (inclusive), split[i][j] its split point.
    std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
    std::vector<std::vector<std::size_t>> split(n, std::vector<std::size_t>(n, 0));
    for (std::size_t len = 2; len <= n; ++len) {
        for (std::size_t i = 0; i + len - 1 < n; ++i) {
            const std::size_t j = i + len - 1;
            cost[i][j] = std::numeric_limits<double>::infinity();
            for (std::size_t k = i; k < j; ++k) {
                // (factors k+1..j) * (factors i..k)
                const double c = cost[i][k] + cost[k + 1][j] + dims[i] * dims[k + 1] * dims[j + 1];
                if (c < cost[i][j]) {
                    cost[i][j] = c;
                    split[i][j] = k;
                }
            }
        }
    }

    auto multiply = [&](auto&& self, std::size_t i, std::size_t j) -> Matrix {
        if (i == j) return std::move(factors[i]);
        const std::size_t k = split[i][j];
        Matrix right = self(self, i, k);
        Matrix left = self(self, k + 1, j);
        const std::size_t last = j + 1 < n ? origin[j + 1] - 1 : layers.size();
        linalg::check_budget(left.rows(), right.cols(), budget,
                             what + " (product of layers " + std::to_string(origin[i]) + "-" + std::to_string(last) + ")");
        return linalg::matmul(left, right);
    };
    return multiply(multiply, 0, n - 1);
}

std::vector<double> propagate(std::span<const LayerLinearization> layers, std::vector<double> v, bool with_bias) {
    for (const LayerLinearization& l : layers) v = with_bias ? l.apply(v) : l.apply_linear(v);
    return v;
}

std::vector<std::size_t> block_ends(const NetworkModel& model) {
    // Leading elementwise layers join the first structural block.
    std::vector<std::size_t> ends;
    bool seen_structural = false;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (model.layers[i].is_elementwise()) continue;
        if (seen_structural) ends.push_back(i);
        seen_structural = true;
    }
    if (!model.layers.empty()) ends.push_back(model.layers.size());
    return ends;
}

}  // namespace specxai::net
