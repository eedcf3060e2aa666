#include "specxai/pwa.hpp"

#include <algorithm>
#include <cmath>

#include "specxai/error.hpp"

namespace specxai::pwa {

double AffineOperator::bias_disagreement() const { return linalg::max_abs_diff(b, b_layers); }

BiasDecomposition bias_decomposition(const net::Linearized& lin) {
    const std::size_t n_layers = lin.layers.size();
    const std::size_t out_dim = lin.activations.back().size();
    BiasDecomposition dec;
    dec.betas.resize(n_layers);
    dec.carries_bias.resize(n_layers);
    dec.total.assign(out_dim, 0.0);
    const std::span<const net::LayerLinearization> layers(lin.layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        dec.carries_bias[l] = lin.layers[l].has_bias();
        if (!dec.carries_bias[l]) {
            dec.betas[l].assign(out_dim, 0.0);
            continue;
        }
        dec.betas[l] = net::propagate(layers.subspan(l + 1), lin.layers[l].bias, false);
        for (std::size_t i = 0; i < out_dim; ++i) dec.total[i] += dec.betas[l][i];
    }
    return dec;
}

BiasDecomposition bias_decomposition(const net::NetworkModel& model, const Tensor& x, const Options& opts) {
    return bias_decomposition(net::linearize(model, x, opts.linearize_options()));
}

AffineOperator assemble_affine(const net::NetworkModel& model, const net::Linearized& lin, const Options& opts) {
    AffineOperator op;
    op.x_ref = lin.activations.front();
    op.y = lin.activations.back().data;
    op.u = net::chain_product(lin.layers, op.x_ref.size(), opts.budget, "network operator of '" + model.name + "'");
    for (const auto& l : lin.layers) op.signature.append(l.signature);

    const std::vector<double> ux = linalg::matvec(op.u, op.x_ref.data);
    op.b.resize(op.y.size());
    for (std::size_t i = 0; i < op.y.size(); ++i) op.b[i] = op.y[i] - ux[i];
    op.b_layers = bias_decomposition(lin).total;

    const double scale = 1.0 + linalg::max_abs(op.y);
    const double gap = op.bias_disagreement();
    if (!(gap <= opts.bias_tolerance * scale)) {
        throw NumericError("bias computations disagree by " + std::to_string(gap) + " for model '" + model.name + "'");
    }
    return op;
}

AffineOperator extract_affine(const net::NetworkModel& model, const Tensor& x, const Options& opts) {
    return assemble_affine(model, net::linearize(model, x, opts.linearize_options()), opts);
}

JacobianCheck jacobian_check(const net::NetworkModel& model, const Tensor& x, double step, int max_shrinks,
                             const Options& opts) {
    const net::Signature base = net::activation_pattern(model, x);
    if (base.on_boundary()) {
        throw RegionBoundaryError("input lies on a linear-region boundary (" + std::to_string(base.boundary_count) +
                                  " indicator(s) at zero)");
    }
    const AffineOperator op = extract_affine(model, x, opts);
    const std::size_t m = x.size();
    const std::size_t n = op.y.size();

    double h = step;
    for (int shrink = 0; shrink <= max_shrinks; ++shrink, h *= 0.5) {
        Matrix fd(n, m);
        bool in_region = true;
        for (std::size_t i = 0; i < m && in_region; ++i) {
            Tensor plus = x;
            Tensor minus = x;
            plus.data[i] += h;
            minus.data[i] -= h;
            if (!base.smooth &&
                (net::activation_pattern(model, plus) != base || net::activation_pattern(model, minus) != base)) {
                in_region = false;
                break;
            }
            const std::vector<double> fp = net::forward(model, plus).back().data;
            const std::vector<double> fm = net::forward(model, minus).back().data;
            // Use the actual perturbation so rounding of x +- h does not bias the quotient.
            const double width = plus.data[i] - minus.data[i];
            for (std::size_t r = 0; r < n; ++r) fd(r, i) = (fp[r] - fm[r]) / width;
        }
        if (in_region) return {linalg::max_abs_diff(fd.data(), op.u.data()), h, shrink};
    }
    throw RegionBoundaryError("no finite-difference step keeps the probes inside the linear region of x");
}

bool same_region(const net::NetworkModel& model, const Tensor& x1, const Tensor& x2) {
    const net::Signature s1 = net::activation_pattern(model, x1);
    const net::Signature s2 = net::activation_pattern(model, x2);
    if (s1.smooth || s2.smooth) return x1 == x2;
    return s1 == s2;
}

}  // namespace specxai::pwa
