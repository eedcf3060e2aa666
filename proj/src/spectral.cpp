#include "specxai/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "specxai/error.hpp"

namespace specxai::spectral {

Tensor SpectralSplit::singular_vector(std::size_t k) const {
    if (k >= svd.V.cols()) throw DimensionError("singular vector index out of range");
    return Tensor(input_shape, svd.V.col(k));
}

std::size_t block_count(const net::NetworkModel& model) { return net::block_ends(model).size(); }

std::size_t argmax_output(const net::NetworkModel& model, const Tensor& x) {
    const std::vector<double> y = net::forward(model, x).back().data;
    return static_cast<std::size_t>(std::distance(y.begin(), std::max_element(y.begin(), y.end())));
}

SpectralSplit split_at(const net::NetworkModel& model, const net::Linearized& lin, std::size_t split_layer,
                       std::size_t output_index, const SplitOptions& opts) {
    const std::vector<std::size_t> ends = net::block_ends(model);
    if (split_layer < 1 || split_layer > ends.size()) {
        throw DimensionError("split layer " + std::to_string(split_layer) + " outside [1, " +
                             std::to_string(ends.size()) + "]");
    }
    const std::size_t out_dim = lin.activations.back().size();
    if (output_index >= out_dim) {
        throw DimensionError("output index " + std::to_string(output_index) + " outside [0, " +
                             std::to_string(out_dim) + ")");
    }
    const std::size_t end = ends[split_layer - 1];
    const std::span<const net::LayerLinearization> layers(lin.layers);
    const std::size_t budget = opts.pwa.budget;
    const std::string where = "split at layer " + std::to_string(split_layer);

    SpectralSplit s;
    s.split_layer = split_layer;
    s.layer_count = end;
    s.output_index = output_index;
    s.input_shape = lin.activations.front().shape;
    s.x = lin.activations.front().data;
    s.y = lin.activations.back().data;

    // The right piece factors through its narrowest intermediate activation.
    const std::size_t in_dim = s.x.size();
    const std::size_t mid_dim = lin.activations[end].size();
    std::size_t narrow_at = 0;
    s.narrowest_width = std::min(in_dim, mid_dim);
    for (std::size_t k = 1; k < end; ++k) {
        if (lin.activations[k].size() < s.narrowest_width) {
            s.narrowest_width = lin.activations[k].size();
            narrow_at = k;
        }
    }
    if (narrow_at > 0) {
        Matrix inner = net::chain_product(layers.subspan(0, narrow_at), in_dim, budget, where + " (right factor)");
        Matrix outer = net::chain_product(layers.subspan(narrow_at, end - narrow_at),
                                          lin.activations[narrow_at].size(), budget, where + " (left factor)");
        linalg::check_budget(outer.rows(), inner.cols(), budget, where + " (right operator)");
        s.svd = linalg::factored_svd(outer, inner, opts.rank_tol);
        s.right = linalg::matmul(outer, inner);
    } else {
        s.right = net::chain_product(layers.subspan(0, end), in_dim, budget, where + " (right operator)");
        s.svd = linalg::thin_svd(s.right, opts.rank_tol);
    }
    s.left = net::chain_product(layers.subspan(end), mid_dim, budget, where + " (left operator)");

    const std::size_t r = s.svd.sigma.size();
    s.coefficients.resize(r);
    for (std::size_t k = 0; k < r; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < in_dim; ++i) proj += s.svd.V(i, k) * s.x[i];
        s.coefficients[k] = s.svd.sigma[k] * proj;
    }
    s.left_hat = linalg::matmul(s.left, s.svd.U);

    const std::vector<double> ux = linalg::matvec(s.left, linalg::matvec(s.right, s.x));
    s.bias.resize(out_dim);
    for (std::size_t i = 0; i < out_dim; ++i) s.bias[i] = s.y[i] - ux[i];
    return s;
}

SpectralSplit split_at(const net::NetworkModel& model, const Tensor& x, std::size_t split_layer,
                       std::size_t output_index, const SplitOptions& opts) {
    return split_at(model, net::linearize(model, x, opts.pwa.linearize_options()), split_layer, output_index, opts);
}

double AlphaDecomposition::sum() const { return std::accumulate(alphas.begin(), alphas.end(), 0.0); }

AlphaDecomposition alpha_decomposition(const SpectralSplit& split) {
    AlphaDecomposition a;
    const auto row = split.left_hat.row(split.output_index);
    a.psi.assign(row.begin(), row.end());
    a.alphas.resize(a.psi.size());
    for (std::size_t k = 0; k < a.psi.size(); ++k) a.alphas[k] = a.psi[k] * split.coefficients[k];
    a.residual_bias = split.b_j();
    a.y = split.y_j();
    return a;
}

void reduction_pass(std::vector<double>& values, std::vector<std::size_t>& index) {
    struct Entry {
        double value;
        std::size_t index;
    };
    std::vector<Entry> pos, neg;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] > 0.0) pos.push_back({values[i], index[i]});
        else if (values[i] < 0.0) neg.push_back({values[i], index[i]});
    }
    auto by_magnitude = [](const Entry& a, const Entry& b) { return std::abs(a.value) > std::abs(b.value); };
    std::stable_sort(pos.begin(), pos.end(), by_magnitude);
    std::stable_sort(neg.begin(), neg.end(), by_magnitude);

    const std::size_t paired = std::min(pos.size(), neg.size());
    std::vector<double> out_v;
    std::vector<std::size_t> out_i;
    out_v.reserve(std::max(pos.size(), neg.size()));
    out_i.reserve(out_v.capacity());
    for (std::size_t j = 0; j < paired; ++j) {
        const double v = pos[j].value + neg[j].value;
        if (v == 0.0) continue;
        const double pa = std::abs(pos[j].value), na = std::abs(neg[j].value);
        std::size_t idx;
        if (pa > na) idx = pos[j].index;
        else if (na > pa) idx = neg[j].index;
        else idx = std::min(pos[j].index, neg[j].index);
        out_v.push_back(v);
        out_i.push_back(idx);
    }
    for (std::size_t j = paired; j < pos.size(); ++j) {
        out_v.push_back(pos[j].value);
        out_i.push_back(pos[j].index);
    }
    for (std::size_t j = paired; j < neg.size(); ++j) {
        out_v.push_back(neg[j].value);
        out_i.push_back(neg[j].index);
    }
    values = std::move(out_v);
    index = std::move(out_i);
}

namespace {

bool mixed_signs(const std::vector<double>& v) {
    const bool any_pos = std::any_of(v.begin(), v.end(), [](double a) { return a > 0.0; });
    const bool any_neg = std::any_of(v.begin(), v.end(), [](double a) { return a < 0.0; });
    return any_pos && any_neg;
}

}  // namespace

ReducedCoefficients reduce_coefficients(const std::vector<double>& alphas) {
    for (double a : alphas) {
        if (!std::isfinite(a)) throw NumericError("reduce_coefficients: non-finite coefficient");
    }
    ReducedCoefficients rc;
    const double total = std::accumulate(alphas.begin(), alphas.end(), 0.0);
    double mass = 0.0;
    for (double a : alphas) mass += std::abs(a);
    if (mass == 0.0 || std::abs(total) <= 1e-14 * mass) {
        rc.cancelled = true;
        rc.warning = "all contributions cancel; the reduction is empty";
        return rc;
    }

    std::vector<double> values;
    std::vector<std::size_t> index;
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        if (alphas[k] != 0.0) {
            values.push_back(alphas[k]);
            index.push_back(k);
        }
    }
    while (mixed_signs(values)) {
        reduction_pass(values, index);
        ++rc.iterations;
        rc.pass_sums.push_back(std::accumulate(values.begin(), values.end(), 0.0));
    }
    const double s = std::accumulate(values.begin(), values.end(), 0.0);
    rc.a_tilde.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) rc.a_tilde[i] = values[i] / s;
    rc.a_hat = std::move(values);
    rc.spectral_index = std::move(index);
    return rc;
}

double ContractionMap::sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }

std::optional<std::size_t> default_channel_axis(const Shape& shape) {
    if (shape.size() == 3) return 2;
    return std::nullopt;
}

namespace {

struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
    Shape reduced;
};

AxisSplit split_axis(const Shape& shape, std::optional<std::size_t> axis) {
    AxisSplit s;
    if (!axis) {
        s.reduced = shape;
        s.inner = shape_size(shape);
        return s;
    }
    if (*axis >= shape.size()) throw DimensionError("channel axis " + std::to_string(*axis) + " out of range");
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i < *axis) s.outer *= shape[i];
        else if (i > *axis) s.inner *= shape[i];
        if (i != *axis) s.reduced.push_back(shape[i]);
    }
    s.extent = shape[*axis];
    if (s.reduced.empty()) s.reduced.push_back(1);
    return s;
}

}  // namespace

ContractionMap feature_contraction(const Tensor& phi, const Tensor& x, std::optional<std::size_t> axis) {
    if (phi.shape != x.shape) {
        throw DimensionError("feature_contraction: shapes " + shape_to_string(phi.shape) + " and " +
                             shape_to_string(x.shape) + " differ");
    }
    const AxisSplit s = split_axis(phi.shape, axis);
    ContractionMap map;
    map.shape = s.reduced;
    map.values.assign(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t a = 0; a < s.extent; ++a)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t src = (o * s.extent + a) * s.inner + i;
                map.values[o * s.inner + i] += phi.data[src] * x.data[src];
            }
    return map;
}

ContractionMap feature_average(const Tensor& phi, std::optional<std::size_t> axis) {
    const AxisSplit s = split_axis(phi.shape, axis);
    ContractionMap map;
    map.shape = s.reduced;
    map.values.assign(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t a = 0; a < s.extent; ++a)
            for (std::size_t i = 0; i < s.inner; ++i) map.values[o * s.inner + i] += phi.data[(o * s.extent + a) * s.inner + i];
    for (double& v : map.values) v /= static_cast<double>(s.extent);
    return map;
}

SymbolicDecomposition symbolic(const SpectralSplit& split, const SymbolicOptions& opts) {
    const std::optional<std::size_t> axis =
        opts.use_default_axis ? default_channel_axis(split.input_shape) : opts.channel_axis;
    const Tensor x(split.input_shape, split.x);
    const AlphaDecomposition alpha = alpha_decomposition(split);

    SymbolicDecomposition out;
    out.y = alpha.y;
    out.bias = alpha.residual_bias;
    out.reduced = opts.reduce;

    // Coefficients, their normalised shares and the singular vector each one uses.
    std::vector<double> coeff, share;
    std::vector<std::size_t> index;
    if (opts.reduce) {
        ReducedCoefficients rc = reduce_coefficients(alpha.alphas);
        out.iterations = rc.iterations;
        out.warning = rc.warning;
        if (rc.cancelled) out.remainder += alpha.sum();
        coeff = std::move(rc.a_hat);
        share = std::move(rc.a_tilde);
        index = std::move(rc.spectral_index);
    } else {
        const double total = alpha.sum();
        for (std::size_t k = 0; k < alpha.alphas.size(); ++k) {
            coeff.push_back(alpha.alphas[k]);
            share.push_back(total != 0.0 ? alpha.alphas[k] / total : 0.0);
            index.push_back(k);
        }
    }

    std::vector<ContractionMap> raw(split.rank());
    std::vector<bool> have(split.rank(), false);
    for (std::size_t i = 0; i < coeff.size(); ++i) {
        if (coeff[i] == 0.0) continue;
        const std::size_t k = index[i];
        if (!have[k]) {
            raw[k] = feature_contraction(split.singular_vector(k), x, axis);
            raw[k].spectral_index = k;
            have[k] = true;
        }
        const double raw_sum = raw[k].sum();
        const bool pruned = opts.prune_threshold && std::abs(share[i]) < *opts.prune_threshold;
        if (std::abs(raw_sum) <= 1e-12 || pruned) {
            out.remainder += coeff[i];
            continue;
        }
        SymbolicTerm t;
        t.spectral_index = k;
        t.coefficient = coeff[i];
        t.alpha_tilde = share[i];
        t.raw_sum = raw_sum;
        t.c_hat = raw[k];
        for (double& v : t.c_hat.values) v /= raw_sum;
        out.terms.push_back(std::move(t));
    }
    std::stable_sort(out.terms.begin(), out.terms.end(), [](const SymbolicTerm& a, const SymbolicTerm& b) {
        return std::abs(a.alpha_tilde) > std::abs(b.alpha_tilde);
    });

    const Shape grid = split_axis(split.input_shape, axis).reduced;
    const std::size_t cells = shape_size(grid);
    out.bias_map = ContractionMap{grid, std::vector<double>(cells, out.bias / static_cast<double>(cells)), 0};
    out.remainder_map = ContractionMap{grid, std::vector<double>(cells, out.remainder / static_cast<double>(cells)), 0};

    double total = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
        double cell = out.bias_map.values[c] + out.remainder_map.values[c];
        for (const SymbolicTerm& t : out.terms) cell += t.coefficient * t.c_hat.values[c];
        total += cell;
    }
    out.reconstructed = total;
    return out;
}

SymbolicDecomposition symbolic(const net::NetworkModel& model, const Tensor& x, std::size_t split_layer,
                               std::size_t output_index, const SymbolicOptions& opts, const SplitOptions& split_opts) {
    return symbolic(split_at(model, x, split_layer, output_index, split_opts), opts);
}

ChangeOfBasis change_of_basis(const SpectralSplit& split) {
    ChangeOfBasis cb;
    std::vector<double> rebuilt(split.x.size(), 0.0);
    for (std::size_t k = 0; k < split.rank(); ++k) {
        const std::vector<double> phi = split.svd.V.col(k);
        const double p = linalg::dot(phi, split.x);
        cb.projections.push_back(p);
        for (std::size_t i = 0; i < phi.size(); ++i) rebuilt[i] += p * phi[i];
    }
    for (std::size_t i = 0; i < rebuilt.size(); ++i) rebuilt[i] = split.x[i] - rebuilt[i];
    cb.residual_norm = linalg::norm2(rebuilt);
    return cb;
}

Matrix sv_similarity(const std::vector<std::vector<double>>& svs, double tol) {
    const std::size_t n = svs.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (svs[i].size() != svs.front().size()) throw DimensionError("sv_similarity: vectors differ in length");
        const double nrm = linalg::norm2(svs[i]);
        if (std::abs(nrm - 1.0) > tol) {
            throw NormalizationError("sv_similarity: vector " + std::to_string(i) + " has norm " + std::to_string(nrm));
        }
    }
    Matrix g(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double d = linalg::dot(svs[i], svs[j]);
            g(i, j) = d;
            g(j, i) = d;
        }
    }
    return g;
}

std::vector<SweepEntry> layer_sweep(const net::NetworkModel& model, const Tensor& x, std::size_t output_index,
                                    const SplitOptions& opts) {
    const net::Linearized lin = net::linearize(model, x, opts.pwa.linearize_options());
    const std::size_t blocks = block_count(model);
    const std::optional<std::size_t> axis = default_channel_axis(x.shape);
    std::vector<SweepEntry> entries(blocks);
    for (std::size_t l = 1; l <= blocks; ++l) {
        SweepEntry& e = entries[l - 1];
        e.split_layer = l;
        try {
            const SpectralSplit split = split_at(model, lin, l, output_index, opts);
            const AlphaDecomposition alpha = alpha_decomposition(split);
            e.sigma = split.svd.sigma;
            e.rank_used = split.svd.rank_used;
            e.reduced = reduce_coefficients(alpha.alphas);
            e.y = alpha.y;
            e.reconstruction = alpha.sum() + alpha.residual_bias;
            if (!e.reduced.a_tilde.empty()) {
                std::size_t best = 0;
                for (std::size_t i = 1; i < e.reduced.a_tilde.size(); ++i) {
                    if (std::abs(e.reduced.a_tilde[i]) > std::abs(e.reduced.a_tilde[best])) best = i;
                }
                e.top_index = e.reduced.spectral_index[best];
            }
            if (split.rank() > 0) {
                e.top_map = feature_contraction(split.singular_vector(e.top_index), x, axis);
                e.top_map.spectral_index = e.top_index;
            }
            e.ok = true;
        } catch (const ResourceError& err) {
            e.error = err.what();
        }
    }
    return entries;
}

double top_mass(const std::vector<double>& c, std::size_t top) {
    std::vector<double> mags(c.size());
    std::transform(c.begin(), c.end(), mags.begin(), [](double v) { return std::abs(v); });
    std::sort(mags.begin(), mags.end(), std::greater<>());
    const double total = std::accumulate(mags.begin(), mags.end(), 0.0);
    if (total == 0.0) return 0.0;
    const double head = std::accumulate(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(std::min(top, mags.size())), 0.0);
    return head / total;
}

}  // namespace specxai::spectral
