#include "specxai/toylab.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "specxai/error.hpp"
#include "specxai/pwa.hpp"

namespace specxai::toylab {

namespace {

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Box-Muller, one draw per call.
double standard_normal(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(v[i - 1], v[std::min(j, i - 1)]);
    }
}

using MatF = Eigen::MatrixXf;
using VecF = Eigen::VectorXf;

struct Net {
    std::vector<MatF> w;
    std::vector<VecF> b;  // empty vectors when bias is off
    bool bias = false;

    std::size_t depth() const { return w.size(); }
};

// Column-major copy of the data, one sample per column.
MatF to_columns(const Matrix& data) {
    MatF out(static_cast<Eigen::Index>(data.cols()), static_cast<Eigen::Index>(data.rows()));
    for (std::size_t s = 0; s < data.rows(); ++s) {
        const auto row = data.row(s);
        for (std::size_t i = 0; i < row.size(); ++i) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = static_cast<float>(row[i]);
    }
    return out;
}

// Forward pass keeping the pre-activations for backpropagation.
MatF forward(const Net& net, const MatF& x, std::vector<MatF>* pre, std::vector<MatF>* act) {
    MatF a = x;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        MatF z = net.w[l] * a;
        if (net.bias) z.colwise() += net.b[l];
        if (act) act->push_back(std::move(a));
        if (l + 1 < net.depth()) {
            a = z.cwiseMax(0.0f);
        } else {
            a = z;
        }
        if (pre) pre->push_back(std::move(z));
    }
    return a;
}

double mse(const Net& net, const MatF& data) {
    double total = 0.0;
    const Eigen::Index n = data.cols();
    constexpr Eigen::Index chunk = 256;
    for (Eigen::Index s = 0; s < n; s += chunk) {
        const Eigen::Index len = std::min(chunk, n - s);
        const MatF x = data.middleCols(s, len);
        const MatF y = forward(net, x, nullptr, nullptr);
        total += static_cast<double>((y - x).squaredNorm());
    }
    return total / static_cast<double>(data.size());
}

net::NetworkModel to_model(const Net& net, const Shape& image_shape) {
    net::NetworkModel m;
    m.name = net.bias ? "squares-autoencoder-bias" : "squares-autoencoder";
    m.input_shape = image_shape;
    if (image_shape.size() > 1) m.layers.push_back({net::Flatten{}});
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const MatF& w = net.w[l];
        Matrix weight(static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols()));
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) weight(r, c) = w(r, c);
        net::Dense d{std::move(weight), {}};
        if (net.bias) d.bias.assign(net.b[l].data(), net.b[l].data() + net.b[l].size());
        m.layers.push_back({std::move(d)});
        if (l + 1 < net.depth()) m.layers.push_back({net::ReLU{}});
    }
    return m;
}

}  // namespace

void SquaresConfig::validate() const {
    if (canvas == 0 || square_side == 0) throw DimensionError("squares: canvas and side must be positive");
    if (static_cast<double>(square_side) * std::numbers::sqrt2 >= static_cast<double>(canvas)) {
        throw DimensionError("squares: a rotated square of side " + std::to_string(square_side) +
                             " does not fit a canvas of " + std::to_string(canvas));
    }
    if (!(angle_min < angle_max)) throw DimensionError("squares: empty angle range");
}

Tensor SquaresDataset::image(std::size_t i) const {
    const auto row = images.row(i);
    return Tensor(image_shape, std::vector<double>(row.begin(), row.end()));
}

std::vector<double> render_square(double angle_deg, std::size_t canvas, std::size_t side) {
    const double theta = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double centre = static_cast<double>(canvas) / 2.0;
    const double half = static_cast<double>(side) / 2.0;
    std::vector<double> img(canvas * canvas, 0.0);
    for (std::size_t r = 0; r < canvas; ++r)
        for (std::size_t col = 0; col < canvas; ++col) {
            const double dx = static_cast<double>(col) + 0.5 - centre;
            const double dy = static_cast<double>(r) + 0.5 - centre;
            const double u = c * dx + s * dy;
            const double v = -s * dx + c * dy;
            if (std::abs(u) < half && std::abs(v) < half) img[r * canvas + col] = 1.0;
        }
    return img;
}

SquaresDataset generate_squares(const SquaresConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    SquaresDataset ds;
    ds.image_shape = {cfg.canvas, cfg.canvas, 1};
    ds.images = Matrix(cfg.count, cfg.canvas * cfg.canvas);
    ds.angles.resize(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i) {
        const double angle = cfg.angle_min + (cfg.angle_max - cfg.angle_min) * uniform01(rng);
        ds.angles[i] = angle;
        const auto img = render_square(angle, cfg.canvas, cfg.square_side);
        std::copy(img.begin(), img.end(), ds.images.row(i).begin());
    }
    return ds;
}

void TrainConfig::validate() const {
    if (widths.size() < 2) throw DimensionError("train: need at least input and output widths");
    if (std::any_of(widths.begin(), widths.end(), [](std::size_t w) { return w == 0; }))
        throw DimensionError("train: zero layer width");
    if (widths.front() != widths.back()) throw DimensionError("train: autoencoder output width must match input");
    if (batch_size == 0) throw DimensionError("train: batch size must be positive");
    if (!(output_init_gain > 0.0)) throw NumericError("train: output init gain must be positive");
    if (!(learning_rate > 0.0) || momentum < 0.0 || momentum >= 1.0)
        throw NumericError("train: learning rate must be positive and momentum in [0, 1)");
}

TrainResult train_autoencoder(const Matrix& data, const Shape& image_shape, const TrainConfig& cfg,
                              const EpochCallback& on_epoch) {
    cfg.validate();
    if (data.cols() != cfg.widths.front() || shape_size(image_shape) != data.cols()) {
        throw DimensionError("train: data width " + std::to_string(data.cols()) + " does not match the network input " +
                             std::to_string(cfg.widths.front()));
    }
    if (data.rows() == 0) throw DimensionError("train: empty dataset");

    std::mt19937_64 rng(cfg.seed);
    Net net;
    net.bias = cfg.use_bias;
    for (std::size_t l = 0; l + 1 < cfg.widths.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(cfg.widths[l]);
        const auto out = static_cast<Eigen::Index>(cfg.widths[l + 1]);
        double scale = std::sqrt(2.0 / static_cast<double>(in));  // He initialisation
        if (l + 2 == cfg.widths.size()) scale *= cfg.output_init_gain;
        MatF w(out, in);
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c) w(r, c) = static_cast<float>(scale * standard_normal(rng));
        net.w.push_back(std::move(w));
        net.b.push_back(cfg.use_bias ? VecF::Zero(out) : VecF());
    }

    const MatF x_all = to_columns(data);
    const std::size_t n = data.rows();
    TrainResult result;
    result.initial_loss = mse(net, x_all);

    std::vector<MatF> vw;
    std::vector<VecF> vb;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        vw.push_back(MatF::Zero(net.w[l].rows(), net.w[l].cols()));
        vb.push_back(VecF::Zero(net.w[l].rows()));
    }
    const auto lr = static_cast<float>(cfg.learning_rate);
    const auto mu = static_cast<float>(cfg.momentum);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, n - start);
            MatF x(x_all.rows(), static_cast<Eigen::Index>(len));
            for (std::size_t i = 0; i < len; ++i) x.col(static_cast<Eigen::Index>(i)) = x_all.col(static_cast<Eigen::Index>(order[start + i]));

            std::vector<MatF> pre, act;
            const MatF y = forward(net, x, &pre, &act);
            MatF grad = (y - x) * (2.0f / static_cast<float>(x.size()));
            for (std::size_t l = net.depth(); l-- > 0;) {
                if (l + 1 < net.depth()) grad = grad.cwiseProduct((pre[l].array() > 0.0f).cast<float>().matrix());
                const MatF dw = grad * act[l].transpose();
                MatF next;
                if (l > 0) next = net.w[l].transpose() * grad;
                vw[l] = mu * vw[l] - lr * dw;
                net.w[l] += vw[l];
                if (net.bias) {
                    vb[l] = mu * vb[l] - lr * grad.rowwise().sum();
                    net.b[l] += vb[l];
                }
                grad = std::move(next);
            }
        }
        const double loss = mse(net, x_all);
        if (!std::isfinite(loss)) {
            throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1), static_cast<int>(epoch + 1));
        }
        result.loss.push_back(loss);
        if (on_epoch) on_epoch(epoch + 1, loss);
    }
    result.model = to_model(net, image_shape);
    return result;
}

double reconstruction_mse(const net::NetworkModel& model, const Matrix& data) {
    double total = 0.0;
    for (std::size_t s = 0; s < data.rows(); ++s) {
        const auto row = data.row(s);
        const Tensor x(model.input_shape, std::vector<double>(row.begin(), row.end()));
        const auto y = net::forward(model, x).back().data;
        for (std::size_t i = 0; i < y.size(); ++i) total += (y[i] - row[i]) * (y[i] - row[i]);
    }
    return total / static_cast<double>(data.size());
}

SvdResult data_matrix_svd(const Matrix& data, double rank_tol) {
    if (data.rows() < 2) throw DimensionError("data_matrix_svd: need at least two samples");
    if (!data.all_finite()) throw NumericError("data_matrix_svd: non-finite input");
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMat> a(data.data().data(), static_cast<Eigen::Index>(data.rows()),
                                     static_cast<Eigen::Index>(data.cols()));
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);

    SvdResult s;
    const auto r = static_cast<std::size_t>(svd.singularValues().size());
    s.sigma.assign(svd.singularValues().data(), svd.singularValues().data() + r);

    // BDCSVD leaves U columns of exactly-zero singular values empty; fill them
    // with an orthonormal complement of the nonnull columns.
    Eigen::MatrixXd u = svd.matrixU();
    const double cutoff = r ? s.sigma.front() * static_cast<double>(r) * std::numeric_limits<double>::epsilon() : 0.0;
    const auto live = static_cast<Eigen::Index>(
        std::count_if(s.sigma.begin(), s.sigma.end(), [&](double v) { return v > cutoff; }));
    if (live < u.cols()) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(u.leftCols(live));
        const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(u.rows(), u.cols());
        u.rightCols(u.cols() - live) = q.rightCols(u.cols() - live);
    }
    s.U = Matrix(data.rows(), r);
    s.V = Matrix(data.cols(), r);
    for (std::size_t i = 0; i < data.rows(); ++i)
        for (std::size_t k = 0; k < r; ++k) s.U(i, k) = u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < data.cols(); ++i)
        for (std::size_t k = 0; k < r; ++k) s.V(i, k) = svd.matrixV()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    linalg::apply_sign_convention(s);
    linalg::set_rank(s, rank_tol);
    return s;
}

double normalized_sigma(const std::vector<double>& sigma, std::size_t k) {
    if (k >= sigma.size() || sigma.front() <= 0.0) return 0.0;
    return sigma[k] / sigma.front();
}

double angular_variance(const std::vector<double>& image, std::size_t height, std::size_t width) {
    if (image.size() != height * width) throw DimensionError("angular_variance: image size does not match its shape");
    const double energy = linalg::dot(image, image);
    if (energy == 0.0) return 0.0;
    auto at = [&](long r, long c) -> double {
        if (r < 0 || c < 0 || r >= static_cast<long>(height) || c >= static_cast<long>(width)) return 0.0;
        return image[static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c)];
    };
    const double cy = static_cast<double>(height) / 2.0, cx = static_cast<double>(width) / 2.0;
    double acc = 0.0;
    int count = 0;
    for (int deg = 15; deg < 360; deg += 15, ++count) {
        const double t = deg * std::numbers::pi / 180.0;
        const double c = std::cos(t), s = std::sin(t);
        double diff = 0.0;
        for (std::size_t r = 0; r < height; ++r)
            for (std::size_t col = 0; col < width; ++col) {
                // Sample the source at the inverse-rotated pixel centre.
                const double dx = static_cast<double>(col) + 0.5 - cx;
                const double dy = static_cast<double>(r) + 0.5 - cy;
                const double sx = c * dx + s * dy + cx - 0.5;
                const double sy = -s * dx + c * dy + cy - 0.5;
                const double fx = std::floor(sx), fy = std::floor(sy);
                const double ax = sx - fx, ay = sy - fy;
                const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
                const double v = (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
                                 ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
                const double d = v - image[r * width + col];
                diff += d * d;
            }
        acc += diff / energy;
    }
    return acc / count;
}

SpectraReport compare_spectra(const net::NetworkModel& model, const SquaresDataset& data,
                              const std::vector<std::size_t>& sample_indices, std::size_t top) {
    return compare_spectra(model, data, data_matrix_svd(data.images), sample_indices, top);
}

SpectraReport compare_spectra(const net::NetworkModel& model, const SquaresDataset& data, const SvdResult& data_svd,
                              const std::vector<std::size_t>& sample_indices, std::size_t top) {
    SpectraReport rep;
    rep.data_sigma = data_svd.sigma;
    for (std::size_t k = 0; k < std::min(top, data_svd.V.cols()); ++k) rep.data_top_v.push_back(data_svd.V.col(k));

    const std::size_t blocks = spectral::block_count(model);
    for (std::size_t idx : sample_indices) {
        if (idx >= data.count()) throw DimensionError("compare_spectra: sample " + std::to_string(idx) + " out of range");
        const Tensor x = data.image(idx);
        const auto split = spectral::split_at(model, x, blocks, 0);
        SampleSpectrum ss;
        ss.sample = idx;
        ss.sigma = split.svd.sigma;
        ss.rank_used = split.svd.rank_used;
        ss.coefficients = split.coefficients;
        const auto axis = spectral::default_channel_axis(x.shape);
        for (std::size_t k = 0; k < std::min(top, split.rank()); ++k) {
            ss.top_v.push_back(split.svd.V.col(k));
            ss.top_u.push_back(split.svd.U.col(k));
            auto map = spectral::feature_contraction(split.singular_vector(k), x, axis);
            map.spectral_index = k;
            ss.contractions.push_back(std::move(map));
        }
        rep.max_operator_rank = std::max(rep.max_operator_rank, ss.rank_used);
        if (ss.sigma.empty() || ss.sigma.front() == 0.0) rep.degenerate = true;
        rep.samples.push_back(std::move(ss));
    }
    return rep;
}

BiasStudy bias_study(const net::NetworkModel& model, const Tensor& x) {
    const auto lin = net::linearize(model, x);
    const auto d = pwa::bias_decomposition(lin);
    const auto op = pwa::assemble_affine(model, lin);

    // The narrowest activation marks the end of the encoder.
    std::size_t narrowest = 0;
    for (std::size_t l = 1; l < lin.activations.size(); ++l)
        if (lin.activations[l].size() < lin.activations[narrowest].size()) narrowest = l;

    BiasStudy st;
    for (std::size_t l = 0; l < d.betas.size(); ++l) {
        if (!d.carries_bias[l]) continue;
        st.layers.push_back(l + 1);
        st.decoder.push_back(l >= narrowest);
        st.betas.push_back(d.betas[l]);
    }
    st.total = d.total;
    st.ux = linalg::matvec(op.u, x.data);
    st.y = op.y;
    for (std::size_t i = 0; i < st.y.size(); ++i)
        st.residual = std::max(st.residual, std::abs(st.y[i] - st.ux[i] - st.total[i]));
    return st;
}

}  // namespace specxai::toylab
