#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "specxai/error.hpp"
#include "specxai/io.hpp"
#include "specxai/linalg.hpp"
#include "specxai/netgraph.hpp"
#include "specxai/pwa.hpp"
#include "specxai/spectral.hpp"
#include "specxai/toylab.hpp"

namespace py = pybind11;
using namespace specxai;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Tensor to_input(const net::NetworkModel& m, const Array& a) {
    if (static_cast<std::size_t>(a.size()) != shape_size(m.input_shape))
        throw DimensionError("input has " + std::to_string(a.size()) + " elements, model expects " +
                             shape_to_string(m.input_shape));
    Tensor t = to_tensor(a);
    t.shape = m.input_shape;
    return t;
}

Array to_array(const std::vector<double>& v, const Shape& shape) {
    std::vector<py::ssize_t> dims(shape.begin(), shape.end());
    Array out(dims);
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

Array to_array(const std::vector<double>& v) { return to_array(v, {v.size()}); }
Array to_array(const Matrix& m) { return to_array(m.data(), {m.rows(), m.cols()}); }

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
    return Matrix(a.shape(0), a.shape(1), std::vector<double>(a.data(), a.data() + a.size()));
}

std::size_t pick_output(const net::NetworkModel& m, const Tensor& x, std::optional<std::size_t> j) {
    return j ? *j : spectral::argmax_output(m, x);
}

py::dict split_dict(const spectral::SpectralSplit& s) {
    const auto alpha = spectral::alpha_decomposition(s);
    std::vector<Array> vs;
    for (std::size_t k = 0; k < s.rank(); ++k) vs.push_back(to_array(s.singular_vector(k).data, s.input_shape));
    py::dict d;
    d["split_layer"] = s.split_layer;
    d["output_index"] = s.output_index;
    d["sigma"] = to_array(s.svd.sigma);
    d["coefficients"] = to_array(s.coefficients);
    d["singular_vectors"] = vs;
    d["alphas"] = to_array(alpha.alphas);
    d["psi"] = to_array(alpha.psi);
    d["bias"] = alpha.residual_bias;
    d["y"] = alpha.y;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Exact affine and spectral explanations of piecewise-linear networks";

    static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<ResourceError>(m, "ResourceError", base.ptr());
    py::register_exception<RegionBoundaryError>(m, "RegionBoundaryError", base.ptr());
    py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

    py::class_<net::NetworkModel>(m, "Model")
        .def_readonly("name", &net::NetworkModel::name)
        .def_readonly("input_shape", &net::NetworkModel::input_shape)
        .def_property_readonly("layer_kinds",
                               [](const net::NetworkModel& self) {
                                   std::vector<std::string> kinds;
                                   for (const auto& l : self.layers) kinds.emplace_back(net::kind_name(l.kind()));
                                   return kinds;
                               })
        .def_property_readonly("block_count", &spectral::block_count)
        .def("__repr__", [](const net::NetworkModel& self) {
            return "<Model '" + self.name + "' input " + shape_to_string(self.input_shape) + ", " +
                   std::to_string(self.layers.size()) + " layers>";
        });

    m.def("load_model", &io::load_model, py::arg("path"));
    m.def("save_model", &io::save_model, py::arg("model"), py::arg("path"));
    m.def("manifest_json", &io::manifest_json, py::arg("model"));
    m.def("load_tensor", [](const std::filesystem::path& p) {
        const Tensor t = io::load_tensor(p);
        return to_array(t.data, t.shape);
    }, py::arg("path"));
    m.def("save_tensor", [](const Array& a, const std::filesystem::path& p, bool float32) {
        io::save_tensor(to_tensor(a), p, float32 ? io::DType::Float32 : io::DType::Float64);
    }, py::arg("array"), py::arg("path"), py::arg("float32") = false);

    m.def("forward", [](const net::NetworkModel& model, const Array& x) {
        const Tensor y = net::forward(model, to_input(model, x)).back();
        return to_array(y.data, y.shape);
    }, py::arg("model"), py::arg("x"));

    m.def("affine", [](const net::NetworkModel& model, const Array& x) {
        const auto op = pwa::extract_affine(model, to_input(model, x));
        py::dict d;
        d["u"] = to_array(op.u);
        d["b"] = to_array(op.b);
        d["b_layers"] = to_array(op.b_layers);
        d["y"] = to_array(op.y);
        d["on_boundary"] = op.signature.on_boundary();
        return d;
    }, py::arg("model"), py::arg("x"), "Exact affine form y = u x + b at x.");

    m.def("bias_decomposition", [](const net::NetworkModel& model, const Array& x) {
        const auto bd = pwa::bias_decomposition(model, to_input(model, x));
        std::vector<Array> betas;
        for (const auto& b : bd.betas) betas.push_back(to_array(b));
        return py::make_tuple(betas, bd.carries_bias, to_array(bd.total));
    }, py::arg("model"), py::arg("x"));

    m.def("same_region", [](const net::NetworkModel& model, const Array& a, const Array& b) {
        return pwa::same_region(model, to_input(model, a), to_input(model, b));
    }, py::arg("model"), py::arg("x1"), py::arg("x2"));

    m.def("split", [](const net::NetworkModel& model, const Array& x, std::size_t layer,
                      std::optional<std::size_t> output) {
        const Tensor t = to_input(model, x);
        return split_dict(spectral::split_at(model, t, layer, pick_output(model, t, output)));
    }, py::arg("model"), py::arg("x"), py::arg("layer"), py::arg("output") = py::none(),
       "Spectral split after block `layer` (1-based).");

    m.def("reduce_coefficients", [](const std::vector<double>& alphas) {
        const auto r = spectral::reduce_coefficients(alphas);
        py::dict d;
        d["a_hat"] = to_array(r.a_hat);
        d["a_tilde"] = to_array(r.a_tilde);
        d["spectral_index"] = r.spectral_index;
        d["iterations"] = r.iterations;
        d["pass_sums"] = r.pass_sums;
        d["cancelled"] = r.cancelled;
        return d;
    }, py::arg("alphas"));

    m.def("symbolic", [](const net::NetworkModel& model, const Array& x, std::size_t layer,
                         std::optional<std::size_t> output, bool reduce) {
        const Tensor t = to_input(model, x);
        spectral::SymbolicOptions opts;
        opts.reduce = reduce;
        const auto s = spectral::symbolic(model, t, layer, pick_output(model, t, output), opts);
        py::list terms;
        for (const auto& term : s.terms) {
            py::dict d;
            d["k"] = term.spectral_index;
            d["coefficient"] = term.coefficient;
            d["alpha_tilde"] = term.alpha_tilde;
            d["c_hat"] = to_array(term.c_hat.values, term.c_hat.shape);
            terms.append(d);
        }
        py::dict d;
        d["terms"] = terms;
        d["y"] = s.y;
        d["bias"] = s.bias;
        d["remainder"] = s.remainder;
        d["reconstructed"] = s.reconstructed;
        return d;
    }, py::arg("model"), py::arg("x"), py::arg("layer"), py::arg("output") = py::none(), py::arg("reduce") = false);

    m.def("thin_svd", [](const Array& a, double rank_tol) {
        const auto s = linalg::thin_svd(to_matrix(a), rank_tol);
        return py::make_tuple(to_array(s.U), to_array(s.sigma), to_array(s.V), s.rank_used);
    }, py::arg("matrix"), py::arg("rank_tol") = linalg::kDefaultRankTol);

    m.def("render_square", [](double angle, std::size_t canvas, std::size_t side) {
        return to_array(toylab::render_square(angle, canvas, side), {canvas, canvas});
    }, py::arg("angle_deg"), py::arg("canvas") = 64, py::arg("side") = 32);

    m.def("generate_squares", [](std::size_t count, std::uint64_t seed, std::size_t canvas, std::size_t side) {
        toylab::SquaresConfig c;
        c.count = count;
        c.seed = seed;
        c.canvas = canvas;
        c.square_side = side;
        const auto ds = toylab::generate_squares(c);
        return py::make_tuple(to_array(ds.images.data(), {count, canvas, canvas, 1}), to_array(ds.angles));
    }, py::arg("count") = 2048, py::arg("seed") = 7, py::arg("canvas") = 64, py::arg("side") = 32);

    m.def("train_autoencoder", [](const Array& images, std::vector<std::size_t> hidden, std::size_t epochs,
                                  double learning_rate, std::size_t batch_size, bool bias, std::uint64_t seed) {
        if (images.ndim() != 4) throw DimensionError("images must be [count, height, width, 1]");
        const std::size_t n = images.shape(1) * images.shape(2) * images.shape(3);
        toylab::TrainConfig c;
        c.widths = {n};
        c.widths.insert(c.widths.end(), hidden.begin(), hidden.end());
        c.widths.push_back(n);
        c.epochs = epochs;
        c.learning_rate = learning_rate;
        c.batch_size = batch_size;
        c.use_bias = bias;
        c.seed = seed;
        const Matrix data(images.shape(0), n, std::vector<double>(images.data(), images.data() + images.size()));
        const Shape shape{static_cast<std::size_t>(images.shape(1)), static_cast<std::size_t>(images.shape(2)),
                          static_cast<std::size_t>(images.shape(3))};
        toylab::TrainResult r;
        {
            py::gil_scoped_release release;
            r = toylab::train_autoencoder(data, shape, c);
        }
        return py::make_tuple(std::move(r.model), r.initial_loss, r.loss);
    }, py::arg("images"), py::arg("hidden") = std::vector<std::size_t>{512, 64, 8, 64, 512},
       py::arg("epochs") = toylab::TrainConfig{}.epochs, py::arg("learning_rate") = toylab::TrainConfig{}.learning_rate,
       py::arg("batch_size") = toylab::TrainConfig{}.batch_size, py::arg("bias") = false, py::arg("seed") = 7);

    m.attr("FORMAT_VERSION") = io::kFormatVersion;
}
