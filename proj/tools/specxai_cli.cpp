#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "specxai/error.hpp"
#include "specxai/io.hpp"
#include "specxai/linalg.hpp"
#include "specxai/netgraph.hpp"
#include "specxai/pwa.hpp"
#include "specxai/report.hpp"
#include "specxai/spectral.hpp"
#include "specxai/toylab.hpp"

namespace fs = std::filesystem;
using namespace specxai;
using nlohmann::json;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kNumeric = 4, kFormat = 5, kBoundary = 6 };

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case Error::Kind::Dimension: return kUsage;
        case Error::Kind::Io: return kIo;
        case Error::Kind::Format: return kFormat;
        case Error::Kind::RegionBoundary: return kBoundary;
        default: return kNumeric;
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

std::string checksum_of(const std::vector<double>& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    return io::checksum_hex(io::fnv1a64({p, v.size() * sizeof(double)}));
}

void write_json(const fs::path& path, const json& j) { report::write_text(path, j.dump(2) + "\n"); }

// Heatmaps are laid out as rows = first axis, columns = everything else.
std::pair<std::size_t, std::size_t> grid_of(const Shape& s) {
    if (s.size() >= 2) return {s[0], shape_size(s) / std::max<std::size_t>(s[0], 1)};
    return {1, s.empty() ? 1 : s[0]};
}

void write_map(const fs::path& dir, const std::string& stem, const std::vector<double>& values, const Shape& shape) {
    const auto [h, w] = grid_of(shape);
    report::write_grid_csv(dir / (stem + ".csv"), values, h, w);
    report::write_pgm(dir / (stem + ".pgm"), values, h, w);
}

// Output vectors of the same size as the input are drawn in the input's layout.
Shape output_layout(const net::NetworkModel& model, std::size_t n) {
    if (n == shape_size(model.input_shape)) return model.input_shape;
    return {n};
}

struct Dataset {
    Shape sample_shape;
    std::size_t count = 0;
    std::vector<double> data;

    Tensor sample(std::size_t i, const Shape& as) const {
        if (i >= count) throw DimensionError("sample " + std::to_string(i) + " out of range (dataset has " +
                                             std::to_string(count) + ")");
        const std::size_t n = shape_size(sample_shape);
        if (shape_size(as) != n)
            throw DimensionError("dataset samples have " + std::to_string(n) + " elements, model expects " +
                                 shape_to_string(as));
        return Tensor(as, {data.begin() + static_cast<std::ptrdiff_t>(i * n),
                           data.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)});
    }
};

Dataset load_dataset(const fs::path& path) {
    Tensor t = io::load_tensor(path);
    if (t.rank() < 2) throw DimensionError("dataset tensor needs a leading sample axis");
    Dataset d;
    d.count = t.shape[0];
    d.sample_shape.assign(t.shape.begin() + 1, t.shape.end());
    d.data = std::move(t.data);
    return d;
}

struct InputArgs {
    std::string input;
    std::string dataset;
    std::size_t sample = 0;
};

void add_input_options(CLI::App* cmd, InputArgs& in) {
    auto* i = cmd->add_option("--input", in.input, "Input tensor (.sxt)");
    auto* d = cmd->add_option("--dataset", in.dataset, "Dataset tensor (.sxt) with a leading sample axis");
    i->excludes(d);
    cmd->add_option("--sample", in.sample, "Sample index within --dataset")->needs(d);
}

Tensor load_input(const net::NetworkModel& model, const InputArgs& in) {
    if (!in.input.empty()) {
        Tensor t = io::load_tensor(in.input);
        if (shape_size(t.shape) != shape_size(model.input_shape))
            throw DimensionError("input " + shape_to_string(t.shape) + " does not fit model input " +
                                 shape_to_string(model.input_shape));
        t.shape = model.input_shape;
        return t;
    }
    if (!in.dataset.empty()) return load_dataset(in.dataset).sample(in.sample, model.input_shape);
    throw DimensionError("one of --input or --dataset is required");
}

// ---------------------------------------------------------------------------
// explain / sweep

struct ExplainArgs {
    std::string model;
    InputArgs input;
    std::size_t layer = 0;
    bool sweep = false;
    std::optional<std::size_t> output;
    std::size_t top = 4;
    bool reduce = false;
    bool average = false;
    std::optional<double> prune;
    std::string out;
    bool allow_boundary = false;
};

struct ExplainSummary {
    double y = 0.0;
    double reconstruction = 0.0;
    double residual = 0.0;
    std::size_t rank = 0;
};

ExplainSummary explain_one(const net::NetworkModel& model, const Tensor& x, std::size_t layer, std::size_t j,
                           const ExplainArgs& args, bool boundary, const fs::path& dir) {
    const auto split = spectral::split_at(model, x, layer, j);
    const auto alpha = spectral::alpha_decomposition(split);
    const auto basis = spectral::change_of_basis(split);
    const auto reduced = spectral::reduce_coefficients(alpha.alphas);

    spectral::SymbolicOptions sopts;
    sopts.reduce = args.reduce;
    sopts.prune_threshold = args.prune;
    const auto sym = spectral::symbolic(split, sopts);

    ensure_dir(dir);
    const auto& sigma = split.svd.sigma;
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < sigma.size(); ++k)
        rows.push_back({static_cast<double>(k), sigma[k], toylab::normalized_sigma(sigma, k), basis.projections[k],
                        split.coefficients[k]});
    report::write_csv(dir / "spectra.csv", {"k", "sigma", "sigma_normalized", "phi_dot_x", "c"}, rows);

    rows.clear();
    for (std::size_t i = 0; i < reduced.a_hat.size(); ++i)
        rows.push_back({static_cast<double>(reduced.spectral_index[i]), reduced.a_hat[i], reduced.a_tilde[i]});
    report::write_csv(dir / "spectra_reduced.csv", {"k", "a_hat", "a_tilde"}, rows);

    rows.clear();
    for (std::size_t k = 0; k < alpha.alphas.size(); ++k)
        rows.push_back({static_cast<double>(k), alpha.psi[k], split.coefficients[k], alpha.alphas[k]});
    report::write_csv(dir / "alpha.csv", {"k", "psi", "c", "alpha"}, rows);

    const auto axis = spectral::default_channel_axis(x.shape);
    for (std::size_t k = 0; k < std::min(args.top, split.rank()); ++k) {
        const Tensor phi = split.singular_vector(k);
        const auto c = spectral::feature_contraction(phi, x, axis);
        write_map(dir, "sv_" + std::to_string(k), c.values, c.shape);
        if (args.average) {
            const auto a = spectral::feature_average(phi, axis);
            write_map(dir, "sv_" + std::to_string(k) + "_avg", a.values, a.shape);
        }
    }

    write_map(dir, "bias_map", sym.bias_map.values, sym.bias_map.shape);
    if (sym.remainder != 0.0) write_map(dir, "remainder_map", sym.remainder_map.values, sym.remainder_map.shape);
    const auto bias = pwa::bias_decomposition(model, x);
    rows.clear();
    for (std::size_t l = 0; l < bias.betas.size(); ++l)
        if (bias.carries_bias[l]) rows.push_back({static_cast<double>(l + 1), bias.betas[l][j]});
    report::write_csv(dir / "bias.csv", {"layer", "beta_j"}, rows);

    const double recon = alpha.sum() + alpha.residual_bias;
    const double residual = std::abs(alpha.y - recon);
    json terms = json::array();
    for (const auto& t : sym.terms)
        terms.push_back({{"k", t.spectral_index},
                         {"alpha_tilde", t.alpha_tilde},
                         {"coefficient", t.coefficient},
                         {"checksum", checksum_of(t.c_hat.values)}});
    json j_report = {{"model", model.name},
                     {"split_layer", layer},
                     {"output_index", j},
                     {"rank", split.rank()},
                     {"reduced", sym.reduced},
                     {"iterations", sym.iterations},
                     {"terms", terms},
                     {"remainder", sym.remainder},
                     {"y", alpha.y},
                     {"bias", alpha.residual_bias},
                     {"sum_alpha", alpha.sum()},
                     {"reconstruction", recon},
                     {"residual", residual},
                     {"symbolic_reconstruction", sym.reconstructed},
                     {"symbolic_residual", std::abs(sym.reconstructed - sym.y)},
                     {"on_boundary", boundary}};
    if (!sym.warning.empty()) j_report["warning"] = sym.warning;
    write_json(dir / "symbolic.json", j_report);
    report::write_text(dir / "reconstruction.txt", "y_j " + report::format_double(alpha.y) + " sum_alpha_plus_b " +
                                                       report::format_double(recon) + " difference " +
                                                       report::format_double(alpha.y - recon) + "\n");
    return {alpha.y, recon, residual, split.rank()};
}

int run_explain(ExplainArgs& args) {
    const auto model = io::load_model(args.model);
    const Tensor x = load_input(model, args.input);
    const std::size_t blocks = spectral::block_count(model);
    const std::size_t j = args.output ? *args.output : spectral::argmax_output(model, x);
    const bool boundary = net::activation_pattern(model, x).on_boundary();
    const fs::path out(args.out);

    int status = kOk;
    if (args.sweep) {
        ensure_dir(out);
        std::vector<std::vector<double>> rows;
        std::vector<std::string> failures;
        for (std::size_t l = 1; l <= blocks; ++l) {
            try {
                const auto s = explain_one(model, x, l, j, args, boundary, out / ("layer_" + std::to_string(l)));
                rows.push_back({static_cast<double>(l), static_cast<double>(s.rank), s.y, s.reconstruction,
                                s.residual});
                std::cout << "layer " << l << " rank " << s.rank << " residual " << report::format_double(s.residual)
                          << "\n";
            } catch (const ResourceError& e) {
                failures.push_back("layer " + std::to_string(l) + ": " + e.what());
                std::cerr << "layer " << l << ": " << e.what() << "\n";
                status = kNumeric;
            }
        }
        report::write_csv(out / "sweep.csv", {"layer", "rank", "y", "reconstruction", "residual"}, rows);
    } else {
        if (args.layer == 0) args.layer = blocks;
        const auto s = explain_one(model, x, args.layer, j, args, boundary, out);
        std::cout << "y_j " << report::format_double(s.y) << " sum_alpha_plus_b "
                  << report::format_double(s.reconstruction) << " difference "
                  << report::format_double(s.y - s.reconstruction) << "\n";
    }
    if (boundary) {
        std::cerr << "warning: input lies on a linear-region boundary; the explanation holds for the chosen tie side\n";
        if (!args.allow_boundary && status == kOk) status = kBoundary;
    }
    return status;
}

void add_explain_options(CLI::App* cmd, ExplainArgs& a, bool sweep_only) {
    cmd->add_option("--model", a.model, "Model manifest")->required();
    add_input_options(cmd, a.input);
    if (!sweep_only) {
        cmd->add_option("--layer", a.layer, "Split block l_s (default: last)")->check(CLI::PositiveNumber);
        cmd->add_flag("--sweep", a.sweep, "Explain at every split block");
    }
    cmd->add_option("--output", a.output, "Output index j (default: argmax)");
    cmd->add_option("--top", a.top, "Heatmaps for the leading k singular vectors")->check(CLI::PositiveNumber);
    cmd->add_flag("--reduce", a.reduce, "Reduce the coefficients to a single sign");
    cmd->add_flag("--average", a.average, "Also write channel-averaged singular vectors");
    cmd->add_option("--prune", a.prune, "Fold terms with |alpha_tilde| below this into the remainder");
    cmd->add_option("--out", a.out, "Report directory")->required();
    cmd->add_flag("--allow-boundary", a.allow_boundary, "Exit 0 even when the input is on a region boundary");
}

// ---------------------------------------------------------------------------
// toy data and training

struct DataArgs {
    std::uint64_t seed = 7;
    std::size_t count = 2048;
    std::size_t canvas = 64;
    std::size_t side = 32;
};

void add_data_options(CLI::App* cmd, DataArgs& d) {
    cmd->add_option("--seed", d.seed, "Random seed");
    cmd->add_option("--count", d.count, "Number of images")->check(CLI::PositiveNumber);
    cmd->add_option("--canvas", d.canvas, "Canvas side in pixels")->check(CLI::PositiveNumber);
    cmd->add_option("--side", d.side, "Square side in pixels")->check(CLI::PositiveNumber);
}

toylab::SquaresDataset make_squares(const DataArgs& d) {
    toylab::SquaresConfig sc;
    sc.seed = d.seed;
    sc.count = d.count;
    sc.canvas = d.canvas;
    sc.square_side = d.side;
    return toylab::generate_squares(sc);
}

void save_squares(const toylab::SquaresDataset& ds, const fs::path& path) {
    Shape shape{ds.count()};
    shape.insert(shape.end(), ds.image_shape.begin(), ds.image_shape.end());
    io::save_tensor(Tensor(shape, ds.images.data()), path, io::DType::Float32);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < ds.angles.size(); ++i) rows.push_back({static_cast<double>(i), ds.angles[i]});
    fs::path angles = path;
    angles.replace_extension(".angles.csv");
    report::write_csv(angles, {"sample", "angle_deg"}, rows);
}

int run_gen_data(const DataArgs& d, const std::string& out) {
    const auto ds = make_squares(d);
    const fs::path p(out);
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    save_squares(ds, p);
    std::cout << "wrote " << ds.count() << " images to " << p.string() << "\n";
    return kOk;
}

struct TrainArgs {
    DataArgs data;
    bool bias = false;
    std::string out;
    std::size_t epochs = toylab::TrainConfig{}.epochs;
    double lr = toylab::TrainConfig{}.learning_rate;
    std::size_t batch = toylab::TrainConfig{}.batch_size;
    std::vector<std::size_t> hidden{512, 64, 8, 64, 512};
};

int run_train_toy(const TrainArgs& a) {
    const fs::path out(a.out);
    ensure_dir(out);
    const auto ds = make_squares(a.data);
    save_squares(ds, out / "dataset.sxt");

    toylab::TrainConfig tc;
    const std::size_t n = a.data.canvas * a.data.canvas;
    tc.widths = {n};
    tc.widths.insert(tc.widths.end(), a.hidden.begin(), a.hidden.end());
    tc.widths.push_back(n);
    tc.use_bias = a.bias;
    tc.epochs = a.epochs;
    tc.learning_rate = a.lr;
    tc.batch_size = a.batch;
    tc.seed = a.data.seed;

    const auto result = toylab::train_autoencoder(ds.images, ds.image_shape, tc, [](std::size_t e, double loss) {
        std::cout << "epoch " << e << " loss " << report::format_double(loss) << std::endl;
    });
    std::vector<std::vector<double>> rows{{0.0, result.initial_loss}};
    for (std::size_t e = 0; e < result.loss.size(); ++e) rows.push_back({static_cast<double>(e + 1), result.loss[e]});
    report::write_csv(out / "loss.csv", {"epoch", "loss"}, rows);
    io::save_model(result.model, out / "model.sxm");
    return kOk;
}

// ---------------------------------------------------------------------------
// similarity, compare-spectra, bias-study, inspect-model

int run_similarity(const std::string& model_path, const std::string& data_path, std::size_t k,
                   std::size_t layer, std::size_t samples, const std::string& out_dir) {
    const auto model = io::load_model(model_path);
    const auto data = load_dataset(data_path);
    const std::size_t n = std::min(samples, data.count);
    if (n < 2) throw DimensionError("similarity needs at least two samples");
    if (layer == 0) layer = spectral::block_count(model);

    std::vector<std::vector<double>> svs;
    std::vector<std::vector<double>> labels;
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor x = data.sample(i, model.input_shape);
        const auto split = spectral::split_at(model, x, layer, spectral::argmax_output(model, x));
        for (std::size_t q = 0; q < std::min(k, split.rank()); ++q) {
            svs.push_back(split.singular_vector(q).data);
            labels.push_back({static_cast<double>(svs.size() - 1), static_cast<double>(i), static_cast<double>(q)});
        }
    }
    const Matrix gram = spectral::sv_similarity(svs);
    const fs::path out(out_dir);
    ensure_dir(out);
    report::write_grid_csv(out / "gram.csv", gram.data(), gram.rows(), gram.cols());
    report::write_pgm(out / "gram.pgm", gram.data(), gram.rows(), gram.cols());
    report::write_csv(out / "gram_labels.csv", {"row", "sample", "k"}, labels);
    std::cout << "gram " << gram.rows() << "x" << gram.cols() << "\n";
    return kOk;
}

int run_compare_spectra(const std::string& model_path, const std::string& data_path,
                        std::vector<std::size_t> samples, std::size_t top, const std::string& out_dir) {
    const auto model = io::load_model(model_path);
    const auto data = load_dataset(data_path);
    if (data.sample_shape.size() != 3) throw DimensionError("compare-spectra expects [H,W,1] image samples");
    toylab::SquaresDataset ds;
    ds.image_shape = data.sample_shape;
    ds.images = Matrix(data.count, shape_size(data.sample_shape), data.data);
    if (samples.empty()) samples = {0};

    const auto rep = toylab::compare_spectra(model, ds, samples, top);
    const fs::path out(out_dir);
    ensure_dir(out);
    const std::size_t h = ds.image_shape[0], w = ds.image_shape[1];

    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < rep.data_sigma.size(); ++k)
        rows.push_back({static_cast<double>(k), rep.data_sigma[k], toylab::normalized_sigma(rep.data_sigma, k)});
    report::write_csv(out / "data_spectrum.csv", {"k", "sigma", "sigma_normalized"}, rows);
    json j_data = json::array();
    for (std::size_t k = 0; k < rep.data_top_v.size(); ++k) {
        write_map(out, "data_sv_" + std::to_string(k), rep.data_top_v[k], {h, w});
        j_data.push_back(toylab::angular_variance(rep.data_top_v[k], h, w));
    }

    rows.clear();
    json j_samples = json::array();
    for (const auto& s : rep.samples) {
        for (std::size_t k = 0; k < s.sigma.size(); ++k)
            rows.push_back({static_cast<double>(s.sample), static_cast<double>(k), s.sigma[k],
                            toylab::normalized_sigma(s.sigma, k), s.coefficients[k]});
        json angvar = json::array();
        for (std::size_t k = 0; k < s.top_v.size(); ++k) {
            const std::string stem = "sample_" + std::to_string(s.sample) + "_sv_" + std::to_string(k);
            write_map(out, stem, s.top_v[k], {h, w});
            write_map(out, stem + "_contraction", s.contractions[k].values, {h, w});
            angvar.push_back(toylab::angular_variance(s.top_v[k], h, w));
        }
        j_samples.push_back({{"sample", s.sample},
                             {"rank_used", s.rank_used},
                             {"sigma8_ratio", toylab::normalized_sigma(s.sigma, 8)},
                             {"top2_mass", spectral::top_mass(s.coefficients, 2)},
                             {"angular_variance", angvar}});
    }
    report::write_csv(out / "operator_spectra.csv", {"sample", "k", "sigma", "sigma_normalized", "c"}, rows);
    write_json(out / "summary.json", {{"data_sigma8_ratio", toylab::normalized_sigma(rep.data_sigma, 8)},
                                      {"data_angular_variance", j_data},
                                      {"max_operator_rank", rep.max_operator_rank},
                                      {"degenerate", rep.degenerate},
                                      {"samples", j_samples}});
    std::cout << "max operator rank " << rep.max_operator_rank << ", data sigma8/sigma0 "
              << report::format_double(toylab::normalized_sigma(rep.data_sigma, 8)) << "\n";
    return rep.degenerate ? kNumeric : kOk;
}

int run_bias_study(const std::string& model_path, const InputArgs& in, const std::string& out_dir) {
    const auto model = io::load_model(model_path);
    const Tensor x = load_input(model, in);
    const auto st = toylab::bias_study(model, x);
    const fs::path out(out_dir);
    ensure_dir(out);
    const Shape layout = output_layout(model, st.total.size());

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < st.layers.size(); ++i) {
        const auto& b = st.betas[i];
        rows.push_back({static_cast<double>(st.layers[i]), st.decoder[i] ? 1.0 : 0.0, linalg::max_abs(b),
                        std::accumulate(b.begin(), b.end(), 0.0)});
        write_map(out, "beta_" + std::to_string(st.layers[i]), b, layout);
    }
    report::write_csv(out / "bias_study.csv", {"layer", "decoder", "max_abs", "sum"}, rows);
    write_map(out, "beta_total", st.total, layout);
    write_map(out, "ux", st.ux, layout);
    write_json(out / "summary.json",
               {{"layers", st.layers}, {"decoder", st.decoder}, {"residual", st.residual}});
    std::cout << st.layers.size() << " bias-carrying layers, residual " << report::format_double(st.residual)
              << "\n";
    return kOk;
}

int run_inspect(const std::string& model_path, bool as_json) {
    const auto model = io::load_model(model_path);
    if (as_json) {
        std::cout << io::manifest_json(model);
        return kOk;
    }
    const auto shapes = net::shape_chain(model.layers, model.input_shape);
    std::cout << "name " << model.name << "\ninput " << shape_to_string(model.input_shape) << "\n";
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        std::cout << l + 1 << " " << net::kind_name(model.layers[l].kind()) << " -> "
                  << shape_to_string(shapes[l + 1]) << "\n";
    std::cout << "blocks " << spectral::block_count(model) << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral explanations of piecewise-affine networks"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* c_train = app.add_subcommand("train-toy", "Train the rotated-squares autoencoder");
    add_data_options(c_train, train.data);
    auto* f_bias = c_train->add_flag("--bias", train.bias, "Give every dense layer a bias");
    c_train->add_flag("--no-bias", "Bias-free layers (default)")->excludes(f_bias);
    c_train->add_option("--out", train.out, "Output directory")->required();
    c_train->add_option("--epochs", train.epochs, "Training epochs");
    c_train->add_option("--lr", train.lr, "Learning rate")->check(CLI::PositiveNumber);
    c_train->add_option("--batch", train.batch, "Batch size")->check(CLI::PositiveNumber);
    c_train->add_option("--hidden", train.hidden, "Hidden widths")->delimiter(',');

    DataArgs gen;
    std::string gen_out;
    auto* c_gen = app.add_subcommand("gen-data", "Write the rotated-squares dataset");
    add_data_options(c_gen, gen);
    c_gen->add_option("--out", gen_out, "Dataset file (.sxt)")->required();

    ExplainArgs explain;
    auto* c_explain = app.add_subcommand("explain", "Spectral report at one split block");
    add_explain_options(c_explain, explain, false);

    ExplainArgs sweep;
    auto* c_sweep = app.add_subcommand("sweep", "Spectral report at every split block");
    add_explain_options(c_sweep, sweep, true);

    std::string sim_model, sim_data, sim_out;
    std::size_t sim_k = 3, sim_layer = 0, sim_samples = 16;
    auto* c_sim = app.add_subcommand("similarity", "Gram matrix of leading singular vectors across samples");
    c_sim->add_option("--model", sim_model, "Model manifest")->required();
    c_sim->add_option("--dataset", sim_data, "Dataset tensor")->required();
    c_sim->add_option("--k", sim_k, "Singular vectors per sample")->check(CLI::PositiveNumber);
    c_sim->add_option("--layer", sim_layer, "Split block (default: last)");
    c_sim->add_option("--samples", sim_samples, "Use the first n samples")->check(CLI::PositiveNumber);
    c_sim->add_option("--out", sim_out, "Output directory")->required();

    std::string cs_model, cs_data, cs_out;
    std::vector<std::size_t> cs_samples;
    std::size_t cs_top = 4;
    auto* c_cs = app.add_subcommand("compare-spectra", "Operator spectra against the data-matrix spectrum");
    c_cs->add_option("--model", cs_model, "Model manifest")->required();
    c_cs->add_option("--dataset", cs_data, "Dataset tensor")->required();
    c_cs->add_option("--samples", cs_samples, "Sample indices")->delimiter(',');
    c_cs->add_option("--top", cs_top, "Singular vectors to export")->check(CLI::PositiveNumber);
    c_cs->add_option("--out", cs_out, "Output directory")->required();

    std::string bs_model, bs_out;
    InputArgs bs_in;
    auto* c_bs = app.add_subcommand("bias-study", "Per-layer bias contributions");
    c_bs->add_option("--model", bs_model, "Model manifest")->required();
    add_input_options(c_bs, bs_in);
    c_bs->add_option("--out", bs_out, "Output directory")->required();

    std::string im_model;
    bool im_json = false;
    auto* c_im = app.add_subcommand("inspect-model", "Summarise a model manifest");
    c_im->add_option("model", im_model, "Model manifest")->required();
    c_im->add_flag("--json", im_json, "Print the canonical manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*c_train) return run_train_toy(train);
        if (*c_gen) return run_gen_data(gen, gen_out);
        if (*c_explain) return run_explain(explain);
        if (*c_sweep) {
            sweep.sweep = true;
            return run_explain(sweep);
        }
        if (*c_sim) return run_similarity(sim_model, sim_data, sim_k, sim_layer, sim_samples, sim_out);
        if (*c_cs) return run_compare_spectra(cs_model, cs_data, cs_samples, cs_top, cs_out);
        if (*c_bs) return run_bias_study(bs_model, bs_in, bs_out);
        if (*c_im) return run_inspect(im_model, im_json);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return kNumeric;
    }
    return kUsage;
}
