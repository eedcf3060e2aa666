#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sys/wait.h>

#include <json.hpp>

#include "specxai/io.hpp"
#include "specxai/report.hpp"
#include "support/random_models.hpp"

using namespace specxai;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / ("specxai-cli-" + std::to_string(::getpid()));

int run(const std::string& args, const std::string& env = {}) {
    const std::string cmd = env + " " SPECXAI_CLI_PATH " " + args + " > " + (kWork / "last.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::string path(const std::string& rel) { return (kWork / rel).string(); }

// Small enough to train in well under a second.
const std::string kToyFlags = "--canvas 16 --side 8 --count 48 --epochs 2 --hidden 48,16,8,16,48";

struct Workspace {
    Workspace() { fs::create_directories(kWork); }
    ~Workspace() { fs::remove_all(kWork); }
} const workspace;

void ensure_toy(const std::string& dir, bool bias) {
    if (fs::exists(kWork / dir / "model.sxm")) return;
    REQUIRE(run("train-toy --seed 7 " + kToyFlags + (bias ? " --bias" : " --no-bias") + " --out " + path(dir)) == 0);
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run("") == 2);
    CHECK(run("explain --bogus") == 2);
    CHECK(run("no-such-command") == 2);
    CHECK(run("--help") == 0);
}

TEST_CASE("train-toy writes model, dataset and loss curve deterministically") {
    ensure_toy("run1", false);
    REQUIRE(run("train-toy --seed 7 " + kToyFlags + " --out " + path("run1b")) == 0);
    for (const char* f : {"dataset.sxt", "dataset.tensor.bin", "model.sxm", "model.weights.bin", "loss.csv"})
        CHECK(slurp(kWork / "run1" / f) == slurp(kWork / "run1b" / f));
    const auto loss = report::read_csv(kWork / "run1" / "loss.csv");
    CHECK(loss.size() == 3);

    REQUIRE(run("gen-data --seed 7 --canvas 16 --side 8 --count 48 --out " + path("gen/data.sxt")) == 0);
    CHECK(slurp(kWork / "gen" / "data.tensor.bin") == slurp(kWork / "run1" / "dataset.tensor.bin"));

    CHECK(run("inspect-model --json " + path("run1/model.sxm")) == 0);
    CHECK(slurp(kWork / "last.log") == slurp(kWork / "run1" / "model.sxm"));
}

TEST_CASE("biased toy model has nonzero bias contributions") {
    ensure_toy("runb", true);
    REQUIRE(run("bias-study --model " + path("runb/model.sxm") + " --dataset " + path("runb/dataset.sxt") +
                " --sample 3 --out " + path("bs")) == 0);
    const auto summary = read_json(kWork / "bs" / "summary.json");
    CHECK(summary.at("residual").get<double>() <= 1e-7);
    const auto rows = report::read_csv(kWork / "bs" / "bias_study.csv");
    REQUIRE(rows.size() == 6);
    int decoder = 0;
    for (const auto& r : rows) {
        decoder += r[1] == 1.0;
        if (r[1] == 1.0) CHECK(fs::exists(kWork / "bs" / ("beta_" + std::to_string(int(r[0])) + ".pgm")));
    }
    CHECK(decoder == 3);
    double total = 0.0;
    for (const auto& r : rows) total += r[2];
    CHECK(total > 0.0);
}

TEST_CASE("sweep reports reconstruct the output at every layer") {
    ensure_toy("runb", true);
    REQUIRE(run("sweep --model " + path("runb/model.sxm") + " --dataset " + path("runb/dataset.sxt") +
                " --sample 5 --reduce --out " + path("sweep")) == 0);
    const auto summary = report::read_csv(kWork / "sweep" / "sweep.csv");
    REQUIRE(summary.size() == 6);
    for (int l = 1; l <= 6; ++l) {
        const fs::path dir = kWork / "sweep" / ("layer_" + std::to_string(l));
        const auto j = read_json(dir / "symbolic.json");
        CHECK(j.at("residual").get<double>() < 1e-7);
        CHECK(j.at("symbolic_residual").get<double>() < 1e-7);
        const double y = j.at("y"), b = j.at("bias");
        double sum = 0.0;
        for (const auto& r : report::read_csv(dir / "alpha.csv")) sum += r[3];
        CHECK(std::abs(y - (sum + b)) < 1e-7);
        CHECK(report::read_csv(dir / "spectra.csv").size() <= 48);
    }
    CHECK(report::read_csv(kWork / "sweep" / "layer_6" / "spectra.csv").size() <= 8);
}

TEST_CASE("explain on a summing model") {
    // One output summing every input entry: a single singular vector whose
    // contraction, scaled by sigma, is the channel sum of the input.
    net::NetworkModel m{"sum", {2, 3, 2}, {{net::Dense{Matrix(1, 12, std::vector<double>(12, 1.0)), {}}}}};
    io::save_model(m, kWork / "sum.sxm");
    std::mt19937_64 rng(4);
    const Tensor x = testing::random_input(rng, m.input_shape);
    io::save_tensor(x, kWork / "x.sxt");
    REQUIRE(run("explain --model " + path("sum.sxm") + " --input " + path("x.sxt") + " --average --out " +
                path("sum")) == 0);
    const auto spectra = report::read_csv(kWork / "sum" / "spectra.csv");
    REQUIRE(spectra.size() == 1);
    const double sigma = spectra[0][1];
    const auto map = report::read_csv(kWork / "sum" / "sv_0.csv", false);
    REQUIRE(map.size() == 2);
    for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t w = 0; w < 3; ++w)
            CHECK(map[h][w] * sigma == doctest::Approx(x.data[(h * 3 + w) * 2] + x.data[(h * 3 + w) * 2 + 1]).epsilon(1e-12));
    CHECK(read_json(kWork / "sum" / "symbolic.json").at("residual").get<double>() < 1e-8);
    CHECK(fs::exists(kWork / "sum" / "sv_0_avg.pgm"));

    // Reports are deterministic.
    REQUIRE(run("explain --model " + path("sum.sxm") + " --input " + path("x.sxt") + " --average --out " +
                path("sum2")) == 0);
    for (const char* f : {"spectra.csv", "sv_0.csv", "sv_0.pgm", "symbolic.json", "bias_map.pgm"})
        CHECK(slurp(kWork / "sum" / f) == slurp(kWork / "sum2" / f));
}

TEST_CASE("explain errors have distinct exit codes") {
    ensure_toy("run1", false);
    const std::string base = "explain --model " + path("run1/model.sxm") + " --dataset " + path("run1/dataset.sxt");
    CHECK(run(base + " --layer 7 --out " + path("e")) == 2);
    CHECK(run(base + " --sample 999 --out " + path("e")) == 2);
    CHECK(run("explain --model " + path("missing.sxm") + " --input " + path("x.sxt") + " --out " + path("e")) == 3);
    CHECK(run(base + " --layer 1 --out " + path("e"), "SPECXAI_BUDGET=1000") == 4);

    fs::copy_file(kWork / "run1" / "model.sxm", kWork / "broken.sxm", fs::copy_options::overwrite_existing);
    const std::string blob = slurp(kWork / "run1" / "model.weights.bin");
    std::ofstream(kWork / "broken.weights.bin", std::ios::binary) << blob.substr(0, blob.size() / 2);
    auto manifest = read_json(kWork / "broken.sxm");
    manifest["weights_file"] = "broken.weights.bin";
    std::ofstream(kWork / "broken.sxm") << manifest.dump();
    CHECK(run("explain --model " + path("broken.sxm") + " --dataset " + path("run1/dataset.sxt") + " --out " +
              path("e")) == 5);

    // ReLU at an exactly-zero pre-activation: the report is written, with a warning status.
    net::NetworkModel m{"tie", {2}, {{net::Dense{Matrix::identity(2), {}}}, {net::ReLU{}}}};
    io::save_model(m, kWork / "tie.sxm");
    io::save_tensor(Tensor({2}, {0.0, 1.0}), kWork / "tie.sxt");
    const std::string tie = "explain --model " + path("tie.sxm") + " --input " + path("tie.sxt") + " --output 1";
    CHECK(run(tie + " --out " + path("tie")) == 6);
    CHECK(read_json(kWork / "tie" / "symbolic.json").at("on_boundary") == true);
    CHECK(run(tie + " --allow-boundary --out " + path("tie")) == 0);
}

TEST_CASE("similarity gram matrix") {
    ensure_toy("run1", false);
    REQUIRE(run("similarity --model " + path("run1/model.sxm") + " --dataset " + path("run1/dataset.sxt") +
                " --k 3 --samples 6 --out " + path("sim")) == 0);
    const auto gram = report::read_csv(kWork / "sim" / "gram.csv", false);
    REQUIRE(!gram.empty());
    for (std::size_t i = 0; i < gram.size(); ++i) {
        CHECK(gram[i][i] == doctest::Approx(1.0).epsilon(1e-10));
        for (double v : gram[i]) CHECK(std::abs(v) <= 1.0 + 1e-8);
    }

    // A dataset holding one sample twice gives identical diagonal blocks.
    const Tensor data = io::load_tensor(kWork / "run1" / "dataset.sxt");
    const std::size_t n = 256;
    std::vector<double> twice(data.data.begin(), data.data.begin() + n);
    twice.insert(twice.end(), data.data.begin(), data.data.begin() + n);
    io::save_tensor(Tensor({2, 16, 16, 1}, twice), kWork / "twice.sxt");
    REQUIRE(run("similarity --model " + path("run1/model.sxm") + " --dataset " + path("twice.sxt") +
                " --k 2 --out " + path("sim2")) == 0);
    const auto g2 = report::read_csv(kWork / "sim2" / "gram.csv", false);
    const std::size_t k = g2.size() / 2;
    for (std::size_t i = 0; i < k; ++i) CHECK(g2[i][i + k] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("compare-spectra summary") {
    ensure_toy("run1", false);
    REQUIRE(run("compare-spectra --model " + path("run1/model.sxm") + " --dataset " + path("run1/dataset.sxt") +
                " --samples 0,1,2 --out " + path("cs")) == 0);
    const auto s = read_json(kWork / "cs" / "summary.json");
    CHECK(s.at("max_operator_rank").get<int>() <= 8);
    CHECK(s.at("samples").size() == 3);
    CHECK(fs::exists(kWork / "cs" / "data_sv_0.pgm"));
    CHECK(report::read_csv(kWork / "cs" / "data_spectrum.csv").size() == 48);
}
