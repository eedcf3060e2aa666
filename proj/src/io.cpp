#include "specxai/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "specxai/error.hpp"

namespace specxai::io {

using nlohmann::json;

namespace {

template <typename T>
void to_little_endian(std::vector<T>& v) {
    if constexpr (std::endian::native == std::endian::big) {
        for (T& x : v) {
            auto* p = reinterpret_cast<std::uint8_t*>(&x);
            std::reverse(p, p + sizeof(T));
        }
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("cannot read " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw IoError("cannot write " + path.string());
}

std::string manifest_text(const json& j) { return j.dump(2) + "\n"; }

// Accumulates float32 blobs for one weights file.
class BlobWriter {
public:
    json add(std::span<const double> values) {
        const std::size_t offset = data_.size();
        for (double v : values) data_.push_back(static_cast<float>(v));
        std::vector<float> le(data_.begin() + static_cast<std::ptrdiff_t>(offset), data_.end());
        to_little_endian(le);
        const auto* le_bytes = reinterpret_cast<const std::uint8_t*>(le.data());
        return {{"offset", offset},
                {"count", values.size()},
                {"checksum", checksum_hex(fnv1a64({le_bytes, le.size() * sizeof(float)}))}};
    }

    std::vector<float> little_endian() const {
        std::vector<float> out = data_;
        to_little_endian(out);
        return out;
    }

private:
    std::vector<float> data_;
};

class BlobReader {
public:
    BlobReader(std::vector<std::uint8_t> bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {
        if (bytes_.size() % sizeof(float) != 0) {
            throw FormatError(FormatError::Reason::CorruptBlob,
                              name_ + ": length " + std::to_string(bytes_.size()) + " is not a whole number of float32");
        }
    }

    std::vector<double> read(const json& ref, std::size_t expected, const std::string& what) const {
        if (!ref.is_object()) throw FormatError(FormatError::Reason::Schema, what + ": blob reference must be an object");
        const auto offset = ref.at("offset").get<std::size_t>();
        const auto count = ref.at("count").get<std::size_t>();
        const auto checksum = ref.at("checksum").get<std::string>();
        if (count != expected) {
            throw FormatError(FormatError::Reason::CorruptBlob, what + ": blob holds " + std::to_string(count) +
                                                                     " values, shape needs " + std::to_string(expected));
        }
        const std::size_t total = bytes_.size() / sizeof(float);
        if (offset > total || count > total - offset) {
            throw FormatError(FormatError::Reason::CorruptBlob,
                              what + ": blob [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                                  ") lies outside " + name_ + " (" + std::to_string(total) + " values)");
        }
        const std::span<const std::uint8_t> raw(bytes_.data() + offset * sizeof(float), count * sizeof(float));
        if (checksum_hex(fnv1a64(raw)) != checksum) {
            throw FormatError(FormatError::Reason::CorruptBlob, what + ": checksum mismatch in " + name_);
        }
        std::vector<float> f(count);
        std::memcpy(f.data(), raw.data(), raw.size());
        to_little_endian(f);  // symmetric swap on big-endian hosts
        return {f.begin(), f.end()};
    }

private:
    std::vector<std::uint8_t> bytes_;
    std::string name_;
};

json pair(std::size_t a, std::size_t b) { return json::array({a, b}); }

json matrix_json(const Matrix& m, BlobWriter& blobs) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"weight", blobs.add(m.data())}};
}

json optional_blob(const std::vector<double>& v, BlobWriter& blobs) {
    return v.empty() ? json(nullptr) : blobs.add(v);
}

json layers_json(const std::vector<net::Layer>& layers, BlobWriter& blobs);

json layer_json(const net::Layer& layer, BlobWriter& blobs) {
    json j;
    j["kind"] = std::string(net::kind_name(layer.kind()));
    std::visit(
        [&](const auto& op) {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, net::Dense>) {
                j["in"] = op.weight.cols();
                j["out"] = op.weight.rows();
                j["weight"] = blobs.add(op.weight.data());
                j["bias"] = optional_blob(op.bias, blobs);
            } else if constexpr (std::is_same_v<T, net::Conv2d>) {
                j["kernel_shape"] = op.kernel.shape;
                j["kernel"] = blobs.add(op.kernel.data);
                j["bias"] = optional_blob(op.bias, blobs);
                j["stride"] = pair(op.geometry.stride_h, op.geometry.stride_w);
                j["padding"] = pair(op.geometry.pad_h, op.geometry.pad_w);
                j["dilation"] = pair(op.geometry.dilation_h, op.geometry.dilation_w);
            } else if constexpr (std::is_same_v<T, net::AvgPool> || std::is_same_v<T, net::MaxPool>) {
                j["window"] = pair(op.window.window_h, op.window.window_w);
                j["stride"] = pair(op.window.stride_h, op.window.stride_w);
            } else if constexpr (std::is_same_v<T, net::Residual>) {
                j["inner"] = layers_json(op.inner, blobs);
                j["skip"] = op.skip ? matrix_json(*op.skip, blobs) : json(nullptr);
            } else if constexpr (std::is_same_v<T, net::Concat>) {
                json branches = json::array();
                for (const auto& b : op.branches) branches.push_back(layers_json(b, blobs));
                j["branches"] = std::move(branches);
                json combine = json::array();
                for (const auto& m : op.combine) combine.push_back(matrix_json(m, blobs));
                j["combine"] = std::move(combine);
                j["bias"] = optional_blob(op.bias, blobs);
            }
        },
        layer.op);
    return j;
}

json layers_json(const std::vector<net::Layer>& layers, BlobWriter& blobs) {
    json arr = json::array();
    for (const auto& l : layers) arr.push_back(layer_json(l, blobs));
    return arr;
}

std::pair<std::size_t, std::size_t> read_pair(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw FormatError(FormatError::Reason::Schema, std::string(key) + " must be a pair");
    return {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
}

std::vector<double> read_optional(const json& j, const char* key, std::size_t expected, const BlobReader& blobs,
                                  const std::string& what) {
    if (!j.contains(key) || j.at(key).is_null()) return {};
    return blobs.read(j.at(key), expected, what + " " + key);
}

Matrix read_matrix(const json& j, const BlobReader& blobs, const std::string& what) {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    return Matrix(rows, cols, blobs.read(j.at("weight"), rows * cols, what));
}

std::vector<net::Layer> read_layers(const json& arr, const BlobReader& blobs, const std::string& where);

net::Layer read_layer(const json& j, const BlobReader& blobs, const std::string& what) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "dense") {
        const auto in = j.at("in").get<std::size_t>();
        const auto out = j.at("out").get<std::size_t>();
        net::Dense d{Matrix(out, in, blobs.read(j.at("weight"), in * out, what + " weight")), {}};
        d.bias = read_optional(j, "bias", out, blobs, what);
        return {std::move(d)};
    }
    if (kind == "conv2d") {
        const auto shape = j.at("kernel_shape").get<Shape>();
        if (shape.size() != 4) throw FormatError(FormatError::Reason::Schema, what + ": kernel_shape must have 4 entries");
        net::Conv2d c;
        c.kernel = Tensor(shape, blobs.read(j.at("kernel"), shape_size(shape), what + " kernel"));
        c.bias = read_optional(j, "bias", shape[3], blobs, what);
        std::tie(c.geometry.stride_h, c.geometry.stride_w) = read_pair(j, "stride");
        std::tie(c.geometry.pad_h, c.geometry.pad_w) = read_pair(j, "padding");
        std::tie(c.geometry.dilation_h, c.geometry.dilation_w) = read_pair(j, "dilation");
        return {std::move(c)};
    }
    if (kind == "avgpool" || kind == "maxpool") {
        net::PoolWindow w;
        std::tie(w.window_h, w.window_w) = read_pair(j, "window");
        std::tie(w.stride_h, w.stride_w) = read_pair(j, "stride");
        if (kind == "avgpool") return {net::AvgPool{w}};
        return {net::MaxPool{w}};
    }
    if (kind == "relu") return {net::ReLU{}};
    if (kind == "sigmoid") return {net::Sigmoid{}};
    if (kind == "tanh") return {net::Tanh{}};
    if (kind == "flatten") return {net::Flatten{}};
    if (kind == "residual") {
        net::Residual r;
        r.inner = read_layers(j.at("inner"), blobs, what + " inner");
        if (j.contains("skip") && !j.at("skip").is_null()) r.skip = read_matrix(j.at("skip"), blobs, what + " skip");
        return {std::move(r)};
    }
    if (kind == "concat") {
        net::Concat c;
        std::size_t i = 0;
        for (const auto& b : j.at("branches")) c.branches.push_back(read_layers(b, blobs, what + " branch " + std::to_string(i++)));
        i = 0;
        for (const auto& m : j.at("combine")) c.combine.push_back(read_matrix(m, blobs, what + " combine " + std::to_string(i++)));
        const std::size_t out = c.combine.empty() ? 0 : c.combine.front().rows();
        c.bias = read_optional(j, "bias", out, blobs, what);
        return {std::move(c)};
    }
    throw FormatError(FormatError::Reason::Schema, what + ": unknown layer kind '" + kind + "'");
}

std::vector<net::Layer> read_layers(const json& arr, const BlobReader& blobs, const std::string& where) {
    if (!arr.is_array()) throw FormatError(FormatError::Reason::Schema, where + ": layers must be an array");
    std::vector<net::Layer> layers;
    for (std::size_t i = 0; i < arr.size(); ++i)
        layers.push_back(read_layer(arr[i], blobs, where + " layer " + std::to_string(i + 1)));
    return layers;
}

json parse_manifest(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        json j = json::parse(bytes.begin(), bytes.end());
        if (!j.is_object()) throw FormatError(FormatError::Reason::Schema, path.string() + ": manifest must be an object");
        const int version = j.at("format_version").get<int>();
        if (version != kFormatVersion) {
            throw FormatError(FormatError::Reason::Version, path.string() + ": format_version " + std::to_string(version) +
                                                                " is not supported (expected " +
                                                                std::to_string(kFormatVersion) + ")");
        }
        return j;
    } catch (const json::exception& e) {
        throw FormatError(FormatError::Reason::Schema, path.string() + ": " + e.what());
    }
}

std::filesystem::path sibling(const std::filesystem::path& manifest, const std::string& name) {
    if (name.empty() || std::filesystem::path(name).has_parent_path())
        throw FormatError(FormatError::Reason::Schema, manifest.string() + ": data file must be a plain file name");
    return manifest.parent_path() / name;
}

json model_manifest(const net::NetworkModel& model, BlobWriter& blobs, const std::string& weights_file) {
    json j;
    j["format_version"] = kFormatVersion;
    j["name"] = model.name;
    j["dtype"] = "float32";
    j["weights_file"] = weights_file;
    j["input_shape"] = model.input_shape;
    j["layers"] = layers_json(model.layers, blobs);
    return j;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string checksum_hex(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::string manifest_json(const net::NetworkModel& model) {
    BlobWriter blobs;
    return manifest_text(model_manifest(model, blobs, "model.weights.bin"));
}

void save_model(const net::NetworkModel& model, const std::filesystem::path& path) {
    net::validate(model);
    BlobWriter blobs;
    const std::string weights_file = path.stem().string() + ".weights.bin";
    const std::string text = manifest_text(model_manifest(model, blobs, weights_file));
    const auto data = blobs.little_endian();
    write_file(path.parent_path() / weights_file, data.data(), data.size() * sizeof(float));
    write_file(path, text.data(), text.size());
}

net::NetworkModel load_model(const std::filesystem::path& path) {
    const json j = parse_manifest(path);
    net::NetworkModel m;
    try {
        if (j.at("dtype").get<std::string>() != "float32")
            throw FormatError(FormatError::Reason::Schema, path.string() + ": only float32 weights are supported");
        const auto weights = sibling(path, j.at("weights_file").get<std::string>());
        const BlobReader blobs(read_file(weights), weights.filename().string());
        m.name = j.at("name").get<std::string>();
        m.input_shape = j.at("input_shape").get<Shape>();
        m.layers = read_layers(j.at("layers"), blobs, path.filename().string());
    } catch (const json::exception& e) {
        throw FormatError(FormatError::Reason::Schema, path.string() + ": " + e.what());
    }
    try {
        net::validate(m);
    } catch (const DimensionError& e) {
        throw FormatError(FormatError::Reason::ShapeChain, path.string() + ": " + e.what());
    }
    return m;
}

void save_tensor(const Tensor& t, const std::filesystem::path& path, DType dtype) {
    const std::string data_file = path.stem().string() + ".tensor.bin";
    std::vector<std::uint8_t> bytes;
    if (dtype == DType::Float32) {
        std::vector<float> f(t.data.begin(), t.data.end());
        to_little_endian(f);
        bytes.resize(f.size() * sizeof(float));
        std::memcpy(bytes.data(), f.data(), bytes.size());
    } else {
        std::vector<double> d = t.data;
        to_little_endian(d);
        bytes.resize(d.size() * sizeof(double));
        std::memcpy(bytes.data(), d.data(), bytes.size());
    }
    json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "tensor";
    j["dtype"] = dtype == DType::Float32 ? "float32" : "float64";
    j["shape"] = t.shape;
    j["data_file"] = data_file;
    j["checksum"] = checksum_hex(fnv1a64(bytes));
    const std::string text = manifest_text(j);
    write_file(path.parent_path() / data_file, bytes.data(), bytes.size());
    write_file(path, text.data(), text.size());
}

Tensor load_tensor(const std::filesystem::path& path) {
    const json j = parse_manifest(path);
    try {
        if (j.at("kind").get<std::string>() != "tensor")
            throw FormatError(FormatError::Reason::Schema, path.string() + ": not a tensor container");
        const auto shape = j.at("shape").get<Shape>();
        const auto dtype = j.at("dtype").get<std::string>();
        std::size_t width = 0;
        if (dtype == "float32") width = sizeof(float);
        else if (dtype == "float64") width = sizeof(double);
        else throw FormatError(FormatError::Reason::Schema, path.string() + ": unknown dtype '" + dtype + "'");
        const auto data_path = sibling(path, j.at("data_file").get<std::string>());
        const auto bytes = read_file(data_path);
        const std::size_t n = shape_size(shape);
        if (bytes.size() != n * width) {
            throw FormatError(FormatError::Reason::CorruptBlob, data_path.string() + ": holds " + std::to_string(bytes.size()) +
                                                                    " bytes, shape needs " + std::to_string(n * width));
        }
        if (checksum_hex(fnv1a64(bytes)) != j.at("checksum").get<std::string>())
            throw FormatError(FormatError::Reason::CorruptBlob, data_path.string() + ": checksum mismatch");
        Tensor t(shape);
        if (width == sizeof(float)) {
            std::vector<float> f(n);
            std::memcpy(f.data(), bytes.data(), bytes.size());
            to_little_endian(f);
            t.data.assign(f.begin(), f.end());
        } else {
            std::memcpy(t.data.data(), bytes.data(), bytes.size());
            to_little_endian(t.data);
        }
        return t;
    } catch (const json::exception& e) {
        throw FormatError(FormatError::Reason::Schema, path.string() + ": " + e.what());
    }
}

}  // namespace specxai::io
