#include "specxai/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "specxai/error.hpp"

namespace specxai::report {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::string text;
    for (std::size_t i = 0; i < header.size(); ++i) text += (i ? "," : "") + header[i];
    text += '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) text += (i ? "," : "") + format_double(row[i]);
        text += '\n';
    }
    write_text(path, text);
}

void write_grid_csv(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
                    std::size_t width) {
    if (values.size() != height * width) throw DimensionError("grid csv: value count does not match the grid");
    std::string text;
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) text += (c ? "," : "") + format_double(values[r * width + c]);
        text += '\n';
    }
    write_text(path, text);
}

PgmScale write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
                   std::size_t width) {
    if (values.size() != height * width) throw DimensionError("pgm: value count does not match the grid");
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    const PgmScale scale{-m, m};
    std::string text = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (double v : values) {
        const double level = m > 0.0 ? 255.0 * (v + m) / (2.0 * m) : 127.5;
        text += static_cast<char>(static_cast<unsigned char>(std::clamp(std::lround(level), 0L, 255L)));
    }
    write_text(path, text);
    const nlohmann::json side{{"min", scale.min}, {"max", scale.max}, {"height", height}, {"width", width},
                              {"mapping", "grey = round(255 * (v - min) / (max - min))"}};
    write_text(path.string() + ".json", side.dump(2) + "\n");
    return scale;
}

std::vector<unsigned char> read_pgm(const std::filesystem::path& path, std::size_t& height, std::size_t& width) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    int maxval = 0;
    in >> magic >> width >> height >> maxval;
    in.get();
    if (magic != "P5" || maxval != 255) throw FormatError(FormatError::Reason::Schema, path.string() + ": not an 8-bit P5 image");
    std::vector<unsigned char> px(height * width);
    in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!in) throw FormatError(FormatError::Reason::CorruptBlob, path.string() + ": truncated pixel data");
    return px;
}

std::vector<std::vector<double>> read_csv(const std::filesystem::path& path, bool header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    if (header) std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc()) throw FormatError(FormatError::Reason::Schema, path.string() + ": bad number '" + cell + "'");
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace specxai::report
