#pragma once

// Plain-file artifact writers: CSV, 8-bit PGM heatmaps and JSON text.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace specxai::report {

/// Shortest text that round-trips the double exactly.
std::string format_double(double v);

void write_text(const std::filesystem::path& path, const std::string& text);

/// Header line then one comma-separated row per entry.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// A height x width grid as CSV, one image row per line.
void write_grid_csv(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
                    std::size_t width);

struct PgmScale {
    double min = 0.0;  // value mapped to 0
    double max = 0.0;  // value mapped to 255
};

/// Grey level round(255 * (v - min) / (max - min)) with min = -max = -max|v|,
/// so zero sits at mid-grey. Writes `path` and a `<path>.json` scale sidecar.
PgmScale write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
                   std::size_t width);

/// Reads back a binary (P5) PGM written by write_pgm.
std::vector<unsigned char> read_pgm(const std::filesystem::path& path, std::size_t& height, std::size_t& width);

/// Parses a CSV of numbers, skipping the first line when `header` is set.
std::vector<std::vector<double>> read_csv(const std::filesystem::path& path, bool header = true);

}  // namespace specxai::report
