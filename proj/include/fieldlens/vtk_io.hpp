#pragma once

// File realizations of the grid and table models: a legacy-ASCII structured
// subset (STRUCTURED_POINTS, RECTILINEAR_GRID with POINT_DATA), 8-bit PNG and CSV.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fieldlens/core_data.hpp"

namespace fieldlens {

struct ParsedFile {
    GridDataset dataset;
    std::string title;
};

ParsedFile parse_legacy(std::string_view text);
std::string write_legacy(const GridDataset& dataset, std::string_view title = "fieldlens dataset");

/// Pixels become one point array named "pixels" with 1, 3 or 4 components.
/// PNG row 0 (top) maps to the highest y index.
ImageDataset read_png(std::span<const std::uint8_t> bytes);
/// Writes the named array (first array when empty); values must lie in [0,255].
std::vector<std::uint8_t> write_png(const ImageDataset& image, std::string_view array = {});

std::string write_csv(const TableDataset& table);

/// Loads a .vtk or .png file by extension.
GridDataset load_grid(const std::filesystem::path& path);
void save_grid(const std::filesystem::path& path, const GridDataset& dataset);

}  // namespace fieldlens
