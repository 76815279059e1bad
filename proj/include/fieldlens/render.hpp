#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fieldlens/core_data.hpp"

namespace fieldlens {

struct ControlPoint {
    double position = 0.0;
    std::array<double, 3> rgb{};

    bool operator==(const ControlPoint&) const = default;
};

class TransferFunction {
public:
    TransferFunction(std::string name, std::vector<ControlPoint> points);

    const std::string& name() const noexcept { return name_; }
    const std::vector<ControlPoint>& points() const noexcept { return points_; }

    /// Colour at normalized position s in [0,1], before rounding.
    std::array<double, 3> evaluate(double s) const;

private:
    std::string name_;
    std::vector<ControlPoint> points_;
};

/// "greyscale" or "coolwarm"; anything else is a PreconditionError.
const TransferFunction& builtin_transfer_function(std::string_view name);
std::vector<std::string> builtin_transfer_function_names();

struct ValueRange {
    double lo = 0.0;
    double hi = 1.0;
};

/// Min and max of a single-component array. A constant array yields [v, v+1].
ValueRange data_range(const DataArray& values);

/// Maps k=1 values to k=3 channel values in [0,255] (clamp, normalize, interpolate, round half up).
DataArray color_map(const DataArray& values, const TransferFunction& tf, ValueRange range, std::string name = "color");

struct RenderOptions {
    std::string array;                // empty: first point array
    std::string transfer_function = "greyscale";
    std::optional<ValueRange> range;  // default: data range of the rendered scalar
    std::size_t width = 0;            // 0: grid point count along x
    std::size_t height = 0;           // 0: grid point count along y
    /// k=3 arrays are drawn verbatim when set; by default only an array named "color" is.
    std::optional<bool> direct_color;
};

/// Rasterizes a 2D grid by nearest-point sampling into an RGB image named "color".
ImageDataset render_image(const GridDataset& grid, const RenderOptions& options);
std::vector<std::uint8_t> render_png(const GridDataset& grid, const RenderOptions& options);

}  // namespace fieldlens
