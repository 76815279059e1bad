#include "fieldlens/render.hpp"

#include <algorithm>
#include <cmath>

#include "fieldlens/error.hpp"
#include "fieldlens/vtk_io.hpp"

namespace fieldlens {

TransferFunction::TransferFunction(std::string name, std::vector<ControlPoint> points)
    : name_(std::move(name)), points_(std::move(points)) {
    if (points_.size() < 2) throw PreconditionError("transfer function needs at least two control points");
    if (points_.front().position != 0.0 || points_.back().position != 1.0) {
        throw PreconditionError("transfer function control points must start at 0 and end at 1");
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (i > 0 && !(points_[i].position > points_[i - 1].position)) {
            throw PreconditionError("transfer function positions must be strictly increasing");
        }
        for (double c : points_[i].rgb) {
            if (!(c >= 0.0 && c <= 255.0)) throw PreconditionError("transfer function colours must lie in [0,255]");
        }
    }
}

std::array<double, 3> TransferFunction::evaluate(double s) const {
    s = std::clamp(s, 0.0, 1.0);
    auto hi = std::lower_bound(points_.begin(), points_.end(), s,
                               [](const ControlPoint& p, double v) { return p.position < v; });
    if (hi == points_.begin()) return hi->rgb;
    const auto lo = hi - 1;
    const double w = (s - lo->position) / (hi->position - lo->position);
    std::array<double, 3> out{};
    for (int c = 0; c < 3; ++c) out[c] = lo->rgb[c] + w * (hi->rgb[c] - lo->rgb[c]);
    return out;
}

const TransferFunction& builtin_transfer_function(std::string_view name) {
    static const TransferFunction grey("greyscale", {{0.0, {0, 0, 0}}, {1.0, {255, 255, 255}}});
    static const TransferFunction coolwarm("coolwarm",
                                           {{0.0, {59, 76, 192}}, {0.5, {221, 221, 221}}, {1.0, {180, 4, 38}}});
    if (name == "greyscale") return grey;
    if (name == "coolwarm") return coolwarm;
    throw PreconditionError("unknown transfer function '" + std::string(name) + "'");
}

std::vector<std::string> builtin_transfer_function_names() { return {"greyscale", "coolwarm"}; }

ValueRange data_range(const DataArray& values) {
    if (values.components() != 1) throw PreconditionError("data range needs a single-component array");
    if (values.tuples() == 0) return {0.0, 1.0};
    const auto [mn, mx] = std::minmax_element(values.values().begin(), values.values().end());
    return *mn < *mx ? ValueRange{*mn, *mx} : ValueRange{*mn, *mn + 1.0};
}

DataArray color_map(const DataArray& values, const TransferFunction& tf, ValueRange range, std::string name) {
    if (values.components() != 1) throw PreconditionError("color_map needs a single-component array");
    if (!(range.lo < range.hi)) throw PreconditionError("invalid range: lo must be below hi");
    std::vector<double> out;
    out.reserve(values.tuples() * 3);
    for (double v : values.values()) {
        const double s = (std::clamp(v, range.lo, range.hi) - range.lo) / (range.hi - range.lo);
        for (double c : tf.evaluate(s)) out.push_back(std::clamp(std::floor(c + 0.5), 0.0, 255.0));
    }
    return DataArray(std::move(name), 3, std::move(out));
}

namespace {

std::vector<double> axis_coords(const GridDataset& grid, int axis) {
    if (const auto* r = std::get_if<RectilinearDataset>(&grid)) {
        return axis == 0 ? r->x_coords() : axis == 1 ? r->y_coords() : r->z_coords();
    }
    const auto& img = std::get<ImageDataset>(grid);
    std::vector<double> c(img.dims()[axis]);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = img.origin()[axis] + static_cast<double>(i) * img.spacing()[axis];
    return c;
}

/// For each of n pixel centres spread over the coordinate extent, the index of the nearest coordinate
/// (the lower one on ties).
std::vector<std::size_t> nearest_indices(const std::vector<double>& coords, std::size_t n) {
    std::vector<std::size_t> idx(n, 0);
    if (coords.size() < 2) return idx;
    const double lo = coords.front(), hi = coords.back();
    for (std::size_t p = 0; p < n; ++p) {
        const double x = lo + (static_cast<double>(p) + 0.5) / static_cast<double>(n) * (hi - lo);
        auto it = std::lower_bound(coords.begin(), coords.end(), x);
        if (it == coords.end()) {
            idx[p] = coords.size() - 1;
        } else if (it == coords.begin()) {
            idx[p] = 0;
        } else {
            const std::size_t k = static_cast<std::size_t>(it - coords.begin());
            idx[p] = (x - coords[k - 1] <= coords[k] - x) ? k - 1 : k;
        }
    }
    return idx;
}

}  // namespace

ImageDataset render_image(const GridDataset& grid, const RenderOptions& options) {
    const Dims3 dims = grid_dims(grid);
    if (dims[2] != 1) throw UnsupportedError("rendering needs a 2D grid (nz = 1)");
    const auto& arrays = point_arrays(grid);
    const DataArray* array = nullptr;
    if (options.array.empty()) {
        if (arrays.empty()) throw PreconditionError("grid has no point arrays to render");
        array = &arrays.front();
    } else {
        array = find_array(grid, options.array);
        if (!array) throw PreconditionError("array '" + options.array + "' not found");
    }

    DataArray colors("color", 3, {});
    const bool direct = options.direct_color.value_or(array->name() == "color");
    if (direct) {
        if (array->components() != 3) throw PreconditionError("direct colour rendering needs a 3-component array");
        colors = array->renamed("color");
    } else {
        const DataArray scalar = array->components() == 1 ? *array : magnitude(*array);
        const ValueRange range = options.range.value_or(data_range(scalar));
        colors = color_map(scalar, builtin_transfer_function(options.transfer_function), range);
    }

    const std::size_t w = options.width ? options.width : dims[0];
    const std::size_t h = options.height ? options.height : dims[1];
    const auto ix = nearest_indices(axis_coords(grid, 0), w);
    const auto iy = nearest_indices(axis_coords(grid, 1), h);
    std::vector<double> px(w * h * 3);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t src = iy[y] * dims[0] + ix[x];
            for (std::size_t c = 0; c < 3; ++c) px[(y * w + x) * 3 + c] = colors.at(src, c);
        }
    }
    return ImageDataset({w, h, 1}, {0, 0, 0}, {1, 1, 1}, {DataArray("color", 3, std::move(px))});
}

std::vector<std::uint8_t> render_png(const GridDataset& grid, const RenderOptions& options) {
    return write_png(render_image(grid, options));
}

}  // namespace fieldlens
