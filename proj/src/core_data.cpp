#include "fieldlens/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fieldlens/error.hpp"

namespace fieldlens {

namespace {

void check_point_arrays(const std::vector<DataArray>& arrays, std::size_t n) {
    for (const auto& a : arrays) {
        if (a.tuples() != n) {
            throw PreconditionError("point array '" + a.name() + "' has " + std::to_string(a.tuples()) +
                                    " tuples, grid has " + std::to_string(n) + " points");
        }
    }
}

void check_increasing(const std::vector<double>& c, const char* axis) {
    if (c.empty()) {
        throw PreconditionError(std::string(axis) + " coordinates are empty");
    }
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (!std::isfinite(c[i])) {
            throw PreconditionError(std::string(axis) + " coordinates contain a non-finite value");
        }
        if (i > 0 && !(c[i] > c[i - 1])) {
            throw PreconditionError(std::string(axis) + " coordinates are not strictly increasing");
        }
    }
}

template <class Grid>
std::vector<DataArray> replace_array(const Grid& grid, DataArray array) {
    std::vector<DataArray> arrays = grid.point_arrays();
    auto it = std::find_if(arrays.begin(), arrays.end(), [&](const DataArray& a) { return a.name() == array.name(); });
    if (it != arrays.end()) {
        *it = std::move(array);
    } else {
        arrays.push_back(std::move(array));
    }
    return arrays;
}

const DataArray* find_in(const std::vector<DataArray>& arrays, std::string_view name) {
    for (const auto& a : arrays) {
        if (a.name() == name) return &a;
    }
    return nullptr;
}

}  // namespace

DataArray::DataArray(std::string name, std::size_t components, std::vector<double> values)
    : name_(std::move(name)), components_(components), values_(std::move(values)) {
    if (components_ == 0) {
        throw PreconditionError("data array '" + name_ + "' must have at least one component");
    }
    if (values_.size() % components_ != 0) {
        throw PreconditionError("data array '" + name_ + "' has " + std::to_string(values_.size()) +
                                " values, not divisible by " + std::to_string(components_) + " components");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw PreconditionError("data array '" + name_ + "' contains a non-finite value");
        }
    }
}

ImageDataset::ImageDataset(Dims3 dims, Vec3 origin, Vec3 spacing, std::vector<DataArray> point_arrays)
    : dims_(dims), origin_(origin), spacing_(spacing), point_arrays_(std::move(point_arrays)) {
    for (int i = 0; i < 3; ++i) {
        if (dims_[i] == 0) throw PreconditionError("image dimensions must be positive");
        if (!(spacing_[i] > 0) || !std::isfinite(spacing_[i])) {
            throw PreconditionError("image spacing must be strictly positive");
        }
        if (!std::isfinite(origin_[i])) throw PreconditionError("image origin must be finite");
    }
    check_point_arrays(point_arrays_, num_points());
}

const DataArray* ImageDataset::find_array(std::string_view name) const { return find_in(point_arrays_, name); }

ImageDataset ImageDataset::with_array(DataArray array) const {
    return ImageDataset(dims_, origin_, spacing_, replace_array(*this, std::move(array)));
}

RectilinearDataset::RectilinearDataset(std::vector<double> x, std::vector<double> y, std::vector<double> z,
                                       std::vector<DataArray> point_arrays)
    : x_(std::move(x)), y_(std::move(y)), z_(std::move(z)), point_arrays_(std::move(point_arrays)) {
    check_increasing(x_, "x");
    check_increasing(y_, "y");
    check_increasing(z_, "z");
    check_point_arrays(point_arrays_, num_points());
}

const DataArray* RectilinearDataset::find_array(std::string_view name) const {
    return find_in(point_arrays_, name);
}

RectilinearDataset RectilinearDataset::with_array(DataArray array) const {
    return RectilinearDataset(x_, y_, z_, replace_array(*this, std::move(array)));
}

std::size_t TableColumn::rows() const {
    return std::visit([](const auto& v) { return v.size(); }, data);
}

TableDataset::TableDataset(std::vector<TableColumn> columns) : columns_(std::move(columns)) {
    for (const auto& c : columns_) {
        if (c.rows() != rows()) {
            throw PreconditionError("table column '" + c.name + "' has " + std::to_string(c.rows()) +
                                    " rows, expected " + std::to_string(rows()));
        }
        if (const auto* nums = std::get_if<std::vector<double>>(&c.data)) {
            if (!std::all_of(nums->begin(), nums->end(), [](double v) { return std::isfinite(v); })) {
                throw PreconditionError("table column '" + c.name + "' contains a non-finite value");
            }
        }
    }
}

const TableColumn* TableDataset::find_column(std::string_view name) const {
    for (const auto& c : columns_) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

std::size_t element_count(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(std::span<const std::size_t> shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

TensorND::TensorND(std::vector<std::size_t> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (std::find(shape.begin(), shape.end(), 0) != shape.end()) {
        throw PreconditionError("tensor shape " + shape_string(shape) + " has a zero extent");
    }
    if (element_count(shape) != values.size()) {
        throw ConversionError("tensor shape " + shape_string(shape) + " needs " +
                              std::to_string(element_count(shape)) + " values, got " + std::to_string(values.size()));
    }
}

TensorND::TensorND(std::vector<std::size_t> s) : TensorND(s, std::vector<double>(element_count(s), 0.0)) {}

TensorND array_to_tensor(const DataArray& array, std::vector<std::size_t> target_shape) {
    const std::size_t have = array.values().size();
    const std::size_t want = element_count(target_shape);
    if (have != want) {
        throw ConversionError("element count " + std::to_string(have) + " != " + std::to_string(want) +
                              " for array '" + array.name() + "' into shape " + shape_string(target_shape));
    }
    return TensorND(std::move(target_shape), std::vector<double>(array.values().begin(), array.values().end()));
}

DataArray tensor_to_array(const TensorND& tensor, std::string name, std::size_t components) {
    if (components == 0 || tensor.values.size() % components != 0) {
        throw ConversionError("tensor of " + std::to_string(tensor.values.size()) + " elements cannot form " +
                              std::to_string(components) + "-component tuples");
    }
    return DataArray(std::move(name), components, tensor.values);
}

RectilinearDataset image_to_rectilinear(const ImageDataset& image) {
    std::array<std::vector<double>, 3> coords;
    for (int a = 0; a < 3; ++a) {
        coords[a].resize(image.dims()[a]);
        for (std::size_t i = 0; i < image.dims()[a]; ++i) {
            coords[a][i] = image.origin()[a] + static_cast<double>(i) * image.spacing()[a];
        }
    }
    return RectilinearDataset(std::move(coords[0]), std::move(coords[1]), std::move(coords[2]), image.point_arrays());
}

ImageDataset rectilinear_to_image(const RectilinearDataset& grid) {
    const std::array<const std::vector<double>*, 3> axes{&grid.x_coords(), &grid.y_coords(), &grid.z_coords()};
    Vec3 origin{}, spacing{};
    for (int a = 0; a < 3; ++a) {
        const auto& c = *axes[a];
        origin[a] = c.front();
        if (c.size() == 1) {
            spacing[a] = 1.0;
            continue;
        }
        const double step = (c.back() - c.front()) / static_cast<double>(c.size() - 1);
        for (std::size_t i = 1; i < c.size(); ++i) {
            if (std::abs((c[i] - c[i - 1]) - step) > 1e-9 * step) {
                throw ConversionError("rectilinear grid has non-uniform spacing along axis " + std::to_string(a) +
                                      "; image data cannot represent it");
            }
        }
        spacing[a] = step;
    }
    return ImageDataset(grid.dims(), origin, spacing, grid.point_arrays());
}

DataArray greyscale_to_rgb(const DataArray& array) {
    if (array.components() != 1) {
        throw PreconditionError("greyscale conversion needs a 1-component array, '" + array.name() + "' has " +
                                std::to_string(array.components()));
    }
    std::vector<double> rgb;
    rgb.reserve(array.tuples() * 3);
    for (double v : array.values()) {
        rgb.insert(rgb.end(), {v, v, v});
    }
    return DataArray(array.name(), 3, std::move(rgb));
}

const std::vector<DataArray>& point_arrays(const GridDataset& grid) {
    return std::visit([](const auto& g) -> const std::vector<DataArray>& { return g.point_arrays(); }, grid);
}

const DataArray* find_array(const GridDataset& grid, std::string_view name) {
    return std::visit([&](const auto& g) { return g.find_array(name); }, grid);
}

Dims3 grid_dims(const GridDataset& grid) {
    return std::visit([](const auto& g) { return g.dims(); }, grid);
}

std::size_t num_points(const GridDataset& grid) {
    return std::visit([](const auto& g) { return g.num_points(); }, grid);
}

GridDataset with_array(const GridDataset& grid, DataArray array) {
    return std::visit([&](const auto& g) -> GridDataset { return g.with_array(std::move(array)); }, grid);
}

DataArray magnitude(const DataArray& array, std::string name) {
    std::vector<double> out(array.tuples());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 0.0;
        for (double c : array.tuple(i)) s += c * c;
        out[i] = std::sqrt(s);
    }
    return DataArray(std::move(name), 1, std::move(out));
}

}  // namespace fieldlens
