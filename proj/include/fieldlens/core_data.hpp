#pragma once

// Grid and table data models, flat tensors, and the typed conversions between them.
//
// Point ordering is x-fastest, then y, then z, everywhere in the library.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fieldlens {

/// Named attribute over n tuples of k components each, stored tuple-major.
class DataArray {
public:
    DataArray(std::string name, std::size_t components, std::vector<double> values);

    const std::string& name() const noexcept { return name_; }
    std::size_t components() const noexcept { return components_; }
    std::size_t tuples() const noexcept { return values_.size() / components_; }
    std::span<const double> values() const noexcept { return values_; }
    double at(std::size_t tuple, std::size_t component = 0) const {
        return values_[tuple * components_ + component];
    }
    std::span<const double> tuple(std::size_t i) const {
        return std::span<const double>(values_).subspan(i * components_, components_);
    }

    DataArray renamed(std::string name) const { return DataArray(std::move(name), components_, values_); }

    bool operator==(const DataArray&) const = default;

private:
    std::string name_;
    std::size_t components_;
    std::vector<double> values_;
};

using Vec3 = std::array<double, 3>;
using Dims3 = std::array<std::size_t, 3>;

class ImageDataset {
public:
    ImageDataset(Dims3 dims, Vec3 origin, Vec3 spacing, std::vector<DataArray> point_arrays = {});

    const Dims3& dims() const noexcept { return dims_; }
    const Vec3& origin() const noexcept { return origin_; }
    const Vec3& spacing() const noexcept { return spacing_; }
    std::size_t num_points() const noexcept { return dims_[0] * dims_[1] * dims_[2]; }
    const std::vector<DataArray>& point_arrays() const noexcept { return point_arrays_; }
    const DataArray* find_array(std::string_view name) const;

    /// Copy of this dataset with `array` added, replacing any array of the same name.
    ImageDataset with_array(DataArray array) const;

    bool operator==(const ImageDataset&) const = default;

private:
    Dims3 dims_;
    Vec3 origin_;
    Vec3 spacing_;
    std::vector<DataArray> point_arrays_;
};

class RectilinearDataset {
public:
    RectilinearDataset(std::vector<double> x, std::vector<double> y, std::vector<double> z,
                       std::vector<DataArray> point_arrays = {});

    const std::vector<double>& x_coords() const noexcept { return x_; }
    const std::vector<double>& y_coords() const noexcept { return y_; }
    const std::vector<double>& z_coords() const noexcept { return z_; }
    Dims3 dims() const noexcept { return {x_.size(), y_.size(), z_.size()}; }
    std::size_t num_points() const noexcept { return x_.size() * y_.size() * z_.size(); }
    const std::vector<DataArray>& point_arrays() const noexcept { return point_arrays_; }
    const DataArray* find_array(std::string_view name) const;

    RectilinearDataset with_array(DataArray array) const;

    bool operator==(const RectilinearDataset&) const = default;

private:
    std::vector<double> x_, y_, z_;
    std::vector<DataArray> point_arrays_;
};

/// A table column holds either numbers or text labels.
struct TableColumn {
    std::string name;
    std::variant<std::vector<double>, std::vector<std::string>> data;

    std::size_t rows() const;
    bool operator==(const TableColumn&) const = default;
};

class TableDataset {
public:
    explicit TableDataset(std::vector<TableColumn> columns);

    const std::vector<TableColumn>& columns() const noexcept { return columns_; }
    std::size_t rows() const noexcept { return columns_.empty() ? 0 : columns_.front().rows(); }
    const TableColumn* find_column(std::string_view name) const;

    bool operator==(const TableDataset&) const = default;

private:
    std::vector<TableColumn> columns_;
};

using GridDataset = std::variant<ImageDataset, RectilinearDataset>;
using Dataset = std::variant<ImageDataset, RectilinearDataset, TableDataset>;

struct TensorND {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    TensorND() = default;
    TensorND(std::vector<std::size_t> shape, std::vector<double> values);
    /// Zero-filled tensor of the given shape.
    explicit TensorND(std::vector<std::size_t> shape);

    std::size_t size() const noexcept { return values.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    bool operator==(const TensorND&) const = default;
};

std::size_t element_count(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

TensorND array_to_tensor(const DataArray& array, std::vector<std::size_t> target_shape);
DataArray tensor_to_array(const TensorND& tensor, std::string name, std::size_t components);

RectilinearDataset image_to_rectilinear(const ImageDataset& image);
/// Fails unless every axis is uniformly spaced within relative tolerance 1e-9.
ImageDataset rectilinear_to_image(const RectilinearDataset& grid);

DataArray greyscale_to_rgb(const DataArray& array);

// Accessors shared by both grid kinds.
const std::vector<DataArray>& point_arrays(const GridDataset& grid);
const DataArray* find_array(const GridDataset& grid, std::string_view name);
Dims3 grid_dims(const GridDataset& grid);
std::size_t num_points(const GridDataset& grid);
GridDataset with_array(const GridDataset& grid, DataArray array);

/// Euclidean norm of each tuple, as a 1-component array.
DataArray magnitude(const DataArray& array, std::string name = "magnitude");

}  // namespace fieldlens
