#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

#include "fieldlens/nn.hpp"

namespace fieldlens::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

void tanh_inplace(std::span<double> v);
void relu_inplace(std::span<double> v);
void softmax_rows_inplace(std::span<double> v, std::size_t width);

/// Number of classes the model's output encodes, given its unbatched output shape.
std::size_t class_count(const ModelSpec& model, const std::vector<std::size_t>& out_shape);

}  // namespace fieldlens::detail
