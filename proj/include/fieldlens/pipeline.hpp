#pragma once

// Demand-driven visualization pipeline: sources and single-port filters,
// parameter schemas, and a lazy executive driven by modification counters.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fieldlens/core_data.hpp"

namespace fieldlens {

using ParamValue = std::variant<double, std::string>;
using ParamMap = std::map<std::string, ParamValue>;

enum class ParamType { number, integer, string, path };
const char* param_type_name(ParamType t);

struct ParamSchema {
    std::string name;
    ParamType type = ParamType::number;
    std::optional<ParamValue> default_value;
    bool required = false;
    std::string description;
};

/// What travels along an edge. `any` means the kind is only known after execution.
enum class DataKind { grid, table, any };
const char* data_kind_name(DataKind k);
DataKind kind_of(const Dataset& d);

struct FilterType {
    std::string name;
    std::string description;
    std::vector<ParamSchema> params;
    DataKind input = DataKind::grid;
    DataKind output = DataKind::grid;
    std::function<Dataset(const Dataset& input, const ParamMap& params)> run;
};

class FilterRegistry {
public:
    void add(FilterType type);
    const FilterType* find(const std::string& name) const;
    const std::vector<FilterType>& types() const noexcept { return types_; }

private:
    std::vector<FilterType> types_;
};

/// Built-in filters: "threshold" (magnitude ground truth) and "data_driven" (model inference).
/// Relative model paths resolve against the working directory first, then each search dir.
FilterRegistry make_default_registry(std::vector<std::filesystem::path> model_search_dirs = {});
const FilterRegistry& default_registry();

/// Checks values against a schema, fills defaults, rejects unknown names and wrong types.
ParamMap validate_params(const FilterType& type, const ParamMap& params);

struct PipelineNode {
    std::string id;
    std::string type;  // "source" or a registered filter type
    ParamMap params;
    std::optional<std::string> input;  // upstream node id
    std::optional<Dataset> output;
    std::uint64_t modified_time = 0;
    std::uint64_t executed_time = 0;
    std::size_t execution_count = 0;
};

class Pipeline {
public:
    explicit Pipeline(const FilterRegistry& registry = default_registry());
    explicit Pipeline(FilterRegistry&&) = delete;

    void add_source(const std::string& id, Dataset data);
    void set_source(const std::string& id, Dataset data);
    void add_filter(const std::string& id, const std::string& type, const ParamMap& params = {});
    void remove_node(const std::string& id);

    /// Feeds `from`'s output into `to`'s single input port (replacing any previous edge).
    void connect(const std::string& from, const std::string& to);

    /// Marks the node modified only when the value actually changes; returns whether it did.
    bool set_param(const std::string& id, const std::string& name, const ParamValue& value);
    bool set_params(const std::string& id, const ParamMap& params);

    /// Brings the node up to date, executing it and its upstream chain only where stale.
    const Dataset& update(const std::string& id);

    const PipelineNode& node(const std::string& id) const;
    std::vector<std::string> node_ids() const;
    bool contains(const std::string& id) const { return nodes_.count(id) != 0; }
    std::size_t total_executions() const;
    const FilterRegistry& registry() const noexcept { return *registry_; }

private:
    PipelineNode& get(const std::string& id);
    DataKind output_kind(const PipelineNode& n) const;
    std::uint64_t output_time(const PipelineNode& n) const;
    void update_node(const std::string& id, std::vector<std::string>& stack);

    const FilterRegistry* registry_;
    std::map<std::string, PipelineNode> nodes_;
    std::uint64_t clock_ = 0;
};

}  // namespace fieldlens
