#include "fieldlens/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "fieldlens/error.hpp"
#include "fieldlens/filters.hpp"

namespace fieldlens {

const char* param_type_name(ParamType t) {
    switch (t) {
        case ParamType::number: return "number";
        case ParamType::integer: return "integer";
        case ParamType::string: return "string";
        case ParamType::path: return "path";
    }
    return "?";
}

const char* data_kind_name(DataKind k) {
    switch (k) {
        case DataKind::grid: return "grid";
        case DataKind::table: return "table";
        case DataKind::any: return "any";
    }
    return "?";
}

DataKind kind_of(const Dataset& d) { return std::holds_alternative<TableDataset>(d) ? DataKind::table : DataKind::grid; }

void FilterRegistry::add(FilterType type) {
    if (type.name == "source") throw PreconditionError("'source' is reserved");
    if (find(type.name)) throw PreconditionError("filter type '" + type.name + "' already registered");
    types_.push_back(std::move(type));
}

const FilterType* FilterRegistry::find(const std::string& name) const {
    for (const auto& t : types_) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

ParamMap validate_params(const FilterType& type, const ParamMap& params) {
    ParamMap out;
    for (const auto& [name, value] : params) {
        auto it = std::find_if(type.params.begin(), type.params.end(), [&](const ParamSchema& s) { return s.name == name; });
        if (it == type.params.end()) throw PreconditionError("filter '" + type.name + "' has no parameter '" + name + "'");
        const bool is_number = std::holds_alternative<double>(value);
        switch (it->type) {
            case ParamType::number:
                if (!is_number || !std::isfinite(std::get<double>(value))) {
                    throw PreconditionError("parameter '" + name + "' must be a finite number");
                }
                break;
            case ParamType::integer: {
                const double* v = std::get_if<double>(&value);
                if (!v || *v != std::floor(*v) || *v < 0 || *v > 1e15) {
                    throw PreconditionError("parameter '" + name + "' must be a non-negative integer");
                }
                break;
            }
            case ParamType::string:
            case ParamType::path:
                if (is_number) throw PreconditionError("parameter '" + name + "' must be a string");
                break;
        }
        out[name] = value;
    }
    for (const auto& s : type.params) {
        if (!out.count(s.name) && s.default_value) out[s.name] = *s.default_value;
    }
    return out;
}

namespace {

const std::string& str_param(const ParamMap& p, const std::string& name) {
    static const std::string empty;
    auto it = p.find(name);
    return it == p.end() ? empty : std::get<std::string>(it->second);
}

double num_param(const ParamMap& p, const std::string& name) { return std::get<double>(p.at(name)); }

GridDataset as_grid(const Dataset& d) {
    if (const auto* i = std::get_if<ImageDataset>(&d)) return *i;
    if (const auto* r = std::get_if<RectilinearDataset>(&d)) return *r;
    throw PreconditionError("expected grid input but received a table");
}

std::filesystem::path resolve_model_path(const std::string& raw, const std::vector<std::filesystem::path>& search) {
    const std::filesystem::path p(raw);
    std::error_code ec;
    if (p.is_absolute() || std::filesystem::exists(p, ec)) return p;
    for (const auto& dir : search) {
        if (std::filesystem::exists(dir / p, ec)) return dir / p;
    }
    return p;
}

}  // namespace

FilterRegistry make_default_registry(std::vector<std::filesystem::path> model_search_dirs) {
    FilterRegistry r;
    r.add({"threshold",
           "Ground-truth segmentation: class 1 where the value (or vector magnitude) strictly exceeds the threshold.",
           {{"array", ParamType::string, ParamValue(std::string("velocity")), false, "point array to threshold"},
            {"threshold", ParamType::number, ParamValue(0.01), false, "strict lower bound for class 1"}},
           DataKind::grid,
           DataKind::grid,
           [](const Dataset& in, const ParamMap& p) -> Dataset {
               return std::visit([](const auto& g) -> Dataset { return g; },
                                 threshold_ground_truth(as_grid(in), str_param(p, "array"), num_param(p, "threshold")));
           }});
    r.add({"data_driven",
           "Runs a pre-trained model on the input grid: per-point models add class and color arrays, "
           "whole-input models produce a ranked confidence table.",
           {{"model_path", ParamType::path, std::nullopt, true, "model file, absolute or relative"},
            {"array", ParamType::string, ParamValue(std::string()), false, "input point array (empty: first)"},
            {"top_k", ParamType::integer, ParamValue(10.0), false, "rows kept in classification tables"}},
           DataKind::grid,
           DataKind::any,
           [search = std::move(model_search_dirs)](const Dataset& in, const ParamMap& p) -> Dataset {
               DataDrivenOptions opt;
               opt.array = str_param(p, "array");
               opt.top_k = static_cast<std::size_t>(num_param(p, "top_k"));
               return data_driven_transform(as_grid(in), resolve_model_path(str_param(p, "model_path"), search), opt);
           }});
    return r;
}

const FilterRegistry& default_registry() {
    static const FilterRegistry r = make_default_registry();
    return r;
}

Pipeline::Pipeline(const FilterRegistry& registry) : registry_(&registry) {}

PipelineNode& Pipeline::get(const std::string& id) {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw PipelineError(id, "no such node");
    return it->second;
}

const PipelineNode& Pipeline::node(const std::string& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw PipelineError(id, "no such node");
    return it->second;
}

std::vector<std::string> Pipeline::node_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, n] : nodes_) ids.push_back(id);
    return ids;
}

std::size_t Pipeline::total_executions() const {
    std::size_t n = 0;
    for (const auto& [id, node] : nodes_) n += node.execution_count;
    return n;
}

void Pipeline::add_source(const std::string& id, Dataset data) {
    if (id.empty()) throw PipelineError(id, "node id must not be empty");
    if (nodes_.count(id)) throw PipelineError(id, "node already exists");
    PipelineNode n;
    n.id = id;
    n.type = "source";
    n.output = std::move(data);
    n.modified_time = ++clock_;
    nodes_.emplace(id, std::move(n));
}

void Pipeline::set_source(const std::string& id, Dataset data) {
    auto& n = get(id);
    if (n.type != "source") throw PipelineError(id, "not a source");
    n.output = std::move(data);
    n.modified_time = ++clock_;
}

void Pipeline::add_filter(const std::string& id, const std::string& type, const ParamMap& params) {
    if (id.empty()) throw PipelineError(id, "node id must not be empty");
    if (nodes_.count(id)) throw PipelineError(id, "node already exists");
    const FilterType* ft = registry_->find(type);
    if (!ft) throw PipelineError(id, "unknown filter type '" + type + "'");
    PipelineNode n;
    n.id = id;
    n.type = type;
    try {
        n.params = validate_params(*ft, params);
    } catch (const PreconditionError& e) {
        throw PipelineError(id, e.what());
    }
    n.modified_time = ++clock_;
    nodes_.emplace(id, std::move(n));
}

void Pipeline::remove_node(const std::string& id) {
    get(id);
    for (auto& [other, n] : nodes_) {
        if (n.input == id) {
            n.input.reset();
            n.modified_time = ++clock_;
        }
    }
    nodes_.erase(id);
}

DataKind Pipeline::output_kind(const PipelineNode& n) const {
    if (n.type == "source") return n.output ? kind_of(*n.output) : DataKind::any;
    return registry_->find(n.type)->output;
}

std::uint64_t Pipeline::output_time(const PipelineNode& n) const {
    return n.type == "source" ? n.modified_time : n.executed_time;
}

void Pipeline::connect(const std::string& from, const std::string& to) {
    const auto& up = node(from);
    auto& down = get(to);
    if (down.type == "source") throw PipelineError(to, "sources have no input port");
    for (std::optional<std::string> cur = from; cur;) {
        if (*cur == to) throw PipelineError(to, "connecting '" + from + "' would create a cycle");
        cur = node(*cur).input;
    }
    const DataKind produced = output_kind(up);
    const DataKind accepted = registry_->find(down.type)->input;
    if (produced != DataKind::any && accepted != DataKind::any && produced != accepted) {
        throw PipelineError(to, std::string("input port accepts ") + data_kind_name(accepted) + " but '" + from +
                                    "' produces " + data_kind_name(produced));
    }
    down.input = from;
    down.modified_time = ++clock_;
}

bool Pipeline::set_param(const std::string& id, const std::string& name, const ParamValue& value) {
    return set_params(id, {{name, value}});
}

bool Pipeline::set_params(const std::string& id, const ParamMap& params) {
    auto& n = get(id);
    if (n.type == "source") throw PipelineError(id, "sources have no parameters");
    const FilterType* ft = registry_->find(n.type);
    ParamMap merged = n.params;
    for (const auto& [k, v] : params) merged[k] = v;
    ParamMap checked;
    try {
        checked = validate_params(*ft, merged);
    } catch (const PreconditionError& e) {
        throw PipelineError(id, e.what());
    }
    if (checked == n.params) return false;
    n.params = std::move(checked);
    n.modified_time = ++clock_;
    return true;
}

const Dataset& Pipeline::update(const std::string& id) {
    std::vector<std::string> stack;
    update_node(id, stack);
    return *node(id).output;
}

void Pipeline::update_node(const std::string& id, std::vector<std::string>& stack) {
    if (std::find(stack.begin(), stack.end(), id) != stack.end()) throw PipelineError(id, "cycle detected");
    auto& n = get(id);
    if (n.type == "source") {
        if (!n.output) throw PipelineError(id, "source has no data");
        return;
    }
    if (!n.input) throw PipelineError(id, "input port is not connected");

    stack.push_back(id);
    update_node(*n.input, stack);
    stack.pop_back();

    const auto& up = node(*n.input);
    const bool stale = !n.output || n.executed_time < n.modified_time || output_time(up) > n.executed_time;
    if (!stale) return;

    const FilterType* ft = registry_->find(n.type);
    for (const auto& s : ft->params) {
        if (s.required) {
            auto it = n.params.find(s.name);
            const bool missing = it == n.params.end() ||
                                 (std::holds_alternative<std::string>(it->second) && std::get<std::string>(it->second).empty());
            if (missing) throw PipelineError(id, "missing required parameter '" + s.name + "'");
        }
    }
    if (ft->input != DataKind::any && kind_of(*up.output) != ft->input) {
        throw PipelineError(id, std::string("input port accepts ") + data_kind_name(ft->input) + " but received " +
                                    data_kind_name(kind_of(*up.output)));
    }
    n.output.reset();
    try {
        n.output = ft->run(*up.output, n.params);
    } catch (const PipelineError&) {
        throw;
    } catch (const std::exception& e) {
        throw PipelineError(id, e.what());
    }
    n.executed_time = ++clock_;
    ++n.execution_count;
}

}  // namespace fieldlens
