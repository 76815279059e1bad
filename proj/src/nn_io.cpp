#include <json.hpp>

#include <string>

#include "fieldlens/error.hpp"
#include "fieldlens/nn.hpp"
#include "fieldlens/text.hpp"

namespace fieldlens {

using nlohmann::json;

namespace {

// Like dump(), but reals print with 17 significant digits.
void write_json(const json& j, std::string& out, int indent) {
    const auto pad = [&](int n) { out.append(static_cast<std::size_t>(n) * 2, ' '); };
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            std::size_t i = 0;
            for (const auto& [key, value] : j.items()) {
                pad(indent + 1);
                out += json(key).dump();
                out += ": ";
                write_json(value, out, indent + 1);
                out += ++i == j.size() ? "\n" : ",\n";
            }
            pad(indent);
            out += '}';
            return;
        }
        case json::value_t::array: {
            const bool flat = std::none_of(j.begin(), j.end(), [](const json& e) { return e.is_structured(); });
            out += '[';
            if (flat) {
                for (std::size_t i = 0; i < j.size(); ++i) {
                    if (i) out += ',';
                    write_json(j[i], out, indent);
                }
                out += ']';
                return;
            }
            out += '\n';
            for (std::size_t i = 0; i < j.size(); ++i) {
                pad(indent + 1);
                write_json(j[i], out, indent + 1);
                out += i + 1 == j.size() ? "\n" : ",\n";
            }
            pad(indent);
            out += ']';
            return;
        }
        case json::value_t::number_float:
            out += format_real(j.get<double>());
            return;
        default:
            out += j.dump();
            return;
    }
}

json matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    json m = json::array();
    for (std::size_t r = 0; r < rows; ++r) {
        m.push_back(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(r * cols),
                                        v.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)));
    }
    return m;
}

json layer_to_json(const Layer& layer) {
    json j;
    j["type"] = std::string(layer_name(layer));
    if (const auto* l = std::get_if<Linear>(&layer)) {
        j["in"] = l->in;
        j["out"] = l->out;
        j["weight"] = matrix(l->weight, l->out, l->in);
        j["bias"] = l->bias;
    } else if (const auto* c = std::get_if<Conv2D>(&layer)) {
        j["in_channels"] = c->in_channels;
        j["out_channels"] = c->out_channels;
        j["kernel"] = c->kernel;
        j["stride"] = c->stride;
        j["padding"] = c->padding;
        const std::size_t kk = c->kernel * c->kernel;
        json w = json::array();
        for (std::size_t o = 0; o < c->out_channels; ++o) {
            json per_in = json::array();
            for (std::size_t i = 0; i < c->in_channels; ++i) {
                std::vector<double> k(c->weight.begin() + static_cast<std::ptrdiff_t>((o * c->in_channels + i) * kk),
                                      c->weight.begin() + static_cast<std::ptrdiff_t>((o * c->in_channels + i + 1) * kk));
                per_in.push_back(matrix(k, c->kernel, c->kernel));
            }
            w.push_back(std::move(per_in));
        }
        j["weight"] = std::move(w);
        j["bias"] = c->bias;
    } else if (const auto* p = std::get_if<MaxPool2D>(&layer)) {
        j["kernel"] = p->kernel;
        j["stride"] = p->stride;
    }
    return j;
}

const json& field(const json& obj, const char* name, const std::string& where) {
    if (!obj.is_object()) throw ModelError(where + " must be an object");
    auto it = obj.find(name);
    if (it == obj.end()) throw ModelError("missing field '" + std::string(name) + "' in " + where);
    return *it;
}

template <class T>
T get_as(const json& obj, const char* name, const std::string& where) {
    const json& v = field(obj, name, where);
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ModelError("field '" + std::string(name) + "' in " + where + " has the wrong type");
    }
}

std::size_t get_size(const json& obj, const char* name, const std::string& where) {
    const json& v = field(obj, name, where);
    if (!v.is_number_unsigned()) throw ModelError("field '" + std::string(name) + "' in " + where + " must be a non-negative integer");
    return v.get<std::size_t>();
}

/// Flattens a nested numeric array, checking its extents against `shape`.
void flatten_into(const json& v, std::span<const std::size_t> shape, std::vector<double>& out, const std::string& where) {
    if (shape.empty()) {
        if (!v.is_number()) throw ModelError(where + " contains a non-numeric entry");
        out.push_back(v.get<double>());
        return;
    }
    if (!v.is_array() || v.size() != shape[0]) {
        throw ModelError(where + " does not match the declared dimensions");
    }
    for (const auto& e : v) flatten_into(e, shape.subspan(1), out, where);
}

std::vector<double> flat(const json& obj, const char* name, std::vector<std::size_t> shape, const std::string& where) {
    std::vector<double> out;
    out.reserve(element_count(shape));
    flatten_into(field(obj, name, where), shape, out, where + "." + name);
    return out;
}

Layer layer_from_json(const json& j, std::size_t index) {
    const std::string where = "layers[" + std::to_string(index) + "]";
    const auto type = get_as<std::string>(j, "type", where);
    if (type == "linear") {
        Linear l;
        l.in = get_size(j, "in", where);
        l.out = get_size(j, "out", where);
        l.weight = flat(j, "weight", {l.out, l.in}, where);
        l.bias = flat(j, "bias", {l.out}, where);
        return l;
    }
    if (type == "conv2d") {
        Conv2D c;
        c.in_channels = get_size(j, "in_channels", where);
        c.out_channels = get_size(j, "out_channels", where);
        c.kernel = get_size(j, "kernel", where);
        c.stride = get_size(j, "stride", where);
        c.padding = get_size(j, "padding", where);
        c.weight = flat(j, "weight", {c.out_channels, c.in_channels, c.kernel, c.kernel}, where);
        c.bias = flat(j, "bias", {c.out_channels}, where);
        return c;
    }
    if (type == "maxpool2d") return MaxPool2D{get_size(j, "kernel", where), get_size(j, "stride", where)};
    if (type == "tanh") return Tanh{};
    if (type == "relu") return Relu{};
    if (type == "softmax") return Softmax{};
    if (type == "flatten") return Flatten{};
    throw ModelError(where + " has unknown type '" + type + "'");
}

const char* policy_name(ChannelPolicy p) { return p == ChannelPolicy::grey_to_rgb ? "grey_to_rgb" : "none"; }
const char* kind_name(OutputKind k) {
    return k == OutputKind::whole_input_classes ? "whole_input_classes" : "per_point_classes";
}

}  // namespace

std::string save_model(const ModelSpec& model) {
    json j;
    j["format_version"] = model.format_version;
    j["input_spec"] = {{"shape", model.input.shape},
                       {"value_scale", model.input.value_scale},
                       {"normalize_mean", model.input.normalize_mean},
                       {"normalize_std", model.input.normalize_std},
                       {"channel_policy", policy_name(model.input.channel_policy)}};
    json layers = json::array();
    for (const auto& layer : model.layers) layers.push_back(layer_to_json(layer));
    j["layers"] = std::move(layers);
    json colors = json::array();
    for (const auto& c : model.output.colors) colors.push_back(c);
    j["output_spec"] = {{"kind", kind_name(model.output.kind)}, {"labels", model.output.labels}, {"colors", colors}};
    if (!model.metadata.empty()) j["metadata"] = model.metadata;

    std::string out;
    write_json(j, out, 0);
    out += '\n';
    return out;
}

ModelSpec load_model(std::string_view text) {
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ModelError(std::string("model file is not valid JSON: ") + e.what());
    }
    const std::string root = "model";
    ModelSpec m;
    const json& version = field(j, "format_version", root);
    if (!version.is_number_integer()) throw ModelError("format_version must be an integer");
    m.format_version = version.get<int>();
    if (m.format_version != kModelFormatVersion) {
        throw ModelError("unsupported model format_version " + std::to_string(m.format_version) + " (expected " +
                         std::to_string(kModelFormatVersion) + ")");
    }

    const json& in = field(j, "input_spec", root);
    m.input.shape = get_as<std::vector<std::size_t>>(in, "shape", "input_spec");
    m.input.value_scale = get_as<double>(in, "value_scale", "input_spec");
    m.input.normalize_mean = get_as<std::vector<double>>(in, "normalize_mean", "input_spec");
    m.input.normalize_std = get_as<std::vector<double>>(in, "normalize_std", "input_spec");
    const auto policy = get_as<std::string>(in, "channel_policy", "input_spec");
    if (policy == "none") {
        m.input.channel_policy = ChannelPolicy::none;
    } else if (policy == "grey_to_rgb") {
        m.input.channel_policy = ChannelPolicy::grey_to_rgb;
    } else {
        throw ModelError("unknown channel_policy '" + policy + "'");
    }

    const json& layers = field(j, "layers", root);
    if (!layers.is_array()) throw ModelError("layers must be an array");
    for (std::size_t i = 0; i < layers.size(); ++i) m.layers.push_back(layer_from_json(layers[i], i));

    const json& out = field(j, "output_spec", root);
    const auto kind = get_as<std::string>(out, "kind", "output_spec");
    if (kind == "per_point_classes") {
        m.output.kind = OutputKind::per_point_classes;
    } else if (kind == "whole_input_classes") {
        m.output.kind = OutputKind::whole_input_classes;
    } else {
        throw ModelError("unknown output kind '" + kind + "'");
    }
    m.output.labels = get_as<std::vector<std::string>>(out, "labels", "output_spec");
    m.output.colors = get_as<std::vector<Rgb>>(out, "colors", "output_spec");

    if (auto it = j.find("metadata"); it != j.end()) {
        if (!it->is_object()) throw ModelError("metadata must be an object");
        for (const auto& [k, v] : it->items()) m.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
    for (const auto& [k, v] : j.items()) {
        if (k != "format_version" && k != "input_spec" && k != "layers" && k != "output_spec" && k != "metadata") {
            throw ModelError("unknown top-level field '" + k + "'");
        }
    }

    validate_model(m);
    return m;
}

}  // namespace fieldlens
