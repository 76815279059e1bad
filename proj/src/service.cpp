#include "fieldlens/service.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <mutex>
#include <regex>

#include "fieldlens/cavity.hpp"
#include "fieldlens/error.hpp"
#include "fieldlens/filters.hpp"
#include "fieldlens/pipeline.hpp"
#include "fieldlens/render.hpp"
#include "fieldlens/text.hpp"
#include "fieldlens/trainer.hpp"
#include "fieldlens/vtk_io.hpp"

namespace fieldlens {

namespace fs = std::filesystem;
using json = nlohmann::json;

fs::path resolve_data_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("FIELDLENS_DATA_DIR"); env && *env) return env;
    return "fieldlens-data";
}

namespace {

struct NotFound : Error {
    using Error::Error;
};

struct BadRequest : Error {
    using Error::Error;
};

bool valid_id(const std::string& id) {
    static const std::regex re("[A-Za-z0-9_.+-]+");
    return !id.empty() && id != "." && id != ".." && std::regex_match(id, re);
}

std::string sanitize_id(std::string s) {
    for (auto& c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '+' || c == '-')) c = '_';
    }
    return s.empty() ? "item" : s;
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw BadRequest(std::string("malformed JSON body: ") + e.what());
    }
}

template <class T>
T field(const json& j, const char* name, T fallback) {
    if (!j.contains(name) || j[name].is_null()) return fallback;
    try {
        return j[name].get<T>();
    } catch (const json::exception&) {
        throw PreconditionError(std::string("field '") + name + "' has the wrong type");
    }
}

ParamValue to_param(const std::string& name, const json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return v.get<std::string>();
    throw PreconditionError("parameter '" + name + "' must be a number or a string");
}

json from_param(const ParamValue& v) {
    return std::visit([](const auto& x) { return json(x); }, v);
}

json params_json(const ParamMap& p) {
    json j = json::object();
    for (const auto& [k, v] : p) j[k] = from_param(v);
    return j;
}

const char* grid_type(const Dataset& d) {
    if (std::holds_alternative<ImageDataset>(d)) return "image";
    if (std::holds_alternative<RectilinearDataset>(d)) return "rectilinear";
    return "table";
}

json describe_grid(const GridDataset& g) {
    const auto dims = grid_dims(g);
    json arrays = json::array();
    for (const auto& a : point_arrays(g)) {
        json entry{{"name", a.name()}, {"components", a.components()}};
        if (a.tuples() > 0) {
            const DataArray scalar = a.components() == 1 ? a : magnitude(a);
            const auto v = scalar.values();
            entry["range"] = {*std::min_element(v.begin(), v.end()), *std::max_element(v.begin(), v.end())};
        }
        arrays.push_back(entry);
    }
    return {{"type", std::holds_alternative<ImageDataset>(g) ? "image" : "rectilinear"},
            {"dims", {dims[0], dims[1], dims[2]}},
            {"arrays", arrays}};
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

json table_json(const TableDataset& t) {
    json columns = json::array(), rows = json::array();
    for (const auto& c : t.columns()) columns.push_back(c.name);
    for (std::size_t r = 0; r < t.rows(); ++r) {
        json row = json::object();
        for (const auto& c : t.columns()) {
            if (const auto* nums = std::get_if<std::vector<double>>(&c.data)) {
                const double v = (*nums)[r];
                if (c.name == "rank") {
                    row[c.name] = static_cast<std::int64_t>(v);
                } else if (c.name == "confidence_percent") {
                    row[c.name] = round4(v);
                } else {
                    row[c.name] = v;
                }
            } else {
                row[c.name] = std::get<std::vector<std::string>>(c.data)[r];
            }
        }
        rows.push_back(row);
    }
    return {{"columns", columns}, {"rows", rows}};
}

RenderOptions render_options(const httplib::Request& req, const GridDataset& g) {
    RenderOptions o;
    if (req.has_param("array")) {
        o.array = req.get_param_value("array");
    } else if (find_array(g, "color")) {
        o.array = "color";
    }
    if (req.has_param("tf")) o.transfer_function = req.get_param_value("tf");
    builtin_transfer_function(o.transfer_function);
    if (req.has_param("range")) {
        const std::string r = req.get_param_value("range");
        const auto comma = r.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument("");
            o.range = ValueRange{std::stod(r.substr(0, comma)), std::stod(r.substr(comma + 1))};
        } catch (const std::exception&) {
            throw PreconditionError("range must be 'lo,hi', got '" + r + "'");
        }
    }
    const auto dimension = [&](const char* name) -> std::size_t {
        if (!req.has_param(name)) return 0;
        const std::string s = req.get_param_value(name);
        try {
            const long v = std::stol(s);
            if (v < 1 || v > 8192) throw std::out_of_range("");
            return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            throw PreconditionError(std::string(name) + " must be an integer in [1, 8192], got '" + s + "'");
        }
    };
    o.width = dimension("w");
    o.height = dimension("h");
    if (req.has_param("direct")) o.direct_color = req.get_param_value("direct") == "1" || req.get_param_value("direct") == "true";
    return o;
}

struct PipelineEntry {
    std::mutex mutex;
    json doc;
    Pipeline pipeline;

    explicit PipelineEntry(const FilterRegistry& r) : pipeline(r) {}
};

}  // namespace

struct Service::Impl {
    ServiceOptions options;
    fs::path datasets, models, pipelines_dir;
    FilterRegistry registry;
    httplib::Server server;

    std::mutex store_mutex;  // dataset/model file allocation and the pipeline table
    std::map<std::string, std::shared_ptr<PipelineEntry>> pipelines;
    std::size_t next_pipeline = 1;
    JobQueue jobs;  // last: workers use the members above until joined

    explicit Impl(ServiceOptions o)
        : options(std::move(o)),
          datasets(options.data_dir / "datasets"),
          models(options.data_dir / "models"),
          pipelines_dir(options.data_dir / "pipelines"),
          registry(make_default_registry({options.data_dir / "models"})),
          jobs(options.jobs) {
        fs::create_directories(datasets);
        fs::create_directories(models);
        fs::create_directories(pipelines_dir);
        load_pipelines();
        routes();
    }

    // --- datasets -------------------------------------------------------

    fs::path dataset_path(const std::string& id) const {
        if (valid_id(id)) {
            for (const char* ext : {".vtk", ".png"}) {
                fs::path p = datasets / (id + ext);
                if (fs::is_regular_file(p)) return p;
            }
        }
        throw NotFound("no dataset '" + id + "'");
    }

    json list_datasets() const {
        std::vector<json> out;
        for (const auto& e : fs::directory_iterator(datasets)) {
            const auto ext = e.path().extension();
            if (e.is_regular_file() && (ext == ".vtk" || ext == ".png")) {
                out.push_back({{"id", e.path().stem().string()},
                               {"format", ext == ".vtk" ? "legacy" : "png"},
                               {"bytes", e.file_size()}});
            }
        }
        std::sort(out.begin(), out.end(), [](const json& a, const json& b) { return a["id"] < b["id"]; });
        return out;
    }

    std::string store_dataset(const std::string& filename, const std::string& bytes) {
        const fs::path name(filename);
        std::string ext = name.extension().string();
        const bool png = bytes.size() >= 8 && bytes.compare(0, 8, "\x89PNG\r\n\x1a\n") == 0;
        if (ext != ".vtk" && ext != ".png") ext = png ? ".png" : ".vtk";
        if (ext == ".png") {
            read_png(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
        } else {
            parse_legacy(bytes);
        }
        std::lock_guard lock(store_mutex);
        const std::string stem = sanitize_id(name.stem().string());
        std::string id = stem;
        for (int k = 2; fs::exists(datasets / (id + ".vtk")) || fs::exists(datasets / (id + ".png")); ++k) {
            id = stem + "-" + std::to_string(k);
        }
        write_file(datasets / (id + ext), bytes);
        return id;
    }

    // --- models ---------------------------------------------------------

    static json model_summary(const std::string& id, const ModelSpec& m) {
        return {{"id", id},
                {"kind", m.output.kind == OutputKind::per_point_classes ? "per_point_classes" : "whole_input_classes"},
                {"input_shape", m.input.shape},
                {"labels", m.output.labels},
                {"parameters", parameter_count(m)}};
    }

    json list_models() const {
        std::vector<json> out;
        for (const auto& e : fs::directory_iterator(models)) {
            if (!e.is_regular_file() || e.path().extension() != ".json") continue;
            const std::string id = e.path().stem().string();
            try {
                out.push_back(model_summary(id, load_model_file(e.path())));
            } catch (const std::exception& ex) {
                out.push_back({{"id", id}, {"error", ex.what()}});
            }
        }
        std::sort(out.begin(), out.end(), [](const json& a, const json& b) { return a["id"] < b["id"]; });
        return out;
    }

    json model_detail(const std::string& id) const {
        const fs::path p = models / (id + ".json");
        if (!valid_id(id) || !fs::is_regular_file(p)) throw NotFound("no model '" + id + "'");
        const ModelSpec m = load_model_file(p);
        json j = model_summary(id, m);
        json layers = json::array();
        for (const auto& l : m.layers) {
            json e{{"type", layer_name(l)}};
            if (const auto* lin = std::get_if<Linear>(&l)) {
                e["in"] = lin->in;
                e["out"] = lin->out;
            }
            layers.push_back(e);
        }
        j["layers"] = layers;
        j["metadata"] = m.metadata;
        j["file"] = (fs::path("models") / (id + ".json")).string();
        return j;
    }

    // --- pipelines ------------------------------------------------------

    std::shared_ptr<PipelineEntry> build_pipeline(json doc) {
        if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array()) {
            throw PreconditionError("pipeline document needs a 'nodes' array");
        }
        auto entry = std::make_shared<PipelineEntry>(registry);
        Pipeline& p = entry->pipeline;
        for (const auto& n : doc["nodes"]) {
            const auto id = field<std::string>(n, "id", "");
            const auto type = field<std::string>(n, "type", "");
            if (type == "source") {
                const auto ds = field<std::string>(n, "dataset", "");
                if (ds.empty()) throw PipelineError(id, "source nodes need a 'dataset' id");
                fs::path path;
                try {
                    path = dataset_path(ds);
                } catch (const NotFound& e) {
                    throw PipelineError(id, e.what());
                }
                p.add_source(id, std::visit([](auto g) -> Dataset { return g; }, load_grid(path)));
            } else {
                ParamMap params;
                if (n.contains("params")) {
                    if (!n["params"].is_object()) throw PipelineError(id, "'params' must be an object");
                    for (const auto& [k, v] : n["params"].items()) params[k] = to_param(k, v);
                }
                p.add_filter(id, type, params);
            }
        }
        if (doc.contains("edges")) {
            if (!doc["edges"].is_array()) throw PreconditionError("'edges' must be an array");
            for (const auto& e : doc["edges"]) {
                const auto from = field<std::string>(e, "from", ""), to = field<std::string>(e, "to", "");
                if (!p.contains(from)) throw PipelineError(from, "edge refers to an unknown node");
                if (p.contains(to) && p.node(to).input) throw PipelineError(to, "filters have a single input port");
                p.connect(from, to);
            }
        } else {
            doc["edges"] = json::array();
        }
        entry->doc = std::move(doc);
        return entry;
    }

    void persist(const PipelineEntry& e) {
        write_file(pipelines_dir / (e.doc["id"].get<std::string>() + ".json"), e.doc.dump(2) + "\n");
    }

    void load_pipelines() {
        for (const auto& f : fs::directory_iterator(pipelines_dir)) {
            if (f.path().extension() != ".json") continue;
            try {
                auto entry = build_pipeline(json::parse(read_text_file(f.path())));
                const std::string id = entry->doc.value("id", f.path().stem().string());
                entry->doc["id"] = id;
                pipelines[id] = entry;
            } catch (const std::exception&) {
                // Unreadable documents stay on disk but are not served.
            }
        }
        next_pipeline = pipelines.size() + 1;
    }

    std::shared_ptr<PipelineEntry> pipeline(const std::string& id) {
        std::lock_guard lock(store_mutex);
        auto it = pipelines.find(id);
        if (it == pipelines.end()) throw NotFound("no pipeline '" + id + "'");
        return it->second;
    }

    json describe_pipeline(PipelineEntry& e) {
        json nodes = json::array();
        for (const auto& id : e.pipeline.node_ids()) {
            const auto& n = e.pipeline.node(id);
            json j{{"id", id}, {"type", n.type}, {"executions", n.execution_count}};
            if (n.type != "source") j["params"] = params_json(n.params);
            if (n.input) j["input"] = *n.input;
            if (n.output) j["output"] = grid_type(*n.output);
            nodes.push_back(j);
        }
        return {{"id", e.doc["id"]}, {"nodes", nodes}, {"edges", e.doc["edges"]}};
    }

    // --- jobs -----------------------------------------------------------

    std::string submit_simulation(const json& body) {
        SimConfig c;
        c.re = field(body, "re", c.re);
        c.lid_velocity = field(body, "lid", c.lid_velocity);
        c.nx = field<std::size_t>(body, "nx", c.nx);
        c.ny = field<std::size_t>(body, "ny", c.ny);
        c.t_end = field(body, "t_end", c.t_end);
        c.snapshot_interval = field(body, "interval", c.snapshot_interval);
        c.tau_safety = field(body, "tau", c.tau_safety);
        c.gamma = field(body, "gamma", c.gamma);
        c.sor_omega = field(body, "omega", c.sor_omega);
        c.sor_tol = field(body, "sor_tol", c.sor_tol);
        c.sor_max_iters = field(body, "sor_max_iters", c.sor_max_iters);
        validate_config(c);
        const std::string tag = sanitize_id(field<std::string>(body, "tag", corpus_tag(c)));
        return jobs.submit("simulate", [this, c, tag](JobContext& ctx) -> json {
            const auto series = fieldlens::run(c, [&](const FlowState& s, const StepStats&) { ctx.report(s.t / c.t_end); });
            json ids = json::array();
            std::lock_guard lock(store_mutex);
            for (const auto& p : write_snapshots(series, c, datasets, tag)) ids.push_back(p.stem().string());
            return {{"datasets", ids}};
        });
    }

    std::vector<NamedSnapshot> snapshots_from(const json& ids) {
        std::vector<fs::path> paths;
        for (const auto& id : ids) paths.push_back(dataset_path(id.get<std::string>()));
        return load_snapshots(paths);
    }

    std::string submit_training(const json& body) {
        const auto kind = field<std::string>(body, "kind", "");
        if (kind != "velocity" && kind != "pressure") throw PreconditionError("'kind' must be 'velocity' or 'pressure'");
        const std::string name = sanitize_id(field<std::string>(body, "name", kind + "-model"));
        std::optional<std::vector<NamedSnapshot>> snaps;
        if (body.contains("datasets")) {
            if (!body["datasets"].is_array()) throw PreconditionError("'datasets' must be an array of ids");
            snaps = snapshots_from(body["datasets"]);
        }
        const std::uint64_t seed = field<std::uint64_t>(body, "seed", 42);
        const double lr = field(body, "learning_rate", 5e-4);

        if (kind == "velocity") {
            VelocityPreset preset;
            preset.epochs = field<std::size_t>(body, "epochs", preset.epochs);
            preset.learning_rate = lr;
            preset.seed = seed;
            const double threshold = field(body, "threshold", 0.01);
            const bool holdout = field(body, "holdout_last", true);
            return jobs.submit("train", [this, preset, threshold, holdout, name, snaps](JobContext& ctx) -> json {
                const double sim_share = snaps ? 0.0 : 0.2;
                auto data = snaps ? *snaps : simulate_velocity_scene([&](const FlowState& s, const StepStats&) {
                    ctx.report(sim_share * s.t / SimConfig{}.t_end);
                });
                const auto ex = velocity_experiment(std::move(data), threshold, preset, holdout, [&](std::size_t e, std::size_t n) {
                    ctx.report(sim_share + (1.0 - sim_share) * static_cast<double>(e + 1) / static_cast<double>(n));
                });
                json r = save_trained(name, ex.result);
                r["rows"] = ex.rows;
                r["above"] = ex.above;
                r["val_accuracy"] = ex.val_accuracy;
                if (ex.holdout_agreement) {
                    r["holdout"] = *ex.holdout_id;
                    r["holdout_agreement"] = *ex.holdout_agreement;
                }
                return r;
            });
        }
        PressurePreset preset;
        preset.epochs = field<std::size_t>(body, "epochs", preset.epochs);
        preset.learning_rate = lr;
        preset.seed = seed;
        const double threshold = field(body, "threshold", 5.0);
        return jobs.submit("train", [this, preset, threshold, name, snaps](JobContext& ctx) -> json {
            const double sim_share = snaps ? 0.0 : 0.3;
            auto data = snaps ? *snaps : simulate_pressure_corpus([&](std::size_t i, std::size_t n) {
                ctx.report(sim_share * static_cast<double>(i + 1) / static_cast<double>(n));
            });
            const auto ex = pressure_experiment(data, threshold, preset, [&](std::size_t e, std::size_t n) {
                ctx.report(sim_share + (1.0 - sim_share) * static_cast<double>(e + 1) / static_cast<double>(n));
            });
            json r = save_trained(name, ex.result);
            r["low"] = ex.low;
            r["high"] = ex.high;
            r["val_accuracy"] = ex.val_accuracy;
            return r;
        });
    }

    json save_trained(const std::string& name, const TrainResult& r) {
        std::lock_guard lock(store_mutex);
        save_model_file(models / (name + ".json"), r.model);
        write_history_csv(models / (name + ".history.csv"), r.history);
        return {{"model", name},
                {"history", (fs::path("models") / (name + ".history.csv")).string()},
                {"final_train_loss", r.history.train_loss.back()},
                {"final_val_loss", r.history.val_loss.back()}};
    }

    // --- routing --------------------------------------------------------

    template <class F>
    httplib::Server::Handler guarded(F f) {
        return [f](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const BadRequest& e) {
                send_json(res, 400, {{"error", e.what()}});
            } catch (const NotFound& e) {
                send_json(res, 404, {{"error", e.what()}});
            } catch (const PipelineError& e) {
                send_json(res, 422, {{"error", e.what()}, {"node", e.node()}});
            } catch (const Error& e) {
                send_json(res, 422, {{"error", e.what()}});
            } catch (const std::exception& e) {
                send_json(res, 500, {{"error", e.what()}});
            }
        };
    }

    void routes() {
        auto& s = server;
        s.set_payload_max_length(256u << 20);

        s.Get("/api/health", guarded([](const auto&, auto& res) { send_json(res, 200, {{"status", "ok"}}); }));

        s.Get("/api/filters", guarded([this](const auto&, auto& res) {
            json types = json::array();
            for (const auto& t : registry.types()) {
                json params = json::array();
                for (const auto& p : t.params) {
                    json pj{{"name", p.name}, {"type", param_type_name(p.type)}, {"required", p.required},
                            {"description", p.description}};
                    pj["default"] = p.default_value ? from_param(*p.default_value) : json(nullptr);
                    params.push_back(pj);
                }
                types.push_back({{"name", t.name}, {"description", t.description}, {"input", data_kind_name(t.input)},
                                 {"output", data_kind_name(t.output)}, {"params", params}});
            }
            send_json(res, 200, {{"filters", types}, {"transfer_functions", builtin_transfer_function_names()}});
        }));

        s.Get("/api/datasets", guarded([this](const auto&, auto& res) { send_json(res, 200, {{"datasets", list_datasets()}}); }));
        s.Get(R"(/api/datasets/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
            const std::string id = req.matches[1];
            const fs::path p = dataset_path(id);
            json j = describe_grid(load_grid(p));
            j["id"] = id;
            j["format"] = p.extension() == ".vtk" ? "legacy" : "png";
            send_json(res, 200, j);
        }));
        s.Get(R"(/api/datasets/([^/]+)/render)", guarded([this](const httplib::Request& req, auto& res) {
            const GridDataset g = load_grid(dataset_path(req.matches[1]));
            const auto png = render_png(g, render_options(req, g));
            res.set_content(std::string(png.begin(), png.end()), "image/png");
        }));
        s.Post("/api/datasets", guarded([this](const httplib::Request& req, auto& res) {
            std::string id;
            if (req.is_multipart_form_data()) {
                if (!req.has_file("file")) throw BadRequest("multipart upload needs a 'file' part");
                const auto f = req.get_file_value("file");
                id = store_dataset(f.filename.empty() ? "upload" : f.filename, f.content);
            } else {
                if (req.body.empty()) throw BadRequest("empty upload");
                id = store_dataset(req.has_param("name") ? req.get_param_value("name") : "upload", req.body);
            }
            send_json(res, 201, {{"id", id}});
        }));

        s.Post("/api/simulate", guarded([this](const httplib::Request& req, auto& res) {
            send_json(res, 202, {{"job", submit_simulation(parse_body(req))}});
        }));
        s.Post("/api/train", guarded([this](const httplib::Request& req, auto& res) {
            send_json(res, 202, {{"job", submit_training(parse_body(req))}});
        }));
        s.Get("/api/jobs", guarded([this](const auto&, auto& res) {
            json out = json::array();
            for (const auto& j : jobs.list()) out.push_back(to_json(j));
            send_json(res, 200, {{"jobs", out}});
        }));
        s.Get(R"(/api/jobs/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
            const auto job = jobs.get(req.matches[1]);
            if (!job) throw NotFound("no job '" + std::string(req.matches[1]) + "'");
            send_json(res, 200, to_json(*job));
        }));

        s.Get("/api/models", guarded([this](const auto&, auto& res) { send_json(res, 200, {{"models", list_models()}}); }));
        s.Get(R"(/api/models/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
            send_json(res, 200, model_detail(req.matches[1]));
        }));

        s.Get("/api/pipelines", guarded([this](const auto&, auto& res) {
            json ids = json::array();
            std::lock_guard lock(store_mutex);
            for (const auto& [id, e] : pipelines) ids.push_back(id);
            send_json(res, 200, {{"pipelines", ids}});
        }));
        s.Post("/api/pipelines", guarded([this](const httplib::Request& req, auto& res) {
            json doc = parse_body(req);
            std::string id;
            if (doc.contains("id")) {
                id = field<std::string>(doc, "id", "");
                if (!valid_id(id)) throw PreconditionError("invalid pipeline id '" + id + "'");
            }
            auto entry = build_pipeline(std::move(doc));
            {
                std::lock_guard lock(store_mutex);
                if (id.empty()) {
                    do {
                        id = "pipeline-" + std::to_string(next_pipeline++);
                    } while (pipelines.count(id));
                } else if (pipelines.count(id)) {
                    throw PreconditionError("pipeline '" + id + "' already exists");
                }
                entry->doc["id"] = id;
                pipelines[id] = entry;
                persist(*entry);
            }
            std::lock_guard lock(entry->mutex);
            send_json(res, 201, describe_pipeline(*entry));
        }));
        s.Get(R"(/api/pipelines/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
            auto e = pipeline(req.matches[1]);
            std::lock_guard lock(e->mutex);
            send_json(res, 200, describe_pipeline(*e));
        }));
        s.Patch(R"(/api/pipelines/([^/]+)/nodes/([^/]+)/params)", guarded([this](const httplib::Request& req, auto& res) {
            auto e = pipeline(req.matches[1]);
            const std::string nid = req.matches[2];
            const json body = parse_body(req);
            if (!body.is_object()) throw PreconditionError("PATCH body must be an object of parameter values");
            ParamMap changes;
            for (const auto& [k, v] : body.items()) changes[k] = to_param(k, v);
            std::lock_guard lock(e->mutex);
            if (!e->pipeline.contains(nid)) throw NotFound("no node '" + nid + "'");
            const bool changed = e->pipeline.set_params(nid, changes);
            const json params = params_json(e->pipeline.node(nid).params);
            for (auto& n : e->doc["nodes"]) {
                if (n.value("id", "") == nid) n["params"] = params;
            }
            {
                std::lock_guard store(store_mutex);
                persist(*e);
            }
            send_json(res, 200, {{"node", nid}, {"changed", changed}, {"params", params}});
        }));
        s.Get(R"(/api/pipelines/([^/]+)/nodes/([^/]+)/render)", guarded([this](const httplib::Request& req, auto& res) {
            auto e = pipeline(req.matches[1]);
            const std::string nid = req.matches[2];
            std::lock_guard lock(e->mutex);
            if (!e->pipeline.contains(nid)) throw NotFound("no node '" + nid + "'");
            const Dataset& out = e->pipeline.update(nid);
            if (std::holds_alternative<TableDataset>(out)) {
                send_json(res, 409, {{"error", "node '" + nid + "' produces a table; use the table endpoint"}});
                return;
            }
            const GridDataset g = std::visit([](const auto& d) -> GridDataset {
                if constexpr (std::is_same_v<std::decay_t<decltype(d)>, TableDataset>) {
                    throw Error("unreachable");
                } else {
                    return d;
                }
            }, out);
            const auto png = render_png(g, render_options(req, g));
            res.set_content(std::string(png.begin(), png.end()), "image/png");
        }));
        s.Get(R"(/api/pipelines/([^/]+)/nodes/([^/]+)/table)", guarded([this](const httplib::Request& req, auto& res) {
            auto e = pipeline(req.matches[1]);
            const std::string nid = req.matches[2];
            std::lock_guard lock(e->mutex);
            if (!e->pipeline.contains(nid)) throw NotFound("no node '" + nid + "'");
            const Dataset& out = e->pipeline.update(nid);
            const auto* t = std::get_if<TableDataset>(&out);
            if (!t) {
                send_json(res, 409, {{"error", "node '" + nid + "' produces a grid; use the render endpoint"}});
                return;
            }
            send_json(res, 200, table_json(*t));
        }));
    }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() {
    stop();
}

int Service::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->server.bind_to_any_port(host);
        if (p < 0) throw Error("could not bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port)) throw Error("could not bind " + host + ":" + std::to_string(port));
    return port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
    impl_->jobs.shutdown();
    impl_->server.stop();
}

JobQueue& Service::jobs() { return impl_->jobs; }

const fs::path& Service::data_dir() const { return impl_->options.data_dir; }

}  // namespace fieldlens
