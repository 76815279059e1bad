#include "fieldlens/cli.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <pthread.h>
#include <thread>

#include "fieldlens/cavity.hpp"
#include "fieldlens/error.hpp"
#include "fieldlens/filters.hpp"
#include "fieldlens/render.hpp"
#include "fieldlens/service.hpp"
#include "fieldlens/text.hpp"
#include "fieldlens/trainer.hpp"
#include "fieldlens/vtk_io.hpp"

namespace fieldlens {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ValueRange parse_range(const std::string& s) {
    const auto comma = s.find(',');
    try {
        if (comma == std::string::npos) throw std::invalid_argument("");
        return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
    } catch (const std::exception&) {
        throw UsageError("--range expects 'lo,hi', got '" + s + "'");
    }
}

fs::path history_path(const fs::path& model, const std::string& flag) {
    if (!flag.empty()) return flag;
    fs::path h = model;
    h.replace_extension(".history.csv");
    return h;
}

TrainProgress epoch_logger(std::ostream& err, std::size_t every) {
    return [&err, every](std::size_t e, std::size_t n) {
        if ((e + 1) % every == 0 || e + 1 == n) err << "epoch " << e + 1 << "/" << n << "\n";
    };
}

void print_table(std::ostream& out, const TableDataset& t) {
    for (std::size_t c = 0; c < t.columns().size(); ++c) out << (c ? "\t" : "") << t.columns()[c].name;
    out << "\n";
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.columns().size(); ++c) {
            const auto& col = t.columns()[c];
            out << (c ? "\t" : "");
            if (const auto* v = std::get_if<std::vector<double>>(&col.data)) {
                out << format_real((*v)[r]);
            } else {
                out << std::get<std::vector<std::string>>(col.data)[r];
            }
        }
        out << "\n";
    }
}

int serve_until_signal(Service& service, const std::string& host, int port, std::ostream& err) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    const int bound = service.bind(host, port);
    err << "listening on http://" << host << ":" << bound << "  data dir " << service.data_dir().string() << "\n";
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        service.stop();
    });
    service.run();
    // run() can also return without a signal; wake the waiter so it can be joined.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    err << "stopped\n";
    return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"fieldlens: visualization pipelines with data-driven filters", "fieldlens"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    SimConfig sim;
    std::string sim_out, sim_tag = "run";
    auto* simulate = app.add_subcommand("simulate", "Run the lid-driven cavity solver and write snapshot files");
    simulate->add_option("--re", sim.re, "Reynolds number")->capture_default_str();
    simulate->add_option("--lid", sim.lid_velocity, "Lid velocity")->capture_default_str();
    simulate->add_option("--nx", sim.nx, "Cells along x")->capture_default_str();
    simulate->add_option("--ny", sim.ny, "Cells along y")->capture_default_str();
    simulate->add_option("--t-end", sim.t_end, "End time")->capture_default_str();
    simulate->add_option("--interval", sim.snapshot_interval, "Snapshot interval")->capture_default_str();
    simulate->add_option("--tau", sim.tau_safety, "Time-step safety factor")->capture_default_str();
    simulate->add_option("--gamma", sim.gamma, "Donor-cell blending")->capture_default_str();
    simulate->add_option("--omega", sim.sor_omega, "SOR relaxation")->capture_default_str();
    simulate->add_option("--sor-tol", sim.sor_tol, "SOR tolerance")->capture_default_str();
    simulate->add_option("--sor-max-iters", sim.sor_max_iters, "SOR iteration cap")->capture_default_str();
    simulate->add_option("--out", sim_out, "Output directory")->required();
    simulate->add_option("--tag", sim_tag, "File name tag")->capture_default_str();

    std::vector<std::string> tv_input;
    double tv_threshold = 0.01;
    VelocityPreset tv;
    bool tv_no_holdout = false;
    std::string tv_out, tv_history;
    auto* train_velocity = app.add_subcommand("train-velocity", "Train the velocity segmentation model");
    train_velocity->add_option("--input", tv_input, "Snapshot files or directories (default: simulate the Re=10, lid=2 scene)");
    train_velocity->add_option("--threshold", tv_threshold, "Velocity magnitude threshold")->capture_default_str();
    train_velocity->add_option("--epochs", tv.epochs, "Epochs")->capture_default_str();
    train_velocity->add_option("--lr", tv.learning_rate, "Adam learning rate")->capture_default_str();
    train_velocity->add_option("--seed", tv.seed, "Seed for initialization and split")->capture_default_str();
    train_velocity->add_flag("--no-holdout", tv_no_holdout, "Train on every snapshot instead of holding out the last");
    train_velocity->add_option("--out", tv_out, "Model file")->required();
    train_velocity->add_option("--history", tv_history, "Loss history CSV (default: next to the model)");

    std::vector<std::string> tp_input;
    double tp_threshold = 5.0;
    PressurePreset tp;
    std::string tp_out, tp_history;
    auto* train_pressure = app.add_subcommand("train-pressure", "Train the pressure classification model");
    train_pressure->add_option("--input", tp_input, "Snapshot files or directories (default: simulate the corpus)");
    train_pressure->add_option("--threshold", tp_threshold, "Maximum-pressure threshold")->capture_default_str();
    train_pressure->add_option("--epochs", tp.epochs, "Epochs")->capture_default_str();
    train_pressure->add_option("--lr", tp.learning_rate, "Adam learning rate")->capture_default_str();
    train_pressure->add_option("--seed", tp.seed, "Seed for initialization and split")->capture_default_str();
    train_pressure->add_option("--out", tp_out, "Model file")->required();
    train_pressure->add_option("--history", tp_history, "Loss history CSV (default: next to the model)");

    std::string ap_model, ap_input, ap_out, ap_array;
    std::size_t ap_top_k = 10;
    auto* apply = app.add_subcommand("apply", "Run a data-driven filter on a file");
    apply->add_option("--model", ap_model, "Model file")->required();
    apply->add_option("--input", ap_input, "Input .vtk or .png")->required();
    apply->add_option("--out", ap_out, "Output .vtk/.png for grids, .csv for tables (tables also print)");
    apply->add_option("--array", ap_array, "Input point array (default: first)");
    apply->add_option("--top-k", ap_top_k, "Rows kept in classification tables")->capture_default_str();

    std::string rd_input, rd_out, rd_array, rd_tf = "greyscale", rd_range;
    std::size_t rd_w = 0, rd_h = 0;
    auto* render = app.add_subcommand("render", "Render a grid array to PNG");
    render->add_option("--input", rd_input, "Input .vtk or .png")->required();
    render->add_option("--out", rd_out, "Output PNG")->required();
    render->add_option("--array", rd_array, "Point array (default: first)");
    render->add_option("--tf", rd_tf, "Transfer function")->capture_default_str();
    render->add_option("--range", rd_range, "Scalar range lo,hi (default: data range)");
    render->add_option("--width", rd_w, "Image width (default: grid width)");
    render->add_option("--height", rd_h, "Image height (default: grid height)");

    std::string sv_host = "127.0.0.1", sv_data;
    int sv_port = 8080;
    std::size_t sv_jobs = 0;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--host", sv_host, "Listen address")->capture_default_str();
    serve->add_option("--port", sv_port, "Port (0: any free port)")->capture_default_str();
    serve->add_option("--data-dir", sv_data, "Data directory (default: $FIELDLENS_DATA_DIR or ./fieldlens-data)");
    serve->add_option("--jobs", sv_jobs, "Job workers (0: one per processor)")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }

    try {
        if (*simulate) {
            validate_config(sim);
            const auto series = run(sim);
            const auto paths = write_snapshots(series, sim, sim_out, sim_tag);
            out << "wrote " << paths.size() << " snapshots to " << sim_out << "\n";
        } else if (*train_velocity) {
            std::vector<fs::path> inputs(tv_input.begin(), tv_input.end());
            auto snaps = inputs.empty() ? simulate_velocity_scene() : load_snapshots(inputs);
            const auto ex = velocity_experiment(std::move(snaps), tv_threshold, tv, !tv_no_holdout,
                                                epoch_logger(err, std::max<std::size_t>(1, tv.epochs / 10)));
            save_model_file(tv_out, ex.result.model);
            write_history_csv(history_path(tv_out, tv_history), ex.result.history);
            out << "model " << tv_out << ": " << parameter_count(ex.result.model) << " parameters, " << ex.rows
                << " rows (" << ex.above << " above), validation accuracy " << format_short(ex.val_accuracy) << "\n";
            if (ex.holdout_agreement) {
                out << "held-out " << *ex.holdout_id << ": agreement " << format_short(*ex.holdout_agreement) << "\n";
            }
        } else if (*train_pressure) {
            std::vector<fs::path> inputs(tp_input.begin(), tp_input.end());
            const auto snaps = inputs.empty() ? simulate_pressure_corpus() : load_snapshots(inputs);
            const auto ex = pressure_experiment(snaps, tp_threshold, tp,
                                                epoch_logger(err, std::max<std::size_t>(1, tp.epochs / 10)));
            save_model_file(tp_out, ex.result.model);
            write_history_csv(history_path(tp_out, tp_history), ex.result.history);
            out << "model " << tp_out << ": " << parameter_count(ex.result.model) << " parameters, " << ex.low + ex.high
                << " fields (" << ex.low << " Low, " << ex.high << " High), validation accuracy "
                << format_short(ex.val_accuracy) << "\n";
        } else if (*apply) {
            const Dataset result = data_driven_transform(load_grid(ap_input), fs::path(ap_model), {ap_array, ap_top_k});
            if (const auto* t = std::get_if<TableDataset>(&result)) {
                print_table(out, *t);
                if (!ap_out.empty()) write_file(ap_out, write_csv(*t));
            } else {
                if (ap_out.empty()) throw UsageError("--out is required for grid outputs");
                const GridDataset g = std::holds_alternative<ImageDataset>(result)
                                          ? GridDataset(std::get<ImageDataset>(result))
                                          : GridDataset(std::get<RectilinearDataset>(result));
                if (fs::path(ap_out).extension() == ".png") {
                    RenderOptions o;
                    o.array = "color";
                    write_file(ap_out, render_png(g, o));
                } else {
                    save_grid(ap_out, g);
                }
                out << "wrote " << ap_out << "\n";
            }
        } else if (*render) {
            RenderOptions o;
            o.array = rd_array;
            o.transfer_function = rd_tf;
            if (!rd_range.empty()) o.range = parse_range(rd_range);
            o.width = rd_w;
            o.height = rd_h;
            write_file(rd_out, render_png(load_grid(rd_input), o));
            out << "wrote " << rd_out << "\n";
        } else if (*serve) {
            Service service({resolve_data_dir(sv_data), sv_jobs});
            return serve_until_signal(service, sv_host, sv_port, err);
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace fieldlens
