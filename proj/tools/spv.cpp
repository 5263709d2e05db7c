// spv: kernel precompute, rendering, benchmarking, streaming and headless
// experiment runs.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include "spv/error.hpp"
#include "spv/image_io.hpp"
#include "spv/implant.hpp"
#include "spv/kernel_io.hpp"
#include "spv/parallel.hpp"
#include "spv/percept.hpp"
#include "spv/pipeline.hpp"
#include "spv/stream.hpp"
#include "spv/tasks.hpp"
#include "spv/trial_log.hpp"

#ifndef SPV_BUILD_FLAGS
#define SPV_BUILD_FLAGS ""
#endif

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

enum Exit { kOk = 0, kUsage = 2, kValidation = 3, kIo = 4 };

struct Options {
    std::string config_path;
    // shared
    std::string device = "argus2";
    unsigned workers = 0;
    std::string kernels;
    bool no_sobel = false;
    bool no_gaussian = false;
    // precompute
    double rho = 300.0;
    double lambda = 1000.0;
    int grid = 401;
    std::string out;
    // render
    std::string in;
    // bench
    int frames = 300;
    int input_size = 86;
    bool loopback = false;
    std::string report;
    // serve
    int port = 5757;
    // experiment
    std::string task = "letter";
    std::uint64_t seed = 1;
    std::string policy;
    std::string display = "monitor";
    std::string paths;
};

// Keys accepted in a --config document, mapped onto Options.
void apply_config(const json& doc, Options& o) {
    if (!doc.is_object()) throw spv::ConfigError("config file must hold a JSON object");
    for (const auto& [key, v] : doc.items()) {
        try {
            if (key == "device") o.device = v.get<std::string>();
            else if (key == "workers") o.workers = v.get<unsigned>();
            else if (key == "kernels") o.kernels = v.get<std::string>();
            else if (key == "sobel") o.no_sobel = !v.get<bool>();
            else if (key == "gaussian") o.no_gaussian = !v.get<bool>();
            else if (key == "rho") o.rho = v.get<double>();
            else if (key == "lambda") o.lambda = v.get<double>();
            else if (key == "grid") o.grid = v.get<int>();
            else if (key == "out") o.out = v.get<std::string>();
            else if (key == "in") o.in = v.get<std::string>();
            else if (key == "frames") o.frames = v.get<int>();
            else if (key == "input_size") o.input_size = v.get<int>();
            else if (key == "report") o.report = v.get<std::string>();
            else if (key == "port") o.port = v.get<int>();
            else if (key == "task") o.task = v.get<std::string>();
            else if (key == "seed") o.seed = v.get<std::uint64_t>();
            else if (key == "policy") o.policy = v.get<std::string>();
            else if (key == "display") o.display = v.get<std::string>();
            else if (key == "paths") o.paths = v.get<std::string>();
            else throw spv::ConfigError("unknown config key '" + key + "'");
        } catch (const json::exception& e) {
            throw spv::ConfigError("config key '" + key + "': " + e.what());
        }
    }
}

/// Finds --config in argv ahead of the full parse so file values can act as
/// defaults that flags override.
std::string prescan_config(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return {};
}

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw spv::IoError("cannot open config '" + path + "'");
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw spv::ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

unsigned effective_workers(const Options& o, bool flag_given) {
    if (flag_given && o.workers > 0) return o.workers;
    if (const char* env = std::getenv("SPV_THREADS"); env != nullptr && *env != '\0') {
        unsigned value = 0;
        const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), value);
        if (ec != std::errc{} || *ptr != '\0' || value == 0)
            throw spv::ConfigError(std::string("SPV_THREADS must be a positive integer, got '") + env + "'");
        return value;
    }
    return spv::resolve_workers(o.workers);
}

spv::implant::ElectrodeArray array_for_kernels(const spv::kernel_io::KernelFile& kf, const std::string& device,
                                               bool device_given) {
    using namespace spv::implant;
    if (device_given) return make_grid(resolve_device(device));
    for (const auto& name : preset_names()) {
        const auto spec = device_preset(name);
        if (static_cast<std::size_t>(spec.electrode_count()) == kf.kernels.size()) return make_grid(spec);
    }
    throw spv::ConfigError("no preset has " + std::to_string(kf.kernels.size()) + " electrodes; pass --device");
}

std::shared_ptr<const spv::percept::KernelSet> load_kernels(const Options& o, bool device_given) {
    if (o.kernels.empty()) throw spv::ConfigError("--kernels is required");
    auto kf = spv::kernel_io::read_file(o.kernels);
    auto array = array_for_kernels(kf, o.device, device_given);
    return std::make_shared<const spv::percept::KernelSet>(spv::kernel_io::to_set(std::move(kf), std::move(array)));
}

spv::pipeline::PipelineConfig pipeline_config(const Options& o, std::shared_ptr<const spv::percept::KernelSet> ks) {
    auto cfg = spv::pipeline::PipelineConfig::for_kernels(std::move(ks));
    cfg.sobel = !o.no_sobel;
    cfg.gaussian = !o.no_gaussian;
    return cfg;
}

json effective_json(const std::string& cmd, const Options& o, unsigned workers) {
    json j{{"command", cmd}, {"workers", workers}};
    if (cmd == "precompute") {
        j.update({{"device", o.device}, {"rho", o.rho}, {"lambda", o.lambda}, {"grid", o.grid}, {"out", o.out}});
    } else if (cmd == "render" || cmd == "bench" || cmd == "serve") {
        j.update({{"kernels", o.kernels}, {"device", o.device}, {"sobel", !o.no_sobel}, {"gaussian", !o.no_gaussian}});
        if (cmd == "render") j.update({{"in", o.in}, {"out", o.out}});
        if (cmd == "bench")
            j.update({{"frames", o.frames}, {"input_size", o.input_size}, {"loopback", o.loopback}, {"report", o.report}});
        if (cmd == "serve") j["port"] = o.port;
    } else if (cmd == "experiment") {
        j.update({{"task", o.task}, {"seed", o.seed}, {"policy", o.policy}, {"display", o.display}, {"out", o.out},
                  {"paths", o.paths}});
    }
    return j;
}

double ms_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

// -------------------------------------------------------------- precompute

int cmd_precompute(const Options& o, unsigned workers) {
    using namespace spv;
    if (o.out.empty()) throw ConfigError("--out is required");
    const auto array = implant::make_grid(implant::resolve_device(o.device));
    percept::AxonMapParams params{o.rho, o.lambda};
    params.validate();
    if (o.grid < 2) throw ConfigError("--grid must be at least 2");
    const auto t0 = Clock::now();
    const auto grid = percept::default_grid(array, o.grid);
    const auto bundles = percept::bundles_for_grid(grid);
    const auto ks = percept::precompute_all(array, params, grid, bundles, workers);
    kernel_io::write_file(o.out, ks);
    const double wall = ms_between(t0, Clock::now()) / 1000.0;
    std::cout << "kernels " << ks.kernels().size() << "\nnonzeros " << ks.nonzeros() << "\nwall_s " << wall << "\n";
    return kOk;
}

// -------------------------------------------------------------- render

int cmd_render(const Options& o, bool device_given, unsigned workers) {
    using namespace spv;
    if (o.in.empty() || o.out.empty()) throw ConfigError("--in and --out are required");
    const auto ks = load_kernels(o, device_given);
    const pipeline::FrameTransform ft(pipeline_config(o, ks));
    const auto img = image_io::read_png(o.in);
    std::unique_ptr<ThreadPool> pool;
    if (workers > 1) pool = std::make_unique<ThreadPool>(workers);
    pipeline::FrameTransform::Workspace ws;
    const Frame& out = img.channels == 3 ? ft.process(image_io::to_rgb_frame(img), ws, pool.get())
                                         : ft.process(image_io::to_frame(img), ws, pool.get());
    image_io::write_png(o.out, image_io::from_frame(out));
    return kOk;
}

// -------------------------------------------------------------- bench

std::string cpu_model() {
    std::ifstream f("/proc/cpuinfo");
    std::string line;
    while (std::getline(f, line))
        if (line.rfind("model name", 0) == 0) {
            const auto p = line.find(':');
            if (p != std::string::npos) return line.substr(p + 2);
        }
    return "unknown";
}

json machine_descriptor(unsigned workers) {
    return {{"cpu", cpu_model()},
            {"logical_cpus", std::thread::hardware_concurrency()},
            {"workers", workers},
            {"compiler", std::string("gcc ") + __VERSION__},
            {"build_flags", SPV_BUILD_FLAGS}};
}

json summarize(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    const auto pct = [&](double q) {
        const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
        return v[std::min(i, v.size() - 1)];
    };
    const double median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    return {{"mean_ms", mean}, {"median_ms", median}, {"p99_ms", pct(0.99)}};
}

/// Moving-bar RGB test frames; decoded once so the loop measures only the
/// pipeline.
std::vector<spv::RgbFrame> synthetic_frames(int size, int count) {
    std::vector<spv::RgbFrame> frames;
    for (int k = 0; k < count; ++k) {
        spv::RgbFrame f(size, size);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const int phase = (x + 2 * y + 3 * k) % 24;
                const float v = phase < 8 ? 1.0f : (phase < 12 ? 0.5f : 0.0f);
                float* px = &f.rgb[(static_cast<std::size_t>(y) * size + x) * 3];
                px[0] = v;
                px[1] = v * 0.9f;
                px[2] = v * 0.8f;
            }
        frames.push_back(std::move(f));
    }
    return frames;
}

int cmd_bench(const Options& o, bool device_given, unsigned workers) {
    using namespace spv;
    if (o.frames < 100) throw ConfigError("--frames must be at least 100");
    if (o.input_size < 3) throw ConfigError("--input-size must be at least 3");
    const auto ks = load_kernels(o, device_given);
    const auto cfg = pipeline_config(o, ks);
    if (o.input_size < cfg.target_width) throw ConfigError("--input-size must be at least the target size");
    const auto frames = synthetic_frames(o.input_size, 16);

    std::vector<double> gray, down, sobel, gauss, sample, render, total;
    const auto record = [&](const pipeline::StageTimings& t) {
        gray.push_back(t.grayscale_ms);
        down.push_back(t.downscale_ms);
        sobel.push_back(t.sobel_ms);
        gauss.push_back(t.gaussian_ms);
        sample.push_back(t.sample_ms);
        render.push_back(t.render_ms);
    };
    constexpr int kWarmup = 10;
    const auto bench_start = Clock::now();
    if (!o.loopback) {
        const pipeline::FrameTransform ft(cfg);
        std::unique_ptr<ThreadPool> pool;
        if (workers > 1) pool = std::make_unique<ThreadPool>(workers);
        pipeline::FrameTransform::Workspace ws;
        for (int i = 0; i < kWarmup + o.frames; ++i) {
            const auto t0 = Clock::now();
            ft.process(frames[static_cast<std::size_t>(i) % frames.size()], ws, pool.get());
            const double ms = ms_between(t0, Clock::now());
            if (i < kWarmup) continue;
            record(ws.timings);
            total.push_back(ms);
        }
    } else {
        stream::Server server(cfg, 0, workers);
        std::thread th([&] { server.run(); });
        try {
            stream::Client client("127.0.0.1", server.port(), "{}");
            std::vector<stream::GrayImage> msgs;
            for (const auto& f : frames) {
                const auto gray = pipeline::to_grayscale(f);
                msgs.push_back({static_cast<std::uint32_t>(gray.width), static_cast<std::uint32_t>(gray.height),
                                image_io::to_gray8(gray)});
            }
            for (int i = 0; i < kWarmup + o.frames; ++i) {
                const auto t0 = Clock::now();
                client.process(msgs[static_cast<std::size_t>(i) % msgs.size()]);
                const double ms = ms_between(t0, Clock::now());
                if (i >= kWarmup) total.push_back(ms);
            }
        } catch (...) {
            server.stop();
            th.join();
            throw;
        }
        server.stop();
        th.join();
    }
    const double wall_s = ms_between(bench_start, Clock::now()) / 1000.0;

    json report;
    report["schema"] = "spv-bench/1";
    report["machine"] = machine_descriptor(workers);
    report["config"] = {{"kernels", o.kernels},
                        {"electrodes", ks->kernels().size()},
                        {"nonzeros", ks->nonzeros()},
                        {"rho_um", ks->params().rho_um},
                        {"lambda_um", ks->params().lambda_um},
                        {"input", {o.input_size, o.input_size}},
                        {"target", {cfg.target_width, cfg.target_height}},
                        {"output", {ks->grid().width(), ks->grid().height()}},
                        {"frames", o.frames},
                        {"mode", o.loopback ? "loopback" : "in_process"}};
    if (!o.loopback)
        report["stages"] = {{"grayscale", summarize(gray)}, {"downscale", summarize(down)},
                            {"sobel", summarize(sobel)},    {"gaussian", summarize(gauss)},
                            {"sample", summarize(sample)},  {"render", summarize(render)}};
    report["end_to_end"] = summarize(total);
    const double median = report["end_to_end"]["median_ms"].get<double>();
    const double mean = report["end_to_end"]["mean_ms"].get<double>();
    report["fps_median"] = median > 0 ? 1000.0 / median : 0.0;
    report["fps_mean"] = mean > 0 ? 1000.0 / mean : 0.0;
    report["wall_s"] = wall_s;

    const std::string text = report.dump(2);
    if (o.report.empty()) {
        std::cout << text << "\n";
    } else {
        std::ofstream f(o.report);
        if (!(f << text << "\n")) throw IoError("cannot write report '" + o.report + "'");
    }
    return kOk;
}

// -------------------------------------------------------------- serve

std::atomic<bool> g_signalled{false};
extern "C" void on_signal(int) { g_signalled = true; }

int cmd_serve(const Options& o, bool device_given, unsigned workers) {
    using namespace spv;
    if (o.port < 0 || o.port > 65535) throw ConfigError("--port must lie in [0, 65535]");
    const auto ks = load_kernels(o, device_given);
    stream::Server server(pipeline_config(o, ks), static_cast<std::uint16_t>(o.port), workers);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on 127.0.0.1:" << server.port() << std::endl;
    std::thread watcher([&] {
        while (!g_signalled && !server.stopping()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        server.stop();
    });
    server.run();
    watcher.join();
    std::cerr << "shutdown after " << server.connections_served() << " connection(s)\n";
    return kOk;
}

// -------------------------------------------------------------- experiment

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!(f << text)) throw spv::IoError("cannot write '" + path + "'");
}

int cmd_experiment(const Options& o) {
    using namespace spv;
    tasks::ExperimentOptions eo;
    eo.task = tasks::parse_task(o.task);
    eo.seed = o.seed;
    eo.display = tasks::parse_display(o.display);
    eo.policy = o.policy;
    const auto records = tasks::run_experiment(eo);
    write_text(o.out, trial_log::trials_csv(records));
    if (!o.paths.empty()) write_text(o.paths, trial_log::paths_csv(records));
    std::cerr << "rows " << records.size() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Simulated prosthetic vision engine"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    const auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "JSON file of defaults; flags override it");
    };
    const auto add_workers = [&](CLI::App* sub) {
        return sub->add_option("--workers", o.workers, "Worker threads (0: SPV_THREADS or all cores)");
    };
    const auto add_kernel_opts = [&](CLI::App* sub) {
        sub->add_option("--kernels", o.kernels, "SPVK kernel file");
        sub->add_option("--device", o.device, "Preset name or device JSON (default: preset matching the kernel count)");
        sub->add_flag("--no-sobel", o.no_sobel, "Skip edge extraction");
        sub->add_flag("--no-gaussian", o.no_gaussian, "Skip the 3x3 blur");
    };

    auto* pre = app.add_subcommand("precompute", "Compute per-electrode kernels and write an SPVK file");
    add_config(pre);
    auto* pre_workers = add_workers(pre);
    pre->add_option("--device", o.device, "Preset name or device JSON");
    pre->add_option("--rho", o.rho, "Spatial decay (um)");
    pre->add_option("--lambda", o.lambda, "Axonal decay (um)");
    pre->add_option("--grid", o.grid, "Render grid side (pixels)");
    pre->add_option("--out", o.out, "Output SPVK path");

    auto* ren = app.add_subcommand("render", "Render one image through the pipeline");
    add_config(ren);
    auto* ren_workers = add_workers(ren);
    add_kernel_opts(ren);
    ren->add_option("--in", o.in, "Input PNG (gray or RGB)");
    ren->add_option("--out", o.out, "Output PNG");

    auto* ben = app.add_subcommand("bench", "Measure pipeline throughput");
    add_config(ben);
    auto* ben_workers = add_workers(ben);
    add_kernel_opts(ben);
    ben->add_option("--frames", o.frames, "Timed frames (>= 100)");
    ben->add_option("--input-size", o.input_size, "Side of the synthetic input frames");
    ben->add_flag("--loopback", o.loopback, "Time round trips through a local SPVS server");
    ben->add_option("--report", o.report, "Write the JSON report here instead of stdout");

    auto* ser = app.add_subcommand("serve", "Serve the pipeline over the SPVS protocol");
    add_config(ser);
    auto* ser_workers = add_workers(ser);
    add_kernel_opts(ser);
    ser->add_option("--port", o.port, "TCP port on 127.0.0.1 (0: ephemeral)");

    auto* exp = app.add_subcommand("experiment", "Run a headless experiment session");
    add_config(exp);
    exp->add_option("--task", o.task, "letter or hallway");
    exp->add_option("--seed", o.seed, "Session seed");
    exp->add_option("--policy", o.policy, "letter: random|perfect; hallway: straight|greedy");
    exp->add_option("--display", o.display, "monitor or hmd layout");
    exp->add_option("--out", o.out, "Trial CSV path (- for stdout)");
    exp->add_option("--paths", o.paths, "Path trace CSV path (hallway)");

    try {
        if (const auto cfg_path = prescan_config(argc, argv); !cfg_path.empty()) apply_config(read_json_file(cfg_path), o);
    } catch (const spv::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const spv::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    const auto device_given = [&](CLI::App* sub) {
        return sub->count("--device") > 0 ||
               (!o.config_path.empty() && read_json_file(o.config_path).contains("device"));
    };

    try {
        std::string cmd;
        unsigned workers = 1;
        if (pre->parsed()) {
            cmd = "precompute";
            workers = effective_workers(o, pre_workers->count() > 0);
        } else if (ren->parsed()) {
            cmd = "render";
            workers = effective_workers(o, ren_workers->count() > 0);
        } else if (ben->parsed()) {
            cmd = "bench";
            workers = effective_workers(o, ben_workers->count() > 0);
        } else if (ser->parsed()) {
            cmd = "serve";
            workers = effective_workers(o, ser_workers->count() > 0);
        } else {
            cmd = "experiment";
        }
        std::cerr << "effective config: " << effective_json(cmd, o, workers).dump() << "\n";
        if (cmd == "precompute") return cmd_precompute(o, workers);
        if (cmd == "render") return cmd_render(o, device_given(ren), workers);
        if (cmd == "bench") return cmd_bench(o, device_given(ben), workers);
        if (cmd == "serve") return cmd_serve(o, device_given(ser), workers);
        return cmd_experiment(o);
    } catch (const spv::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kIo;
    } catch (const spv::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const spv::ContractError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kValidation;
    } catch (const spv::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
}
