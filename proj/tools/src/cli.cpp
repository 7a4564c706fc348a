#include "depthweave_cli/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "depthweave/camera.hpp"
#include "depthweave/config.hpp"
#include "depthweave/dataset.hpp"
#include "depthweave/errors.hpp"
#include "depthweave/formats.hpp"
#include "depthweave/metrics.hpp"
#include "depthweave/parallel.hpp"
#include "depthweave/reconstruct.hpp"
#include "depthweave/synth.hpp"

namespace depthweave::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

reconstruct::PipelineOptions pipeline_options(const config::Config& c) {
    reconstruct::PipelineOptions o;
    o.weights = c.weights;
    o.solver = c.solver;
    o.flow = c.flow;
    o.fill = c.fill;
    o.detect_topology = c.detect_topology;
    o.backward_pass = c.backward_pass;
    return o;
}

config::Config load_or_default(const std::string& path) {
    return path.empty() ? config::Config{} : config::load_config(path);
}

DepthMap read_depth(const fs::path& p, double scale) {
    DepthMap d = p.extension() == ".dpt" ? io::read_sintel_depth(p) : io::read_pfm(p);
    if (scale != 1.0)
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d.valid[i]) d.depth[i] = static_cast<float>(d.depth[i] * scale);
    return d;
}

// what lands on disk is float32; report metrics on exactly that
FlowField2D as_written(const FlowField2D& f) {
    FlowField2D r = f;
    for (std::size_t i = 0; i < r.size(); ++i) {
        r.u[i] = static_cast<float>(r.u[i]);
        r.v[i] = static_cast<float>(r.v[i]);
    }
    return r;
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

struct UpsampleArgs {
    std::string input, output, config, dump_energy;
    bool dump_holes = false;
};

int cmd_upsample(const UpsampleArgs& a, std::ostream& out) {
    const config::Config cfg = load_or_default(a.config);
    const io::InputSequence seq = io::read_dataset(a.input, cfg);
    const auto res = reconstruct::upsample_sequence(seq.depths, seq.colors, seq.rig, pipeline_options(cfg));

    const fs::path root(a.output);
    io::write_depth_sequence(root, res.depths);
    fs::create_directories(root / "sceneflow");
    const auto& ck = seq.rig.color_intrinsics;
    for (std::size_t k = 0; k < res.intervals.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "interval_%04zu.sf3d", k);
        io::write_sf3d(root / "sceneflow" / name, io::interval_scene_flow(res.intervals[k], ck.width, ck.height));
    }
    if (a.dump_holes) io::write_hole_masks(root, res.hole_masks);
    if (!a.dump_energy.empty()) {
        ensure_parent(a.dump_energy);
        std::ofstream csv(a.dump_energy);
        if (!csv) throw InputError("cannot write " + a.dump_energy);
        bool header = true;
        for (std::size_t k = 0; k < res.intervals.size(); ++k) {
            std::istringstream lines(solver::trace_csv(res.intervals[k].trace));
            std::string line;
            std::getline(lines, line);
            if (header) csv << "interval," << line << '\n';
            header = false;
            while (std::getline(lines, line))
                if (!line.empty()) csv << k << ',' << line << '\n';
        }
    }

    std::size_t failed = 0;
    for (std::size_t k = 0; k < res.interval_ok.size(); ++k)
        if (!res.interval_ok[k]) {
            ++failed;
            for (const auto& d : res.intervals[k].diagnostics) out << "interval " << k << ": " << d << '\n';
        }
    out << "wrote " << res.depths.size() << " depth frames (g = " << res.g << ", " << res.intervals.size()
        << " intervals, " << failed << " failed) to " << (root / "depth").string() << '\n';
    json j{{"frames", res.depths.size()}, {"g", res.g}, {"intervals", res.intervals.size()}, {"failed_intervals", failed}};
    out << j.dump() << '\n';
    return failed ? kPartialFailure : kSuccess;
}

struct SceneflowArgs {
    std::string frame0, frame1, depth0, depth1, config, calib, out_flow, out_sf, gt_flow;
};

int cmd_sceneflow(const SceneflowArgs& a, std::ostream& out) {
    const config::Config cfg = load_or_default(a.config);
    CameraRig rig;
    if (cfg.rig) {
        rig = *cfg.rig;
    } else if (!a.calib.empty()) {
        rig = io::read_calibration(a.calib).rig;
    } else {
        throw ConfigError("rig", "no camera rig: pass --calib or put \"rig\" in the config");
    }
    ColorImage c0 = io::read_color(a.frame0), c1 = io::read_color(a.frame1);
    DepthMap d0 = read_depth(a.depth0, cfg.depth_scale), d1 = read_depth(a.depth1, cfg.depth_scale);
    if (cfg.crop) {
        c0 = camera::crop(c0, *cfg.crop);
        c1 = camera::crop(c1, *cfg.crop);
        d0 = camera::crop(d0, *cfg.crop);
        d1 = camera::crop(d1, *cfg.crop);
        rig.depth_intrinsics = camera::crop(rig.depth_intrinsics, *cfg.crop);
        rig.color_intrinsics = camera::crop(rig.color_intrinsics, *cfg.crop);
    }

    const auto res = reconstruct::estimate_scene_flow(d0, d1, c0, c1, rig, pipeline_options(cfg));
    const FlowField2D flow = as_written(res.flow);
    if (!a.out_flow.empty()) {
        ensure_parent(a.out_flow);
        io::write_flo(a.out_flow, flow);
    }
    if (!a.out_sf.empty()) {
        ensure_parent(a.out_sf);
        io::SceneFlowFile sf;
        sf.width = res.flow.width;
        sf.height = res.flow.height;
        if (res.anchor.empty()) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            sf.frames.emplace_back(res.flow.size(), Vec3(nan, nan, nan));
        } else {
            sf.frames.push_back(reconstruct::displacement_raster(res.anchor, res.displacement));
        }
        io::write_sf3d(a.out_sf, sf);
    }

    json j{{"points", res.anchor.size()}, {"ok", res.ok}};
    for (const auto& d : res.diagnostics) out << d << '\n';
    out << "scene flow for " << res.anchor.size() << " points" << (res.ok ? "" : " (solver fault)") << '\n';
    if (!a.gt_flow.empty()) {
        const auto rep = metrics::flow_report(flow, io::read_flo(a.gt_flow));
        out << rep.to_text();
        j["metrics"] = json::parse(rep.to_json());
    }
    out << j.dump() << '\n';
    return res.ok ? kSuccess : kPartialFailure;
}

struct SynthArgs {
    std::string scene = "translating-plane", output;
    int g = 4, frames = 9, width = 128, height = 128;
    std::uint64_t seed = 7;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    const auto scene = synth::parse_scene(a.scene);
    if (!scene) throw InputError("unknown scene '" + a.scene + "'");
    synth::SceneSpec spec = synth::SceneSpec::defaults(*scene, a.width, a.height);
    spec.g = a.g;
    spec.frames = a.frames;
    spec.seed = a.seed;
    const synth::Dataset data = synth::generate(spec);
    io::write_dataset(a.output, data);
    out << "wrote " << data.colors.size() << " color frames, " << data.depths.size() << " depth frames ("
        << synth::scene_name(*scene) << ", " << a.width << "x" << a.height << ", g = " << a.g << ") to " << a.output
        << '\n';
    json j{{"scene", std::string(synth::scene_name(*scene))}, {"colors", data.colors.size()},
           {"depths", data.depths.size()}, {"g", a.g}, {"depth_range", data.depth_range}};
    out << j.dump() << '\n';
    return kSuccess;
}

int cmd_eval_flow(const std::string& est, const std::string& gt, std::ostream& out) {
    const auto rep = metrics::flow_report(io::read_flo(est), io::read_flo(gt));
    out << "flow metrics (AAE in degrees)\n" << rep.to_text() << rep.to_json() << '\n';
    return kSuccess;
}

int cmd_eval_depth(const std::string& est, const std::string& gt, const std::string& unit, std::ostream& out) {
    const auto rep = metrics::depth_report(read_depth(est, 1.0), read_depth(gt, 1.0), unit);
    out << "depth metrics\n" << rep.to_text() << rep.to_json() << '\n';
    return kSuccess;
}

unsigned threads_from_env() {
    const char* env = std::getenv("DEPTHWEAVE_THREADS");
    if (!env || !*env) return 0;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 0) throw InputError(std::string("DEPTHWEAVE_THREADS must be a non-negative integer, got '") + env + "'");
    return static_cast<unsigned>(n);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Temporal depth upsampling and RGB-D scene flow"};
    app.require_subcommand(1);
    int threads = -1;
    app.add_option("--threads", threads, "Worker cap (0 = all cores); falls back to DEPTHWEAVE_THREADS")
        ->check(CLI::NonNegativeNumber);

    UpsampleArgs up;
    auto* c_up = app.add_subcommand("upsample", "High-rate depth from a low-rate depth + high-rate color sequence");
    c_up->add_option("--input", up.input, "Dataset directory")->required();
    c_up->add_option("--output", up.output, "Output directory")->required();
    c_up->add_option("--config", up.config, "JSON config");
    c_up->add_option("--dump-energy", up.dump_energy, "Per-iteration energy CSV");
    c_up->add_flag("--dump-holes", up.dump_holes, "Write hole label masks");

    SceneflowArgs sf;
    auto* c_sf = app.add_subcommand("sceneflow", "Scene flow between two RGB-D frames");
    c_sf->add_option("--frame0", sf.frame0)->required();
    c_sf->add_option("--frame1", sf.frame1)->required();
    c_sf->add_option("--depth0", sf.depth0)->required();
    c_sf->add_option("--depth1", sf.depth1)->required();
    c_sf->add_option("--config", sf.config, "JSON config");
    c_sf->add_option("--calib", sf.calib, "calib.json (when the config has no rig)");
    c_sf->add_option("--out-flow", sf.out_flow, ".flo output");
    c_sf->add_option("--out-sf", sf.out_sf, "SF3D output");
    c_sf->add_option("--gt-flow", sf.gt_flow, "Ground-truth .flo to score against");

    SynthArgs sy;
    auto* c_sy = app.add_subcommand("synth", "Write a synthetic dataset with ground truth");
    c_sy->add_option("--scene", sy.scene, "translating-plane | rotating-plane | two-block-occlusion | separating-blocks");
    c_sy->add_option("--g", sy.g, "Color ticks per depth frame")->check(CLI::PositiveNumber);
    c_sy->add_option("--frames", sy.frames, "Color frames")->check(CLI::PositiveNumber);
    c_sy->add_option("--width", sy.width)->check(CLI::PositiveNumber);
    c_sy->add_option("--height", sy.height)->check(CLI::PositiveNumber);
    c_sy->add_option("--seed", sy.seed);
    c_sy->add_option("--output", sy.output)->required();

    std::string est, gt, unit = "m";
    auto* c_ef = app.add_subcommand("eval-flow", "EPE / AAE / RMSE between two .flo files");
    c_ef->add_option("--est", est)->required();
    c_ef->add_option("--gt", gt)->required();
    auto* c_ed = app.add_subcommand("eval-depth", "Depth RMSE between two depth maps");
    c_ed->add_option("--est", est)->required();
    c_ed->add_option("--gt", gt)->required();
    c_ed->add_option("--unit", unit, "Label for the depth unit");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        if (!rev.empty()) rev.pop_back();
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kInputError;
    }

    try {
        set_thread_count(threads >= 0 ? static_cast<unsigned>(threads) : threads_from_env());
        if (*c_up) return cmd_upsample(up, out);
        if (*c_sf) return cmd_sceneflow(sf, out);
        if (*c_sy) return cmd_synth(sy, out);
        if (*c_ef) return cmd_eval_flow(est, gt, out);
        if (*c_ed) return cmd_eval_depth(est, gt, unit, out);
    } catch (const SolverFault& e) {
        err << "solver fault: " << e.what() << '\n';
        return kPartialFailure;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kInputError;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kInputError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
    return kInputError;
}

}  // namespace depthweave::cli
