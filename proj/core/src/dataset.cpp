#include "depthweave/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "depthweave/camera.hpp"
#include "depthweave/errors.hpp"
#include "depthweave/formats.hpp"

namespace depthweave::io {

using nlohmann::json;

namespace {

const char* kCalib = "calib.json";

FlowField2D crop_flow(const FlowField2D& f, const camera::CropRect& r) {
    if (r.x + r.width > f.width || r.y + r.height > f.height)
        throw InputError("crop rectangle exceeds flow field bounds");
    FlowField2D out(r.width, r.height);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x) {
            const std::size_t si = f.index(x + r.x, y + r.y), di = out.index(x, y);
            out.u[di] = f.u[si];
            out.v[di] = f.v[si];
            out.valid[di] = f.valid[si];
        }
    return out;
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw InputError("cannot create directory " + p.string() + ": " + ec.message());
}

}  // namespace

std::string frame_name(const config::LayoutSpec& layout, int index, const std::string& ext) {
    std::string num = std::to_string(index);
    if (static_cast<int>(num.size()) < layout.digits) num.insert(0, layout.digits - num.size(), '0');
    return layout.prefix + num + ext;
}

Calibration read_calibration(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(kCalib, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ConfigError(kCalib, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError(kCalib, "top level must be an object");
    Calibration c;
    if (j.contains("g")) {
        if (!j["g"].is_number_integer() || j["g"].get<int>() < 1) throw ConfigError(kCalib, "g must be a positive integer");
        c.g = j["g"].get<int>();
        j.erase("g");
    }
    try {
        c.rig = config::parse_rig(j, "rig");
    } catch (const ConfigError& e) {
        throw ConfigError(kCalib, e.what());
    }
    return c;
}

void write_calibration(const fs::path& path, const CameraRig& rig, std::optional<int> g) {
    json j = config::rig_to_json(rig);
    if (g) j["g"] = *g;
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

InputSequence read_dataset(const fs::path& root, const config::Config& cfg) {
    if (!fs::is_directory(root)) throw InputError("input directory not found: " + root.string());
    const auto& lay = cfg.layout;
    const fs::path color_dir = root / lay.color_dir, depth_dir = root / lay.depth_dir;
    if (!fs::is_directory(color_dir)) throw InputError("missing color directory: " + color_dir.string());
    if (!fs::is_directory(depth_dir)) throw InputError("missing depth directory: " + depth_dir.string());

    int n_colors = 0;
    while (fs::exists(color_dir / frame_name(lay, n_colors, lay.color_ext))) ++n_colors;
    if (n_colors < 2) throw InputError("need at least 2 color frames in " + color_dir.string() + " numbered from 0");

    std::vector<int> depth_ticks;
    for (int t = 0; t < n_colors; ++t)
        if (fs::exists(depth_dir / frame_name(lay, t, lay.depth_ext))) depth_ticks.push_back(t);
    // frames past the last color tick would be silently ignored; treat them as a layout error
    if (fs::exists(depth_dir / frame_name(lay, n_colors, lay.depth_ext)) ||
        fs::exists(color_dir / frame_name(lay, n_colors + 1, lay.color_ext)))
        throw InputError("frame numbering in " + root.string() + " is not contiguous");
    if (depth_ticks.size() < 2 || depth_ticks.front() != 0)
        throw InputError("need depth frames at tick 0 and at least one later tick in " + depth_dir.string());
    const int g = depth_ticks[1];
    for (std::size_t k = 0; k < depth_ticks.size(); ++k)
        if (depth_ticks[k] != static_cast<int>(k) * g)
            throw InputError("depth frames are not evenly spaced (found " + frame_name(lay, depth_ticks[k], lay.depth_ext) +
                             ", expected multiples of " + std::to_string(g) + ")");
    if ((n_colors - 1) % g != 0 || static_cast<int>(depth_ticks.size()) != (n_colors - 1) / g + 1)
        throw InputError("color count " + std::to_string(n_colors) + " inconsistent with depth every " +
                         std::to_string(g) + " ticks");

    InputSequence seq;
    seq.g = g;
    const fs::path calib = root / kCalib;
    if (cfg.rig) {
        seq.rig = *cfg.rig;
        if (fs::exists(calib)) {
            const Calibration c = read_calibration(calib);
            if (c.g && *c.g != g) throw ConfigError(kCalib, "g = " + std::to_string(*c.g) + " but depth frames imply " + std::to_string(g));
        }
    } else {
        if (!fs::exists(calib)) throw ConfigError(kCalib, "missing " + calib.string() + " and no rig in config");
        const Calibration c = read_calibration(calib);
        if (c.g && *c.g != g) throw ConfigError(kCalib, "g = " + std::to_string(*c.g) + " but depth frames imply " + std::to_string(g));
        seq.rig = c.rig;
    }

    seq.colors.reserve(n_colors);
    for (int t = 0; t < n_colors; ++t) seq.colors.push_back(read_color(color_dir / frame_name(lay, t, lay.color_ext)));
    for (int t : depth_ticks) {
        const fs::path p = depth_dir / frame_name(lay, t, lay.depth_ext);
        DepthMap d = lay.depth_ext == ".dpt" ? read_sintel_depth(p) : read_pfm(p);
        if (cfg.depth_scale != 1.0)
            for (std::size_t i = 0; i < d.size(); ++i)
                if (d.valid[i]) d.depth[i] = static_cast<float>(d.depth[i] * cfg.depth_scale);
        seq.depths.push_back(std::move(d));
    }

    for (const auto& c : seq.colors)
        if (c.width != seq.rig.color_intrinsics.width || c.height != seq.rig.color_intrinsics.height)
            throw InputError("color frame size " + std::to_string(c.width) + "x" + std::to_string(c.height) +
                             " does not match calibrated color camera");
    for (const auto& d : seq.depths)
        if (d.width != seq.rig.depth_intrinsics.width || d.height != seq.rig.depth_intrinsics.height)
            throw InputError("depth frame size " + std::to_string(d.width) + "x" + std::to_string(d.height) +
                             " does not match calibrated depth camera");

    if (cfg.crop) {
        const auto& r = *cfg.crop;
        const auto& dk = seq.rig.depth_intrinsics;
        const auto& ck = seq.rig.color_intrinsics;
        if (dk.width != ck.width || dk.height != ck.height)
            throw ConfigError("crop", "cropping needs depth and color frames of the same size");
        for (auto& c : seq.colors) c = camera::crop(c, r);
        for (auto& d : seq.depths) d = camera::crop(d, r);
        seq.rig.depth_intrinsics = camera::crop(dk, r);
        seq.rig.color_intrinsics = camera::crop(ck, r);
    }
    return seq;
}

void write_dataset(const fs::path& root, const synth::Dataset& data) {
    const config::LayoutSpec lay;
    ensure_dir(root / lay.color_dir);
    ensure_dir(root / lay.depth_dir);
    ensure_dir(root / "gt_depth");
    ensure_dir(root / "gt_flow");
    ensure_dir(root / "gt_sceneflow");
    for (std::size_t t = 0; t < data.colors.size(); ++t)
        write_ppm(root / lay.color_dir / frame_name(lay, static_cast<int>(t), ".ppm"), data.colors[t]);
    for (std::size_t k = 0; k < data.depths.size(); ++k)
        write_pfm(root / lay.depth_dir / frame_name(lay, static_cast<int>(k) * data.g, ".pfm"), data.depths[k]);
    for (std::size_t t = 0; t < data.gt_depth.size(); ++t)
        write_pfm(root / "gt_depth" / frame_name(lay, static_cast<int>(t), ".pfm"), data.gt_depth[t]);
    for (std::size_t t = 0; t < data.gt_flow.size(); ++t)
        write_flo(root / "gt_flow" / frame_name(lay, static_cast<int>(t), ".flo"), data.gt_flow[t]);
    const int w = data.rig.color_intrinsics.width, h = data.rig.color_intrinsics.height;
    for (std::size_t t = 0; t < data.gt_scene_flow.size(); ++t) {
        SceneFlowFile sf;
        sf.width = w;
        sf.height = h;
        sf.frames.push_back(data.gt_scene_flow[t]);
        write_sf3d(root / "gt_sceneflow" / frame_name(lay, static_cast<int>(t), ".sf3d"), sf);
    }
    write_calibration(root / kCalib, data.rig, data.g);
}

void write_depth_sequence(const fs::path& root, const std::vector<DepthMap>& depths) {
    const config::LayoutSpec lay;
    ensure_dir(root / "depth");
    for (std::size_t t = 0; t < depths.size(); ++t)
        write_pfm(root / "depth" / frame_name(lay, static_cast<int>(t), ".pfm"), depths[t]);
}

void write_hole_masks(const fs::path& root, const std::vector<reconstruct::LabelMap>& labels) {
    const config::LayoutSpec lay;
    ensure_dir(root / "holes");
    for (std::size_t t = 0; t < labels.size(); ++t) {
        GrayImage img;
        img.width = labels[t].width;
        img.height = labels[t].height;
        img.pixels.resize(labels[t].labels.size());
        for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(labels[t].labels[i] * 50);
        write_pgm(root / "holes" / frame_name(lay, static_cast<int>(t), ".pgm"), img);
    }
}

SceneFlowFile interval_scene_flow(const reconstruct::IntervalResult& interval, int width, int height) {
    SceneFlowFile sf;
    sf.width = width;
    sf.height = height;
    const PointCloud& a = interval.anchor;
    if (a.grid_width != width || a.grid_height != height) {
        if (!a.empty()) throw InputError("anchor grid does not match scene-flow raster size");
    }
    for (const auto& disp : interval.scene_flow) {
        if (a.empty()) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            sf.frames.emplace_back(static_cast<std::size_t>(width) * height, Vec3(nan, nan, nan));
        } else {
            sf.frames.push_back(reconstruct::displacement_raster(a, disp));
        }
    }
    return sf;
}

SintelFrames read_sintel(const fs::path& root, const std::string& scene, int first, int count,
                         const std::optional<camera::CropRect>& crop) {
    if (count < 2) throw InputError("need at least 2 Sintel frames");
    auto name = [](int i, const char* ext) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "frame_%04d%s", i, ext);
        return std::string(buf);
    };
    SintelFrames out;
    int full_w = 0, full_h = 0;
    for (int i = first; i < first + count; ++i) {
        ColorImage c = read_png(root / "clean" / scene / name(i, ".png"));
        DepthMap d = read_sintel_depth(root / "depth" / scene / name(i, ".dpt"));
        full_w = c.width;
        full_h = c.height;
        if (crop) {
            c = camera::crop(c, *crop);
            d = camera::crop(d, *crop);
        }
        out.colors.push_back(std::move(c));
        out.depths.push_back(std::move(d));
        if (i + 1 < first + count) {
            const fs::path fp = root / "flow" / scene / name(i, ".flo");
            if (fs::exists(fp)) {
                FlowField2D f = read_flo(fp);
                out.flows.push_back(crop ? crop_flow(f, *crop) : std::move(f));
            }
        }
    }
    const SintelCamera cam = read_sintel_cam(root / "camdata_left" / scene / name(first, ".cam"));
    CameraIntrinsics k = cam.to_intrinsics(full_w, full_h);
    if (crop) k = camera::crop(k, *crop);
    out.rig = CameraRig::aligned(k);
    return out;
}

}  // namespace depthweave::io
