#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "depthweave/camera.hpp"
#include "depthweave/params.hpp"
#include "depthweave/types.hpp"

namespace depthweave::config {

/// Directory and file naming of a dataset on disk.
struct LayoutSpec {
    std::string color_dir = "color";
    std::string depth_dir = "depth";
    std::string color_ext = ".ppm";
    std::string depth_ext = ".pfm";
    std::string prefix = "frame_";
    int digits = 6;
};

struct Config {
    EnergyWeights weights;
    SolverParams solver;
    FlowParams flow;
    FillParams fill;
    std::optional<CameraRig> rig;  // overrides calib.json
    std::optional<camera::CropRect> crop;
    LayoutSpec layout;
    double depth_scale = 1.0;  // multiplies stored depth values to get meters
    std::string depth_unit = "m";
    bool detect_topology = true;
    bool backward_pass = true;
};

/// Unset keys keep their defaults; unknown keys and type mismatches throw ConfigError naming the key.
Config parse_config(const std::string& json_text);
Config load_config(const std::filesystem::path& path);

/// Rig object: {"depth": {fx, fy, cx, cy, width, height}, "color": {...},
/// "depth_to_color": {"rotation": [9 row-major], "translation": [3]}}. "color" defaults to
/// "depth" and the transform to identity.
CameraRig parse_rig(const nlohmann::json& j, const std::string& context = "rig");
nlohmann::json rig_to_json(const CameraRig& rig);

/// The flat key -> value view of a configuration, as accepted by parse_config.
std::string dump_config(const Config& cfg);

}  // namespace depthweave::config
