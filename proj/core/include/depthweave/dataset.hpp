#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "depthweave/config.hpp"
#include "depthweave/formats.hpp"
#include "depthweave/reconstruct.hpp"
#include "depthweave/synth.hpp"
#include "depthweave/types.hpp"

namespace depthweave::io {

namespace fs = std::filesystem;

/// A captured sequence: colors at every tick, depth at every g-th tick.
struct InputSequence {
    int g = 0;
    CameraRig rig;
    std::vector<ColorImage> colors;
    std::vector<DepthMap> depths;
};

std::string frame_name(const config::LayoutSpec& layout, int index, const std::string& ext);

/// calib.json: {"g": int (optional), "depth": {...}, "color": {...}, "depth_to_color": {...}}.
/// Errors are ConfigError keyed on "calib.json".
struct Calibration {
    std::optional<int> g;
    CameraRig rig;
};
Calibration read_calibration(const fs::path& path);
void write_calibration(const fs::path& path, const CameraRig& rig, std::optional<int> g);

/// Reads color/ and depth/ under `root`. g is inferred from which depth frames exist and
/// must agree with calib.json when it names one. Applies depth_scale and crop from `cfg`.
/// A rig in `cfg` overrides calib.json. Throws InputError, ParseError or ConfigError.
InputSequence read_dataset(const fs::path& root, const config::Config& cfg);

/// Standard layout plus gt_depth/, gt_flow/ and gt_sceneflow/ (one SF3D per tick pair, g = 1).
void write_dataset(const fs::path& root, const synth::Dataset& data);

/// <root>/depth/frame_%06d.pfm for every tick.
void write_depth_sequence(const fs::path& root, const std::vector<DepthMap>& depths);

/// Hole labels as PGM (label value * 50) under <root>/holes/.
void write_hole_masks(const fs::path& root, const std::vector<reconstruct::LabelMap>& labels);

/// Scene flow of one interval rasterized at the anchor pixels (NaN elsewhere).
SceneFlowFile interval_scene_flow(const reconstruct::IntervalResult& interval, int width, int height);

/// MPI Sintel: <root>/clean/<scene>/frame_%04d.png, depth/<scene>/frame_%04d.dpt,
/// camdata_left/<scene>/frame_%04d.cam, flow/<scene>/frame_%04d.flo (1-based numbering).
struct SintelFrames {
    std::vector<ColorImage> colors;
    std::vector<DepthMap> depths;
    std::vector<FlowField2D> flows;  // t -> t+1 where present
    CameraRig rig;
};
SintelFrames read_sintel(const fs::path& root, const std::string& scene, int first, int count,
                         const std::optional<camera::CropRect>& crop = std::nullopt);

}  // namespace depthweave::io
