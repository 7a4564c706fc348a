#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "depthweave/types.hpp"

namespace depthweave::synth {

enum class Scene { translating_plane, rotating_plane, two_block_occlusion, separating_blocks };

std::string_view scene_name(Scene s);
std::optional<Scene> parse_scene(std::string_view name);

struct SceneSpec {
    Scene scene = Scene::translating_plane;
    int g = 4;
    int frames = 9;  // color ticks; (frames - 1) must be a multiple of g
    int width = 128;
    int height = 128;
    Vec3 velocity = Vec3::Zero();        // m per tick (separating blocks: each block moves +-velocity)
    double angular_velocity = 0.0;       // rad per tick about `rotation_axis`
    Vec3 rotation_axis = Vec3::UnitY();
    std::uint64_t seed = 7;

    /// Motion defaults that keep each archetype at roughly one pixel per tick.
    static SceneSpec defaults(Scene scene, int width = 128, int height = 128);

    /// Throws SceneSpecError.
    void validate() const;
};

/// Object identifiers in `object_id`: -1 is empty space.
struct Dataset {
    int g = 0;
    CameraRig rig;
    std::vector<ColorImage> colors;   // every tick
    std::vector<DepthMap> depths;     // every g-th tick
    std::vector<DepthMap> gt_depth;   // every tick
    std::vector<FlowField2D> gt_flow;  // tick t -> t+1
    std::vector<std::vector<Vec3>> gt_scene_flow;  // per pixel, tick t -> t+1; NaN where nothing is visible
    std::vector<std::vector<std::int8_t>> object_id;  // visible object per pixel and tick
    double depth_range = 0.0;  // max - min ground-truth depth over all ticks
};

/// Aligned rig with fx = fy = 500 px at 128 px width.
CameraRig default_rig(int width, int height);

/// Rasterizes the scene analytically. Deterministic in the spec (seed included).
Dataset generate(const SceneSpec& spec, const CameraRig& rig);
Dataset generate(const SceneSpec& spec);

/// Seeded band-limited value noise in [0, 1], smooth (C2) in (u, v).
double value_noise(std::uint64_t seed, double u, double v);

}  // namespace depthweave::synth
