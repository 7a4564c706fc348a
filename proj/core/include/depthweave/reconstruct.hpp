#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "depthweave/params.hpp"
#include "depthweave/solver.hpp"
#include "depthweave/types.hpp"

namespace depthweave::reconstruct {

/// Per-pixel provenance of a reconstructed depth frame, written as 8-bit label rasters.
enum class HoleLabel : std::uint8_t {
    valid = 0,
    occlusion = 1,                // no render, but the anchor pixel had depth
    sensor = 2,                   // no render and no depth in the input either
    filled_forward_backward = 3,  // taken from the backward pass only
    filled_bilateral = 4,
};

struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> labels;

    LabelMap() = default;
    LabelMap(int w, int h) : width(w), height(h), labels(static_cast<std::size_t>(w) * h, 0) {}
    HoleLabel at(std::size_t i) const { return static_cast<HoleLabel>(labels[i]); }
    std::size_t count(HoleLabel l) const;
};

struct PipelineOptions {
    EnergyWeights weights;
    SolverParams solver;
    FlowParams flow;
    FillParams fill;
    bool detect_topology = true;
    bool backward_pass = true;
};

/// Splats solved positions through the color camera, z-buffered, one pixel per point.
DepthMap render_depth(std::span<const Vec3> positions, const PointCloud& anchor, const CameraRig& rig, int width,
                      int height);

/// Joint-bilateral fill of invalid pixels from valid neighbors (color weight on RGB distance), repeated until no
/// pixel with at least `min_neighbors` valid window neighbors remains. Valid pixels
/// are never modified. `filled`, when given, marks the pixels that received a value.
DepthMap bilateral_fill(const DepthMap& depth, const ColorImage& guide, int radius, double sigma_space,
                        double sigma_color, int min_neighbors = 3, Mask* filled = nullptr);

struct IntervalResult {
    int g = 0;
    std::vector<DepthMap> depths;                 // s in [1, g-1]
    std::vector<LabelMap> hole_masks;             // s in [1, g-1]
    PointCloud anchor;                            // forward anchor (M_k)
    std::vector<std::vector<Vec3>> scene_flow;    // [s-1][i]: p_s - p_0, s in [1, g]
    std::vector<FlowField2D> flows;               // refined forward 2D flows, s in [0, g-1]
    std::vector<solver::TraceEntry> trace;        // forward pass, then backward
    std::vector<std::string> diagnostics;
    bool ok = true;
};

/// Forward and time-reversed solves of one interval, merged and hole-filled.
/// Depth maps are on the depth grid of `rig`; they are aligned to the color camera first.
IntervalResult reconstruct_interval(const DepthMap& d_k, const DepthMap& d_k1, std::span<const ColorImage> colors,
                                    const CameraRig& rig, const PipelineOptions& options = {});

struct SequenceResult {
    int g = 0;
    std::vector<DepthMap> depths;     // (n - 1) g + 1
    std::vector<LabelMap> hole_masks;  // one per output frame; captured frames are all valid
    std::vector<IntervalResult> intervals;
    std::vector<bool> interval_ok;

    bool all_ok() const;
};

/// Full high-rate sequence: captured depth frames pass through unchanged at their slots.
SequenceResult upsample_sequence(std::span<const DepthMap> depths, std::span<const ColorImage> colors,
                                 const CameraRig& rig, const PipelineOptions& options = {});

struct SceneFlowResult {
    PointCloud anchor;
    std::vector<Vec3> displacement;  // per anchor point, meters
    FlowField2D flow;                // refined 2D flow
    FlowField2D initial_flow;        // flow2d initializer
    std::vector<solver::TraceEntry> trace;
    std::vector<std::string> diagnostics;
    bool ok = true;
};

/// The one-step (g = 1) joint solve.
SceneFlowResult estimate_scene_flow(const DepthMap& d_a, const DepthMap& d_b, const ColorImage& c_a,
                                    const ColorImage& c_b, const CameraRig& rig, const PipelineOptions& options = {});

/// Per-pixel 3D displacement raster of an anchor-indexed field; pixels without a point are NaN.
std::vector<Vec3> displacement_raster(const PointCloud& anchor, std::span<const Vec3> displacement);

}  // namespace depthweave::reconstruct
