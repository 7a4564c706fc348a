#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "depthweave/types.hpp"

namespace depthweave::metrics {

/// Mean endpoint error over jointly valid pixels, in pixels.
double epe(const FlowField2D& est, const FlowField2D& gt);

/// Mean angle between (u, v, 1) and (u_gt, v_gt, 1), in degrees.
double aae(const FlowField2D& est, const FlowField2D& gt);

/// Root of the mean squared endpoint error, in pixels.
double rmse_flow(const FlowField2D& est, const FlowField2D& gt);

/// Root mean squared depth difference over jointly valid pixels, in depth units.
double rmse_depth(const DepthMap& est, const DepthMap& gt);

/// Same, restricted to pixels where `mask` is set.
double rmse_depth(const DepthMap& est, const DepthMap& gt, const Mask& mask);

/// Mean 3D endpoint error over pairs where both vectors are finite.
double epe_3d(std::span<const Vec3> est, std::span<const Vec3> gt);

struct MetricsReport {
    std::optional<double> epe;
    std::optional<double> aae;  // degrees
    std::optional<double> rmse_flow;
    std::optional<double> rmse_depth;
    std::string depth_unit = "m";
    std::size_t valid_pixel_count = 0;

    std::string to_text() const;
    std::string to_json() const;  // one line
};

MetricsReport flow_report(const FlowField2D& est, const FlowField2D& gt);
MetricsReport depth_report(const DepthMap& est, const DepthMap& gt, const std::string& unit = "m");

}  // namespace depthweave::metrics
