#pragma once

#include <span>
#include <vector>

#include "depthweave/image_ops.hpp"
#include "depthweave/params.hpp"
#include "depthweave/types.hpp"

namespace depthweave::flow2d {

/// Dense flow from `a` to `b`: robust (Charbonnier) brightness constancy plus
/// quadratic smoothness, solved coarse-to-fine with warping. Each warp is followed
/// by a color-weighted median filter.
FlowField2D estimate_flow(const ColorImage& a, const ColorImage& b, const FlowParams& params);

/// Per-component weighted median over the (2r+1)^2 window with weights
/// exp(-|rgb_i - rgb_j|^2 / sigma_color^2). Invalid flow pixels do not vote.
FlowField2D weighted_median_filter(const FlowField2D& flow, const ColorImage& guide, int radius,
                                   double sigma_color = 1.0);

/// du/dx + dv/dy with central differences inside and one-sided differences on the border.
image::Plane divergence(const FlowField2D& flow);

/// Chains flows by backward warping: A0 = f0, An(x) = An-1(x) + fn(x + An-1(x)).
FlowField2D accumulate_flow(std::span<const FlowField2D> flows);

/// All partial accumulations [A0, A1, ..., An-1].
std::vector<FlowField2D> accumulate_prefixes(std::span<const FlowField2D> flows);

/// Bilinear flow lookup; false when outside the image or touching an invalid pixel.
bool sample_flow(const FlowField2D& flow, double x, double y, double& u, double& v);

}  // namespace depthweave::flow2d
