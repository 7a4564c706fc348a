#pragma once

#include <optional>

#include "depthweave/types.hpp"

namespace depthweave::camera {

/// Back-projects every valid pixel. Normals and graph are left empty.
PointCloud unproject(const DepthMap& depth, const CameraIntrinsics& intr);

/// Continuous pixel coordinates; throws BehindCameraError when z <= 0.
Vec2 project(const Vec3& point, const CameraIntrinsics& intr);

/// Projection together with d(pixel)/d(point).
Vec2 project(const Vec3& point, const CameraIntrinsics& intr, Eigen::Matrix<double, 2, 3>& jacobian);

/// psi: depth-camera point -> color-camera pixel.
Vec2 psi(const Vec3& point, const CameraRig& rig);
Vec2 psi(const Vec3& point, const CameraRig& rig, Eigen::Matrix<double, 2, 3>& jacobian);

/// Ray through pixel (x, y) scaled to depth z.
Vec3 backproject(double x, double y, double z, const CameraIntrinsics& intr);

/// Nearest pixel of a continuous coordinate, or nullopt outside the image.
std::optional<std::pair<int, int>> nearest_pixel(const Vec2& xy, int width, int height);

/// Splat points (already in the color frame) into a z-buffered depth raster.
DepthMap splat(const std::vector<Vec3>& points, const CameraIntrinsics& intr);

/// Re-renders a depth map in the color camera grid by forward splatting with z-buffering.
DepthMap align_depth_to_color(const DepthMap& depth, const CameraRig& rig);

struct CropRect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
};

DepthMap crop(const DepthMap& depth, const CropRect& rect);
ColorImage crop(const ColorImage& image, const CropRect& rect);
/// Intrinsics of the cropped image (principal point shifted).
CameraIntrinsics crop(const CameraIntrinsics& intr, const CropRect& rect);

}  // namespace depthweave::camera
