#include "depthweave/camera.hpp"

#include <cmath>
#include <limits>

#include "depthweave/errors.hpp"

namespace depthweave::camera {

PointCloud unproject(const DepthMap& depth, const CameraIntrinsics& intr) {
    intr.validate();
    if (depth.width != intr.width || depth.height != intr.height)
        throw InputError("unproject: depth map is " + std::to_string(depth.width) + "x" + std::to_string(depth.height) +
                         " but intrinsics expect " + std::to_string(intr.width) + "x" + std::to_string(intr.height));
    PointCloud cloud;
    cloud.grid_width = depth.width;
    cloud.grid_height = depth.height;
    cloud.points.reserve(depth.valid_count());
    cloud.pixel_of.reserve(depth.valid_count());
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            if (!depth.is_valid(x, y)) continue;
            cloud.points.push_back(backproject(x, y, depth.at(x, y), intr));
            cloud.pixel_of.push_back(static_cast<int>(depth.index(x, y)));
        }
    }
    return cloud;
}

Vec3 backproject(double x, double y, double z, const CameraIntrinsics& intr) {
    return {z * (x - intr.cx) / intr.fx, z * (y - intr.cy) / intr.fy, z};
}

Vec2 project(const Vec3& p, const CameraIntrinsics& intr) {
    if (!(p.z() > 0.0)) throw BehindCameraError("project: point has z <= 0");
    return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy};
}

Vec2 project(const Vec3& p, const CameraIntrinsics& intr, Eigen::Matrix<double, 2, 3>& jacobian) {
    if (!(p.z() > 0.0)) throw BehindCameraError("project: point has z <= 0");
    const double iz = 1.0 / p.z();
    jacobian << intr.fx * iz, 0.0, -intr.fx * p.x() * iz * iz,
                0.0, intr.fy * iz, -intr.fy * p.y() * iz * iz;
    return {intr.fx * p.x() * iz + intr.cx, intr.fy * p.y() * iz + intr.cy};
}

Vec2 psi(const Vec3& point, const CameraRig& rig) { return project(rig.depth_to_color.apply(point), rig.color_intrinsics); }

Vec2 psi(const Vec3& point, const CameraRig& rig, Eigen::Matrix<double, 2, 3>& jacobian) {
    Eigen::Matrix<double, 2, 3> jp;
    const Vec2 xy = project(rig.depth_to_color.apply(point), rig.color_intrinsics, jp);
    jacobian = jp * rig.depth_to_color.rotation;
    return xy;
}

std::optional<std::pair<int, int>> nearest_pixel(const Vec2& xy, int width, int height) {
    if (!xy.allFinite()) return std::nullopt;
    const double fx = std::floor(xy.x() + 0.5);
    const double fy = std::floor(xy.y() + 0.5);
    if (fx < 0.0 || fy < 0.0 || fx >= width || fy >= height) return std::nullopt;
    return std::make_pair(static_cast<int>(fx), static_cast<int>(fy));
}

DepthMap splat(const std::vector<Vec3>& points, const CameraIntrinsics& intr) {
    DepthMap out(intr.width, intr.height);
    std::vector<double> zbuf(out.size(), std::numeric_limits<double>::infinity());
    for (const Vec3& p : points) {
        if (!(p.z() > 0.0) || !p.allFinite()) continue;
        const auto px = nearest_pixel(project(p, intr), intr.width, intr.height);
        if (!px) continue;
        const auto idx = out.index(px->first, px->second);
        if (p.z() < zbuf[idx]) zbuf[idx] = p.z();
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (std::isfinite(zbuf[i])) {
            out.depth[i] = static_cast<float>(zbuf[i]);
            out.valid[i] = out.depth[i] > 0.0f ? 1 : 0;
        }
    }
    return out;
}

DepthMap align_depth_to_color(const DepthMap& depth, const CameraRig& rig) {
    rig.validate();
    const PointCloud cloud = unproject(depth, rig.depth_intrinsics);
    std::vector<Vec3> moved;
    moved.reserve(cloud.size());
    for (const Vec3& p : cloud.points) moved.push_back(rig.depth_to_color.apply(p));
    return splat(moved, rig.color_intrinsics);
}

namespace {

void check_rect(const CropRect& r, int w, int h) {
    if (r.width <= 0 || r.height <= 0 || r.x < 0 || r.y < 0 || r.x + r.width > w || r.y + r.height > h)
        throw InputError("crop: rectangle outside the image");
}

}  // namespace

DepthMap crop(const DepthMap& depth, const CropRect& r) {
    check_rect(r, depth.width, depth.height);
    DepthMap out(r.width, r.height);
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            const auto src = depth.index(x + r.x, y + r.y);
            out.depth[out.index(x, y)] = depth.depth[src];
            out.valid[out.index(x, y)] = depth.valid[src];
        }
    }
    return out;
}

ColorImage crop(const ColorImage& image, const CropRect& r) {
    check_rect(r, image.width, image.height);
    ColorImage out(r.width, r.height);
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            const auto src = image.index(x + r.x, y + r.y);
            const auto dst = out.index(x, y);
            for (int c = 0; c < 3; ++c) out.rgb[3 * dst + c] = image.rgb[3 * src + c];
            out.intensity[dst] = image.intensity[src];
        }
    }
    return out;
}

CameraIntrinsics crop(const CameraIntrinsics& intr, const CropRect& r) {
    check_rect(r, intr.width, intr.height);
    CameraIntrinsics out = intr;
    out.cx -= r.x;
    out.cy -= r.y;
    out.width = r.width;
    out.height = r.height;
    return out;
}

}  // namespace depthweave::camera
