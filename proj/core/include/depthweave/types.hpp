#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace depthweave {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using Mask = std::vector<std::uint8_t>;

// ---------------------------------------------------------------------------
// Cameras

struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    bool is_valid() const;
    /// Throws InputError naming the violated bound.
    void validate() const;

    /// Intrinsics of an image decimated by `stride` (pixel X at the coarse level
    /// samples pixel stride*X of this one).
    CameraIntrinsics decimated(int stride) const;
};

struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    RigidTransform inverse() const;
    RigidTransform compose(const RigidTransform& rhs) const;  // this ∘ rhs

    bool is_valid() const;
    void validate() const;
};

/// Hybrid rig: depth sensor plus color camera with the depth->color extrinsics.
struct CameraRig {
    CameraIntrinsics depth_intrinsics;
    CameraIntrinsics color_intrinsics;
    RigidTransform depth_to_color;

    void validate() const;

    /// The rig seen by data already registered to the color camera: both
    /// intrinsics are the color intrinsics and the extrinsics are identity.
    static CameraRig aligned(const CameraIntrinsics& color);
    CameraRig aligned_to_color() const { return aligned(color_intrinsics); }

    CameraRig decimated(int stride) const;
};

// ---------------------------------------------------------------------------
// Rasters

/// Depth in meters. Invalid pixels hold 0 and are masked out.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<float> depth;
    Mask valid;

    DepthMap() = default;
    DepthMap(int w, int h);

    std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
    float at(int x, int y) const { return depth[index(x, y)]; }
    void set(int x, int y, float d);
    void invalidate(int x, int y);
    std::size_t valid_count() const;
    void validate() const;
};

/// RGB in [0,1] with a luma channel derived from it.
struct ColorImage {
    int width = 0;
    int height = 0;
    std::vector<float> rgb;        // interleaved, 3 per pixel
    std::vector<float> intensity;  // 0.299 R + 0.587 G + 0.114 B

    ColorImage() = default;
    ColorImage(int w, int h);

    static ColorImage from_rgb(int w, int h, std::vector<float> rgb);
    /// Gray image: all three channels equal to `gray`.
    static ColorImage from_gray(int w, int h, const std::vector<float>& gray);

    std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    float luma(int x, int y) const { return intensity[index(x, y)]; }
    Eigen::Vector3f color(std::size_t i) const { return {rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]}; }

    /// Recompute intensity from rgb.
    void update_intensity();
    void validate() const;
};

struct FlowField2D {
    int width = 0;
    int height = 0;
    std::vector<double> u;
    std::vector<double> v;
    Mask valid;

    FlowField2D() = default;
    FlowField2D(int w, int h);  // zero flow, all valid

    std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    static FlowField2D constant(int w, int h, double du, double dv);
};

// ---------------------------------------------------------------------------
// Point sets

struct NeighborEdge {
    int i = 0;
    int j = 0;
    double w_c = 1.0;
    double w_d = 1.0;
    double w_t = 1.0;
    Vec3 rest = Vec3::Zero();  // p_i - p_j in the anchor cloud

    double weight() const { return w_c * w_d * w_t; }
};

struct NeighborGraph {
    std::vector<NeighborEdge> edges;  // undirected, i < j

    std::size_t size() const { return edges.size(); }
    bool empty() const { return edges.empty(); }
};

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<int> pixel_of;  // row-major pixel index in the source grid
    int grid_width = 0;
    int grid_height = 0;
    NeighborGraph graph;
    Mask degenerate_normal;  // set by normal estimation for rank-deficient neighborhoods

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    int pixel_x(std::size_t i) const { return pixel_of[i] % grid_width; }
    int pixel_y(std::size_t i) const { return pixel_of[i] / grid_width; }

    /// Point index at each grid pixel, -1 where there is none.
    std::vector<int> pixel_to_point() const;
};

// ---------------------------------------------------------------------------
// Energy constants

struct EnergyWeights {
    double lambda_opti = 1.0;
    double lambda_point = 0.2;
    double lambda_plane = 0.8;
    double lambda_proj = 1.0;
    double lambda_iso = 3.0;
    double lambda_reg = 0.8;
    double lambda_short = 0.5;
    double epsilon = 1e-4;
    double d_A = 10.0;
    double sigma_c = 1.0;
    double sigma_d = 0.015;
    double sigma_t = 0.015;
    double sigma_1 = 1.0;
    double sigma_2 = 20.0;

    bool is_valid() const;
    void validate() const;
};

/// rho(r) = sqrt(r^2 + eps^2)
double robust_kernel(double r, double epsilon);

// ---------------------------------------------------------------------------
// Unknowns of one interval

struct SceneFlowState {
    int g = 0;
    PointCloud anchor;                     // frame s = 0, fixed
    std::vector<std::vector<Vec3>> positions;  // [s-1][i], s in [1, g]
    std::vector<std::vector<Mat3>> rotations;  // [s-1][i], s in [1, g]
    std::vector<FlowField2D> flows;            // [s], s in [0, g-1]

    std::size_t num_points() const { return anchor.size(); }

    /// Position of point i at frame s; s = 0 is the anchor.
    const Vec3& position(int s, std::size_t i) const {
        return s == 0 ? anchor.points[i] : positions[s - 1][i];
    }

    /// Anchor positions at every frame, identity rotations, zero flows of the given size.
    static SceneFlowState at_rest(const PointCloud& anchor, int g, int flow_width, int flow_height);
};

struct Violation {
    std::string field;
    std::size_t index = 0;
    std::string message;
};

std::vector<Violation> validate(const SceneFlowState& state);

/// Frobenius distance of R^T R from identity.
double orthonormality_error(const Mat3& r);

}  // namespace depthweave
