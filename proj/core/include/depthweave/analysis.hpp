#pragma once

#include <span>
#include <string>
#include <vector>

#include "depthweave/kdtree.hpp"
#include "depthweave/params.hpp"
#include "depthweave/types.hpp"

namespace depthweave::analysis {

/// Unit normals from the smallest eigenvector of each point's k-nearest-neighbor
/// covariance, oriented toward the camera. Rank-deficient neighborhoods get the
/// view direction and are flagged in `degenerate_normal`.
PointCloud estimate_normals(const PointCloud& cloud, int k);

/// 8-connected pixel graph with depth and color coherence weights; w_t starts at 1.
NeighborGraph build_neighbor_graph(const PointCloud& cloud, const ColorImage& image, const EnergyWeights& weights);

struct Correspondence {
    int source_index = 0;
    Vec3 target_point = Vec3::Zero();
    Vec3 target_normal = Vec3::UnitZ();
    double distance = 0.0;
    int target_index = -1;
    bool active = true;  // false once rejected by the distance gate
};

/// Target cloud with its search structure, built once and shared read-only.
class ClosestPointIndex {
public:
    explicit ClosestPointIndex(const PointCloud& target);

    const PointCloud& target() const { return *target_; }
    Correspondence query(int source_index, const Vec3& p) const;

private:
    const PointCloud* target_;
    KdTree3 tree_;
};

/// Exact Euclidean nearest target point for every source point.
std::vector<Correspondence> closest_points(const PointCloud& source, const PointCloud& target);
std::vector<Correspondence> closest_points(std::span<const Vec3> source, const ClosestPointIndex& index);

/// Deactivates correspondences farther than `max_distance`. Returns the number kept.
std::size_t gate_correspondences(std::vector<Correspondence>& corr, double max_distance);

struct OcclusionField {
    int width = 0;
    int height = 0;
    std::vector<double> weight;  // in (0, 1]

    double at(int x, int y) const { return weight[static_cast<std::size_t>(y) * width + x]; }
};

/// O = exp(-div^2 / sigma_1^2) * exp(-dI^2 / sigma_2^2), dI on a 0..255 intensity scale.
OcclusionField occlusion_weights(const FlowField2D& flow_s, const ColorImage& image_s, const ColorImage& image_s1,
                                 const EnergyWeights& weights);

struct TopologyResult {
    NeighborGraph graph;               // w_t updated
    std::vector<Vec3> warped;          // M_k' (flow-lifted, then refined)
    Mask excluded;                     // endpoint occluded or outside the image
    bool refinement_ok = true;
    std::vector<std::string> warnings;
};

/// Detects separating structures: lifts the accumulated flow to 3D, refines the
/// warped cloud against the next depth map with point, plane and isometric terms,
/// and sets w_t from the change of each edge length.
TopologyResult detect_topology_changes_detailed(const PointCloud& m_k, std::span<const FlowField2D> flows,
                                                const DepthMap& d_k1, const CameraRig& rig,
                                                const EnergyWeights& weights, const SolverParams& params = {});

NeighborGraph detect_topology_changes(const PointCloud& m_k, std::span<const FlowField2D> flows, const DepthMap& d_k1,
                                      const CameraRig& rig, const EnergyWeights& weights,
                                      const SolverParams& params = {});

/// w_t for an edge given rest and deformed endpoint positions.
double topology_weight(const Vec3& pi, const Vec3& pj, const Vec3& qi, const Vec3& qj, double sigma_t);

}  // namespace depthweave::analysis
