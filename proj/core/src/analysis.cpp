#include "depthweave/analysis.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "depthweave/camera.hpp"
#include "depthweave/errors.hpp"
#include "depthweave/flow2d.hpp"
#include "depthweave/image_ops.hpp"
#include "depthweave/parallel.hpp"
#include "depthweave/solver.hpp"

namespace depthweave::analysis {

namespace {

// Weights live in (0, 1]; exp underflow must not produce an exact zero.
double clamp_weight(double w) { return std::clamp(w, DBL_MIN, 1.0); }

}  // namespace

PointCloud estimate_normals(const PointCloud& cloud, int k) {
    if (k < 3) throw InputError("estimate_normals: need at least 3 neighbors");
    PointCloud out = cloud;
    const std::size_t n = cloud.size();
    out.normals.assign(n, Vec3::UnitZ());
    out.degenerate_normal.assign(n, 0);
    if (n == 0) return out;

    const KdTree3 tree(cloud.points);
    parallel_for(n, 256, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const Vec3& p = cloud.points[i];
            const auto nb = tree.knn(p, static_cast<std::size_t>(k));
            Vec3 mean = Vec3::Zero();
            for (const auto& [idx, d2] : nb) mean += cloud.points[static_cast<std::size_t>(idx)];
            mean /= static_cast<double>(nb.size());
            Mat3 cov = Mat3::Zero();
            for (const auto& [idx, d2] : nb) {
                const Vec3 d = cloud.points[static_cast<std::size_t>(idx)] - mean;
                cov += d * d.transpose();
            }
            const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
            const Vec3 ev = es.eigenvalues();  // ascending
            const Vec3 view = p.norm() > 0.0 ? Vec3(-p.normalized()) : Vec3(-Vec3::UnitZ());
            if (nb.size() < 3 || !(ev[1] > 0.0) || ev[1] <= 1e-10 * ev[2]) {
                // fewer than two spanning directions: collinear or coincident
                out.normals[i] = view;
                out.degenerate_normal[i] = 1;
                continue;
            }
            Vec3 nrm = es.eigenvectors().col(0).normalized();
            if (nrm.dot(p) > 0.0) nrm = -nrm;
            out.normals[i] = nrm;
        }
    });
    return out;
}

NeighborGraph build_neighbor_graph(const PointCloud& cloud, const ColorImage& image, const EnergyWeights& weights) {
    NeighborGraph graph;
    if (cloud.empty()) return graph;
    const std::vector<int> map = cloud.pixel_to_point();
    const bool has_color = image.width == cloud.grid_width && image.height == cloud.grid_height;
    const int w = cloud.grid_width, h = cloud.grid_height;
    const double inv_d2 = 1.0 / (weights.sigma_d * weights.sigma_d);
    const double inv_c2 = 1.0 / (weights.sigma_c * weights.sigma_c);
    // forward half of the 8-neighborhood so each undirected edge appears once
    static constexpr int kOffsets[4][2] = {{1, 0}, {-1, 1}, {0, 1}, {1, 1}};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int a = map[static_cast<std::size_t>(y) * w + x];
            if (a < 0) continue;
            for (const auto& off : kOffsets) {
                const int qx = x + off[0], qy = y + off[1];
                if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
                const int b = map[static_cast<std::size_t>(qy) * w + qx];
                if (b < 0 || b == a) continue;
                NeighborEdge e;
                e.i = std::min(a, b);
                e.j = std::max(a, b);
                const Vec3& pi = cloud.points[static_cast<std::size_t>(e.i)];
                const Vec3& pj = cloud.points[static_cast<std::size_t>(e.j)];
                e.rest = pi - pj;
                e.w_d = clamp_weight(std::exp(-e.rest.squaredNorm() * inv_d2));
                if (has_color) {
                    const double di = image.intensity[static_cast<std::size_t>(cloud.pixel_of[e.i])] -
                                      image.intensity[static_cast<std::size_t>(cloud.pixel_of[e.j])];
                    e.w_c = clamp_weight(std::exp(-di * di * inv_c2));
                }
                graph.edges.push_back(e);
            }
        }
    }
    std::sort(graph.edges.begin(), graph.edges.end(),
              [](const NeighborEdge& l, const NeighborEdge& r) { return l.i != r.i ? l.i < r.i : l.j < r.j; });
    return graph;
}

ClosestPointIndex::ClosestPointIndex(const PointCloud& target) : target_(&target), tree_(target.points) {
    if (target.empty()) throw InputError("closest point search: empty target cloud");
}

Correspondence ClosestPointIndex::query(int source_index, const Vec3& p) const {
    const auto [idx, d2] = tree_.nearest(p);
    Correspondence c;
    c.source_index = source_index;
    c.target_index = idx;
    c.target_point = target_->points[static_cast<std::size_t>(idx)];
    if (target_->normals.size() == target_->size()) c.target_normal = target_->normals[static_cast<std::size_t>(idx)];
    c.distance = std::sqrt(d2);
    return c;
}

std::vector<Correspondence> closest_points(std::span<const Vec3> source, const ClosestPointIndex& index) {
    std::vector<Correspondence> out(source.size());
    parallel_for(source.size(), 512, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] = index.query(static_cast<int>(i), source[i]);
    });
    return out;
}

std::vector<Correspondence> closest_points(const PointCloud& source, const PointCloud& target) {
    const ClosestPointIndex index(target);
    return closest_points(source.points, index);
}

std::size_t gate_correspondences(std::vector<Correspondence>& corr, double max_distance) {
    std::size_t kept = 0;
    for (auto& c : corr) {
        c.active = c.active && c.distance <= max_distance;
        kept += c.active ? 1 : 0;
    }
    return kept;
}

OcclusionField occlusion_weights(const FlowField2D& flow_s, const ColorImage& image_s, const ColorImage& image_s1,
                                 const EnergyWeights& weights) {
    if (flow_s.width != image_s.width || flow_s.height != image_s.height || image_s1.width != image_s.width ||
        image_s1.height != image_s.height)
        throw InputError("occlusion_weights: flow and image sizes differ");
    OcclusionField out;
    out.width = flow_s.width;
    out.height = flow_s.height;
    out.weight.assign(flow_s.size(), 1.0);
    const image::Plane div = flow2d::divergence(flow_s);
    const image::Plane next = image::intensity_plane(image_s1);
    const double inv1 = 1.0 / (weights.sigma_1 * weights.sigma_1);
    const double inv2 = 1.0 / (weights.sigma_2 * weights.sigma_2);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const std::size_t p = flow_s.index(x, y);
            const double xw = x + flow_s.u[p], yw = y + flow_s.v[p];
            if (!flow_s.valid[p] || !image::inside(xw, yw, out.width, out.height)) {
                out.weight[p] = DBL_MIN;
                continue;
            }
            const double di = 255.0 * (image::bilinear(next, xw, yw) - image_s.intensity[p]);
            const double dv = div.data[p];
            out.weight[p] = clamp_weight(std::exp(-dv * dv * inv1) * std::exp(-di * di * inv2));
        }
    }
    return out;
}

double topology_weight(const Vec3& pi, const Vec3& pj, const Vec3& qi, const Vec3& qj, double sigma_t) {
    const double dl = (qi - qj).norm() - (pi - pj).norm();
    return clamp_weight(std::exp(-dl * dl / (sigma_t * sigma_t)));
}

TopologyResult detect_topology_changes_detailed(const PointCloud& m_k, std::span<const FlowField2D> flows,
                                                const DepthMap& d_k1, const CameraRig& rig,
                                                const EnergyWeights& weights, const SolverParams& params) {
    if (flows.empty()) throw InputError("topology: need at least one flow field");
    weights.validate();
    const FlowField2D acc = flow2d::accumulate_flow(flows);
    const CameraIntrinsics& kc = rig.color_intrinsics;
    if (acc.width != kc.width || acc.height != kc.height)
        throw InputError("topology: flow size does not match the color camera");

    TopologyResult out;
    out.graph = m_k.graph;
    out.warped = m_k.points;
    out.excluded.assign(m_k.size(), 0);

    // lift: each point follows the accumulated flow at its own depth
    const RigidTransform to_depth = rig.depth_to_color.inverse();
    for (std::size_t i = 0; i < m_k.size(); ++i) {
        const Vec3 c = rig.depth_to_color.apply(m_k.points[i]);
        if (!(c.z() > 0.0)) {
            out.excluded[i] = 1;
            continue;
        }
        const Vec2 q = camera::project(c, kc);
        double u, v;
        if (!flow2d::sample_flow(acc, q.x(), q.y(), u, v) || !image::inside(q.x() + u, q.y() + v, kc.width, kc.height)) {
            out.excluded[i] = 1;
            continue;
        }
        out.warped[i] = to_depth.apply(camera::backproject(q.x() + u, q.y() + v, c.z(), kc));
    }

    const PointCloud target = estimate_normals(camera::unproject(d_k1, rig.depth_intrinsics), params.normal_neighbors);
    if (target.empty()) {
        out.refinement_ok = false;
        out.warnings.push_back("topology: next depth map has no valid pixels; w_t left at 1");
        for (auto& e : out.graph.edges) e.w_t = 1.0;
        return out;
    }

    SceneFlowState st = SceneFlowState::at_rest(m_k, 1, 1, 1);
    st.anchor.graph = m_k.graph;
    for (auto& e : st.anchor.graph.edges) e.w_t = 1.0;
    st.positions[0] = out.warped;
    auto reg = solver::register_to_target(std::move(st), target, weights, params,
                                          energy::terms({energy::Term::point, energy::Term::plane, energy::Term::iso}));
    if (!reg.ok) {
        out.refinement_ok = false;
        out.warnings.push_back("topology: refinement failed (" + reg.message + "); using flow-lifted positions");
    } else {
        out.warped = reg.state.positions[0];
    }

    // points without a gated target correspondence carry no evidence
    const ClosestPointIndex index(target);
    for (std::size_t i = 0; i < m_k.size(); ++i) {
        if (out.excluded[i]) continue;
        if (index.query(static_cast<int>(i), out.warped[i]).distance > params.correspondence_gate) out.excluded[i] = 1;
    }
    for (auto& e : out.graph.edges) {
        const auto i = static_cast<std::size_t>(e.i), j = static_cast<std::size_t>(e.j);
        e.w_t = (out.excluded[i] || out.excluded[j])
                    ? 1.0
                    : topology_weight(m_k.points[i], m_k.points[j], out.warped[i], out.warped[j], weights.sigma_t);
    }
    return out;
}

NeighborGraph detect_topology_changes(const PointCloud& m_k, std::span<const FlowField2D> flows, const DepthMap& d_k1,
                                      const CameraRig& rig, const EnergyWeights& weights,
                                      const SolverParams& params) {
    return detect_topology_changes_detailed(m_k, flows, d_k1, rig, weights, params).graph;
}

}  // namespace depthweave::analysis
