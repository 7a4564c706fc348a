#include "depthweave/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/LU>

#include "depthweave/errors.hpp"
#include "depthweave/params.hpp"

namespace depthweave {

namespace {

template <typename T>
std::string str(const T& v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------

bool CameraIntrinsics::is_valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cx < width && cy >= 0.0 &&
           cy < height;
}

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InputError("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InputError("intrinsics: image size must be positive");
    if (!(cx >= 0.0 && cx < width)) throw InputError("intrinsics: cx=" + str(cx) + " outside [0, width)");
    if (!(cy >= 0.0 && cy < height)) throw InputError("intrinsics: cy=" + str(cy) + " outside [0, height)");
}

CameraIntrinsics CameraIntrinsics::decimated(int stride) const {
    CameraIntrinsics out = *this;
    out.fx = fx / stride;
    out.fy = fy / stride;
    out.cx = cx / stride;
    out.cy = cy / stride;
    out.width = (width + stride - 1) / stride;
    out.height = (height + stride - 1) / stride;
    return out;
}

double orthonormality_error(const Mat3& r) { return (r.transpose() * r - Mat3::Identity()).norm(); }

RigidTransform RigidTransform::inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
}

RigidTransform RigidTransform::compose(const RigidTransform& rhs) const {
    RigidTransform out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
}

bool RigidTransform::is_valid() const {
    return orthonormality_error(rotation) < 1e-6 && rotation.determinant() > 0.0 && translation.allFinite();
}

void RigidTransform::validate() const {
    if (!is_valid()) throw InputError("rigid transform: rotation is not orthonormal with det +1");
}

void CameraRig::validate() const {
    depth_intrinsics.validate();
    color_intrinsics.validate();
    depth_to_color.validate();
}

CameraRig CameraRig::aligned(const CameraIntrinsics& color) {
    CameraRig rig;
    rig.depth_intrinsics = color;
    rig.color_intrinsics = color;
    return rig;
}

CameraRig CameraRig::decimated(int stride) const {
    CameraRig out = *this;
    out.depth_intrinsics = depth_intrinsics.decimated(stride);
    out.color_intrinsics = color_intrinsics.decimated(stride);
    return out;
}

// ---------------------------------------------------------------------------

DepthMap::DepthMap(int w, int h) : width(w), height(h), depth(size(), 0.0f), valid(size(), 0) {}

void DepthMap::set(int x, int y, float d) {
    const auto i = index(x, y);
    if (d > 0.0f && std::isfinite(d)) {
        depth[i] = d;
        valid[i] = 1;
    } else {
        depth[i] = 0.0f;
        valid[i] = 0;
    }
}

void DepthMap::invalidate(int x, int y) {
    const auto i = index(x, y);
    depth[i] = 0.0f;
    valid[i] = 0;
}

std::size_t DepthMap::valid_count() const {
    return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto v) { return v != 0; }));
}

void DepthMap::validate() const {
    if (width < 0 || height < 0 || depth.size() != size() || valid.size() != size())
        throw InputError("depth map: buffer sizes do not match " + str(width) + "x" + str(height));
    for (std::size_t i = 0; i < size(); ++i) {
        if (valid[i] && !(depth[i] > 0.0f)) throw InputError("depth map: non-positive depth at valid pixel " + str(i));
    }
}

ColorImage::ColorImage(int w, int h) : width(w), height(h), rgb(3 * size(), 0.0f), intensity(size(), 0.0f) {}

ColorImage ColorImage::from_rgb(int w, int h, std::vector<float> rgb) {
    ColorImage img;
    img.width = w;
    img.height = h;
    if (rgb.size() != 3 * img.size()) throw InputError("color image: rgb buffer size mismatch");
    img.rgb = std::move(rgb);
    img.update_intensity();
    return img;
}

ColorImage ColorImage::from_gray(int w, int h, const std::vector<float>& gray) {
    ColorImage img(w, h);
    if (gray.size() != img.size()) throw InputError("color image: gray buffer size mismatch");
    for (std::size_t i = 0; i < img.size(); ++i) {
        img.rgb[3 * i] = img.rgb[3 * i + 1] = img.rgb[3 * i + 2] = gray[i];
    }
    img.update_intensity();
    return img;
}

void ColorImage::update_intensity() {
    intensity.resize(size());
    for (std::size_t i = 0; i < size(); ++i) {
        intensity[i] = 0.299f * rgb[3 * i] + 0.587f * rgb[3 * i + 1] + 0.114f * rgb[3 * i + 2];
    }
}

void ColorImage::validate() const {
    if (rgb.size() != 3 * size() || intensity.size() != size()) throw InputError("color image: buffer size mismatch");
    for (float c : rgb) {
        if (!(c >= 0.0f && c <= 1.0f)) throw InputError("color image: channel value outside [0,1]");
    }
}

FlowField2D::FlowField2D(int w, int h) : width(w), height(h), u(size(), 0.0), v(size(), 0.0), valid(size(), 1) {}

FlowField2D FlowField2D::constant(int w, int h, double du, double dv) {
    FlowField2D f(w, h);
    std::fill(f.u.begin(), f.u.end(), du);
    std::fill(f.v.begin(), f.v.end(), dv);
    return f;
}

std::vector<int> PointCloud::pixel_to_point() const {
    std::vector<int> map(static_cast<std::size_t>(grid_width) * grid_height, -1);
    for (std::size_t i = 0; i < pixel_of.size(); ++i) map[pixel_of[i]] = static_cast<int>(i);
    return map;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<const char*, double>> weight_fields(const EnergyWeights& w) {
    return {{"lambda_opti", w.lambda_opti}, {"lambda_point", w.lambda_point}, {"lambda_plane", w.lambda_plane},
            {"lambda_proj", w.lambda_proj}, {"lambda_iso", w.lambda_iso},     {"lambda_reg", w.lambda_reg},
            {"lambda_short", w.lambda_short}, {"epsilon", w.epsilon},        {"d_A", w.d_A},
            {"sigma_c", w.sigma_c},         {"sigma_d", w.sigma_d},           {"sigma_t", w.sigma_t},
            {"sigma_1", w.sigma_1},         {"sigma_2", w.sigma_2}};
}

}  // namespace

bool EnergyWeights::is_valid() const {
    for (const auto& [name, v] : weight_fields(*this))
        if (!(v > 0.0) || !std::isfinite(v)) return false;
    return true;
}

void EnergyWeights::validate() const {
    for (const auto& [name, v] : weight_fields(*this))
        if (!(v > 0.0) || !std::isfinite(v))
            throw InputError(std::string("energy weights: ") + name + " must be strictly positive and finite");
}

double robust_kernel(double r, double epsilon) { return std::sqrt(r * r + epsilon * epsilon); }

void FlowParams::validate() const {
    if (pyramid_levels < 1) throw InputError("flow params: pyramid_levels must be >= 1");
    if (warps_per_level < 1) throw InputError("flow params: warps_per_level must be >= 1");
    if (median_radius < 1) throw InputError("flow params: median_radius must be >= 1");
    if (inner_iterations < 1) throw InputError("flow params: inner_iterations must be >= 1");
    if (!(alpha > 0.0) || !(median_sigma > 0.0)) throw InputError("flow params: alpha and median_sigma must be positive");
}

void SolverParams::validate() const {
    if (levels < 1 || gn_iters_per_level < 1 || pcg_iters < 1 || icp_rounds < 1)
        throw InputError("solver params: all iteration counts must be >= 1");
    if (!(damping >= 0.0)) throw InputError("solver params: damping must be >= 0");
    if (!(energy_tol >= 0.0)) throw InputError("solver params: energy_tol must be >= 0");
    if (!(correspondence_gate > 0.0)) throw InputError("solver params: correspondence_gate must be positive");
    if (normal_neighbors < 3) throw InputError("solver params: normal_neighbors must be >= 3");
}

void FillParams::validate() const {
    if (bilateral_radius < 1) throw InputError("fill params: bilateral_radius must be >= 1");
    if (!(bilateral_sigma_space > 0.0) || !(bilateral_sigma_color > 0.0))
        throw InputError("fill params: bilateral sigmas must be positive");
    if (bilateral_min_neighbors < 1) throw InputError("fill params: bilateral_min_neighbors must be >= 1");
    if (!(merge_tolerance > 0.0)) throw InputError("fill params: merge_tolerance must be positive");
}

// ---------------------------------------------------------------------------

SceneFlowState SceneFlowState::at_rest(const PointCloud& anchor, int g, int flow_width, int flow_height) {
    if (g < 1) throw InputError("scene flow state: g must be >= 1");
    SceneFlowState s;
    s.g = g;
    s.anchor = anchor;
    s.positions.assign(g, anchor.points);
    s.rotations.assign(g, std::vector<Mat3>(anchor.size(), Mat3::Identity()));
    s.flows.assign(g, FlowField2D(flow_width, flow_height));
    return s;
}

std::vector<Violation> validate(const SceneFlowState& state) {
    std::vector<Violation> out;
    const std::size_t n = state.anchor.size();
    if (state.g < 1) out.push_back({"g", 0, "frame ratio must be >= 1"});
    if (state.positions.size() != static_cast<std::size_t>(std::max(state.g, 0)))
        out.push_back({"positions", state.positions.size(), "expected one position set per frame s in [1, g]"});
    if (state.rotations.size() != static_cast<std::size_t>(std::max(state.g, 0)))
        out.push_back({"rotations", state.rotations.size(), "expected one rotation set per frame s in [1, g]"});
    if (state.flows.size() != static_cast<std::size_t>(std::max(state.g, 0)))
        out.push_back({"flows", state.flows.size(), "expected one flow field per frame s in [0, g-1]"});

    for (std::size_t s = 0; s < state.positions.size(); ++s) {
        if (state.positions[s].size() != n)
            out.push_back({"positions[" + str(s + 1) + "]", s + 1,
                           "size " + str(state.positions[s].size()) + " != anchor size " + str(n)});
        for (std::size_t i = 0; i < state.positions[s].size(); ++i) {
            if (!state.positions[s][i].allFinite())
                out.push_back({"positions[" + str(s + 1) + "]", i, "non-finite position"});
        }
    }
    for (std::size_t s = 0; s < state.rotations.size(); ++s) {
        if (state.rotations[s].size() != n)
            out.push_back({"rotations[" + str(s + 1) + "]", s + 1,
                           "size " + str(state.rotations[s].size()) + " != anchor size " + str(n)});
        for (std::size_t i = 0; i < state.rotations[s].size(); ++i) {
            const Mat3& r = state.rotations[s][i];
            if (!(orthonormality_error(r) < 1e-6) || !(r.determinant() > 0.0))
                out.push_back({"rotations[" + str(s + 1) + "]", i, "not a rotation (orthonormal, det +1)"});
        }
    }
    for (std::size_t s = 1; s < state.flows.size(); ++s) {
        if (state.flows[s].width != state.flows[0].width || state.flows[s].height != state.flows[0].height)
            out.push_back({"flows[" + str(s) + "]", s, "flow field size differs from flows[0]"});
    }
    for (std::size_t s = 0; s < state.flows.size(); ++s) {
        const auto& f = state.flows[s];
        if (f.u.size() != f.size() || f.v.size() != f.size() || f.valid.size() != f.size())
            out.push_back({"flows[" + str(s) + "]", s, "flow buffers do not match dimensions"});
    }

    const auto& a = state.anchor;
    if (a.normals.size() != n && !a.normals.empty())
        out.push_back({"anchor.normals", a.normals.size(), "normal count differs from point count"});
    for (std::size_t i = 0; i < a.normals.size(); ++i) {
        if (std::abs(a.normals[i].norm() - 1.0) > 1e-6) out.push_back({"anchor.normals", i, "normal is not unit length"});
    }
    if (a.pixel_of.size() != n) out.push_back({"anchor.pixel_of", a.pixel_of.size(), "provenance size differs from point count"});
    const long grid = static_cast<long>(a.grid_width) * a.grid_height;
    for (std::size_t i = 0; i < a.pixel_of.size(); ++i) {
        if (a.pixel_of[i] < 0 || a.pixel_of[i] >= grid) out.push_back({"anchor.pixel_of", i, "pixel outside source grid"});
    }
    for (std::size_t e = 0; e < a.graph.edges.size(); ++e) {
        const auto& edge = a.graph.edges[e];
        if (edge.i == edge.j) out.push_back({"anchor.graph", e, "self edge"});
        if (edge.i < 0 || edge.j < 0 || static_cast<std::size_t>(edge.i) >= n || static_cast<std::size_t>(edge.j) >= n)
            out.push_back({"anchor.graph", e, "edge references a missing point"});
        for (double w : {edge.w_c, edge.w_d, edge.w_t}) {
            if (!(w > 0.0 && w <= 1.0)) {
                out.push_back({"anchor.graph", e, "edge weight outside (0,1]"});
                break;
            }
        }
    }
    return out;
}

}  // namespace depthweave
