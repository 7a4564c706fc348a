#pragma once

// Hand-rolled generators for property tests. Everything is seeded so failures replay.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Geometry>

#include "depthweave/analysis.hpp"
#include "depthweave/camera.hpp"
#include "depthweave/types.hpp"

namespace gen {

using namespace depthweave;

struct Rng {
    std::mt19937_64 engine;
    explicit Rng(std::uint64_t seed) : engine(seed) {}

    double uniform(double a = 0.0, double b = 1.0) { return std::uniform_real_distribution<double>(a, b)(engine); }
    double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(engine); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine); }
    bool coin(double p = 0.5) { return uniform() < p; }
    Vec3 vec3(double sd = 1.0) { return {normal(sd), normal(sd), normal(sd)}; }
    Vec3 unit() {
        Vec3 v = vec3();
        while (v.norm() < 1e-6) v = vec3();
        return v.normalized();
    }
    Mat3 rotation(double max_angle = M_PI) { return Eigen::AngleAxisd(uniform(-max_angle, max_angle), unit()).toRotationMatrix(); }
};

/// Components rounded to float32, so they survive a float file round trip exactly.
inline Vec3 float_rounded(const Vec3& v) {
    return {static_cast<float>(v.x()), static_cast<float>(v.y()), static_cast<float>(v.z())};
}

inline CameraIntrinsics intrinsics(int w, int h, double f = 60.0) {
    CameraIntrinsics k;
    k.fx = f;
    k.fy = f;
    k.cx = (w - 1) / 2.0;
    k.cy = (h - 1) / 2.0;
    k.width = w;
    k.height = h;
    return k;
}

inline DepthMap depth_map(Rng& rng, int w, int h, double lo = 0.5, double hi = 5.0, double invalid = 0.1) {
    DepthMap d(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (!rng.coin(invalid)) d.set(x, y, static_cast<float>(rng.uniform(lo, hi)));
    return d;
}

inline FlowField2D flow_field(Rng& rng, int w, int h, double sd = 2.0, double invalid = 0.1) {
    FlowField2D f(w, h);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.u[i] = rng.normal(sd);
        f.v[i] = rng.normal(sd);
        f.valid[i] = rng.coin(invalid) ? 0 : 1;
    }
    return f;
}

/// Smooth texture: a few random sinusoids, values in [0, 1].
inline ColorImage texture(Rng& rng, int w, int h, double shift_x = 0.0, double shift_y = 0.0) {
    struct Wave { double fx, fy, phase; int channel; };
    std::vector<Wave> waves;
    for (int k = 0; k < 6; ++k)
        waves.push_back({rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5), rng.uniform(0, 2 * M_PI), k % 3});
    std::vector<float> rgb(static_cast<std::size_t>(w) * h * 3, 0.5f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (const auto& wv : waves)
                rgb[3 * (static_cast<std::size_t>(y) * w + x) + wv.channel] +=
                    static_cast<float>(0.12 * std::sin(wv.fx * (x - shift_x) + wv.fy * (y - shift_y) + wv.phase));
    return ColorImage::from_rgb(w, h, std::move(rgb));
}

/// Periodic texture with integer period so an integer shift is exact under wraparound.
inline ColorImage periodic_texture(int w, int h, int shift_x = 0, std::uint64_t seed = 1) {
    Rng rng(seed);
    const double a = rng.uniform(0, 6.28), b = rng.uniform(0, 6.28);
    std::vector<float> rgb(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double xs = x - shift_x;
            const double v1 = 0.5 + 0.2 * std::sin(2 * M_PI * xs / 16.0 + a) * std::cos(2 * M_PI * y / 16.0 + b);
            const double v2 = 0.5 + 0.2 * std::sin(2 * M_PI * (xs + y) / 8.0 + b);
            const double v3 = 0.5 + 0.2 * std::cos(2 * M_PI * xs / 8.0) * std::sin(2 * M_PI * y / 8.0 + a);
            float* p = &rgb[3 * (static_cast<std::size_t>(y) * w + x)];
            p[0] = static_cast<float>(v1);
            p[1] = static_cast<float>(v2);
            p[2] = static_cast<float>(v3);
        }
    return ColorImage::from_rgb(w, h, std::move(rgb));
}

/// Slanted, slightly bumpy surface in front of the camera.
inline DepthMap smooth_depth(Rng& rng, int w, int h, double base = 2.0) {
    const double ax = rng.uniform(-0.01, 0.01), ay = rng.uniform(-0.01, 0.01);
    const double ph = rng.uniform(0, 6.28);
    DepthMap d(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            d.set(x, y, static_cast<float>(base + ax * x + ay * y + 0.02 * std::sin(0.3 * x + 0.2 * y + ph)));
    return d;
}

/// A random g-step state with `w*h` anchor points, a built neighbor graph with random w_t,
/// perturbed positions, rotations and flows. Images are (w_img x h_img).
struct RandomProblem {
    SceneFlowState state;
    std::vector<ColorImage> images;
    CameraRig rig;
    std::vector<analysis::Correspondence> corr;
};

inline RandomProblem random_problem(Rng& rng, int w = 6, int h = 5, int g = 2) {
    RandomProblem p;
    const CameraIntrinsics k = intrinsics(w, h, 8.0);
    p.rig = CameraRig::aligned(k);
    DepthMap d = smooth_depth(rng, w, h);
    PointCloud cloud = camera::unproject(d, k);
    cloud = analysis::estimate_normals(cloud, 8);
    for (int s = 0; s <= g; ++s) p.images.push_back(texture(rng, w, h, 0.3 * s, -0.2 * s));
    EnergyWeights wts;
    cloud.graph = analysis::build_neighbor_graph(cloud, p.images[0], wts);
    for (auto& e : cloud.graph.edges) e.w_t = rng.uniform(0.2, 1.0);
    p.state = SceneFlowState::at_rest(cloud, g, w, h);
    for (int s = 1; s <= g; ++s)
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            p.state.positions[s - 1][i] += rng.vec3(0.01) + Vec3(0.005 * s, 0, 0.002 * s);
            p.state.rotations[s - 1][i] = rng.rotation(0.2);
        }
    for (int s = 0; s < g; ++s)
        for (std::size_t px = 0; px < p.state.flows[s].size(); ++px) {
            p.state.flows[s].u[px] = rng.normal(0.3);
            p.state.flows[s].v[px] = rng.normal(0.3);
        }
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        analysis::Correspondence c;
        c.source_index = static_cast<int>(i);
        c.target_point = cloud.points[i] + rng.vec3(0.02);
        c.target_normal = rng.unit();
        c.target_index = static_cast<int>(i);
        p.corr.push_back(c);
    }
    return p;
}

}  // namespace gen
