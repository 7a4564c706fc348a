#include "depthweave/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Geometry>

#include "depthweave/camera.hpp"
#include "depthweave/errors.hpp"
#include "depthweave/parallel.hpp"

namespace depthweave::synth {

namespace {

constexpr double kFeaturePixels = 16.0;  // coarsest texture octave, in pixels at the reference depth

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
    const std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL ^
                                                     splitmix(static_cast<std::uint64_t>(iy))));
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

Mat3 rot(const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(); }

struct Body {
    enum class Kind { plane, box } kind = Kind::plane;
    int id = 0;
    Vec3 half = Vec3::Zero();  // box half extents
    Mat3 r0 = Mat3::Identity();
    Vec3 c0 = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    double omega = 0.0;
    Vec3 axis = Vec3::UnitY();
    Vec3 base = Vec3::Constant(0.5);
    std::uint64_t seed = 0;
    double feature = 0.05;  // meters

    Mat3 rotation(double t) const { return omega == 0.0 ? r0 : Mat3(rot(axis, omega * t) * r0); }
    Vec3 center(double t) const { return c0 + velocity * t; }
};

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    const Body* body = nullptr;
    Vec2 tex = Vec2::Zero();
};

// Ray o + t d in camera coordinates, d.z = 1 so t is the depth.
void intersect(const Body& b, double tick, const Vec3& d, Hit& best) {
    const Mat3 r = b.rotation(tick);
    const Vec3 o_l = r.transpose() * (-b.center(tick));
    const Vec3 d_l = r.transpose() * d;
    if (b.kind == Body::Kind::plane) {
        if (std::abs(d_l.z()) < 1e-12) return;
        const double t = -o_l.z() / d_l.z();
        if (!(t > 1e-6) || t >= best.t) return;
        const Vec3 p = o_l + t * d_l;
        best = {t, &b, Vec2(p.x(), p.y())};
        return;
    }
    double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
    int axis = -1;
    for (int k = 0; k < 3; ++k) {
        if (std::abs(d_l[k]) < 1e-15) {
            if (std::abs(o_l[k]) > b.half[k]) return;
            continue;
        }
        double ta = (-b.half[k] - o_l[k]) / d_l[k];
        double tb = (b.half[k] - o_l[k]) / d_l[k];
        if (ta > tb) std::swap(ta, tb);
        if (ta > t0) {
            t0 = ta;
            axis = k;
        }
        t1 = std::min(t1, tb);
    }
    if (axis < 0 || t0 > t1 || !(t0 > 1e-6) || t0 >= best.t) return;
    const Vec3 p = o_l + t0 * d_l;
    const int a = (axis + 1) % 3, c = (axis + 2) % 3;
    best = {t0, &b, Vec2(p[a] + 3.0 * axis, p[c] - 2.0 * axis)};
}

Vec3 shade(const Body& b, const Vec2& tex) {
    Vec3 rgb;
    for (int c = 0; c < 3; ++c) {
        const std::uint64_t s = b.seed * 3 + static_cast<std::uint64_t>(c);
        double n = 0.0;
        double period = b.feature, amp = 0.5;
        for (int o = 0; o < 3; ++o, period *= 0.5, amp *= 0.6)
            n += amp * value_noise(s + 101 * static_cast<std::uint64_t>(o), tex.x() / period, tex.y() / period);
        n /= 0.5 + 0.3 + 0.18;
        rgb[c] = std::clamp(b.base[c] + 0.6 * (n - 0.5), 0.0, 1.0);
    }
    return rgb;
}

std::vector<Body> build_scene(const SceneSpec& spec, double fx) {
    std::vector<Body> bodies;
    auto feature_at = [&](double z) { return kFeaturePixels * z / fx; };
    auto seed = [&](int k) { return splitmix(spec.seed * 1000003ULL + static_cast<std::uint64_t>(k)); };
    switch (spec.scene) {
        case Scene::translating_plane: {
            Body p;
            p.r0 = rot(Vec3::UnitY(), 0.45) * rot(Vec3::UnitX(), 0.25);
            p.c0 = Vec3(0.0, 0.0, 2.0);
            p.velocity = spec.velocity;
            p.base = Vec3(0.55, 0.5, 0.45);
            p.seed = seed(0);
            p.feature = feature_at(2.0);
            bodies.push_back(p);
            break;
        }
        case Scene::rotating_plane: {
            Body p;
            p.r0 = rot(Vec3::UnitY(), 0.35) * rot(Vec3::UnitX(), -0.2);
            p.c0 = Vec3(0.0, 0.0, 2.0);
            p.omega = spec.angular_velocity;
            p.axis = spec.rotation_axis;
            p.velocity = spec.velocity;
            p.base = Vec3(0.5, 0.55, 0.5);
            p.seed = seed(0);
            p.feature = feature_at(2.0);
            bodies.push_back(p);
            break;
        }
        case Scene::two_block_occlusion: {
            Body bg;
            bg.c0 = Vec3(0.0, 0.0, 2.5);
            bg.base = Vec3(0.25, 0.45, 0.75);
            bg.seed = seed(0);
            bg.feature = feature_at(2.5);
            bodies.push_back(bg);
            Body blk;
            blk.kind = Body::Kind::box;
            blk.id = 1;
            blk.half = Vec3(0.1, 0.12, 0.05);
            blk.c0 = Vec3(-0.12, 0.0, 1.85);
            blk.velocity = spec.velocity;
            blk.base = Vec3(0.8, 0.35, 0.2);
            blk.seed = seed(1);
            blk.feature = feature_at(1.8);
            bodies.push_back(blk);
            break;
        }
        case Scene::separating_blocks: {
            Body bg;
            bg.c0 = Vec3(0.0, 0.0, 2.6);
            bg.base = Vec3(0.3, 0.4, 0.7);
            bg.seed = seed(0);
            bg.feature = feature_at(2.6);
            bodies.push_back(bg);
            for (int k = 0; k < 2; ++k) {
                Body blk;
                blk.kind = Body::Kind::box;
                blk.id = k + 1;
                blk.half = Vec3(0.075, 0.12, 0.05);
                const double sgn = k == 0 ? -1.0 : 1.0;
                blk.c0 = Vec3(sgn * 0.075, 0.0, 2.0);
                blk.velocity = sgn * spec.velocity;
                blk.base = k == 0 ? Vec3(0.75, 0.45, 0.3) : Vec3(0.7, 0.5, 0.35);
                blk.seed = seed(1 + k);
                blk.feature = feature_at(1.95);
                bodies.push_back(blk);
            }
            break;
        }
    }
    return bodies;
}

}  // namespace

std::string_view scene_name(Scene s) {
    switch (s) {
        case Scene::translating_plane: return "translating-plane";
        case Scene::rotating_plane: return "rotating-plane";
        case Scene::two_block_occlusion: return "two-block-occlusion";
        case Scene::separating_blocks: return "separating-blocks";
    }
    return "?";
}

std::optional<Scene> parse_scene(std::string_view name) {
    for (Scene s : {Scene::translating_plane, Scene::rotating_plane, Scene::two_block_occlusion,
                    Scene::separating_blocks})
        if (scene_name(s) == name) return s;
    return std::nullopt;
}

SceneSpec SceneSpec::defaults(Scene scene, int width, int height) {
    SceneSpec s;
    s.scene = scene;
    s.width = width;
    s.height = height;
    // motions scale with the image so the pixel speed stays the same
    const double fx = 500.0 * width / 128.0;
    auto px_at = [fx](double z) { return z / fx; };  // meters per pixel at depth z
    switch (scene) {
        case Scene::translating_plane: s.velocity = Vec3(px_at(2.0), 0.5 * px_at(2.0), 0.008); break;
        case Scene::rotating_plane:
            s.angular_velocity = 0.01;
            s.rotation_axis = Vec3(0.2, 1.0, 0.3).normalized();
            break;
        case Scene::two_block_occlusion: s.velocity = Vec3(1.5 * px_at(1.8), 0.0, 0.0); break;
        case Scene::separating_blocks: s.velocity = Vec3(px_at(2.0), 0.0, 0.0); break;
    }
    return s;
}

void SceneSpec::validate() const {
    if (g < 1) throw SceneSpecError("g must be at least 1");
    if (frames < g + 1) throw SceneSpecError("need at least g + 1 frames");
    if ((frames - 1) % g != 0) throw SceneSpecError("frames - 1 must be a multiple of g");
    if (width < 8 || height < 8) throw SceneSpecError("resolution must be at least 8x8");
    if (!velocity.allFinite() || !std::isfinite(angular_velocity) || !rotation_axis.allFinite())
        throw SceneSpecError("motion parameters must be finite");
    if (angular_velocity != 0.0 && rotation_axis.norm() == 0.0) throw SceneSpecError("rotation axis is zero");
}

double value_noise(std::uint64_t seed, double u, double v) {
    const double fu = std::floor(u), fv = std::floor(v);
    const auto iu = static_cast<std::int64_t>(fu), iv = static_cast<std::int64_t>(fv);
    const double tu = fade(u - fu), tv = fade(v - fv);
    const double a = lattice(seed, iu, iv), b = lattice(seed, iu + 1, iv);
    const double c = lattice(seed, iu, iv + 1), d = lattice(seed, iu + 1, iv + 1);
    const double top = a + (b - a) * tu, bot = c + (d - c) * tu;
    return top + (bot - top) * tv;
}

CameraRig default_rig(int width, int height) {
    CameraIntrinsics k;
    k.fx = k.fy = 500.0 * width / 128.0;
    k.cx = 0.5 * (width - 1);
    k.cy = 0.5 * (height - 1);
    k.width = width;
    k.height = height;
    return CameraRig::aligned(k);
}

Dataset generate(const SceneSpec& spec) { return generate(spec, default_rig(spec.width, spec.height)); }

Dataset generate(const SceneSpec& spec, const CameraRig& rig) {
    spec.validate();
    rig.validate();
    const CameraIntrinsics& k = rig.color_intrinsics;
    if (k.width != spec.width || k.height != spec.height)
        throw SceneSpecError("rig resolution differs from the scene resolution");
    const std::vector<Body> bodies = build_scene(spec, k.fx);
    const int w = spec.width, h = spec.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;

    Dataset ds;
    ds.g = spec.g;
    ds.rig = rig;
    ds.colors.resize(static_cast<std::size_t>(spec.frames));
    ds.gt_depth.resize(static_cast<std::size_t>(spec.frames));
    ds.object_id.resize(static_cast<std::size_t>(spec.frames));
    ds.gt_flow.resize(static_cast<std::size_t>(spec.frames - 1));
    ds.gt_scene_flow.resize(static_cast<std::size_t>(spec.frames - 1));

    for (int t = 0; t < spec.frames; ++t) {
        for (const Body& b : bodies) {
            if (b.kind != Body::Kind::box) continue;
            const Vec3 c = b.center(t);
            if (!(c.z() > b.half.norm() + 0.1)) throw SceneSpecError("block leaves the frustum at tick " + std::to_string(t));
            const Vec2 q = camera::project(c, k);
            if (!camera::nearest_pixel(q, w, h))
                throw SceneSpecError("block leaves the frustum at tick " + std::to_string(t));
        }
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    parallel_for(static_cast<std::size_t>(spec.frames), 1, [&](std::size_t f0, std::size_t f1) {
        for (std::size_t f = f0; f < f1; ++f) {
            const double t = static_cast<double>(f);
            std::vector<float> rgb(3 * n, 0.0f);
            DepthMap depth(w, h);
            std::vector<std::int8_t> ids(n, -1);
            const bool has_next = static_cast<int>(f) + 1 < spec.frames;
            FlowField2D flow(w, h);
            std::vector<Vec3> sf(n, Vec3::Constant(nan));
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y) * w + x;
                    const Vec3 d((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
                    Hit hit;
                    for (const Body& b : bodies) intersect(b, t, d, hit);
                    if (!hit.body) {
                        flow.valid[p] = 0;
                        flow.u[p] = flow.v[p] = 0.0;
                        continue;
                    }
                    const Vec3 c = shade(*hit.body, hit.tex);
                    for (int ch = 0; ch < 3; ++ch) rgb[3 * p + ch] = static_cast<float>(c[ch]);
                    depth.set(x, y, static_cast<float>(hit.t));
                    ids[p] = static_cast<std::int8_t>(hit.body->id);
                    if (!has_next) continue;
                    const Vec3 X = hit.t * d;
                    const Body& b = *hit.body;
                    const Vec3 local = b.rotation(t).transpose() * (X - b.center(t));
                    const Vec3 X1 = b.rotation(t + 1.0) * local + b.center(t + 1.0);
                    sf[p] = X1 - X;
                    if (X1.z() > 0.0) {
                        const Vec2 q = camera::project(X1, k);
                        flow.u[p] = q.x() - x;
                        flow.v[p] = q.y() - y;
                    } else {
                        flow.valid[p] = 0;
                    }
                }
            }
            ds.colors[f] = ColorImage::from_rgb(w, h, std::move(rgb));
            ds.gt_depth[f] = std::move(depth);
            ds.object_id[f] = std::move(ids);
            if (has_next) {
                ds.gt_flow[f] = std::move(flow);
                ds.gt_scene_flow[f] = std::move(sf);
            }
        }
    });

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int f = 0; f < spec.frames; ++f) {
        const DepthMap& d = ds.gt_depth[static_cast<std::size_t>(f)];
        if (d.valid_count() != n) throw SceneSpecError("background leaves the frustum at tick " + std::to_string(f));
        for (std::size_t p = 0; p < n; ++p) {
            lo = std::min<double>(lo, d.depth[p]);
            hi = std::max<double>(hi, d.depth[p]);
        }
        if (f % spec.g == 0) ds.depths.push_back(d);
    }
    ds.depth_range = hi - lo;
    return ds;
}

}  // namespace depthweave::synth
