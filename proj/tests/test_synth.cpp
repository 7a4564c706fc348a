#include <doctest.h>

#include <algorithm>

#include "depthweave/camera.hpp"
#include "depthweave/errors.hpp"
#include "depthweave/synth.hpp"

using namespace depthweave;

namespace {

// ray-box slab test along d from the origin; returns the entry distance or -1
double slab(const Vec3& d, const Vec3& c, const Vec3& half) {
    double t0 = 0.0, t1 = 1e30;
    for (int k = 0; k < 3; ++k) {
        const double a = (c[k] - half[k]) / d[k], b = (c[k] + half[k]) / d[k];
        t0 = std::max(t0, std::min(a, b));
        t1 = std::min(t1, std::max(a, b));
    }
    return t0 <= t1 ? t0 : -1.0;
}

}  // namespace

TEST_CASE("scene names round trip") {
    for (auto s : {synth::Scene::translating_plane, synth::Scene::rotating_plane, synth::Scene::two_block_occlusion,
                   synth::Scene::separating_blocks})
        CHECK(synth::parse_scene(synth::scene_name(s)) == s);
    CHECK_FALSE(synth::parse_scene("spinning-teapot").has_value());
}

TEST_CASE("dataset counts and bookkeeping") {
    auto spec = synth::SceneSpec::defaults(synth::Scene::translating_plane, 32, 32);
    spec.g = 4;
    spec.frames = 9;
    const auto ds = synth::generate(spec);
    CHECK(ds.colors.size() == 9);
    CHECK(ds.depths.size() == 3);
    CHECK(ds.gt_depth.size() == 9);
    CHECK(ds.gt_flow.size() == 8);
    CHECK(ds.gt_scene_flow.size() == 8);
    CHECK(ds.depths[1].depth == ds.gt_depth[4].depth);
    CHECK(ds.depth_range > 0.0);
    float lo = 1e9f, hi = 0.0f;
    for (const auto& d : ds.gt_depth)
        for (std::size_t i = 0; i < d.size(); ++i) {
            CHECK(d.valid[i]);
            lo = std::min(lo, d.depth[i]);
            hi = std::max(hi, d.depth[i]);
        }
    CHECK(ds.depth_range == doctest::Approx(hi - lo).epsilon(1e-6));
}

TEST_CASE("zero motion gives identical frames and zero flow") {
    auto spec = synth::SceneSpec::defaults(synth::Scene::rotating_plane, 32, 32);
    spec.angular_velocity = 0.0;
    spec.velocity = Vec3::Zero();
    spec.frames = 5;
    const auto ds = synth::generate(spec);
    for (const auto& c : ds.colors) CHECK(c.rgb == ds.colors[0].rgb);
    for (const auto& f : ds.gt_flow)
        for (std::size_t i = 0; i < f.size(); ++i) {
            CHECK(std::abs(f.u[i]) < 1e-9);
            CHECK(std::abs(f.v[i]) < 1e-9);
        }
}

TEST_CASE("translating plane ground-truth flow follows the pinhole formula") {
    auto spec = synth::SceneSpec::defaults(synth::Scene::translating_plane, 128, 128);
    spec.velocity = Vec3(0.1, 0, 0);
    spec.frames = 5;
    const auto ds = synth::generate(spec);
    const auto& k = ds.rig.color_intrinsics;
    CHECK(k.fx == 500.0);
    const auto& f = ds.gt_flow[0];
    const auto& d = ds.gt_depth[0];
    for (std::size_t i = 0; i < f.size(); i += 37) {
        REQUIRE(f.valid[i]);
        CHECK(f.u[i] == doctest::Approx(k.fx * 0.1 / d.depth[i]).epsilon(1e-5));
        CHECK(std::abs(f.v[i]) < 1e-9);
    }
}

TEST_CASE("scene flow ground truth is consistent with the 2D flow") {
    const auto spec = synth::SceneSpec::defaults(synth::Scene::rotating_plane, 48, 48);
    const auto ds = synth::generate(spec);
    const auto& k = ds.rig.color_intrinsics;
    const auto& f = ds.gt_flow[1];
    for (int y = 0; y < 48; y += 5)
        for (int x = 0; x < 48; x += 5) {
            const std::size_t i = f.index(x, y);
            const Vec3 X = camera::backproject(x, y, ds.gt_depth[1].depth[i], k);
            const Vec2 q = camera::project(X + ds.gt_scene_flow[1][i], k);
            CHECK(std::abs(q.x() - x - f.u[i]) < 1e-3);
            CHECK(std::abs(q.y() - y - f.v[i]) < 1e-3);
        }
}

TEST_CASE("two-block visibility matches an independent z-buffer") {
    const auto spec = synth::SceneSpec::defaults(synth::Scene::two_block_occlusion, 64, 64);
    const auto ds = synth::generate(spec);
    const auto& k = ds.rig.color_intrinsics;
    const Vec3 half(0.1, 0.12, 0.05);
    for (int t = 0; t < spec.frames; t += 4) {
        const Vec3 c = Vec3(-0.12, 0, 1.85) + t * spec.velocity;
        std::size_t front = 0;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                const Vec3 d((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
                const double tb = slab(d, c, half);
                const bool box_visible = tb > 0.0 && tb < 2.5;  // background plane sits at z = 2.5
                const std::size_t i = static_cast<std::size_t>(y) * 64 + x;
                CHECK((ds.object_id[t][i] == 1) == box_visible);
                if (box_visible) {
                    ++front;
                    CHECK(std::abs(ds.gt_depth[t].depth[i] - tb) < 1e-5);
                }
            }
        CHECK(front > 100);
    }
}

TEST_CASE("generation is deterministic and seed dependent") {
    auto spec = synth::SceneSpec::defaults(synth::Scene::separating_blocks, 32, 32);
    const auto a = synth::generate(spec), b = synth::generate(spec);
    CHECK(a.colors[3].rgb == b.colors[3].rgb);
    spec.seed = 99;
    CHECK(synth::generate(spec).colors[3].rgb != a.colors[3].rgb);
}

TEST_CASE("value noise is bounded and smooth") {
    double worst = 0;
    for (int i = 0; i < 2000; ++i) {
        const double u = i * 0.137, v = i * 0.071;
        const double n = synth::value_noise(3, u, v);
        CHECK(n >= 0.0);
        CHECK(n <= 1.0);
        worst = std::max(worst, std::abs(synth::value_noise(3, u + 1e-4, v) - n));
    }
    CHECK(worst < 1e-2);
}

TEST_CASE("invalid specs") {
    auto spec = synth::SceneSpec::defaults(synth::Scene::two_block_occlusion, 32, 32);
    spec.frames = 8;  // 7 is not a multiple of g = 4
    CHECK_THROWS_AS(synth::generate(spec), SceneSpecError);

    spec = synth::SceneSpec::defaults(synth::Scene::two_block_occlusion, 32, 32);
    spec.velocity = Vec3(0.5, 0, 0);
    CHECK_THROWS_AS(synth::generate(spec), SceneSpecError);

    spec = synth::SceneSpec::defaults(synth::Scene::translating_plane, 32, 32);
    spec.g = 0;
    CHECK_THROWS_AS(synth::generate(spec), SceneSpecError);
}
