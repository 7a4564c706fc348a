#include <doctest.h>

#include "depthweave/errors.hpp"
#include "depthweave/parallel.hpp"
#include "depthweave/params.hpp"
#include "depthweave/types.hpp"
#include "gen.hpp"

using namespace depthweave;

TEST_CASE("robust kernel values") {
    CHECK(robust_kernel(0.0, 1e-4) == doctest::Approx(1e-4).epsilon(1e-15));
    CHECK(robust_kernel(3.0, 4.0) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(std::abs(robust_kernel(1.0, 1e-4) - 1.000000005) < 1e-9);
    CHECK(robust_kernel(-3.0, 4.0) == robust_kernel(3.0, 4.0));
}

TEST_CASE("robust kernel: monotone in |r|, bounded below by eps and |r|") {
    gen::Rng rng(11);
    for (int t = 0; t < 1000; ++t) {
        const double eps = std::pow(10.0, rng.uniform(-6, 0));
        const double a = rng.normal(2.0), b = rng.normal(2.0);
        const double ra = robust_kernel(a, eps), rb = robust_kernel(b, eps);
        CHECK(ra >= eps);
        CHECK(ra >= std::abs(a));
        if (std::abs(a) < std::abs(b)) CHECK(ra <= rb);
    }
}

TEST_CASE("default weights and solver budget") {
    const EnergyWeights w;
    CHECK(w.lambda_opti == 1.0);
    CHECK(w.lambda_point == 0.2);
    CHECK(w.lambda_plane == 0.8);
    CHECK(w.lambda_proj == 1.0);
    CHECK(w.lambda_iso == 3.0);
    CHECK(w.lambda_reg == 0.8);
    CHECK(w.lambda_short == 0.5);
    CHECK(w.epsilon == 1e-4);
    CHECK(w.d_A == 10.0);
    CHECK(w.sigma_c == 1.0);
    CHECK(w.sigma_d == 0.015);
    CHECK(w.sigma_t == 0.015);
    CHECK(w.sigma_1 == 1.0);
    CHECK(w.sigma_2 == 20.0);
    const SolverParams s;
    CHECK(s.levels == 3);
    CHECK(s.gn_iters_per_level == 5);
    CHECK(s.pcg_iters == 10);
    CHECK(w.is_valid());
}

TEST_CASE("weights validation names the bad field") {
    EnergyWeights w;
    w.sigma_t = 0.0;
    CHECK_FALSE(w.is_valid());
    CHECK_THROWS_AS(w.validate(), InputError);
    try {
        w.validate();
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("sigma_t") != std::string::npos);
    }
    EnergyWeights neg;
    neg.lambda_iso = -1.0;
    CHECK_THROWS_AS(neg.validate(), InputError);
}

TEST_CASE("intrinsics and rig validation") {
    CameraIntrinsics k = gen::intrinsics(32, 24);
    CHECK(k.is_valid());
    k.fx = 0.0;
    CHECK_FALSE(k.is_valid());
    CHECK_THROWS_AS(k.validate(), InputError);

    RigidTransform t;
    t.rotation = 2.0 * Mat3::Identity();
    CHECK_FALSE(t.is_valid());
    t.rotation = -Mat3::Identity();
    CHECK_FALSE(t.is_valid());
}

TEST_CASE("rigid transform inverse and compose") {
    gen::Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        RigidTransform a{rng.rotation(), rng.vec3()}, b{rng.rotation(), rng.vec3()};
        const Vec3 p = rng.vec3();
        CHECK((a.inverse().apply(a.apply(p)) - p).norm() < 1e-12);
        CHECK((a.compose(b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
    }
}

TEST_CASE("state validation") {
    gen::Rng rng(5);
    auto prob = gen::random_problem(rng);
    SceneFlowState st = SceneFlowState::at_rest(prob.state.anchor, 2, 6, 5);
    CHECK(validate(st).empty());

    SUBCASE("scaled rotation") {
        st.rotations[0][3] *= 2.0;
        const auto v = validate(st);
        REQUIRE(v.size() == 1);
        CHECK(v[0].field == "rotations[1]");
        CHECK(v[0].index == 3);
    }
    SUBCASE("size mismatch") {
        st.positions[1].pop_back();
        const auto v = validate(st);
        REQUIRE_FALSE(v.empty());
        CHECK(v[0].field == "positions[2]");
    }
    SUBCASE("non-finite position") {
        st.positions[0][0].x() = std::nan("");
        CHECK_FALSE(validate(st).empty());
    }
    SUBCASE("edge weight out of range") {
        REQUIRE_FALSE(st.anchor.graph.edges.empty());
        st.anchor.graph.edges[0].w_t = 0.0;
        CHECK_FALSE(validate(st).empty());
    }
}

TEST_CASE("depth map invariants") {
    DepthMap d(4, 3);
    CHECK(d.valid_count() == 0);
    d.set(1, 1, 2.0f);
    CHECK(d.is_valid(1, 1));
    CHECK(d.valid_count() == 1);
    d.invalidate(1, 1);
    CHECK(d.depth[d.index(1, 1)] == 0.0f);
    d.set(0, 0, -1.0f);
    CHECK_FALSE(d.is_valid(0, 0));
}

TEST_CASE("color intensity is the luma combination") {
    auto img = ColorImage::from_rgb(1, 1, {0.2f, 0.4f, 0.6f});
    CHECK(img.intensity[0] == doctest::Approx(0.299 * 0.2 + 0.587 * 0.4 + 0.114 * 0.6).epsilon(1e-6));
}

TEST_CASE("parallel_sum is independent of the thread count") {
    gen::Rng rng(9);
    std::vector<double> v(100000);
    for (auto& x : v) x = rng.normal();
    auto f = [&](std::size_t i) { return v[i]; };
    set_thread_count(1);
    const double one = parallel_sum(v.size(), 1000, f);
    set_thread_count(4);
    const double four = parallel_sum(v.size(), 1000, f);
    set_thread_count(0);
    CHECK(one == four);

    std::vector<int> hit(1000, 0);
    parallel_for(hit.size(), 7, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) hit[i]++;
    });
    for (int h : hit) CHECK(h == 1);
}
