#include <doctest.h>

#include <Eigen/Geometry>

#include "depthweave/energy.hpp"
#include "depthweave/errors.hpp"
#include "depthweave/solver.hpp"
#include "fd.hpp"
#include "gen.hpp"

using namespace depthweave;
using energy::Term;

namespace {

SceneFlowState rigid_state(const PointCloud& anchor, int g, const std::vector<RigidTransform>& motions, int w, int h) {
    SceneFlowState st = SceneFlowState::at_rest(anchor, g, w, h);
    for (int s = 1; s <= g; ++s)
        for (std::size_t i = 0; i < anchor.size(); ++i) {
            st.positions[s - 1][i] = motions[s - 1].apply(anchor.points[i]);
            st.rotations[s - 1][i] = motions[s - 1].rotation;
        }
    return st;
}

}  // namespace

TEST_CASE("gradient of every term matches central differences") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const fd::TermProblem t = fd::make(seed);
        REQUIRE(t.base.state.num_points() == 30);
        for (Term term : energy::kAllTerms) {
            CAPTURE(energy::term_name(term));
            CAPTURE(seed);
            CHECK(fd::gradient_error(t, term) < 1e-4);
        }
    }
}

TEST_CASE("quadratic term Jacobians match residual differences column by column") {
    const fd::TermProblem t = fd::make(4);
    const SceneFlowState& st = t.base.state;
    const auto lay = energy::StateLayout::of(st);
    const EnergyWeights w;
    using Fn = std::function<energy::ResidualBlock(const SceneFlowState&)>;
    const std::vector<std::pair<const char*, Fn>> fns = {
        {"iso", [&](const SceneFlowState& s) { return energy::e_iso(s, s.anchor.graph, w); }},
        {"reg", [&](const SceneFlowState& s) { return energy::e_reg(s, s.anchor.graph, w); }},
        {"short", [&](const SceneFlowState& s) { return energy::e_short(s, w); }},
    };
    for (const auto& [name, fn] : fns) {
        CAPTURE(name);
        const auto b = fn(st);
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(b.jacobian.rows(), lay.size());
        for (int r = 0; r < b.jacobian.rows(); ++r)
            for (int k = b.jacobian.row_ptr[r]; k < b.jacobian.row_ptr[r + 1]; ++k) J(r, b.jacobian.cols[k]) += b.jacobian.vals[k];
        double worst = 0.0;
        for (std::size_t k = 0; k < lay.size(); k += 7) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(lay.size());
            e[k] = 1.0;
            SceneFlowState p = st, m = st;
            solver::apply_increment(p, e, 1e-6);
            solver::apply_increment(m, e, -1e-6);
            const auto bp = fn(p), bm = fn(m);
            for (int r = 0; r < J.rows(); ++r)
                worst = std::max(worst, std::abs((bp.residuals[r] - bm.residuals[r]) / 2e-6 - J(r, k)));
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("e_short Jacobian is +-sqrt(lambda) identity blocks") {
    const fd::TermProblem t = fd::make(5);
    const EnergyWeights w;
    const auto b = energy::e_short(t.base.state, w);
    for (double v : b.jacobian.vals) CHECK(std::abs(std::abs(v) - std::sqrt(w.lambda_short)) < 1e-15);
}

TEST_CASE("e_opti: identical images and zero flow sit at the robust floor") {
    gen::Rng rng(6);
    auto p = gen::random_problem(rng);
    SceneFlowState st = SceneFlowState::at_rest(p.state.anchor, 2, 6, 5);
    std::vector<ColorImage> same(3, p.images[0]);
    const EnergyWeights w;
    const auto b = energy::e_opti(st, same, w);
    CHECK(b.values.size() == 2 * 30u);
    for (double v : b.values) CHECK(std::abs(v - std::sqrt(w.lambda_opti * w.epsilon)) < 1e-9);
}

TEST_CASE("e_opti: shift pair with matching flow sits at the robust floor") {
    const int w = 40, h = 32;
    const ColorImage a = gen::periodic_texture(w, h, 0), b = gen::periodic_texture(w, h, 2);
    gen::Rng rng(7);
    PointCloud pc = camera::unproject(gen::smooth_depth(rng, w, h), gen::intrinsics(w, h, 30));
    SceneFlowState st = SceneFlowState::at_rest(pc, 1, w, h);
    st.flows[0] = FlowField2D::constant(w, h, 2.0, 0.0);
    std::vector<ColorImage> imgs{a, b};
    const EnergyWeights wts;
    const auto blk = energy::e_opti(st, imgs, wts);
    CHECK(blk.skipped == static_cast<std::size_t>(2 * h));
    for (double v : blk.values) CHECK(std::abs(v - std::sqrt(wts.lambda_opti * wts.epsilon)) < 1e-6);
}

TEST_CASE("e_opti rejects the wrong image count") {
    const fd::TermProblem t = fd::make(8);
    std::vector<ColorImage> two(t.base.images.begin(), t.base.images.begin() + 2);
    CHECK_THROWS_AS(energy::e_opti(t.base.state, two, EnergyWeights{}), InputError);
}

TEST_CASE("point and plane residual examples") {
    gen::Rng rng(9);
    auto p = gen::random_problem(rng);
    SceneFlowState st = SceneFlowState::at_rest(p.state.anchor, 2, 6, 5);
    const EnergyWeights w;
    std::vector<analysis::Correspondence> corr(1);
    corr[0].source_index = 4;
    corr[0].target_normal = Vec3(0, 0, 1);

    corr[0].target_point = st.position(2, 4);
    CHECK(energy::e_point(st, corr, w).values[0] == doctest::Approx(std::sqrt(w.lambda_point * w.epsilon)));
    CHECK(energy::e_plane(st, corr, w).values[0] == doctest::Approx(std::sqrt(w.lambda_plane * w.epsilon)));

    corr[0].target_point = st.position(2, 4) - Vec3(0, 0, 0.1);
    CHECK(energy::e_point(st, corr, w).values[0] == doctest::Approx(std::sqrt(w.lambda_point * robust_kernel(0.1, w.epsilon))));
    CHECK(energy::e_plane(st, corr, w).values[0] == doctest::Approx(std::sqrt(w.lambda_plane * robust_kernel(0.1, w.epsilon))));

    corr[0].target_point = st.position(2, 4) - Vec3(0.1, 0, 0);
    CHECK(energy::e_point(st, corr, w).values[0] == doctest::Approx(std::sqrt(w.lambda_point * robust_kernel(0.1, w.epsilon))));
    CHECK(energy::e_plane(st, corr, w).values[0] == doctest::Approx(std::sqrt(w.lambda_plane * robust_kernel(0.0, w.epsilon))));

    corr[0].active = false;
    CHECK(energy::e_point(st, corr, w).values.empty());
}

TEST_CASE("e_proj examples") {
    gen::Rng rng(10);
    auto p = gen::random_problem(rng);
    const EnergyWeights w;
    SceneFlowState st = SceneFlowState::at_rest(p.state.anchor, 2, 6, 5);
    for (double r : energy::e_proj(st, energy::PointOcclusion{}, p.rig, w).residuals) CHECK(r == 0.0);

    // point on the optical axis moving toward the camera projects to itself
    PointCloud axis;
    axis.points = {Vec3(0, 0, 2)};
    axis.grid_width = 1;
    axis.grid_height = 1;
    axis.pixel_of = {0};
    const CameraIntrinsics k = gen::intrinsics(1, 1, 10);
    SceneFlowState a = SceneFlowState::at_rest(axis, 1, 1, 1);
    a.positions[0][0] = Vec3(0, 0, 1.5);
    const auto b = energy::e_proj(a, energy::PointOcclusion{}, CameraRig::aligned(k), w);
    REQUIRE(b.residuals.size() == 2);
    CHECK(std::abs(b.residuals[0]) < 1e-12);
    CHECK(std::abs(b.residuals[1]) < 1e-12);

    a.positions[0][0] = Vec3(0, 0, -1);
    const auto behind = energy::e_proj(a, energy::PointOcclusion{}, CameraRig::aligned(k), w);
    CHECK(behind.residuals.empty());
    CHECK(behind.skipped == 1);
}

TEST_CASE("e_iso: identity, rigid motion and uniform scale") {
    const fd::TermProblem t = fd::make(11);
    const PointCloud& anchor = t.base.state.anchor;
    const EnergyWeights w;
    SceneFlowState rest = SceneFlowState::at_rest(anchor, 2, 6, 5);
    for (double r : energy::e_iso(rest, anchor.graph, w).values) CHECK(r == 0.0);

    gen::Rng rng(12);
    const auto st = rigid_state(anchor, 2, {{rng.rotation(), rng.vec3()}, {rng.rotation(), rng.vec3()}}, 6, 5);
    for (double r : energy::e_iso(st, anchor.graph, w).values) CHECK(std::abs(r) < 1e-9);

    SceneFlowState scaled = rest;
    for (auto& frame : scaled.positions)
        for (auto& p : frame) p *= 1.1;
    const auto b = energy::e_iso(scaled, anchor.graph, w);
    std::size_t row = 0;
    for (int s = 1; s <= 2; ++s)
        for (const auto& e : anchor.graph.edges)
            for (int dir = 0; dir < 2; ++dir) {
                const Vec3 r(b.values[row], b.values[row + 1], b.values[row + 2]);
                row += 3;
                CHECK(r.norm() == doctest::Approx(std::sqrt(w.lambda_iso * e.weight()) * 0.1 * e.rest.norm()).epsilon(1e-9));
            }
    CHECK(row == b.values.size());
}

TEST_CASE("e_reg: equal rotations vanish, half turn gives 8 d_A") {
    const fd::TermProblem t = fd::make(13);
    const EnergyWeights w;
    SceneFlowState st = SceneFlowState::at_rest(t.base.state.anchor, 1, 6, 5);
    gen::Rng rng(14);
    const Mat3 r = rng.rotation();
    for (auto& q : st.rotations[0]) q = r;
    for (double v : energy::e_reg(st, st.anchor.graph, w).values) CHECK(std::abs(v) < 1e-12);

    PointCloud two;
    two.points = {Vec3(0, 0, 2), Vec3(0.01, 0, 2)};
    two.pixel_of = {0, 1};
    two.grid_width = 2;
    two.grid_height = 1;
    NeighborEdge e;
    e.i = 0;
    e.j = 1;
    e.w_c = 0.7;
    e.w_d = 0.9;
    e.w_t = 0.5;
    e.rest = two.points[0] - two.points[1];
    two.graph.edges = {e};
    SceneFlowState pi = SceneFlowState::at_rest(two, 1, 1, 1);
    pi.rotations[0][1] = Eigen::AngleAxisd(M_PI, Vec3::UnitZ()).toRotationMatrix();
    const auto b = energy::e_reg(pi, two.graph, w);
    CHECK(b.energy() == doctest::Approx(w.lambda_reg * e.weight() * w.d_A * 8.0).epsilon(1e-12));
}

TEST_CASE("e_short examples") {
    PointCloud one;
    one.points = {Vec3(0, 0, 2)};
    one.pixel_of = {0};
    one.grid_width = 1;
    one.grid_height = 1;
    const EnergyWeights w;
    SceneFlowState st = SceneFlowState::at_rest(one, 2, 1, 1);
    CHECK(energy::e_short(st, w).energy() == 0.0);
    st.positions[0][0] = Vec3(0.1, 0, 2);
    st.positions[1][0] = Vec3(0.2, 0, 2);
    CHECK(energy::e_short(st, w).energy() == doctest::Approx(w.lambda_short * 2 * 0.01).epsilon(1e-12));
}

TEST_CASE("rigid motions lie in the nullspace of iso + reg") {
    const fd::TermProblem t = fd::make(15);
    gen::Rng rng(16);
    const EnergyWeights w;
    for (int k = 0; k < 10; ++k) {
        const RigidTransform m{rng.rotation(), rng.vec3()};
        const auto st = rigid_state(t.base.state.anchor, 1, {m}, 6, 5);
        const double e = energy::e_iso(st, st.anchor.graph, w).energy() + energy::e_reg(st, st.anchor.graph, w).energy();
        CHECK(e < 1e-12);
    }
}

TEST_CASE("total energy: static floor, breakdown sums, nonnegativity") {
    const fd::TermProblem t = fd::make(17);
    const EnergyWeights w;
    SceneFlowState rest = SceneFlowState::at_rest(t.base.state.anchor, 2, 6, 5);
    std::vector<ColorImage> same(3, t.base.images[0]);
    std::vector<analysis::Correspondence> corr = t.base.corr;
    for (auto& c : corr) c.target_point = rest.position(2, c.source_index);
    energy::EnergyInputs in;
    in.images = same;
    in.rig = t.base.rig;
    in.correspondences = corr;
    in.weights = w;
    in.mask = energy::all_terms();
    in.mask.reset(static_cast<int>(Term::point));
    in.mask.reset(static_cast<int>(Term::plane));
    const auto e = energy::total_energy(rest, in);
    CHECK(e[Term::opti] == doctest::Approx(2 * 30 * w.lambda_opti * w.epsilon).epsilon(1e-9));
    CHECK(e[Term::proj] == 0.0);
    CHECK(e[Term::iso] == 0.0);
    CHECK(e[Term::reg] == 0.0);
    CHECK(e[Term::shortest] == 0.0);

    for (std::uint64_t seed = 20; seed < 30; ++seed) {
        const fd::TermProblem r = fd::make(seed);
        energy::EnergyInputs all = fd::inputs(r, Term::opti);
        all.mask = energy::all_terms();
        const auto b = energy::total_energy(r.base.state, all);
        double sum = 0;
        for (double v : b.terms) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - b.total) <= 1e-9 * b.total);
    }
}

TEST_CASE("doubling a weight doubles its term") {
    const fd::TermProblem t = fd::make(31);
    for (Term term : energy::kAllTerms) {
        CAPTURE(energy::term_name(term));
        EnergyWeights w;
        const double e1 = energy::total_energy(t.base.state, fd::inputs(t, term, w)).total;
        switch (term) {
            case Term::opti: w.lambda_opti *= 2; break;
            case Term::point: w.lambda_point *= 2; break;
            case Term::plane: w.lambda_plane *= 2; break;
            case Term::proj: w.lambda_proj *= 2; break;
            case Term::iso: w.lambda_iso *= 2; break;
            case Term::reg: w.lambda_reg *= 2; break;
            case Term::shortest: w.lambda_short *= 2; break;
        }
        const double e2 = energy::total_energy(t.base.state, fd::inputs(t, term, w)).total;
        CHECK(e2 == doctest::Approx(2 * e1).epsilon(1e-12));
    }
}

TEST_CASE("layout indices are disjoint and cover the state") {
    const fd::TermProblem t = fd::make(32);
    const auto lay = energy::StateLayout::of(t.base.state);
    std::vector<int> seen(lay.size(), 0);
    for (int s = 1; s <= lay.g; ++s)
        for (std::size_t i = 0; i < lay.num_points; ++i)
            for (int k = 0; k < 3; ++k) {
                seen[lay.position(s, i) + k]++;
                seen[lay.rotation(s, i) + k]++;
            }
    for (int s = 0; s < lay.g; ++s)
        for (std::size_t p = 0; p < lay.flow_pixels(); ++p) {
            seen[lay.flow(s, p)]++;
            seen[lay.flow(s, p) + 1]++;
        }
    for (int c : seen) CHECK(c == 1);
}
