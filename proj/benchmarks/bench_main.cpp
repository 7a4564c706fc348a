#include <benchmark/benchmark.h>

#include "depthweave/analysis.hpp"
#include "depthweave/camera.hpp"
#include "depthweave/energy.hpp"
#include "depthweave/flow2d.hpp"
#include "depthweave/kdtree.hpp"
#include "depthweave/solver.hpp"
#include "depthweave/synth.hpp"
#include "gen.hpp"

using namespace depthweave;

namespace {

void BM_Pcg(benchmark::State& st) {
    const int n = static_cast<int>(st.range(0));
    gen::Rng rng(1);
    // tridiagonal SPD system, applied matrix-free
    Eigen::VectorXd b(n), diag = Eigen::VectorXd::Constant(n, 4.0);
    for (int i = 0; i < n; ++i) b[i] = rng.normal();
    const solver::Operator a = [n](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
        y = 4.0 * x;
        y.head(n - 1) -= x.tail(n - 1);
        y.tail(n - 1) -= x.head(n - 1);
    };
    for (auto _ : st) benchmark::DoNotOptimize(solver::pcg(a, b, diag, 10).x);
}
BENCHMARK(BM_Pcg)->Arg(1 << 12)->Arg(1 << 16);

void BM_Flow(benchmark::State& st) {
    const int w = static_cast<int>(st.range(0));
    const ColorImage a = gen::periodic_texture(w, w, 0), b = gen::periodic_texture(w, w, 2);
    for (auto _ : st) benchmark::DoNotOptimize(flow2d::estimate_flow(a, b, FlowParams{}));
}
BENCHMARK(BM_Flow)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Assemble(benchmark::State& st) {
    const int w = static_cast<int>(st.range(0));
    auto spec = synth::SceneSpec::defaults(synth::Scene::translating_plane, w, w);
    spec.g = 2;
    spec.frames = 3;
    const auto d = synth::generate(spec);
    const EnergyWeights weights;
    PointCloud anchor = analysis::estimate_normals(camera::unproject(d.depths[0], d.rig.depth_intrinsics), 16);
    anchor.graph = analysis::build_neighbor_graph(anchor, d.colors[0], weights);
    const PointCloud target = analysis::estimate_normals(camera::unproject(d.depths[1], d.rig.depth_intrinsics), 16);
    const SceneFlowState state = SceneFlowState::at_rest(anchor, 2, w, w);
    const auto corr = analysis::closest_points(anchor, target);
    energy::EnergyInputs in;
    in.images = d.colors;
    in.rig = d.rig;
    in.correspondences = corr;
    in.weights = weights;
    for (auto _ : st) {
        const auto blocks = energy::assemble(state, in);
        const solver::NormalEquations ne(blocks, energy::StateLayout::of(state).size());
        benchmark::DoNotOptimize(ne.rhs().data());
    }
}
BENCHMARK(BM_Assemble)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_KdTree(benchmark::State& st) {
    const std::size_t n = static_cast<std::size_t>(st.range(0));
    gen::Rng rng(3);
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = rng.vec3(1.0);
    const KdTree3 tree(pts);
    std::vector<Vec3> queries(1024);
    for (auto& q : queries) q = rng.vec3(1.0);
    for (auto _ : st)
        for (const auto& q : queries) benchmark::DoNotOptimize(tree.nearest(q));
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * queries.size()));
}
BENCHMARK(BM_KdTree)->Arg(1 << 12)->Arg(1 << 16);

}  // namespace
BENCHMARK_MAIN();
