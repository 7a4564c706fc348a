#include "depthweave/solver.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include <Eigen/Geometry>

#include "depthweave/camera.hpp"
#include "depthweave/errors.hpp"
#include "depthweave/flow2d.hpp"
#include "depthweave/image_ops.hpp"
#include "depthweave/parallel.hpp"

namespace depthweave::solver {

using energy::ResidualBlock;
using energy::StateLayout;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Linear algebra

PcgResult pcg(const Operator& apply_a, const VectorXd& b, const VectorXd& diagonal, int max_iters, double rel_tol) {
    const Eigen::Index n = b.size();
    PcgResult out;
    out.x = VectorXd::Zero(n);
    VectorXd inv(n);
    for (Eigen::Index i = 0; i < n; ++i) inv[i] = diagonal[i] > 0.0 ? 1.0 / diagonal[i] : 1.0;

    VectorXd r = b;
    const double b_norm = b.norm();
    out.residual_norm = b_norm;
    if (b_norm == 0.0) return out;

    VectorXd z = inv.cwiseProduct(r);
    VectorXd p = z;
    VectorXd ap(n);
    double rz = r.dot(z);
    for (int it = 0; it < max_iters; ++it) {
        apply_a(p, ap);
        const double pap = p.dot(ap);
        if (!(pap > 0.0)) break;  // no further descent direction
        const double alpha = rz / pap;
        out.x += alpha * p;
        r -= alpha * ap;
        out.iterations = it + 1;
        out.residual_norm = r.norm();
        if (out.residual_norm <= rel_tol * b_norm) break;
        z = inv.cwiseProduct(r);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    return out;
}

NormalEquations::NormalEquations(std::span<const ResidualBlock> blocks, std::size_t num_vars)
    : blocks_(blocks), n_(num_vars), rhs_(VectorXd::Zero(static_cast<Eigen::Index>(num_vars))),
      diag_(VectorXd::Zero(static_cast<Eigen::Index>(num_vars))) {
    transposed_.resize(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto& J = blocks[b].jacobian;
        if (J.rows() != static_cast<int>(blocks[b].residuals.size()))
            throw SolverFault("normal equations: Jacobian rows do not match residual count");
        Transposed& t = transposed_[b];
        t.col_ptr.assign(num_vars + 1, 0);
        for (int c : J.cols) {
            if (c < 0 || static_cast<std::size_t>(c) >= num_vars) throw SolverFault("normal equations: column out of range");
            ++t.col_ptr[static_cast<std::size_t>(c) + 1];
        }
        for (std::size_t c = 0; c < num_vars; ++c) t.col_ptr[c + 1] += t.col_ptr[c];
        t.rows.resize(J.nnz());
        t.vals.resize(J.nnz());
        std::vector<int> fill(t.col_ptr.begin(), t.col_ptr.end() - 1);
        for (int r = 0; r < J.rows(); ++r) {
            for (int k = J.row_ptr[r]; k < J.row_ptr[r + 1]; ++k) {
                const int pos = fill[static_cast<std::size_t>(J.cols[k])]++;
                t.rows[pos] = r;
                t.vals[pos] = J.vals[k];
            }
        }
        const auto& res = blocks[b].residuals;
        for (std::size_t c = 0; c < num_vars; ++c) {
            double g = 0.0, d = 0.0;
            for (int k = t.col_ptr[c]; k < t.col_ptr[c + 1]; ++k) {
                g += t.vals[k] * res[t.rows[k]];
                d += t.vals[k] * t.vals[k];
            }
            rhs_[static_cast<Eigen::Index>(c)] -= g;
            diag_[static_cast<Eigen::Index>(c)] += d;
        }
    }
}

void NormalEquations::apply(const VectorXd& x, VectorXd& y) const {
    y = VectorXd::Zero(static_cast<Eigen::Index>(n_));
    std::vector<double> t;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const auto& J = blocks_[b].jacobian;
        const auto rows = static_cast<std::size_t>(J.rows());
        t.assign(rows, 0.0);
        parallel_for(rows, 4096, [&](std::size_t r0, std::size_t r1) {
            for (std::size_t r = r0; r < r1; ++r) {
                double acc = 0.0;
                for (int k = J.row_ptr[r]; k < J.row_ptr[r + 1]; ++k) acc += J.vals[k] * x[J.cols[k]];
                t[r] = acc;
            }
        });
        const Transposed& tr = transposed_[b];
        parallel_for(n_, 4096, [&](std::size_t c0, std::size_t c1) {
            for (std::size_t c = c0; c < c1; ++c) {
                double acc = 0.0;
                for (int k = tr.col_ptr[c]; k < tr.col_ptr[c + 1]; ++k) acc += tr.vals[k] * t[tr.rows[k]];
                y[static_cast<Eigen::Index>(c)] += acc;
            }
        });
    }
}

// ---------------------------------------------------------------------------
// State updates

Mat3 exp_so3(const Vec3& w) {
    const double theta = w.norm();
    const Mat3 k = energy::skew(w);
    if (theta < 1e-8) return Mat3::Identity() + k + 0.5 * k * k;
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    return Mat3::Identity() + a * k + b * k * k;
}

void apply_increment(SceneFlowState& state, const VectorXd& dx, double scale) {
    const StateLayout lay = StateLayout::of(state);
    if (static_cast<std::size_t>(dx.size()) != lay.size()) throw InputError("apply_increment: size mismatch");
    for (int s = 1; s <= state.g; ++s) {
        for (std::size_t i = 0; i < lay.num_points; ++i) {
            const auto pc = static_cast<Eigen::Index>(lay.position(s, i));
            const auto rc = static_cast<Eigen::Index>(lay.rotation(s, i));
            state.positions[s - 1][i] += scale * dx.segment<3>(pc);
            const Mat3 r = exp_so3(scale * dx.segment<3>(rc)) * state.rotations[s - 1][i];
            state.rotations[s - 1][i] = Eigen::Quaterniond(r).normalized().toRotationMatrix();
        }
    }
    for (int s = 0; s < state.g; ++s) {
        auto& f = state.flows[s];
        for (std::size_t p = 0; p < lay.flow_pixels(); ++p) {
            const auto c = static_cast<Eigen::Index>(lay.flow(s, p));
            f.u[p] += scale * dx[c];
            f.v[p] += scale * dx[c + 1];
        }
    }
}

energy::EnergyInputs Problem::inputs() const {
    energy::EnergyInputs in;
    in.images = images;
    in.rig = rig;
    in.correspondences = correspondences;
    in.occlusion = occlusion.empty() ? nullptr : &occlusion;
    in.weights = weights;
    in.mask = mask;
    return in;
}

// ---------------------------------------------------------------------------
// Gauss-Newton

namespace {

constexpr int kMaxHalvings = 8;

bool all_finite(const VectorXd& v) { return v.allFinite(); }

}  // namespace

StepResult gauss_newton_step(SceneFlowState& state, const Problem& problem, const SolverParams& params) {
    const auto in = problem.inputs();
    const StateLayout lay = StateLayout::of(state);
    StepResult out;

    std::vector<ResidualBlock> blocks = energy::assemble(state, in, true);
    out.before = energy::breakdown(blocks);
    if (!std::isfinite(out.before.total)) throw SolverFault("energy is not finite at the current state");

    const NormalEquations ne(blocks, lay.size());
    const double mean_diag = ne.size() ? ne.diagonal().mean() : 0.0;
    const double mu = params.damping;
    const VectorXd damp = mu * (ne.diagonal().array() + mean_diag).matrix();
    const VectorXd precond = ne.diagonal() + damp;
    const PcgResult sol = pcg(
        [&](const VectorXd& x, VectorXd& y) {
            ne.apply(x, y);
            y += damp.cwiseProduct(x);
        },
        ne.rhs(), precond, params.pcg_iters);
    blocks.clear();
    blocks.shrink_to_fit();

    if (!all_finite(sol.x)) throw SolverFault("linear solve produced non-finite values");
    out.pcg_iterations = sol.iterations;
    out.step_norm = sol.x.norm();

    const auto positions = state.positions;
    const auto rotations = state.rotations;
    const auto flows = state.flows;
    double scale = 1.0;
    for (int h = 0; h <= kMaxHalvings; ++h, scale *= 0.5) {
        apply_increment(state, sol.x, scale);
        const auto e = energy::total_energy(state, in);
        if (std::isfinite(e.total) && e.total <= out.before.total) {
            out.after = e;
            out.halvings = h;
            out.accepted = true;
            return out;
        }
        state.positions = positions;
        state.rotations = rotations;
        state.flows = flows;
    }
    out.after = out.before;
    out.halvings = kMaxHalvings;
    return out;
}

void run_gauss_newton(SceneFlowState& state, const Problem& problem, const SolverParams& params, int iterations,
                      int round, int level, std::vector<TraceEntry>* trace) {
    for (int it = 0; it < iterations; ++it) {
        const StepResult step = gauss_newton_step(state, problem, params);
        if (trace) {
            if (it == 0) trace->push_back({round, level, 0, step.before});
            if (step.accepted) trace->push_back({round, level, it + 1, step.after});
        }
        if (!step.accepted) break;
        const double drop = step.before.total - step.after.total;
        if (drop <= params.energy_tol * std::max(step.before.total, 1e-300)) break;
    }
}

std::string trace_csv(std::span<const TraceEntry> trace) {
    std::ostringstream os;
    os << "round,level,iteration";
    for (auto t : energy::kAllTerms) os << ',' << energy::term_name(t);
    os << ",total\n";
    os.precision(10);
    for (const auto& e : trace) {
        os << e.round << ',' << e.level << ',' << e.iteration;
        for (double v : e.energy.terms) os << ',' << v;
        os << ',' << e.energy.total << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Initialization and pyramid transfer

SceneFlowState initialize_state(const PointCloud& anchor, std::span<const FlowField2D> flows,
                                const DepthMap& target_depth, const CameraRig& rig, double gate) {
    if (flows.empty()) throw InputError("initialize_state: need at least one flow field");
    const int g = static_cast<int>(flows.size());
    SceneFlowState st = SceneFlowState::at_rest(anchor, g, flows[0].width, flows[0].height);
    for (int s = 0; s < g; ++s) st.flows[s] = flows[s];
    const auto prefixes = flow2d::accumulate_prefixes(flows);
    const RigidTransform to_depth = rig.depth_to_color.inverse();
    const CameraIntrinsics& kc = rig.color_intrinsics;

    for (std::size_t i = 0; i < anchor.size(); ++i) {
        const Vec3 c0 = rig.depth_to_color.apply(anchor.points[i]);
        if (!(c0.z() > 0.0)) continue;
        const Vec2 q0 = camera::project(c0, kc);
        const double z0 = c0.z();

        double zg = z0;
        double ug, vg;
        if (flow2d::sample_flow(prefixes[g - 1], q0.x(), q0.y(), ug, vg)) {
            const auto px = camera::nearest_pixel(Vec2(q0.x() + ug, q0.y() + vg), target_depth.width, target_depth.height);
            if (px && target_depth.is_valid(px->first, px->second)) {
                const double zt = target_depth.at(px->first, px->second);
                if (std::abs(zt - z0) < gate) zg = zt;
            }
        }
        for (int s = 1; s <= g; ++s) {
            double u, v;
            if (!flow2d::sample_flow(prefixes[s - 1], q0.x(), q0.y(), u, v)) {
                st.positions[s - 1][i] = st.position(s - 1, i);
                continue;
            }
            const double z = z0 + (zg - z0) * static_cast<double>(s) / g;
            st.positions[s - 1][i] = to_depth.apply(camera::backproject(q0.x() + u, q0.y() + v, z, kc));
        }
    }
    return st;
}

namespace {

struct CoarseSupport {
    int index[4]{-1, -1, -1, -1};
    double weight[4]{};
    double tx = 0.0, ty = 0.0;
};

CoarseSupport coarse_support(const std::vector<int>& map, int cw, int ch, int fx, int fy) {
    const double x = std::min(0.5 * fx, static_cast<double>(cw - 1));
    const double y = std::min(0.5 * fy, static_cast<double>(ch - 1));
    const auto taps = image::bilinear_taps(x, y, cw, ch);
    CoarseSupport s;
    for (int k = 0; k < 4; ++k) {
        s.index[k] = map[static_cast<std::size_t>(taps.index[k])];
        s.weight[k] = taps.weight[k];
    }
    s.tx = taps.tx;
    s.ty = taps.ty;
    return s;
}

// Coarse point with the largest bilinear weight, or -1.
int coarse_parent(const CoarseSupport& s) {
    int best = -1;
    double bw = -1.0;
    for (int k = 0; k < 4; ++k) {
        if (s.index[k] >= 0 && s.weight[k] > bw) {
            bw = s.weight[k];
            best = s.index[k];
        }
    }
    return best;
}

}  // namespace

std::vector<Vec3> prolong_point_field(const PointCloud& coarse, std::span<const Vec3> values, const PointCloud& fine) {
    if (values.size() != coarse.size()) throw InputError("prolong_point_field: value count differs from coarse cloud");
    const std::vector<int> map = coarse.pixel_to_point();
    std::vector<Vec3> out(fine.size(), Vec3::Zero());
    for (std::size_t j = 0; j < fine.size(); ++j) {
        const CoarseSupport s = coarse_support(map, coarse.grid_width, coarse.grid_height, fine.pixel_x(j), fine.pixel_y(j));
        bool all = true;
        for (int k = 0; k < 4; ++k) all = all && s.index[k] >= 0;
        if (all) {
            auto v = [&](int k) { return values[static_cast<std::size_t>(s.index[k])]; };
            const Vec3 top = v(0) + (v(1) - v(0)) * s.tx;
            const Vec3 bot = v(2) + (v(3) - v(2)) * s.tx;
            out[j] = top + (bot - top) * s.ty;
            continue;
        }
        // partial support: renormalized weights around a reference so constants stay exact
        int ref = -1;
        double wsum = 0.0;
        Vec3 acc = Vec3::Zero();
        for (int k = 0; k < 4; ++k) {
            if (s.index[k] < 0 || s.weight[k] <= 0.0) continue;
            if (ref < 0) ref = s.index[k];
            acc += s.weight[k] * (values[static_cast<std::size_t>(s.index[k])] - values[static_cast<std::size_t>(ref)]);
            wsum += s.weight[k];
        }
        if (ref >= 0) {
            out[j] = values[static_cast<std::size_t>(ref)] + acc / wsum;
            continue;
        }
        const int parent = coarse_parent(s);
        if (parent >= 0) out[j] = values[static_cast<std::size_t>(parent)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Registration used by topology detection

RegistrationResult register_to_target(SceneFlowState state, const PointCloud& target, const EnergyWeights& weights,
                                      const SolverParams& params, energy::TermMask mask) {
    RegistrationResult out;
    if (state.g != 1) throw InputError("register_to_target: expects a single-step state");
    if (target.empty()) {
        out.ok = false;
        out.message = "empty target cloud";
        out.state = std::move(state);
        return out;
    }
    mask.reset(static_cast<std::size_t>(energy::Term::opti));
    mask.reset(static_cast<std::size_t>(energy::Term::proj));
    const analysis::ClosestPointIndex index(target);
    Problem problem;
    problem.weights = weights;
    problem.mask = mask;
    problem.rig = CameraRig::aligned(CameraIntrinsics{1, 1, 0, 0, 1, 1});
    try {
        for (int round = 0; round < params.icp_rounds; ++round) {
            problem.correspondences = analysis::closest_points(state.positions[0], index);
            analysis::gate_correspondences(problem.correspondences, params.correspondence_gate);
            run_gauss_newton(state, problem, params, params.gn_iters_per_level, round, 0, &out.trace);
        }
    } catch (const SolverFault& e) {
        out.ok = false;
        out.message = e.what();
    }
    out.state = std::move(state);
    return out;
}

// ---------------------------------------------------------------------------
// Pyramid solve

namespace {

struct Level {
    int stride = 1;
    CameraRig rig;
    std::vector<ColorImage> images;
    PointCloud anchor;             // pixel_of in this level's grid, graph built here
    std::vector<int> fine_index;   // anchor point -> finest-level point
    PointCloud target;
    std::unique_ptr<analysis::ClosestPointIndex> index;
};

void check_inputs(const IntervalInputs& in) {
    in.rig.validate();
    in.weights.validate();
    if (in.images.size() < 2) throw InputError("solve: need at least two color frames");
    const auto& kc = in.rig.color_intrinsics;
    const auto& kd = in.rig.depth_intrinsics;
    for (const auto& im : in.images) {
        im.validate();
        if (im.width != kc.width || im.height != kc.height)
            throw InputError("solve: color frame size does not match the color intrinsics");
    }
    for (const DepthMap* d : {&in.anchor_depth, &in.target_depth}) {
        d->validate();
        if (d->width != kd.width || d->height != kd.height)
            throw InputError("solve: depth map size does not match the depth intrinsics");
    }
    const std::size_t g = in.images.size() - 1;
    if (!in.initial_flows.empty()) {
        if (in.initial_flows.size() != g) throw InputError("solve: initial flow count must equal g");
        for (const auto& f : in.initial_flows)
            if (f.width != kc.width || f.height != kc.height) throw InputError("solve: initial flow size mismatch");
    }
}

double level_edge_wt(const analysis::TopologyResult& topo, const PointCloud& fine_anchor, int fi, int fj,
                     double sigma_t) {
    const auto i = static_cast<std::size_t>(fi), j = static_cast<std::size_t>(fj);
    if (topo.excluded[i] || topo.excluded[j]) return 1.0;
    return analysis::topology_weight(fine_anchor.points[i], fine_anchor.points[j], topo.warped[i], topo.warped[j], sigma_t);
}

SceneFlowState restrict_state(const SceneFlowState& fine, const Level& lv, const std::vector<std::vector<FlowField2D>>& flow_pyr,
                              std::size_t level) {
    SceneFlowState st;
    st.g = fine.g;
    st.anchor = lv.anchor;
    st.positions.resize(static_cast<std::size_t>(fine.g));
    st.rotations.resize(static_cast<std::size_t>(fine.g));
    for (int s = 0; s < fine.g; ++s) {
        auto& pos = st.positions[s];
        auto& rot = st.rotations[s];
        pos.resize(lv.fine_index.size());
        rot.resize(lv.fine_index.size());
        for (std::size_t k = 0; k < lv.fine_index.size(); ++k) {
            pos[k] = fine.positions[s][static_cast<std::size_t>(lv.fine_index[k])];
            rot[k] = fine.rotations[s][static_cast<std::size_t>(lv.fine_index[k])];
        }
    }
    st.flows = flow_pyr[level];
    return st;
}

// Adds the coarse-level change (solved - restricted) onto a fine-level state.
void prolong_increment(const SceneFlowState& solved, const SceneFlowState& restricted, const Level& coarse,
                       SceneFlowState& fine, const Level& fine_level) {
    const std::vector<int> map = coarse.anchor.pixel_to_point();
    for (int s = 0; s < fine.g; ++s) {
        std::vector<Vec3> dp(coarse.anchor.size());
        for (std::size_t k = 0; k < dp.size(); ++k) dp[k] = solved.positions[s][k] - restricted.positions[s][k];
        const auto up = prolong_point_field(coarse.anchor, dp, fine_level.anchor);
        for (std::size_t j = 0; j < up.size(); ++j) fine.positions[s][j] += up[j];

        for (std::size_t j = 0; j < fine_level.anchor.size(); ++j) {
            const CoarseSupport sup = coarse_support(map, coarse.anchor.grid_width, coarse.anchor.grid_height,
                                                     fine_level.anchor.pixel_x(j), fine_level.anchor.pixel_y(j));
            const int parent = coarse_parent(sup);
            if (parent < 0) continue;
            const auto pk = static_cast<std::size_t>(parent);
            const Mat3 dr = solved.rotations[s][pk] * restricted.rotations[s][pk].transpose();
            const Mat3 r = dr * fine.rotations[s][j];
            fine.rotations[s][j] = Eigen::Quaterniond(r).normalized().toRotationMatrix();
        }
    }
    for (int s = 0; s < fine.g; ++s) {
        FlowField2D d = solved.flows[s];
        for (std::size_t p = 0; p < d.size(); ++p) {
            d.u[p] -= restricted.flows[s].u[p];
            d.v[p] -= restricted.flows[s].v[p];
        }
        const FlowField2D up = image::prolong(d, fine.flows[s].width, fine.flows[s].height);
        for (std::size_t p = 0; p < up.size(); ++p) {
            fine.flows[s].u[p] += up.u[p];
            fine.flows[s].v[p] += up.v[p];
        }
    }
}

PointCloud subsample_cloud(const PointCloud& fine, int stride, int width, int height) {
    if (stride == 1) return fine;
    PointCloud out;
    out.grid_width = width;
    out.grid_height = height;
    for (std::size_t i = 0; i < fine.size(); ++i) {
        const int x = fine.pixel_x(i), y = fine.pixel_y(i);
        if (x % stride || y % stride) continue;
        out.points.push_back(fine.points[i]);
        out.normals.push_back(fine.normals[i]);
        out.pixel_of.push_back((y / stride) * width + x / stride);
        if (!fine.degenerate_normal.empty()) out.degenerate_normal.push_back(fine.degenerate_normal[i]);
    }
    return out;
}

}  // namespace

SolveResult solve_pyramid(const IntervalInputs& in, const SolverParams& params) {
    params.validate();
    check_inputs(in);
    const int g = static_cast<int>(in.images.size()) - 1;

    std::vector<FlowField2D> flows = in.initial_flows;
    if (flows.empty()) {
        for (int s = 0; s < g; ++s) flows.push_back(flow2d::estimate_flow(in.images[s], in.images[s + 1], in.flow_params));
    }

    PointCloud fine_anchor = camera::unproject(in.anchor_depth, in.rig.depth_intrinsics);
    if (fine_anchor.empty()) throw InputError("solve: anchor depth map has no valid pixels");
    if (in.topology && (in.topology->warped.size() != fine_anchor.size() ||
                        in.topology->excluded.size() != fine_anchor.size()))
        throw InputError("solve: topology result does not match the anchor cloud");

    // pyramid
    int num_levels = 1;
    while (num_levels < params.levels) {
        const int st = 1 << num_levels;
        const auto& k = in.rig.color_intrinsics;
        if (std::min(k.width, k.height) / st < 8) break;
        ++num_levels;
    }
    std::vector<Level> levels(static_cast<std::size_t>(num_levels));
    const PointCloud fine_target =
        analysis::estimate_normals(camera::unproject(in.target_depth, in.rig.depth_intrinsics), params.normal_neighbors);
    for (int l = 0; l < num_levels; ++l) {
        Level& lv = levels[static_cast<std::size_t>(l)];
        lv.stride = 1 << l;
        lv.rig = l == 0 ? in.rig : in.rig.decimated(lv.stride);
        if (l == 0) {
            lv.images = in.images;
            lv.anchor = fine_anchor;
            lv.fine_index.resize(fine_anchor.size());
            for (std::size_t i = 0; i < fine_anchor.size(); ++i) lv.fine_index[i] = static_cast<int>(i);
        } else {
            for (const auto& im : levels[static_cast<std::size_t>(l - 1)].images) lv.images.push_back(image::pyr_down(im));
            lv.anchor.grid_width = lv.rig.depth_intrinsics.width;
            lv.anchor.grid_height = lv.rig.depth_intrinsics.height;
            for (std::size_t i = 0; i < fine_anchor.size(); ++i) {
                const int x = fine_anchor.pixel_x(i), y = fine_anchor.pixel_y(i);
                if (x % lv.stride || y % lv.stride) continue;
                lv.anchor.points.push_back(fine_anchor.points[i]);
                lv.anchor.pixel_of.push_back((y / lv.stride) * lv.anchor.grid_width + x / lv.stride);
                lv.fine_index.push_back(static_cast<int>(i));
            }
        }
        EnergyWeights lw = in.weights;
        lw.sigma_d *= lv.stride;
        lv.anchor.graph = analysis::build_neighbor_graph(lv.anchor, lv.images[0], lw);
        if (in.topology) {
            for (auto& e : lv.anchor.graph.edges)
                e.w_t = level_edge_wt(*in.topology, fine_anchor, lv.fine_index[static_cast<std::size_t>(e.i)],
                                      lv.fine_index[static_cast<std::size_t>(e.j)], in.weights.sigma_t);
        }
        // target subsampled on the same pixel lattice as the anchor
        lv.target = subsample_cloud(fine_target, lv.stride, lv.rig.depth_intrinsics.width, lv.rig.depth_intrinsics.height);
        if (!lv.target.empty()) lv.index = std::make_unique<analysis::ClosestPointIndex>(lv.target);
    }
    // a level without anchor points cannot carry the solve
    while (num_levels > 1 && levels[static_cast<std::size_t>(num_levels - 1)].anchor.size() < 4) {
        levels.pop_back();
        --num_levels;
    }

    SolveResult out;
    SceneFlowState fine = initialize_state(levels[0].anchor, flows, in.target_depth, in.rig, params.correspondence_gate);
    fine.anchor = levels[0].anchor;
    out.initial = fine;

    try {
        for (int round = 0; round < params.icp_rounds; ++round) {
            std::vector<std::vector<FlowField2D>> flow_pyr(static_cast<std::size_t>(num_levels));
            flow_pyr[0] = fine.flows;
            for (int l = 1; l < num_levels; ++l)
                for (const auto& f : flow_pyr[static_cast<std::size_t>(l - 1)]) flow_pyr[static_cast<std::size_t>(l)].push_back(image::pyr_down(f));

            std::vector<SceneFlowState> restricted(static_cast<std::size_t>(num_levels));
            for (int l = 0; l < num_levels; ++l)
                restricted[static_cast<std::size_t>(l)] =
                    l == 0 ? fine : restrict_state(fine, levels[static_cast<std::size_t>(l)], flow_pyr, static_cast<std::size_t>(l));

            SceneFlowState solved;
            for (int l = num_levels - 1; l >= 0; --l) {
                const auto li = static_cast<std::size_t>(l);
                const Level& lv = levels[li];
                SceneFlowState working = restricted[li];
                if (l < num_levels - 1) prolong_increment(solved, restricted[li + 1], levels[li + 1], working, lv);

                Problem problem;
                problem.images = lv.images;
                problem.rig = lv.rig;
                problem.weights = in.weights;
                problem.mask = in.mask;
                if (lv.index) {
                    problem.correspondences = analysis::closest_points(working.positions[g - 1], *lv.index);
                    analysis::gate_correspondences(problem.correspondences, params.correspondence_gate);
                }
                std::vector<analysis::OcclusionField> occ;
                for (int s = 0; s < g; ++s)
                    occ.push_back(analysis::occlusion_weights(working.flows[s], lv.images[s], lv.images[s + 1], in.weights));
                problem.occlusion = energy::sample_point_occlusion(working, occ, lv.rig);

                run_gauss_newton(working, problem, params, params.gn_iters_per_level, round, l, &out.trace);
                solved = std::move(working);
            }
            fine = std::move(solved);
        }
    } catch (const SolverFault& e) {
        out.faulted = true;
        out.diagnostics.push_back(std::string("solver fault: ") + e.what());
    }
    out.state = std::move(fine);
    return out;
}

}  // namespace depthweave::solver
