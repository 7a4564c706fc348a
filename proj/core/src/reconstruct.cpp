#include "depthweave/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "depthweave/analysis.hpp"
#include "depthweave/camera.hpp"
#include "depthweave/errors.hpp"
#include "depthweave/flow2d.hpp"
#include "depthweave/parallel.hpp"

namespace depthweave::reconstruct {

std::size_t LabelMap::count(HoleLabel l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), static_cast<std::uint8_t>(l)));
}

bool SequenceResult::all_ok() const {
    return std::all_of(interval_ok.begin(), interval_ok.end(), [](bool b) { return b; });
}

DepthMap render_depth(std::span<const Vec3> positions, const PointCloud& anchor, const CameraRig& rig, int width,
                      int height) {
    if (positions.size() != anchor.size()) throw InputError("render_depth: position count differs from the anchor");
    CameraIntrinsics k = rig.color_intrinsics;
    k.width = width;
    k.height = height;
    std::vector<Vec3> pts;
    pts.reserve(positions.size());
    for (const Vec3& p : positions) pts.push_back(rig.depth_to_color.apply(p));
    return camera::splat(pts, k);
}

DepthMap bilateral_fill(const DepthMap& depth, const ColorImage& guide, int radius, double sigma_space,
                        double sigma_color, int min_neighbors, Mask* filled) {
    if (depth.width != guide.width || depth.height != guide.height)
        throw InputError("bilateral_fill: guide size differs from depth");
    const int w = depth.width, h = depth.height;
    DepthMap cur = depth;
    if (filled) filled->assign(depth.size(), 0);
    const double is2 = 1.0 / (2.0 * sigma_space * sigma_space);
    const double ic2 = 1.0 / (2.0 * sigma_color * sigma_color);

    std::vector<double> spatial;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) spatial.push_back(std::exp(-(dx * dx + dy * dy) * is2));

    for (;;) {
        std::vector<std::pair<std::size_t, float>> updates;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t p = cur.index(x, y);
                if (cur.valid[p]) continue;
                const float* cp = &guide.rgb[3 * p];
                double wsum = 0.0, acc = 0.0;
                int count = 0;
                std::size_t t = 0;
                for (int dy = -radius; dy <= radius; ++dy) {
                    for (int dx = -radius; dx <= radius; ++dx, ++t) {
                        const int qx = x + dx, qy = y + dy;
                        if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
                        const std::size_t q = cur.index(qx, qy);
                        if (!cur.valid[q]) continue;
                        const float* cq = &guide.rgb[3 * q];
                        double dc2 = 0.0;
                        for (int c = 0; c < 3; ++c) dc2 += (static_cast<double>(cq[c]) - cp[c]) * (cq[c] - cp[c]);
                        const double wt = spatial[t] * std::exp(-dc2 * ic2);
                        wsum += wt;
                        acc += wt * cur.depth[q];
                        ++count;
                    }
                }
                if (count >= min_neighbors && wsum > 0.0) updates.emplace_back(p, static_cast<float>(acc / wsum));
            }
        }
        if (updates.empty()) break;
        for (const auto& [p, d] : updates) {
            const int x = static_cast<int>(p % static_cast<std::size_t>(w)), y = static_cast<int>(p / static_cast<std::size_t>(w));
            cur.set(x, y, d);
            if (filled && cur.valid[p]) (*filled)[p] = 1;
        }
    }
    return cur;
}

namespace {

bool is_aligned(const CameraRig& rig) {
    const auto& a = rig.depth_intrinsics;
    const auto& b = rig.color_intrinsics;
    return a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy && a.width == b.width &&
           a.height == b.height && rig.depth_to_color.rotation == Mat3::Identity() &&
           rig.depth_to_color.translation == Vec3::Zero();
}

struct Aligned {
    DepthMap a, b;
    CameraRig rig;
};

Aligned align(const DepthMap& a, const DepthMap& b, const CameraRig& rig) {
    rig.validate();
    if (is_aligned(rig)) return {a, b, rig};
    return {camera::align_depth_to_color(a, rig), camera::align_depth_to_color(b, rig), rig.aligned_to_color()};
}

struct Pass {
    solver::SolveResult solve;
    std::vector<FlowField2D> initial_flows;
    std::vector<std::string> warnings;
};

Pass run_pass(const DepthMap& anchor_depth, const DepthMap& target_depth, std::vector<ColorImage> images,
              const CameraRig& rig, const PipelineOptions& opt) {
    Pass pass;
    const int g = static_cast<int>(images.size()) - 1;
    for (int s = 0; s < g; ++s)
        pass.initial_flows.push_back(flow2d::estimate_flow(images[s], images[s + 1], opt.flow));

    solver::IntervalInputs in;
    in.anchor_depth = anchor_depth;
    in.target_depth = target_depth;
    in.rig = rig;
    in.weights = opt.weights;
    in.flow_params = opt.flow;
    in.initial_flows = pass.initial_flows;
    if (opt.detect_topology) {
        PointCloud m_k = camera::unproject(anchor_depth, rig.depth_intrinsics);
        if (!m_k.empty()) {
            m_k.graph = analysis::build_neighbor_graph(m_k, images[0], opt.weights);
            auto topo = analysis::detect_topology_changes_detailed(m_k, pass.initial_flows, target_depth, rig,
                                                                   opt.weights, opt.solver);
            for (auto& w : topo.warnings) pass.warnings.push_back(w);
            in.topology = std::move(topo);
        }
    }
    in.images = std::move(images);
    pass.solve = solver::solve_pyramid(in, opt.solver);
    return pass;
}

// one-pixel gaps left by splatting: both opposite neighbors valid and within `tolerance`
DepthMap close_cracks(const DepthMap& d, double tolerance) {
    DepthMap out = d;
    for (int y = 0; y < d.height; ++y) {
        for (int x = 0; x < d.width; ++x) {
            if (d.is_valid(x, y)) continue;
            for (const auto& [dx, dy] : {std::pair{1, 0}, std::pair{0, 1}}) {
                const int ax = x - dx, ay = y - dy, bx = x + dx, by = y + dy;
                if (ax < 0 || ay < 0 || bx >= d.width || by >= d.height) continue;
                if (!d.is_valid(ax, ay) || !d.is_valid(bx, by)) continue;
                const double a = d.at(ax, ay), b = d.at(bx, by);
                if (std::abs(a - b) > tolerance) continue;
                out.set(x, y, static_cast<float>(0.5 * (a + b)));
                break;
            }
        }
    }
    return out;
}

void check_colors(std::span<const ColorImage> colors, const CameraRig& rig) {
    for (const auto& c : colors) {
        if (c.width != rig.color_intrinsics.width || c.height != rig.color_intrinsics.height)
            throw InputError("color frame size does not match the color intrinsics");
    }
}

}  // namespace

IntervalResult reconstruct_interval(const DepthMap& d_k, const DepthMap& d_k1, std::span<const ColorImage> colors,
                                    const CameraRig& rig, const PipelineOptions& opt) {
    opt.weights.validate();
    opt.solver.validate();
    opt.fill.validate();
    if (colors.size() < 2) throw InputError("reconstruct_interval: need g + 1 >= 2 color frames");
    check_colors(colors, rig);
    const int g = static_cast<int>(colors.size()) - 1;
    const Aligned al = align(d_k, d_k1, rig);
    const int w = al.rig.color_intrinsics.width, h = al.rig.color_intrinsics.height;

    IntervalResult out;
    out.g = g;
    std::vector<ColorImage> fwd_images(colors.begin(), colors.end());
    const Pass fwd = run_pass(al.a, al.b, fwd_images, al.rig, opt);
    out.diagnostics = fwd.warnings;
    for (const auto& d : fwd.solve.diagnostics) out.diagnostics.push_back("forward: " + d);
    out.ok = !fwd.solve.faulted;
    out.anchor = fwd.solve.state.anchor;
    out.flows = fwd.solve.state.flows;
    out.trace = fwd.solve.trace;
    out.scene_flow.resize(static_cast<std::size_t>(g));
    for (int s = 1; s <= g; ++s) {
        auto& sf = out.scene_flow[s - 1];
        sf.resize(out.anchor.size());
        for (std::size_t i = 0; i < sf.size(); ++i) sf[i] = fwd.solve.state.position(s, i) - out.anchor.points[i];
    }

    std::optional<Pass> bwd;
    if (opt.backward_pass && g > 1) {
        std::vector<ColorImage> rev(colors.rbegin(), colors.rend());
        bwd = run_pass(al.b, al.a, std::move(rev), al.rig, opt);
        for (const auto& d : bwd->warnings) out.diagnostics.push_back("backward: " + d);
        for (const auto& d : bwd->solve.diagnostics) out.diagnostics.push_back("backward: " + d);
        out.ok = out.ok && !bwd->solve.faulted;
        for (const auto& t : bwd->solve.trace) out.trace.push_back(t);
    }

    for (int s = 1; s < g; ++s) {
        const double tol = opt.fill.merge_tolerance;
        const DepthMap f = close_cracks(render_depth(fwd.solve.state.positions[s - 1], fwd.solve.state.anchor, al.rig, w, h), tol);
        DepthMap b(w, h);
        if (bwd)
            b = close_cracks(render_depth(bwd->solve.state.positions[g - s - 1], bwd->solve.state.anchor, al.rig, w, h), tol);

        const double t = static_cast<double>(s) / g;
        DepthMap merged(w, h);
        LabelMap labels(w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t p = merged.index(x, y);
                const bool fv = f.valid[p] != 0, bv = b.valid[p] != 0;
                HoleLabel l = HoleLabel::valid;
                if (fv && bv) {
                    const double df = f.depth[p], db = b.depth[p];
                    const double d = std::abs(df - db) <= tol ? (1.0 - t) * df + t * db
                                                                                   : std::min(df, db);
                    merged.set(x, y, static_cast<float>(d));
                } else if (fv) {
                    merged.set(x, y, f.depth[p]);
                } else if (bv) {
                    merged.set(x, y, b.depth[p]);
                    l = HoleLabel::filled_forward_backward;
                } else {
                    l = al.a.valid[p] ? HoleLabel::occlusion : HoleLabel::sensor;
                }
                labels.labels[p] = static_cast<std::uint8_t>(l);
            }
        }
        Mask filled;
        merged = bilateral_fill(merged, colors[s], opt.fill.bilateral_radius, opt.fill.bilateral_sigma_space,
                                opt.fill.bilateral_sigma_color, opt.fill.bilateral_min_neighbors, &filled);
        for (std::size_t p = 0; p < filled.size(); ++p)
            if (filled[p]) labels.labels[p] = static_cast<std::uint8_t>(HoleLabel::filled_bilateral);
        out.depths.push_back(std::move(merged));
        out.hole_masks.push_back(std::move(labels));
    }
    return out;
}

SequenceResult upsample_sequence(std::span<const DepthMap> depths, std::span<const ColorImage> colors,
                                 const CameraRig& rig, const PipelineOptions& opt) {
    if (depths.size() < 2) throw InputError("upsample_sequence: need at least two depth frames");
    if (colors.size() < depths.size() || (colors.size() - 1) % (depths.size() - 1) != 0)
        throw InputError("upsample_sequence: color count " + std::to_string(colors.size()) +
                         " is not (depth count - 1) * g + 1 for depth count " + std::to_string(depths.size()));
    const int g = static_cast<int>((colors.size() - 1) / (depths.size() - 1));
    const std::size_t n_int = depths.size() - 1;

    SequenceResult out;
    out.g = g;
    out.intervals.resize(n_int);
    out.interval_ok.assign(n_int, true);
    std::vector<std::uint8_t> ok(n_int, 1);
    parallel_for(n_int, 1, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) {
            const auto frames = colors.subspan(k * static_cast<std::size_t>(g), static_cast<std::size_t>(g) + 1);
            try {
                out.intervals[k] = reconstruct_interval(depths[k], depths[k + 1], frames, rig, opt);
                ok[k] = out.intervals[k].ok ? 1 : 0;
            } catch (const std::exception& ex) {
                // nearest captured frame stands in for every intermediate slot
                IntervalResult fallback;
                fallback.g = g;
                fallback.ok = false;
                fallback.diagnostics.push_back(std::string("interval failed: ") + ex.what());
                const Aligned al = align(depths[k], depths[k + 1], rig);
                for (int s = 1; s < g; ++s) {
                    const DepthMap& near = 2 * s <= g ? al.a : al.b;
                    fallback.depths.push_back(near);
                    LabelMap lm(near.width, near.height);
                    for (std::size_t p = 0; p < near.size(); ++p)
                        if (!near.valid[p]) lm.labels[p] = static_cast<std::uint8_t>(HoleLabel::sensor);
                    fallback.hole_masks.push_back(std::move(lm));
                }
                out.intervals[k] = std::move(fallback);
                ok[k] = 0;
            }
        }
    });

    auto captured_labels = [](const DepthMap& d) {
        LabelMap lm(d.width, d.height);
        for (std::size_t p = 0; p < d.size(); ++p)
            if (!d.valid[p]) lm.labels[p] = static_cast<std::uint8_t>(HoleLabel::sensor);
        return lm;
    };
    for (std::size_t k = 0; k < n_int; ++k) {
        out.interval_ok[k] = ok[k] != 0;
        out.depths.push_back(depths[k]);
        out.hole_masks.push_back(captured_labels(depths[k]));
        for (int s = 1; s < g; ++s) {
            out.depths.push_back(out.intervals[k].depths[static_cast<std::size_t>(s - 1)]);
            out.hole_masks.push_back(out.intervals[k].hole_masks[static_cast<std::size_t>(s - 1)]);
        }
    }
    out.depths.push_back(depths.back());
    out.hole_masks.push_back(captured_labels(depths.back()));
    return out;
}

SceneFlowResult estimate_scene_flow(const DepthMap& d_a, const DepthMap& d_b, const ColorImage& c_a,
                                    const ColorImage& c_b, const CameraRig& rig, const PipelineOptions& opt) {
    opt.weights.validate();
    const std::vector<ColorImage> images{c_a, c_b};
    check_colors(images, rig);
    const Aligned al = align(d_a, d_b, rig);
    Pass pass = run_pass(al.a, al.b, images, al.rig, opt);

    SceneFlowResult out;
    out.anchor = pass.solve.state.anchor;
    out.displacement.resize(out.anchor.size());
    for (std::size_t i = 0; i < out.anchor.size(); ++i)
        out.displacement[i] = pass.solve.state.positions[0][i] - out.anchor.points[i];
    out.flow = pass.solve.state.flows[0];
    out.initial_flow = pass.initial_flows[0];
    out.trace = std::move(pass.solve.trace);
    out.diagnostics = pass.warnings;
    for (auto& d : pass.solve.diagnostics) out.diagnostics.push_back(d);
    out.ok = !pass.solve.faulted;
    return out;
}

std::vector<Vec3> displacement_raster(const PointCloud& anchor, std::span<const Vec3> displacement) {
    if (displacement.size() != anchor.size()) throw InputError("displacement_raster: size differs from the anchor");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<Vec3> out(static_cast<std::size_t>(anchor.grid_width) * anchor.grid_height, Vec3::Constant(nan));
    for (std::size_t i = 0; i < anchor.size(); ++i) out[static_cast<std::size_t>(anchor.pixel_of[i])] = displacement[i];
    return out;
}

}  // namespace depthweave::reconstruct
