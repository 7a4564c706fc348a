#include "depthweave/energy.hpp"

#include <cmath>

#include "depthweave/camera.hpp"
#include "depthweave/errors.hpp"
#include "depthweave/image_ops.hpp"
#include "depthweave/parallel.hpp"

namespace depthweave::energy {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

int col(std::size_t c) { return static_cast<int>(c); }

// Robust magnitude and reweighting factor: value = sqrt(lambda rho), irls = sqrt(lambda / (2 rho)).
struct Robust {
    double value;
    double irls;
};
Robust robust(double r2, double lambda, double eps) {
    const double rho = std::sqrt(r2 + eps * eps);
    return {std::sqrt(lambda * rho), std::sqrt(lambda / (2.0 * rho))};
}

void check_images(const SceneFlowState& state, std::span<const ColorImage> images) {
    if (static_cast<int>(images.size()) != state.g + 1)
        throw InputError("e_opti: expected " + std::to_string(state.g + 1) + " images, got " +
                         std::to_string(images.size()));
    for (int s = 0; s < state.g; ++s) {
        const FlowField2D& f = state.flows[s];
        if (images[s].width != f.width || images[s].height != f.height || images[s + 1].width != f.width ||
            images[s + 1].height != f.height)
            throw InputError("e_opti: image and flow sizes differ");
    }
}

}  // namespace

std::string_view term_name(Term t) {
    switch (t) {
        case Term::opti: return "opti";
        case Term::point: return "point";
        case Term::plane: return "plane";
        case Term::proj: return "proj";
        case Term::iso: return "iso";
        case Term::reg: return "reg";
        case Term::shortest: return "short";
    }
    return "?";
}

TermMask terms(std::initializer_list<Term> list) {
    TermMask m;
    for (Term t : list) m.set(static_cast<std::size_t>(t));
    return m;
}

double ResidualBlock::energy() const {
    double e = 0.0;
    for (double v : values) e += v * v;
    return e;
}

StateLayout StateLayout::of(const SceneFlowState& state) {
    StateLayout l;
    l.g = state.g;
    l.num_points = state.num_points();
    if (!state.flows.empty()) {
        l.flow_width = state.flows[0].width;
        l.flow_height = state.flows[0].height;
    }
    return l;
}

Mat3 skew(const Vec3& a) {
    Mat3 m;
    m << 0.0, -a.z(), a.y(), a.z(), 0.0, -a.x(), -a.y(), a.x(), 0.0;
    return m;
}

PointOcclusion sample_point_occlusion(const SceneFlowState& state, std::span<const analysis::OcclusionField> fields,
                                      const CameraRig& rig) {
    if (static_cast<int>(fields.size()) != state.g) throw InputError("occlusion: expected one field per frame");
    PointOcclusion out(static_cast<std::size_t>(state.g), std::vector<double>(state.num_points(), 1.0));
    for (int s = 0; s < state.g; ++s) {
        const auto& f = fields[s];
        for (std::size_t i = 0; i < state.num_points(); ++i) {
            const Vec3& p = state.position(s, i);
            if (!(rig.depth_to_color.apply(p).z() > 0.0)) continue;
            const auto px = camera::nearest_pixel(camera::psi(p, rig), f.width, f.height);
            if (px) out[s][i] = f.at(px->first, px->second);
        }
    }
    return out;
}

ResidualBlock e_opti(const SceneFlowState& state, std::span<const ColorImage> images, const EnergyWeights& w,
                     bool with_jacobian) {
    check_images(state, images);
    ResidualBlock b;
    b.term = Term::opti;
    const StateLayout lay = StateLayout::of(state);
    for (int s = 0; s < state.g; ++s) {
        const FlowField2D& f = state.flows[s];
        const image::Plane next = image::intensity_plane(images[s + 1]);
        const ColorImage& cur = images[s];
        for (int y = 0; y < f.height; ++y) {
            for (int x = 0; x < f.width; ++x) {
                const std::size_t p = f.index(x, y);
                if (!f.valid[p]) {
                    ++b.skipped;
                    continue;
                }
                const double xw = x + f.u[p], yw = y + f.v[p];
                if (!image::inside(xw, yw, f.width, f.height)) {
                    ++b.skipped;
                    continue;
                }
                double gx = 0.0, gy = 0.0;
                const double iw = image::bicubic(next, xw, yw, &gx, &gy);
                const double r = iw - cur.intensity[p];
                const Robust rb = robust(r * r, w.lambda_opti, w.epsilon);
                b.values.push_back(rb.value);
                b.residuals.push_back(rb.irls * r);
                if (with_jacobian) {
                    const std::size_t c = lay.flow(s, p);
                    b.jacobian.add(col(c), rb.irls * gx);
                    b.jacobian.add(col(c + 1), rb.irls * gy);
                    b.jacobian.end_row();
                }
            }
        }
    }
    return b;
}

ResidualBlock e_point(const SceneFlowState& state, std::span<const analysis::Correspondence> corr,
                      const EnergyWeights& w, bool with_jacobian) {
    ResidualBlock b;
    b.term = Term::point;
    const StateLayout lay = StateLayout::of(state);
    for (const auto& c : corr) {
        if (!c.active) continue;
        if (c.source_index < 0 || static_cast<std::size_t>(c.source_index) >= state.num_points())
            throw InputError("e_point: correspondence source out of range");
        const Vec3 d = state.position(state.g, static_cast<std::size_t>(c.source_index)) - c.target_point;
        const Robust rb = robust(d.squaredNorm(), w.lambda_point, w.epsilon);
        b.values.push_back(rb.value);
        const std::size_t base = lay.position(state.g, static_cast<std::size_t>(c.source_index));
        for (int k = 0; k < 3; ++k) {
            b.residuals.push_back(rb.irls * d[k]);
            if (with_jacobian) {
                b.jacobian.add(col(base + k), rb.irls);
                b.jacobian.end_row();
            }
        }
    }
    return b;
}

ResidualBlock e_plane(const SceneFlowState& state, std::span<const analysis::Correspondence> corr,
                      const EnergyWeights& w, bool with_jacobian) {
    ResidualBlock b;
    b.term = Term::plane;
    const StateLayout lay = StateLayout::of(state);
    for (const auto& c : corr) {
        if (!c.active) continue;
        if (c.source_index < 0 || static_cast<std::size_t>(c.source_index) >= state.num_points())
            throw InputError("e_plane: correspondence source out of range");
        const Vec3 d = state.position(state.g, static_cast<std::size_t>(c.source_index)) - c.target_point;
        const double r = c.target_normal.dot(d);
        const Robust rb = robust(r * r, w.lambda_plane, w.epsilon);
        b.values.push_back(rb.value);
        b.residuals.push_back(rb.irls * r);
        if (with_jacobian) {
            const std::size_t base = lay.position(state.g, static_cast<std::size_t>(c.source_index));
            for (int k = 0; k < 3; ++k) b.jacobian.add(col(base + k), rb.irls * c.target_normal[k]);
            b.jacobian.end_row();
        }
    }
    return b;
}

ResidualBlock e_proj(const SceneFlowState& state, const PointOcclusion& occlusion, const CameraRig& rig,
                     const EnergyWeights& w, bool with_jacobian) {
    ResidualBlock b;
    b.term = Term::proj;
    const StateLayout lay = StateLayout::of(state);
    if (!occlusion.empty() && static_cast<int>(occlusion.size()) != state.g)
        throw InputError("e_proj: occlusion weights must cover every frame");

    for (int s = 0; s < state.g; ++s) {
        const FlowField2D& f = state.flows[s];
        for (std::size_t i = 0; i < state.num_points(); ++i) {
            const Vec3& ps = state.position(s, i);
            const Vec3& pn = state.position(s + 1, i);
            if (!(rig.depth_to_color.apply(ps).z() > 0.0) || !(rig.depth_to_color.apply(pn).z() > 0.0)) {
                ++b.skipped;
                continue;
            }
            Mat23 js, jn;
            const Vec2 qs = camera::psi(ps, rig, js);
            const Vec2 qn = camera::psi(pn, rig, jn);
            if (!image::inside(qs.x(), qs.y(), f.width, f.height)) {
                ++b.skipped;
                continue;
            }
            const auto taps = image::bilinear_taps(qs.x(), qs.y(), f.width, f.height);
            bool ok = true;
            Vec2 v = Vec2::Zero();
            Eigen::Matrix2d dv = Eigen::Matrix2d::Zero();  // d(flow)/d(pixel)
            for (int k = 0; k < 4; ++k) {
                const auto idx = static_cast<std::size_t>(taps.index[k]);
                if (taps.weight[k] != 0.0 && !f.valid[idx]) ok = false;
                v += taps.weight[k] * Vec2(f.u[idx], f.v[idx]);
                dv.col(0) += taps.dwdx[k] * Vec2(f.u[idx], f.v[idx]);
                dv.col(1) += taps.dwdy[k] * Vec2(f.u[idx], f.v[idx]);
            }
            if (!ok) {
                ++b.skipped;
                continue;
            }
            const double o = occlusion.empty() ? 1.0 : occlusion[s][i];
            const double c = std::sqrt(w.lambda_proj * o);
            const Vec2 r = c * (qn - qs - v);
            const Mat23 jac_s = -c * (js + dv * js);
            const Mat23 jac_n = c * jn;
            for (int row = 0; row < 2; ++row) {
                b.values.push_back(r[row]);
                b.residuals.push_back(r[row]);
                if (!with_jacobian) continue;
                if (s >= 1) {
                    const std::size_t base = lay.position(s, i);
                    for (int k = 0; k < 3; ++k) b.jacobian.add(col(base + k), jac_s(row, k));
                }
                const std::size_t base = lay.position(s + 1, i);
                for (int k = 0; k < 3; ++k) b.jacobian.add(col(base + k), jac_n(row, k));
                for (int k = 0; k < 4; ++k) {
                    if (taps.weight[k] == 0.0) continue;
                    const std::size_t fc = lay.flow(s, static_cast<std::size_t>(taps.index[k])) + row;
                    b.jacobian.add(col(fc), -c * taps.weight[k]);
                }
                b.jacobian.end_row();
            }
        }
    }
    return b;
}

ResidualBlock e_proj(const SceneFlowState& state, std::span<const analysis::OcclusionField> occlusions,
                     const CameraRig& rig, const EnergyWeights& w, bool with_jacobian) {
    return e_proj(state, sample_point_occlusion(state, occlusions, rig), rig, w, with_jacobian);
}

ResidualBlock e_iso(const SceneFlowState& state, const NeighborGraph& graph, const EnergyWeights& w,
                    bool with_jacobian) {
    ResidualBlock b;
    b.term = Term::iso;
    const StateLayout lay = StateLayout::of(state);
    for (int s = 1; s <= state.g; ++s) {
        const auto& pos = state.positions[s - 1];
        const auto& rot = state.rotations[s - 1];
        for (const auto& e : graph.edges) {
            const double c = std::sqrt(w.lambda_iso * e.weight());
            // both directions: each endpoint's rotation carries the edge
            for (int dir = 0; dir < 2; ++dir) {
                const auto i = static_cast<std::size_t>(dir == 0 ? e.i : e.j);
                const auto j = static_cast<std::size_t>(dir == 0 ? e.j : e.i);
                const Vec3 rest = dir == 0 ? e.rest : Vec3(-e.rest);
                const Vec3 a = rot[i] * rest;
                const Vec3 r = c * ((pos[i] - pos[j]) - a);
                const Mat3 jr = c * skew(a);
                for (int row = 0; row < 3; ++row) {
                    b.values.push_back(r[row]);
                    b.residuals.push_back(r[row]);
                    if (!with_jacobian) continue;
                    b.jacobian.add(col(lay.position(s, i) + row), c);
                    b.jacobian.add(col(lay.position(s, j) + row), -c);
                    const std::size_t rc = lay.rotation(s, i);
                    for (int k = 0; k < 3; ++k) {
                        if (jr(row, k) != 0.0) b.jacobian.add(col(rc + k), jr(row, k));
                    }
                    b.jacobian.end_row();
                }
            }
        }
    }
    return b;
}

ResidualBlock e_reg(const SceneFlowState& state, const NeighborGraph& graph, const EnergyWeights& w,
                    bool with_jacobian) {
    ResidualBlock b;
    b.term = Term::reg;
    const StateLayout lay = StateLayout::of(state);
    const std::array<Mat3, 3> gens = {skew(Vec3::UnitX()), skew(Vec3::UnitY()), skew(Vec3::UnitZ())};
    for (int s = 1; s <= state.g; ++s) {
        const auto& rot = state.rotations[s - 1];
        for (const auto& e : graph.edges) {
            const double c = std::sqrt(w.lambda_reg * e.weight() * w.d_A);
            const auto i = static_cast<std::size_t>(e.i), j = static_cast<std::size_t>(e.j);
            const Mat3 diff = c * (rot[i] - rot[j]);
            std::array<Mat3, 3> di, dj;
            if (with_jacobian) {
                for (int k = 0; k < 3; ++k) {
                    di[k] = c * gens[k] * rot[i];
                    dj[k] = -c * gens[k] * rot[j];
                }
            }
            const std::size_t ci = lay.rotation(s, i), cj = lay.rotation(s, j);
            for (int r = 0; r < 3; ++r) {
                for (int q = 0; q < 3; ++q) {
                    b.values.push_back(diff(r, q));
                    b.residuals.push_back(diff(r, q));
                    if (!with_jacobian) continue;
                    for (int k = 0; k < 3; ++k)
                        if (di[k](r, q) != 0.0) b.jacobian.add(col(ci + k), di[k](r, q));
                    for (int k = 0; k < 3; ++k)
                        if (dj[k](r, q) != 0.0) b.jacobian.add(col(cj + k), dj[k](r, q));
                    b.jacobian.end_row();
                }
            }
        }
    }
    return b;
}

ResidualBlock e_short(const SceneFlowState& state, const EnergyWeights& w, bool with_jacobian) {
    ResidualBlock b;
    b.term = Term::shortest;
    const StateLayout lay = StateLayout::of(state);
    const double c = std::sqrt(w.lambda_short);
    for (int s = 1; s <= state.g; ++s) {
        for (std::size_t i = 0; i < state.num_points(); ++i) {
            const Vec3 r = c * (state.position(s, i) - state.position(s - 1, i));
            for (int k = 0; k < 3; ++k) {
                b.values.push_back(r[k]);
                b.residuals.push_back(r[k]);
                if (!with_jacobian) continue;
                if (s >= 2) b.jacobian.add(col(lay.position(s - 1, i) + k), -c);
                b.jacobian.add(col(lay.position(s, i) + k), c);
                b.jacobian.end_row();
            }
        }
    }
    return b;
}

std::vector<ResidualBlock> assemble(const SceneFlowState& state, const EnergyInputs& in, bool with_jacobian) {
    std::vector<Term> active;
    for (Term t : kAllTerms)
        if (in.mask.test(static_cast<std::size_t>(t))) active.push_back(t);

    static const PointOcclusion kNoOcclusion;
    const PointOcclusion& occ = in.occlusion ? *in.occlusion : kNoOcclusion;
    std::vector<ResidualBlock> blocks(active.size());
    parallel_for(active.size(), 1, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t k = b0; k < b1; ++k) {
            switch (active[k]) {
                case Term::opti: blocks[k] = e_opti(state, in.images, in.weights, with_jacobian); break;
                case Term::point: blocks[k] = e_point(state, in.correspondences, in.weights, with_jacobian); break;
                case Term::plane: blocks[k] = e_plane(state, in.correspondences, in.weights, with_jacobian); break;
                case Term::proj: blocks[k] = e_proj(state, occ, in.rig, in.weights, with_jacobian); break;
                case Term::iso: blocks[k] = e_iso(state, state.anchor.graph, in.weights, with_jacobian); break;
                case Term::reg: blocks[k] = e_reg(state, state.anchor.graph, in.weights, with_jacobian); break;
                case Term::shortest: blocks[k] = e_short(state, in.weights, with_jacobian); break;
            }
        }
    });
    return blocks;
}

EnergyBreakdown breakdown(std::span<const ResidualBlock> blocks) {
    EnergyBreakdown out;
    for (const auto& b : blocks) out.terms[static_cast<int>(b.term)] += b.energy();
    for (double t : out.terms) out.total += t;
    return out;
}

EnergyBreakdown total_energy(const SceneFlowState& state, const EnergyInputs& inputs) {
    const auto blocks = assemble(state, inputs, false);
    return breakdown(blocks);
}

}  // namespace depthweave::energy
