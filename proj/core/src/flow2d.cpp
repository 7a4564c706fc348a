#include "depthweave/flow2d.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "depthweave/errors.hpp"
#include "depthweave/parallel.hpp"

namespace depthweave::flow2d {

using image::Plane;

namespace {

constexpr double kIntensityScale = 255.0;
constexpr double kCharbonnierEps = 0.5;  // on the 0..255 scale
constexpr double kSorOmega = 1.8;

struct Level {
    Plane i0, i1;
    ColorImage guide;
};

// One warp: linearize I1 around the current flow and solve for the increment.
void refine_warp(const Level& lv, Plane& u, Plane& v, const FlowParams& params) {
    const int w = lv.i0.width, h = lv.i0.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<double> ix(n, 0.0), iy(n, 0.0), it(n, 0.0);
    std::vector<std::uint8_t> has_data(n, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * w + x;
            const double xw = x + u.data[p], yw = y + v.data[p];
            if (!image::inside(xw, yw, w, h)) continue;
            double gx, gy;
            const double val = image::bicubic(lv.i1, xw, yw, &gx, &gy);
            ix[p] = gx;
            iy[p] = gy;
            it[p] = val - lv.i0.data[p];
            has_data[p] = 1;
        }
    }

    std::vector<double> du(n, 0.0), dv(n, 0.0);
    const double alpha = params.alpha;
    for (int iter = 0; iter < params.inner_iterations; ++iter) {
        for (int color = 0; color < 2; ++color) {
            for (int y = 0; y < h; ++y) {
                for (int x = (y + color) & 1; x < w; x += 2) {
                    const std::size_t p = static_cast<std::size_t>(y) * w + x;
                    double su = 0.0, sv = 0.0;
                    int deg = 0;
                    auto nb = [&](int qx, int qy) {
                        if (qx < 0 || qy < 0 || qx >= w || qy >= h) return;
                        const std::size_t q = static_cast<std::size_t>(qy) * w + qx;
                        su += u.data[q] + du[q];
                        sv += v.data[q] + dv[q];
                        ++deg;
                    };
                    nb(x - 1, y);
                    nb(x + 1, y);
                    nb(x, y - 1);
                    nb(x, y + 1);

                    double a11 = alpha * deg, a22 = alpha * deg, a12 = 0.0;
                    double b1 = alpha * (su - deg * u.data[p]);
                    double b2 = alpha * (sv - deg * v.data[p]);
                    if (has_data[p]) {
                        const double r = it[p] + ix[p] * du[p] + iy[p] * dv[p];
                        const double wd = 0.5 / std::sqrt(r * r + kCharbonnierEps * kCharbonnierEps);
                        a11 += wd * ix[p] * ix[p];
                        a22 += wd * iy[p] * iy[p];
                        a12 += wd * ix[p] * iy[p];
                        b1 -= wd * ix[p] * it[p];
                        b2 -= wd * iy[p] * it[p];
                    }
                    const double det = a11 * a22 - a12 * a12;
                    if (!(det > 0.0)) continue;
                    const double nu = (a22 * b1 - a12 * b2) / det;
                    const double nv = (a11 * b2 - a12 * b1) / det;
                    du[p] += kSorOmega * (nu - du[p]);
                    dv[p] += kSorOmega * (nv - dv[p]);
                }
            }
        }
    }
    for (std::size_t p = 0; p < n; ++p) {
        u.data[p] += du[p];
        v.data[p] += dv[p];
    }
}

FlowField2D to_field(const Plane& u, const Plane& v) {
    FlowField2D f(u.width, u.height);
    f.u = u.data;
    f.v = v.data;
    return f;
}

}  // namespace

FlowField2D estimate_flow(const ColorImage& a, const ColorImage& b, const FlowParams& params) {
    params.validate();
    if (a.width != b.width || a.height != b.height) throw InputError("estimate_flow: image sizes differ");
    if (a.width < 1 || a.height < 1) throw InputError("estimate_flow: empty image");

    std::vector<Level> pyr;
    {
        Level base;
        base.i0 = image::intensity_plane(a);
        base.i1 = image::intensity_plane(b);
        for (auto& x : base.i0.data) x *= kIntensityScale;
        for (auto& x : base.i1.data) x *= kIntensityScale;
        base.guide = a;
        pyr.push_back(std::move(base));
    }
    while (static_cast<int>(pyr.size()) < params.pyramid_levels) {
        const Level& f = pyr.back();
        if (std::min(f.i0.width, f.i0.height) < 16) break;
        Level c;
        c.i0 = image::pyr_down(f.i0);
        c.i1 = image::pyr_down(f.i1);
        c.guide = image::pyr_down(f.guide);
        pyr.push_back(std::move(c));
    }

    Plane u(pyr.back().i0.width, pyr.back().i0.height), v(u.width, u.height);
    for (int l = static_cast<int>(pyr.size()) - 1; l >= 0; --l) {
        const Level& lv = pyr[static_cast<std::size_t>(l)];
        if (u.width != lv.i0.width || u.height != lv.i0.height) {
            u = image::prolong(u, lv.i0.width, lv.i0.height, 2.0);
            v = image::prolong(v, lv.i0.width, lv.i0.height, 2.0);
        }
        for (int warp = 0; warp < params.warps_per_level; ++warp) {
            refine_warp(lv, u, v, params);
            const FlowField2D filtered =
                weighted_median_filter(to_field(u, v), lv.guide, params.median_radius, params.median_sigma);
            u.data = filtered.u;
            v.data = filtered.v;
        }
    }
    return to_field(u, v);
}

FlowField2D weighted_median_filter(const FlowField2D& flow, const ColorImage& guide, int radius, double sigma_color) {
    if (flow.width != guide.width || flow.height != guide.height)
        throw InputError("weighted_median_filter: guide size differs from flow");
    const int w = flow.width, h = flow.height;
    const double inv_s2 = 1.0 / (sigma_color * sigma_color);
    FlowField2D out = flow;

    parallel_for(static_cast<std::size_t>(h), 8, [&](std::size_t y0, std::size_t y1) {
        std::vector<std::pair<double, double>> su, sv;
        for (int y = static_cast<int>(y0); y < static_cast<int>(y1); ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t p = flow.index(x, y);
                if (!flow.valid[p]) continue;
                const Eigen::Vector3f cp = guide.color(p);
                su.clear();
                sv.clear();
                double total = 0.0;
                for (int dy = -radius; dy <= radius; ++dy) {
                    const int qy = y + dy;
                    if (qy < 0 || qy >= h) continue;
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const int qx = x + dx;
                        if (qx < 0 || qx >= w) continue;
                        const std::size_t q = flow.index(qx, qy);
                        if (!flow.valid[q]) continue;
                        const double d2 = (guide.color(q) - cp).cast<double>().squaredNorm();
                        const double wt = std::exp(-d2 * inv_s2);
                        su.emplace_back(flow.u[q], wt);
                        sv.emplace_back(flow.v[q], wt);
                        total += wt;
                    }
                }
                auto median = [total](std::vector<std::pair<double, double>>& vals) {
                    std::sort(vals.begin(), vals.end());
                    double acc = 0.0;
                    for (const auto& [val, wt] : vals) {
                        acc += wt;
                        if (acc >= 0.5 * total) return val;
                    }
                    return vals.back().first;
                };
                out.u[p] = median(su);
                out.v[p] = median(sv);
            }
        }
    });
    return out;
}

Plane divergence(const FlowField2D& flow) {
    Plane u(flow.width, flow.height), v(flow.width, flow.height);
    u.data = flow.u;
    v.data = flow.v;
    Plane ux, uy, vx, vy;
    image::gradients(u, ux, uy);
    image::gradients(v, vx, vy);
    Plane div(flow.width, flow.height);
    for (std::size_t i = 0; i < div.data.size(); ++i) div.data[i] = ux.data[i] + vy.data[i];
    return div;
}

bool sample_flow(const FlowField2D& flow, double x, double y, double& u, double& v) {
    if (!image::inside(x, y, flow.width, flow.height)) return false;
    const auto taps = image::bilinear_taps(x, y, flow.width, flow.height);
    u = 0.0;
    v = 0.0;
    for (int k = 0; k < 4; ++k) {
        if (taps.weight[k] == 0.0) continue;
        if (!flow.valid[taps.index[k]]) return false;
    }
    // lerp form keeps constant fields exact
    auto lerp2 = [&](const std::vector<double>& f) {
        const double top = f[taps.index[0]] + (f[taps.index[1]] - f[taps.index[0]]) * taps.tx;
        const double bot = f[taps.index[2]] + (f[taps.index[3]] - f[taps.index[2]]) * taps.tx;
        return top + (bot - top) * taps.ty;
    };
    u = lerp2(flow.u);
    v = lerp2(flow.v);
    return true;
}

std::vector<FlowField2D> accumulate_prefixes(std::span<const FlowField2D> flows) {
    if (flows.empty()) throw InputError("accumulate_flow: empty flow list");
    for (const auto& f : flows) {
        if (f.width != flows[0].width || f.height != flows[0].height)
            throw InputError("accumulate_flow: flow sizes differ");
    }
    std::vector<FlowField2D> out;
    out.reserve(flows.size());
    out.push_back(flows[0]);
    for (std::size_t n = 1; n < flows.size(); ++n) {
        const FlowField2D& prev = out.back();
        FlowField2D acc(prev.width, prev.height);
        for (int y = 0; y < prev.height; ++y) {
            for (int x = 0; x < prev.width; ++x) {
                const std::size_t p = prev.index(x, y);
                double su = 0.0, sv = 0.0;
                if (!prev.valid[p] || !sample_flow(flows[n], x + prev.u[p], y + prev.v[p], su, sv)) {
                    acc.u[p] = 0.0;
                    acc.v[p] = 0.0;
                    acc.valid[p] = 0;
                    continue;
                }
                acc.u[p] = prev.u[p] + su;
                acc.v[p] = prev.v[p] + sv;
            }
        }
        out.push_back(std::move(acc));
    }
    return out;
}

FlowField2D accumulate_flow(std::span<const FlowField2D> flows) { return accumulate_prefixes(flows).back(); }

}  // namespace depthweave::flow2d
