#include "depthweave/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace depthweave::image {

double Plane::clamped(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return data[static_cast<std::size_t>(y) * width + x];
}

Plane intensity_plane(const ColorImage& img) {
    Plane p(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) p.data[i] = img.intensity[i];
    return p;
}

namespace {

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

// Cell origin and fraction along one axis, keeping the right tap inside the image.
inline void cell(double x, int n, int& x0, double& t) {
    if (n <= 1) {
        x0 = 0;
        t = 0.0;
        return;
    }
    x0 = std::min(static_cast<int>(std::floor(x)), n - 2);
    x0 = std::max(x0, 0);
    t = x - x0;
}

}  // namespace

double bilinear(const Plane& p, double x, double y) {
    int x0, y0;
    double tx, ty;
    cell(x, p.width, x0, tx);
    cell(y, p.height, y0, ty);
    const int x1 = std::min(x0 + 1, p.width - 1);
    const int y1 = std::min(y0 + 1, p.height - 1);
    const double top = lerp(p.at(x0, y0), p.at(x1, y0), tx);
    const double bot = lerp(p.at(x0, y1), p.at(x1, y1), tx);
    return lerp(top, bot, ty);
}

BilinearTaps bilinear_taps(double x, double y, int width, int height) {
    int x0, y0;
    double tx, ty;
    cell(x, width, x0, tx);
    cell(y, height, y0, ty);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    BilinearTaps t;
    t.index[0] = y0 * width + x0;
    t.index[1] = y0 * width + x1;
    t.index[2] = y1 * width + x0;
    t.index[3] = y1 * width + x1;
    t.weight[0] = (1 - tx) * (1 - ty);
    t.weight[1] = tx * (1 - ty);
    t.weight[2] = (1 - tx) * ty;
    t.weight[3] = tx * ty;
    t.dwdx[0] = -(1 - ty);
    t.dwdx[1] = (1 - ty);
    t.dwdx[2] = -ty;
    t.dwdx[3] = ty;
    t.dwdy[0] = -(1 - tx);
    t.dwdy[1] = -tx;
    t.dwdy[2] = (1 - tx);
    t.dwdy[3] = tx;
    t.tx = tx;
    t.ty = ty;
    return t;
}

namespace {

constexpr double kKeysA = -0.5;

inline double keys(double t) {
    const double a = kKeysA;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

inline double keys_derivative(double t) {
    const double a = kKeysA;
    const double s = t < 0.0 ? -1.0 : 1.0;
    t = std::abs(t);
    if (t <= 1.0) return s * (3.0 * (a + 2.0) * t - 2.0 * (a + 3.0)) * t;
    if (t < 2.0) return s * ((3.0 * a * t - 10.0 * a) * t + 8.0 * a);
    return 0.0;
}

}  // namespace

double bicubic(const Plane& p, double x, double y, double* dx, double* dy) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    double wx[4], wy[4], dwx[4], dwy[4];
    for (int k = 0; k < 4; ++k) {
        const double tx = x - (x0 - 1 + k);
        const double ty = y - (y0 - 1 + k);
        wx[k] = keys(tx);
        wy[k] = keys(ty);
        dwx[k] = keys_derivative(tx);
        dwy[k] = keys_derivative(ty);
    }
    double val = 0.0, gx = 0.0, gy = 0.0;
    for (int j = 0; j < 4; ++j) {
        double row = 0.0, row_dx = 0.0;
        for (int i = 0; i < 4; ++i) {
            const double s = p.clamped(x0 - 1 + i, y0 - 1 + j);
            row += wx[i] * s;
            row_dx += dwx[i] * s;
        }
        val += wy[j] * row;
        gx += wy[j] * row_dx;
        gy += dwy[j] * row;
    }
    if (dx) *dx = gx;
    if (dy) *dy = gy;
    return val;
}

Plane gaussian5(const Plane& p) {
    static const double k[5] = {
        std::exp(-2.0), std::exp(-0.5), 1.0, std::exp(-0.5), std::exp(-2.0),
    };
    const double norm = k[0] + k[1] + k[2] + k[3] + k[4];
    Plane tmp(p.width, p.height), out(p.width, p.height);
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            double s = 0.0;
            for (int d = -2; d <= 2; ++d) s += k[d + 2] * p.clamped(x + d, y);
            tmp.at(x, y) = s / norm;
        }
    }
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            double s = 0.0;
            for (int d = -2; d <= 2; ++d) s += k[d + 2] * tmp.clamped(x, y + d);
            out.at(x, y) = s / norm;
        }
    }
    return out;
}

Plane pyr_down(const Plane& p) {
    const Plane blurred = gaussian5(p);
    Plane out((p.width + 1) / 2, (p.height + 1) / 2);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(x, y) = blurred.at(2 * x, 2 * y);
    return out;
}

ColorImage pyr_down(const ColorImage& img) {
    ColorImage out((img.width + 1) / 2, (img.height + 1) / 2);
    for (int c = 0; c < 3; ++c) {
        Plane ch(img.width, img.height);
        for (std::size_t i = 0; i < img.size(); ++i) ch.data[i] = img.rgb[3 * i + c];
        const Plane d = pyr_down(ch);
        for (std::size_t i = 0; i < out.size(); ++i) out.rgb[3 * i + c] = static_cast<float>(std::clamp(d.data[i], 0.0, 1.0));
    }
    out.update_intensity();
    return out;
}

FlowField2D pyr_down(const FlowField2D& flow) {
    Plane u(flow.width, flow.height), v(flow.width, flow.height);
    u.data = flow.u;
    v.data = flow.v;
    const Plane du = pyr_down(u), dv = pyr_down(v);
    FlowField2D out(du.width, du.height);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const auto i = out.index(x, y);
            out.u[i] = 0.5 * du.data[i];
            out.v[i] = 0.5 * dv.data[i];
            out.valid[i] = flow.valid[flow.index(2 * x, 2 * y)];
        }
    }
    return out;
}

Plane prolong(const Plane& coarse, int width, int height, double scale) {
    Plane out(width, height);
    for (int y = 0; y < height; ++y) {
        const double cy = std::min(0.5 * y, static_cast<double>(coarse.height - 1));
        for (int x = 0; x < width; ++x) {
            const double cx = std::min(0.5 * x, static_cast<double>(coarse.width - 1));
            out.at(x, y) = scale * bilinear(coarse, cx, cy);
        }
    }
    return out;
}

FlowField2D prolong(const FlowField2D& coarse, int width, int height) {
    Plane u(coarse.width, coarse.height), v(coarse.width, coarse.height);
    u.data = coarse.u;
    v.data = coarse.v;
    const Plane fu = prolong(u, width, height, 2.0), fv = prolong(v, width, height, 2.0);
    FlowField2D out(width, height);
    out.u = fu.data;
    out.v = fv.data;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int px = std::min(x / 2, coarse.width - 1);
            const int py = std::min(y / 2, coarse.height - 1);
            out.valid[out.index(x, y)] = coarse.valid[coarse.index(px, py)];
        }
    }
    return out;
}

DepthMap min_pool(const DepthMap& depth) {
    DepthMap out((depth.width + 1) / 2, (depth.height + 1) / 2);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            float best = std::numeric_limits<float>::infinity();
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    const int fx = 2 * x + dx, fy = 2 * y + dy;
                    if (fx >= depth.width || fy >= depth.height || !depth.is_valid(fx, fy)) continue;
                    best = std::min(best, depth.at(fx, fy));
                }
            }
            if (std::isfinite(best)) out.set(x, y, best);
        }
    }
    return out;
}

void gradients(const Plane& p, Plane& gx, Plane& gy) {
    gx = Plane(p.width, p.height);
    gy = Plane(p.width, p.height);
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            if (p.width >= 2) {
                if (x == 0) gx.at(x, y) = p.at(1, y) - p.at(0, y);
                else if (x == p.width - 1) gx.at(x, y) = p.at(x, y) - p.at(x - 1, y);
                else gx.at(x, y) = 0.5 * (p.at(x + 1, y) - p.at(x - 1, y));
            }
            if (p.height >= 2) {
                if (y == 0) gy.at(x, y) = p.at(x, 1) - p.at(x, 0);
                else if (y == p.height - 1) gy.at(x, y) = p.at(x, y) - p.at(x, y - 1);
                else gy.at(x, y) = 0.5 * (p.at(x, y + 1) - p.at(x, y - 1));
            }
        }
    }
}

}  // namespace depthweave::image
