#pragma once

#include <vector>

#include "depthweave/types.hpp"

namespace depthweave::image {

/// Dense scalar raster, row-major.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Plane() = default;
    Plane(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    /// Border-replicated read.
    double clamped(int x, int y) const;
};

Plane intensity_plane(const ColorImage& img);

/// True when (x, y) lies inside [0, w-1] x [0, h-1].
inline bool inside(double x, double y, int w, int h) { return x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1; }

/// Bilinear interpolation; the caller guarantees (x, y) is inside.
double bilinear(const Plane& p, double x, double y);

/// Bilinear taps: the four pixel indices and weights, for coordinates inside the image.
struct BilinearTaps {
    int index[4]{};
    double weight[4]{};
    double dwdx[4]{};
    double dwdy[4]{};
    double tx = 0.0;
    double ty = 0.0;
};
BilinearTaps bilinear_taps(double x, double y, int width, int height);

/// Keys cubic convolution (a = -0.5) with its analytic gradient; C1 continuous.
/// Taps outside the image are border-replicated.
double bicubic(const Plane& p, double x, double y, double* dx = nullptr, double* dy = nullptr);

/// 5x5 separable Gaussian with sigma 1, border replicated.
Plane gaussian5(const Plane& p);

/// Gaussian prefilter followed by keeping every second pixel; output is ceil(w/2) x ceil(h/2).
Plane pyr_down(const Plane& p);
ColorImage pyr_down(const ColorImage& img);

/// Flow at half resolution with halved values. A coarse pixel is valid when its fine parent is.
FlowField2D pyr_down(const FlowField2D& flow);

/// Bilinear prolongation of a coarse field onto an (w x h) grid where fine pixel x samples
/// coarse coordinate x/2. Values scaled by `scale`.
Plane prolong(const Plane& coarse, int width, int height, double scale = 1.0);
FlowField2D prolong(const FlowField2D& coarse, int width, int height);

/// 2x2 min-pooling of valid depths.
DepthMap min_pool(const DepthMap& depth);

/// Central-difference gradients, one-sided at the borders.
void gradients(const Plane& p, Plane& gx, Plane& gy);

}  // namespace depthweave::image
