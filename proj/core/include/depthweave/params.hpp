#pragma once

namespace depthweave {

/// Coarse-to-fine variational flow used to initialize the solver.
struct FlowParams {
    int pyramid_levels = 4;
    int warps_per_level = 3;
    double alpha = 20.0;       // quadratic smoothness weight (intensity on a 0..255 scale)
    int median_radius = 2;
    int inner_iterations = 40;  // red-black SOR sweeps per warp
    double median_sigma = 1.0;  // color scale of the weighted median

    void validate() const;
};

struct SolverParams {
    int levels = 3;
    int gn_iters_per_level = 5;
    int pcg_iters = 10;
    int icp_rounds = 3;
    double damping = 1e-6;
    double energy_tol = 1e-4;
    double correspondence_gate = 0.2;  // meters
    int normal_neighbors = 16;

    void validate() const;
};

/// Forward/backward merge and residual hole filling.
struct FillParams {
    int bilateral_radius = 5;
    double bilateral_sigma_space = 3.0;  // pixels
    double bilateral_sigma_color = 0.1;  // intensity in [0,1]
    int bilateral_min_neighbors = 3;
    double merge_tolerance = 0.05;  // meters; beyond this the nearer pass wins instead of blending

    void validate() const;
};

}  // namespace depthweave
