#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "depthweave/analysis.hpp"
#include "depthweave/energy.hpp"
#include "depthweave/params.hpp"
#include "depthweave/types.hpp"

namespace depthweave::solver {

using Operator = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& y)>;

struct PcgResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double residual_norm = 0.0;
};

/// Preconditioned conjugate gradients on A x = b from x = 0, Jacobi preconditioner
/// given as the diagonal of A. Stops after `max_iters` or when |r| <= rel_tol |b|.
PcgResult pcg(const Operator& apply_a, const Eigen::VectorXd& b, const Eigen::VectorXd& diagonal, int max_iters,
              double rel_tol = 1e-10);

/// J^T J of a set of residual blocks, applied matrix-free. Products are
/// deterministic regardless of the thread count.
class NormalEquations {
public:
    NormalEquations(std::span<const energy::ResidualBlock> blocks, std::size_t num_vars);

    std::size_t size() const { return n_; }
    /// -J^T r
    const Eigen::VectorXd& rhs() const { return rhs_; }
    /// diag(J^T J)
    const Eigen::VectorXd& diagonal() const { return diag_; }
    void apply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const;

private:
    struct Transposed {
        std::vector<int> col_ptr;
        std::vector<int> rows;
        std::vector<double> vals;
    };
    std::span<const energy::ResidualBlock> blocks_;
    std::vector<Transposed> transposed_;
    std::size_t n_ = 0;
    Eigen::VectorXd rhs_;
    Eigen::VectorXd diag_;
};

/// Rodrigues' formula.
Mat3 exp_so3(const Vec3& w);

/// x <- x (+) scale * dx: additive on positions and flows, left-multiplied
/// exponential on rotations, followed by re-orthonormalization.
void apply_increment(SceneFlowState& state, const Eigen::VectorXd& dx, double scale = 1.0);

/// Data the energy is evaluated against on one pyramid level, owned.
struct Problem {
    std::vector<ColorImage> images;
    CameraRig rig;
    std::vector<analysis::Correspondence> correspondences;
    energy::PointOcclusion occlusion;  // empty: O = 1
    EnergyWeights weights;
    energy::TermMask mask = energy::all_terms();

    energy::EnergyInputs inputs() const;
};

struct StepResult {
    energy::EnergyBreakdown before;
    energy::EnergyBreakdown after;
    int pcg_iterations = 0;
    int halvings = 0;
    double step_norm = 0.0;
    bool accepted = false;  // false: every trial increased the energy, state unchanged
};

/// One damped Gauss-Newton step with PCG and step halving. Throws SolverFault
/// when the linear solve produces non-finite values.
StepResult gauss_newton_step(SceneFlowState& state, const Problem& problem, const SolverParams& params);

struct TraceEntry {
    int round = 0;
    int level = 0;
    int iteration = 0;
    energy::EnergyBreakdown energy;
};

/// Per-term energy per iteration as CSV (header included).
std::string trace_csv(std::span<const TraceEntry> trace);

/// Runs up to `iterations` steps, stopping once the relative decrease falls below
/// params.energy_tol or a step is rejected. Appends one entry per evaluated state.
void run_gauss_newton(SceneFlowState& state, const Problem& problem, const SolverParams& params, int iterations,
                      int round, int level, std::vector<TraceEntry>* trace);

/// Flow-lifted initial guess; p_g takes its depth from the target where available
/// and intermediate depths are linearly interpolated.
SceneFlowState initialize_state(const PointCloud& anchor, std::span<const FlowField2D> flows,
                                const DepthMap& target_depth, const CameraRig& rig, double gate);

/// Bilinear prolongation of per-point vectors between point clouds on a 2:1 pyramid
/// (fine pixel x sits at coarse coordinate x/2). Fine points with no coarse support receive zero.
std::vector<Vec3> prolong_point_field(const PointCloud& coarse, std::span<const Vec3> values, const PointCloud& fine);

/// Point-to-target registration of a one-step state on a single level using
/// the terms in `mask` (flows unused). Correspondences are recomputed each round.
struct RegistrationResult {
    SceneFlowState state;
    std::vector<TraceEntry> trace;
    bool ok = true;
    std::string message;
};
RegistrationResult register_to_target(SceneFlowState state, const PointCloud& target, const EnergyWeights& weights,
                                      const SolverParams& params, energy::TermMask mask);

struct IntervalInputs {
    DepthMap anchor_depth;          // D_k, on the color grid of the (aligned) rig
    DepthMap target_depth;          // D_{k+1}
    std::vector<ColorImage> images;  // g + 1
    CameraRig rig;
    std::vector<FlowField2D> initial_flows;        // g; empty: estimated from the images
    std::optional<analysis::TopologyResult> topology;  // w_t source; none: w_t = 1
    EnergyWeights weights;
    energy::TermMask mask = energy::all_terms();
    FlowParams flow_params;
};

struct SolveResult {
    SceneFlowState state;
    SceneFlowState initial;
    std::vector<TraceEntry> trace;
    std::vector<std::string> diagnostics;
    bool faulted = false;
};

/// Coarse-to-fine joint solve of one interval.
SolveResult solve_pyramid(const IntervalInputs& inputs, const SolverParams& params);

}  // namespace depthweave::solver
