#pragma once

#include <array>
#include <bitset>
#include <span>
#include <string_view>
#include <vector>

#include "depthweave/analysis.hpp"
#include "depthweave/types.hpp"

namespace depthweave::energy {

enum class Term : int { opti = 0, point, plane, proj, iso, reg, shortest };
inline constexpr int kTermCount = 7;
inline constexpr std::array<Term, kTermCount> kAllTerms = {Term::opti, Term::point, Term::plane, Term::proj,
                                                           Term::iso,  Term::reg,   Term::shortest};

std::string_view term_name(Term t);

using TermMask = std::bitset<kTermCount>;
inline TermMask all_terms() { return TermMask().set(); }
TermMask terms(std::initializer_list<Term> list);

/// Compressed sparse rows. Column indices refer to the state vector (see StateLayout).
struct SparseRows {
    std::vector<int> row_ptr{0};
    std::vector<int> cols;
    std::vector<double> vals;

    int rows() const { return static_cast<int>(row_ptr.size()) - 1; }
    std::size_t nnz() const { return vals.size(); }
    void add(int col, double v) {
        cols.push_back(col);
        vals.push_back(v);
    }
    void end_row() { row_ptr.push_back(static_cast<int>(cols.size())); }
};

/// One energy term linearized at the current state.
///
/// `values` are the per-residual magnitudes whose squares sum to the term's energy.
/// `residuals` and `jacobian` are the Gauss-Newton linearization, one entry per row.
/// For quadratic terms the two coincide. Robust terms sqrt(lambda*rho(r)) are
/// linearized in reweighted form, r / sqrt(2 rho(r)) with the matching Jacobian,
/// which reproduces the exact energy gradient: J^T residuals = 1/2 dE/dx.
struct ResidualBlock {
    Term term = Term::opti;
    std::vector<double> values;
    std::vector<double> residuals;
    SparseRows jacobian;
    std::size_t skipped = 0;  // residuals dropped (outside the image, behind the camera)

    double energy() const;
};

/// Index map of the unknown vector: positions and rotation increments for
/// s in [1, g], then 2D flows for s in [0, g-1].
struct StateLayout {
    int g = 0;
    std::size_t num_points = 0;
    int flow_width = 0;
    int flow_height = 0;

    static StateLayout of(const SceneFlowState& state);

    std::size_t flow_pixels() const { return static_cast<std::size_t>(flow_width) * flow_height; }
    std::size_t position(int s, std::size_t i) const { return 3 * ((s - 1) * num_points + i); }
    std::size_t rotation(int s, std::size_t i) const { return 3 * (g * num_points + (s - 1) * num_points + i); }
    std::size_t flow(int s, std::size_t pixel) const { return 6 * g * num_points + 2 * (s * flow_pixels() + pixel); }
    std::size_t size() const { return 6 * g * num_points + 2 * g * flow_pixels(); }
};

/// Occlusion weight per frame s in [0, g-1] and point.
using PointOcclusion = std::vector<std::vector<double>>;

/// Samples per-pixel occlusion fields at each point's nearest projected pixel in its frame.
PointOcclusion sample_point_occlusion(const SceneFlowState& state, std::span<const analysis::OcclusionField> fields,
                                      const CameraRig& rig);

ResidualBlock e_opti(const SceneFlowState& state, std::span<const ColorImage> images, const EnergyWeights& w,
                     bool with_jacobian = true);
ResidualBlock e_point(const SceneFlowState& state, std::span<const analysis::Correspondence> corr,
                      const EnergyWeights& w, bool with_jacobian = true);
ResidualBlock e_plane(const SceneFlowState& state, std::span<const analysis::Correspondence> corr,
                      const EnergyWeights& w, bool with_jacobian = true);
/// `occlusion` may be empty, meaning O = 1 everywhere.
ResidualBlock e_proj(const SceneFlowState& state, const PointOcclusion& occlusion, const CameraRig& rig,
                     const EnergyWeights& w, bool with_jacobian = true);
ResidualBlock e_proj(const SceneFlowState& state, std::span<const analysis::OcclusionField> occlusions,
                     const CameraRig& rig, const EnergyWeights& w, bool with_jacobian = true);
ResidualBlock e_iso(const SceneFlowState& state, const NeighborGraph& graph, const EnergyWeights& w,
                    bool with_jacobian = true);
ResidualBlock e_reg(const SceneFlowState& state, const NeighborGraph& graph, const EnergyWeights& w,
                    bool with_jacobian = true);
ResidualBlock e_short(const SceneFlowState& state, const EnergyWeights& w, bool with_jacobian = true);

/// Everything besides the state that the global energy depends on.
struct EnergyInputs {
    std::span<const ColorImage> images;  // g + 1
    CameraRig rig;
    std::span<const analysis::Correspondence> correspondences;
    const PointOcclusion* occlusion = nullptr;
    EnergyWeights weights;
    TermMask mask = all_terms();
};

struct EnergyBreakdown {
    std::array<double, kTermCount> terms{};
    double total = 0.0;

    double operator[](Term t) const { return terms[static_cast<int>(t)]; }
};

/// Blocks of every enabled term, assembled in parallel. Graph comes from state.anchor.graph.
std::vector<ResidualBlock> assemble(const SceneFlowState& state, const EnergyInputs& inputs, bool with_jacobian = true);

EnergyBreakdown breakdown(std::span<const ResidualBlock> blocks);
EnergyBreakdown total_energy(const SceneFlowState& state, const EnergyInputs& inputs);

/// 3x3 skew-symmetric cross-product matrix.
Mat3 skew(const Vec3& a);

}  // namespace depthweave::energy
