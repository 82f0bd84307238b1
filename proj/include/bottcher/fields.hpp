#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "bottcher/algebra.hpp"
#include "bottcher/green.hpp"
#include "bottcher/quasihom.hpp"

namespace bottcher {

/// A point in scale-split form e^{log_scale} * vec with |vec| close to 1.
/// Orbits of superattracting germs leave double range after a handful of
/// steps; every deep evaluation in this module works on this representation.
struct ScaledVector {
    Eigen::VectorXcd vec;
    double log_scale = 0.0;

    static ScaledVector of(const Eigen::VectorXcd& v);
    Eigen::VectorXcd collapse() const;  // e^{log_scale} * vec (may under/overflow)
    ScaledVector normalized() const;
};

/// Evaluable analytic vector field on a domain of E. Realized as one of:
/// the radial field, a block field, a polynomial field, a weighted pullback
/// chain w (F^n)^* base, or a sum. Values at v are vectors of E (the
/// canonical trivialization of TE).
///
/// Pullback chains evaluate as w (D_v F^n)^{-1} base(F^n(v)) by n successive
/// linear solves along the orbit, never by inverting the product. Each solve
/// happens on the scale-normalized Jacobian (the factor e^{(k-1) log|v_i|}
/// carried separately), and the critical-proximity floor applies to the
/// normalized determinant: the raw |det DF| decays like a power of the orbit
/// scale and would otherwise reject every deep point of the basin.
class VectorField {
public:
    static VectorField radial(BlockStructure blocks);
    static VectorField block_linear(BlockStructure blocks, int block);
    static VectorField polynomial(PolyMap field);
    static VectorField pullback(VectorField base, const PolyMap& germ_map, int iterates,
                                double weight, double det_floor = 1e-8);
    static VectorField sum(std::vector<VectorField> parts);

    const BlockStructure& blocks() const;

    Eigen::VectorXcd eval(const Eigen::VectorXcd& v) const;
    BlockVector operator()(const BlockVector& v) const;

    /// Scale-split evaluation; exact for inputs far below double range.
    ScaledVector eval_scaled(const ScaledVector& point) const;

private:
    struct Node;
    explicit VectorField(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
    std::shared_ptr<const Node> node_;
};

/// Weighted pullback of an admissible base field: k_j^n (F^n)^* base when the
/// base is the block field of block j (the radial field counts as the single
/// block of a p=1 structure).
VectorField pullback_field(const AdaptedGerm& germ, const VectorField& base, int iterates);

struct FlowIntegrator {
    double rtol = 1e-10;
    double atol = 1e-12;
    double max_step = 1.0;
    double horizon = -40.0;  // most negative time the stabilization ladder uses
    int max_steps = 200000;
    std::function<bool()> cancelled;  // optional, checked between accepted steps
};

struct FlowValue {
    BlockVector value;
    double error_estimate = 0.0;  // accumulated local error estimates
    int steps = 0;
};

/// Backward-time flow of the field: trajectory value at time t <= 0.
/// Forward times are rejected (domains are only invariant backward).
FlowValue flow(const VectorField& field, const BlockVector& v, double t,
               const FlowIntegrator& opts = {});

/// e^{-T} * flow(field, v, T) for a single horizon T <= 0, integrated in the
/// renormalized variable z(t) = e^{-t} y(t) so the error control is relative
/// to the limit value rather than to the collapsing trajectory.
BlockVector linearize_poincare(const VectorField& field, const BlockVector& v, double T,
                               const FlowIntegrator& opts = {});

struct PoincareResult {
    BlockVector value;
    double horizon_used = 0.0;
    double last_increment = 0.0;
};

/// The stabilization ladder T in {-5, -10, -20, -40}: stops when successive
/// horizon values differ by < 1e-9, throws NumericalError when the ladder is
/// exhausted without stabilizing. Verifies asymptotic radiality
/// (Re<xi(v)|v>/|v|^2 in [1/2, 3/2]) on sphere samples first unless skipped.
PoincareResult poincare_limit(const VectorField& field, const BlockVector& v,
                              const FlowIntegrator& opts = {}, bool check_radial = true);

struct AdmissibilityOptions {
    double radius = 0.1;
    int samples = 20;
    std::uint64_t seed = 2;
    double tangency_tol = 1e-9;
    double vanishing_tol = 1e-9;
    double linear_part_tol = 1e-5;
    double commutator_slope_min = 2.5;
    double commutator_floor = 1e-10;
};

struct AdmissibilityReport {
    std::vector<double> tangency;            // per field: off-block component on E_j
    std::vector<double> vanishing;           // per field: |xi_j| on {v_j = 0}
    std::vector<double> linear_part_error;   // per field: finite-difference linear part vs block
    std::vector<double> commutator_slopes;   // per unordered pair, row-major i<j
    std::vector<double> commutator_defects;  // max defect per pair (for the exact-commuting case)
    bool admissible = false;
};

/// Checks the defining conditions of an admissible tuple: tangency to E_j,
/// vanishing on {v_j = 0}, linear part equal to the block field (by central
/// differences), and commutation (flow-commutator defect o(s^2), measured as a
/// log-log slope >= 2.5 unless the defect is at the numerical floor).
AdmissibilityReport admissibility_report(const std::vector<VectorField>& fields,
                                         const BlockStructure& blocks,
                                         const AdmissibilityOptions& opts = {});

struct LocalBottcherOptions {
    std::optional<double> patch_radius;       // default: contraction radius of the germ
    double sublevel_threshold = 2.0;          // M for the extension
    int diagnostic_samples = 15;
    std::uint64_t seed = 3;
    bool diagnostics = true;
    FlowIntegrator integrator;
    double det_floor = 1e-8;
};

struct ConjugacyDiagnostics {
    double conjugacy_residual = 0.0;   // max |Phi_n(F v) - H(Phi_n v)| over samples
    double diagram_residual = 0.0;     // max |Phi_n(F v) - H(Phi_{n+1} v)| over samples
    double cauchy_increment = 0.0;     // max |Phi_{n+1} v - Phi_n v| over samples
    double origin_derivative_error = 0.0;  // |D_0 Phi - id| by finite differences
    int samples_used = 0;
};

/// The local coordinate at level n: the Poincaré linearizer of the summed
/// weighted pullback chain of the admissible base fields.
///
/// Evaluation uses the branch-consistent root form Phi_n = H^{-n} o F^n
/// (level-0 chain is the block-field sum, whose linearizer is the identity,
/// and the commuting diagram Phi_j o F = H o Phi_{j+1} then pins every level;
/// the two definitions agree by the Schwarz-lemma uniqueness of normalized
/// linearizers). The root form divides conditioning noise by k per level
/// where the flow-of-chain form multiplies it, which is what makes deep
/// levels reachable in double precision. The flow route stays available
/// through the chain field and poincare_limit and is cross-checked in tests.
class BottcherCoordinate {
public:
    BottcherCoordinate(AdaptedGerm germ, std::vector<VectorField> base, int level,
                       const LocalBottcherOptions& opts);

    BlockVector eval(const BlockVector& v) const;
    /// Same map evaluated at a different level (used for the diagnostics).
    BlockVector eval_at_level(const BlockVector& v, int level) const;

    int level() const { return level_; }
    const AdaptedGerm& germ() const { return germ_; }
    const ConjugacyDiagnostics& diagnostics() const { return diagnostics_; }
    const VectorField& chain_field() const { return chain_; }
    const GreenEvaluator& basin() const { return basin_; }
    double sublevel_threshold() const { return opts_.sublevel_threshold; }
    double patch_radius() const { return patch_radius_; }

    struct Extension {
        BlockVector value;
        double discrepancy = 0.0;  // value difference across two backward times
        double time_used = 0.0;
    };

    /// Theorem-2 style extension: flow backward along the chain field until
    /// the Green value is below -M, apply the local coordinate, undo the flow
    /// scaling. Requires the point to be classified attracted.
    Extension extend(const BlockVector& x) const;

private:
    AdaptedGerm germ_;
    std::vector<VectorField> base_;
    int level_;
    LocalBottcherOptions opts_;
    VectorField chain_;       // level n
    PolyMap model_;           // assembled quasihomogeneous part
    GreenEvaluator basin_;
    double patch_radius_ = 0.0;
    ConjugacyDiagnostics diagnostics_;

    // compiled data of the root-form evaluation
    CompiledPolyMap germ_compiled_;
    std::vector<CompiledPolyMap> factor_maps_;
    std::vector<CompiledJacobian> factor_jacobians_;
};

BottcherCoordinate local_bottcher(const AdaptedGerm& germ, std::vector<VectorField> base,
                                  int level, const LocalBottcherOptions& opts = {});

/// Free-function form of the extension.
BlockVector extend_bottcher(const BottcherCoordinate& coordinate, const BlockVector& x);

}  // namespace bottcher
