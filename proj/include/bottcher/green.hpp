#pragma once

#include <optional>
#include <vector>

#include "bottcher/algebra.hpp"
#include "bottcher/quasihom.hpp"

namespace bottcher {

/// A real value or minus infinity. The sentinel is an explicit state, never a
/// floating -inf: points of E_j^T legitimately have G_j = -infinity and the
/// downstream max must keep working.
struct ExtendedReal {
    bool finite = true;
    double value = 0.0;

    static ExtendedReal minus_infinity() { return {false, 0.0}; }
    static ExtendedReal of(double v) { return {true, v}; }

    bool less_than(double threshold) const { return !finite || value < threshold; }

    friend bool operator==(const ExtendedReal&, const ExtendedReal&) = default;
};

ExtendedReal extended_max(const std::vector<ExtendedReal>& values);

/// Iteration engine for the dynamical Green functions
///   G_j(v) = lim k_j^{-n} log |pi_j o F^n(v)|.
/// Orbits are iterated exactly in doubles until they are far below every
/// tolerance, then handed per block to the quasihomogeneous part in a
/// renormalized (unit direction + log magnitude) form, which continues the
/// trace without underflow. The handoff error is O(|orbit point|), orders of
/// magnitude below tol at the switch radius.
struct GreenEvaluator {
    PolyMap map;                    // F, blocks carry degrees
    QuasihomogeneousMap model;      // quasihomogeneous part used past the switch radius
    int n_max = 100;
    double escape_radius = 100.0;
    double sublevel_threshold = 2.0;  // M
    double tol = 1e-10;
    double capture_radius = 0.25;
    double switch_radius = 1e-12;
    bool compensated_accumulation = false;

    // compiled internals, built by make_green_evaluator
    CompiledPolyMap compiled_map;
    std::vector<CompiledPolyMap> compiled_factors;
};

struct GreenOptions {
    std::optional<int> n_max;
    std::optional<double> escape_radius;
    std::optional<double> sublevel_threshold;
    std::optional<double> tol;
    std::optional<double> capture_radius;
    bool compensated_accumulation = false;
};

GreenEvaluator make_green_evaluator(const AdaptedGerm& germ, const GreenOptions& opts = {});
GreenEvaluator make_green_evaluator(const QuasihomogeneousMap& model, const GreenOptions& opts = {});

struct GreenValue {
    std::vector<ExtendedReal> per_block;             // G_j at first convergence
    ExtendedReal max_value;                          // G_F = max_j G_j
    int n_used = 0;
    std::vector<std::vector<ExtendedReal>> trace;    // trace[n][j] = G_j^n
    std::vector<double> functional_residual;         // |G_j(F v) - k_j G_j(v)|, finite blocks
};

/// Green value of a point of the working ball. Throws OrbitEscapeError when
/// the orbit leaves the escape radius (the point is not in the local basin).
GreenValue green_adapted(const GreenEvaluator& ev, const BlockVector& v);

/// Green value of the quasihomogeneous model itself, valid on all of E.
/// Attaches the empirical bound |G_H(v) - log|v|| as `homogeneity_offset`.
struct HomogeneousGreenValue {
    GreenValue green;
    double homogeneity_offset = 0.0;
};
HomogeneousGreenValue green_homogeneous(const QuasihomogeneousMap& H, const BlockVector& v);

/// Exact comparison of the level-n approximants against -M, per block.
std::vector<bool> sublevel_membership(const GreenEvaluator& ev, const BlockVector& v, int n);

enum class BasinClass { Attracted, Escaped, Undecided };
BasinClass classify_basin(const GreenEvaluator& ev, const BlockVector& v);

/// Largest radius (from a halving search) at which the coefficient bound
/// guarantees |F(v)| <= |v|/2 on B(0, r): a concrete witness for the local
/// basin used to derive capture radii.
double contraction_radius(const PolyMap& F);

}  // namespace bottcher
