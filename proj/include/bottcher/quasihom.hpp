#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bottcher/algebra.hpp"

namespace bottcher {

/// Direct sum H_1 + ... + H_p of homogeneous factors H_j : E_j -> E_j of
/// degree k_j. Each factor is stored as a map of the block's own variables;
/// zero-dimensional blocks carry an empty factor.
struct QuasihomogeneousMap {
    BlockStructure blocks;         // degrees set
    std::vector<PolyMap> factors;  // H_j in the block's variables

    /// The assembled map E -> E.
    PolyMap assembled() const;
};

QuasihomogeneousMap make_quasihomogeneous(BlockStructure blocks, std::vector<PolyMap> factors);

struct OffendingMonomial {
    int block;         // j of the violated condition
    int coord;         // output coordinate (absolute index in E)
    Exponent exponent;
    Complex coefficient;
    int block_degree;  // degree over the E_j variables
    int total_degree;
};

enum class NondegeneracyKind { CertifiedYes, CertifiedNo, SampledYes };

struct NondegeneracyVerdict {
    NondegeneracyKind kind = NondegeneracyKind::CertifiedYes;
    std::optional<Eigen::VectorXcd> witness;  // a nonzero zero of H_j, for CertifiedNo
    double confidence = 0.0;                  // min sampled |H_j| on the sphere, for SampledYes
    std::string method;
    bool nondegenerate() const { return kind != NondegeneracyKind::CertifiedNo; }
};

/// A germ together with its quasihomogeneous part and the exact monomial
/// certificate of the remainder condition: every monomial of F_j - H_j o pi_j
/// must have E_j-degree >= k_j and total degree >= k_j + 1. `certificate`
/// lists the monomials violating this; `adapted` also requires each factor to
/// be nondegenerate.
struct AdaptedGerm {
    PolyMap map;  // F
    QuasihomogeneousMap quasihomogeneous_part;
    std::vector<OffendingMonomial> certificate;
    std::vector<NondegeneracyVerdict> factor_verdicts;
    bool adapted = false;

    const BlockStructure& blocks() const { return quasihomogeneous_part.blocks; }
};

/// Splits F into its quasihomogeneous part and remainder certificate. Degrees
/// come from `blocks` when present, otherwise each k_j is inferred as the
/// minimal E_j-degree appearing in F_j. Throws when F(0) != 0, when an
/// inferred degree is < 2, or when some F_j vanishes identically on E_j
/// (the degree would be ambiguous).
AdaptedGerm extract_quasihomogeneous_part(const PolyMap& F, BlockStructure blocks);

/// Max over seeded random v with |v| <= 1 of |DH_v(v_j) - k_j pi_j(H(v))| for
/// each block. Zero (to roundoff) exactly for quasihomogeneous maps.
std::vector<double> euler_residual(const PolyMap& H, const BlockStructure& blocks, int samples,
                                   std::uint64_t seed);

/// Decides H_j^{-1}{0} = {0} for a homogeneous H_j. Dimensions <= 2 are
/// certified through the resultant of the coordinate forms; higher dimensions
/// are sampled on a low-discrepancy sphere (1e5 points by default) and report
/// a confidence, never a proof.
NondegeneracyVerdict check_nondegenerate(const PolyMap& Hj, int sphere_samples = 100000);

struct TotalInvarianceReport {
    bool exact_containment = false;               // every monomial of F_j has positive E_j-degree
    std::vector<OffendingMonomial> containment_witnesses;
    double max_preimage_residual = 0.0;           // max |pi_j| over Newton preimages of E_j^T points
    int preimage_samples = 0;
    int newton_failures = 0;
};

/// Checks local total invariance of E_j^T = {v_j = 0}: (a) exact monomial
/// containment F(E_j^T) in E_j^T, (b) Newton preimage sampling: solutions of
/// F(v) = w for w in E_j^T, started near E_j^T, must land on E_j^T.
TotalInvarianceReport total_invariance_residual(const AdaptedGerm& germ, int j, double radius,
                                                int samples, std::uint64_t seed = 1);

}  // namespace bottcher
