#pragma once

#include <cstdint>
#include <vector>

#include "bottcher/algebra.hpp"
#include "bottcher/quasihom.hpp"

namespace bottcher::koch {

/// Ground data: an index set {0..m-1} with E realized as the zero-average
/// subspace of C^m (ambient coordinates are kept; the constraint is an
/// invariant, not a chart).
struct KochSpec {
    int m = 2;
};

KochSpec make_spec(int m);

bool is_zero_average(const Eigen::VectorXcd& x, double tol = 1e-12);

/// Orthonormal basis of the zero-sum subspace of C^n (n x (n-1), Helmert).
Eigen::MatrixXcd zero_average_basis(int n);

/// The family map H(x) = P_x o x as an ambient polynomial map of C^m
/// (degree m+1, maps into the zero-sum hyperplane). Cached per m.
const PolyMap& koch_ambient_map(int m);

/// The same map conjugated onto the zero-average subspace by the Helmert
/// basis: a nondegenerate homogeneous self-map of C^{m-1}. The ambient form
/// has an identically singular Jacobian (it maps into a hyperplane), so this
/// is the representation germ machinery works with.
PolyMap koch_reduced_map(int m);

/// Monic centered polynomial of degree m+1 whose critical points are the x_i
/// and whose critical values have barycenter 0.
struct CriticalPolynomial {
    std::vector<Complex> coeffs;  // ascending, degree m+1
    Eigen::VectorXcd source;      // the x it was built from

    int degree() const { return static_cast<int>(coeffs.size()) - 1; }
    Complex eval(Complex t) const;
    Complex derivative(Complex t) const;
    std::vector<Complex> derivative_coeffs() const;
};

CriticalPolynomial build_px(const Eigen::VectorXcd& x);

/// H(x) evaluated numerically, recentered to exact zero average.
Eigen::VectorXcd koch_h(const Eigen::VectorXcd& x);

/// The fixed-point polynomial ((m+1)/m) z + z^{m+1} of the off-diagonal
/// fixed points, ascending coefficients.
std::vector<Complex> fixed_point_polynomial(int m);

struct FixedPointCensus {
    std::vector<Eigen::VectorXcd> points;  // m! labelings, Newton-polished
    double max_residual = 0.0;             // max |H(x) - x|
    double min_pairwise_distance = 0.0;
};

/// All m! fixed points off the diagonal: the critical points of the fixed
/// polynomial are the m-th roots of -1/m, and every injective labeling of
/// them is a fixed point.
FixedPointCensus koch_fixed_points(int m);

struct SpectrumResult {
    Eigen::VectorXcd eigenvalues;             // restriction to E, sorted by descending real part
    std::vector<double> alignment_residuals;  // |D_xH(x^k) - ((m+1)/k) x^k| per k in [1, m-1]
};

/// Spectrum of D_xH on E at a fixed point off the diagonal.
SpectrumResult koch_spectrum(const Eigen::VectorXcd& x);

/// Set partition of {0..m-1} in canonical form.
struct Partition {
    std::vector<std::vector<int>> blocks;

    static Partition of(std::vector<std::vector<int>> blocks);
    static Partition singletons(int m);
    int block_count() const { return static_cast<int>(blocks.size()); }
    int ground_size() const;
    int block_of(int i) const;

    friend bool operator==(const Partition&, const Partition&) = default;
};

/// K is a contraction of J when every block of K is a union of blocks of J.
bool is_contraction(const Partition& K, const Partition& J);

/// All partitions of {0..m-1} with at least `min_blocks` blocks.
std::vector<Partition> all_partitions(int m, int min_blocks = 2);

/// Orthonormal basis of the stratum L_J (block-constant, zero-sum), m x (|J|-1).
Eigen::MatrixXcd stratum_basis(int m, const Partition& J);

/// A block-constant zero-average point with prescribed per-block values.
Eigen::VectorXcd stratum_point(int m, const Partition& J, const Eigen::VectorXcd& block_values);

/// Block values of a vector that is constant on each block of J.
Eigen::VectorXcd block_values(const Eigen::VectorXcd& x, const Partition& J, double tol = 1e-9);

struct StratumExpansion {
    Complex leading_constant;   // C_J, nonzero off the sub-strata
    double slope = 0.0;         // fitted order of the remainder
    std::vector<double> ladder;
    std::vector<double> residuals;
};

/// Leading behaviour of pi_J o H(x + t v): the analytic constant
/// C_J = ((m+1)/(m_J+1)) prod_{i not in J}(x_J - x_i) and the fitted order of
/// the remainder against the block-J family map H_J. Expects x constant on
/// each partition block with distinct block values.
StratumExpansion stratum_expansion(const Eigen::VectorXcd& x, const Partition& part,
                                   int block_index, const Eigen::VectorXcd& v,
                                   const std::vector<double>& ladder = {});

struct CriticalOrderResult {
    double slope = 0.0;    // fitted vanishing order of det Jac(H|L_J) along L_K
    int expected = 0;      // |J_1| + |J_2|
    int attempts = 1;
};

/// Vanishing order of the Jacobian of H restricted to L_J along the stratum
/// obtained by merging blocks j1 and j2.
CriticalOrderResult critical_order_check(int m, const Partition& J, int j1, int j2,
                                         std::uint64_t seed = 1);

/// Exact total-degree audit: sum of |J_1|+|J_2| over merge pairs.
int merge_degree_total(const Partition& J);

struct SuperSaddleReport {
    int rank = 0;
    int stratum_dimension = 0;          // dim L_J
    double image_alignment = 0.0;       // largest principal angle Im(D) vs T_x L_J
    double kernel_separation = 0.0;     // smallest principal angle Ker(D) vs T_x L_J
    Eigen::VectorXcd restricted_eigenvalues;
    double min_restricted_modulus = 0.0;
    bool splits = false;                // rank + nullity = m-1 and kernel clear of the stratum
};

SuperSaddleReport super_saddle_report(const Eigen::VectorXcd& x, const Partition& part);

/// Element sum lambda_J dz^2/(z - x_J) of the pole/residue space attached to a
/// block-constant point; residues sum to zero exactly (last one derived).
struct QuadraticDifferential {
    Eigen::VectorXcd poles;
    Eigen::VectorXcd residues;
    double disk_radius = 0.0;

    Complex density(Complex z) const;  // sum lambda_J / (z - x_J)
};

QuadraticDifferential make_quadratic_differential(Eigen::VectorXcd poles,
                                                  const Eigen::VectorXcd& leading_residues,
                                                  double disk_radius);

/// Doubles R from 4 until every root of P(z) = R e^{i theta} over 64 angles
/// has modulus < R.
double certify_disk_radius(const CriticalPolynomial& P);

struct PushforwardResult {
    QuadraticDifferential value;
    double residue_sum_error = 0.0;
    double source_l1 = 0.0;  // |q| over D_R, quasi-random quadrature
    double result_l1 = 0.0;
    int quadrature_order = 64;
};

/// Push-forward sum_g g^* q under the inverse branches of P, computed by
/// residue contours: mu_K = (1/2 pi i) closed-integral of
/// sum_{z in P^{-1}(w)} q(z)/P'(z)^2 around the image pole. Quadrature order
/// doubles until two consecutive estimates agree to 1e-8.
PushforwardResult qd_pushforward(const CriticalPolynomial& P, const QuadraticDifferential& q,
                                 int l1_samples = 100000);

/// <q, v> = sum_J lambda_J v_J for a block-constant tangent vector.
Complex qd_pairing(const QuadraticDifferential& q, const Eigen::VectorXcd& tangent_block_values);

struct PushforwardDuality {
    Eigen::MatrixXcd pushforward_matrix;  // P_* in the pairing-dual residue basis
    Eigen::MatrixXcd tangent_matrix;      // D_xH restricted to T_x L_J
    double max_entry_error = 0.0;         // |pushforward - transpose(inverse(tangent))|, max entry
    double spectral_radius = 0.0;
};

/// The matrix identity of the duality: the push-forward operator in a basis
/// pairing-dual to a tangent basis equals transpose((D_xH|_{T_x L_J})^{-1}).
PushforwardDuality pushforward_duality(const Eigen::VectorXcd& fixed_point, const Partition& part);

/// Chart data of the superattracting fixed point of the projective map
/// associated with a two-block partition: the affine section through the
/// representative with e^{J_1} = 1, the jet of the chart-coordinate germ, and
/// the quasihomogeneous normalization constants.
struct ChartGerm {
    int m = 0;
    Partition part;
    AdaptedGerm germ;                 // polynomial jet, adapted
    Eigen::VectorXcd base_point;      // section representative in E
    Eigen::MatrixXcd basis;           // m x d chart basis (blockwise Helmert)
    Complex mu0;                      // 1 / e^{J_1}(H(base_point))
    std::vector<Complex> stratum_constants;  // C_J per block
    std::vector<Complex> model_scales;       // fitted factor scales, = mu0 C_J
    double model_scale_fit_error = 0.0;

    /// The exact chart-coordinate map (no truncation), for rendering and
    /// cross-checks of the jet.
    Eigen::VectorXcd exact_step(const Eigen::VectorXcd& chart_point) const;
};

ChartGerm chart_germ(int m, const Partition& two_blocks, int jet_order = 0);

/// One step of the projective endomorphism on representatives: apply the
/// family map, then scale so the coordinate of largest modulus is exactly 1.
Eigen::VectorXcd projective_step(const Eigen::VectorXcd& x);

}  // namespace bottcher::koch
