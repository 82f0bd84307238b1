#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "bottcher/errors.hpp"

namespace bottcher {

using Complex = std::complex<double>;

/// Exponent multi-index of a monomial: one entry per input variable.
using Exponent = std::vector<int>;

/// Block decomposition E = E_1 + ... + E_p, stored as the dimension of each
/// factor. Degrees, when known, hold the multidegree (k_1,...,k_p) of the
/// quasihomogeneous model attached to the splitting. A zero-dimensional block
/// is allowed (it shows up for one-element index blocks in the endomorphism
/// family of koch.hpp); all degrees must be >= 2.
struct BlockStructure {
    std::vector<int> dims;
    std::vector<int> degrees;  // empty when not prescribed

    BlockStructure() = default;
    explicit BlockStructure(std::vector<int> dims_, std::vector<int> degrees_ = {});

    int block_count() const { return static_cast<int>(dims.size()); }
    int dimension() const;
    int offset(int block) const;  // first coordinate index of the block
    bool has_degrees() const { return !degrees.empty(); }
    int degree(int block) const;

    friend bool operator==(const BlockStructure&, const BlockStructure&) = default;
};

BlockStructure single_block(int m, int degree = 0);

/// A point of E together with its block decomposition. Immutable in practice:
/// operations return fresh vectors.
class BlockVector {
public:
    BlockVector(BlockStructure structure, Eigen::VectorXcd coords);
    static BlockVector zero(const BlockStructure& s);

    const BlockStructure& structure() const { return structure_; }
    const Eigen::VectorXcd& coords() const { return coords_; }
    int dimension() const { return static_cast<int>(coords_.size()); }

    double norm() const { return coords_.norm(); }
    Eigen::VectorXcd block(int j) const;
    double block_norm(int j) const { return block(j).norm(); }

    /// The projection to block j, embedded back in E (other blocks zeroed).
    BlockVector project(int j) const;

    BlockVector with_coords(Eigen::VectorXcd c) const { return BlockVector(structure_, std::move(c)); }

    friend BlockVector operator+(const BlockVector& a, const BlockVector& b);
    friend BlockVector operator-(const BlockVector& a, const BlockVector& b);
    friend BlockVector operator*(Complex s, const BlockVector& v);

private:
    BlockStructure structure_;
    Eigen::VectorXcd coords_;
};

class PolyMap;

/// Derivative of a PolyMap at a base point.
struct JacobianMatrix {
    Eigen::MatrixXcd entries;  // (r,c) = dF_r / dv_c at the base point
    BlockVector base;
};

/// Sparse polynomial map between block spaces: per output coordinate, a map
/// from exponent multi-index to complex coefficient. Zero coefficients are
/// never stored. An optional truncation degree marks jets: composition drops
/// terms beyond it and records that it did.
class PolyMap {
public:
    using Terms = std::map<Exponent, Complex>;

    PolyMap() = default;  // empty zero-dimensional map; placeholder only
    PolyMap(BlockStructure in, BlockStructure out, std::vector<Terms> coords,
            std::optional<int> truncation_degree = std::nullopt);

    static PolyMap identity(const BlockStructure& s);
    static PolyMap zero(BlockStructure in, BlockStructure out);

    int input_dimension() const { return in_.dimension(); }
    int output_dimension() const { return out_.dimension(); }
    const BlockStructure& input_blocks() const { return in_; }
    const BlockStructure& output_blocks() const { return out_; }
    const std::vector<Terms>& coords() const { return coords_; }

    std::optional<int> truncation_degree() const { return truncation_degree_; }
    bool truncation_dropped_terms() const { return truncation_dropped_; }
    void mark_truncation_dropped() { truncation_dropped_ = true; }

    /// Largest total degree of any stored monomial (0 for the zero map).
    int total_degree() const;
    /// Smallest total degree of any stored monomial (0 for the zero map).
    int min_degree() const;
    std::size_t term_count() const;

    void set_coefficient(int coord, Exponent e, Complex c);
    Complex coefficient(int coord, const Exponent& e) const;

    Eigen::VectorXcd eval(const Eigen::VectorXcd& v) const;
    BlockVector eval(const BlockVector& v) const;
    BlockVector operator()(const BlockVector& v) const { return eval(v); }

    PolyMap with_blocks(BlockStructure in, BlockStructure out) const;
    PolyMap with_truncation(std::optional<int> trunc) const;

private:
    BlockStructure in_, out_;
    std::vector<Terms> coords_;
    std::optional<int> truncation_degree_;
    bool truncated_ = false;
    bool truncation_dropped_ = false;
};

/// Exact symbolic differentiation of the sparse representation, evaluated at v.
JacobianMatrix jacobian(const PolyMap& P, const BlockVector& v);

/// d P / d v_var as a map with the same output space.
PolyMap partial_derivative(const PolyMap& P, int var);

/// Coefficients of P o Q, exact up to total degree trunc (in Q's variables).
/// The result records whether the truncation discarded anything.
PolyMap compose(const PolyMap& P, const PolyMap& Q, int trunc);

/// The monomials of P of total degree exactly d.
PolyMap homogeneous_part(const PolyMap& P, int d);

PolyMap add(const PolyMap& a, const PolyMap& b);
PolyMap subtract(const PolyMap& a, const PolyMap& b);
PolyMap scale(Complex s, const PolyMap& a);

/// Terms-level helpers for scalar (single-coordinate) polynomial work.
PolyMap::Terms multiply_terms(const PolyMap::Terms& a, const PolyMap::Terms& b,
                              std::optional<int> trunc, bool* dropped = nullptr);

/// All complex roots (with multiplicity) of a univariate polynomial given by
/// ascending coefficients c[0] + c[1] z + ... Simultaneous Aberth-Ehrlich
/// iteration started on a Fujiwara-bound circle, then Newton polishing.
/// Throws RootFindingError (with partial roots) if the residual target
/// |p(r)| <= 1e-10 (1+|r|)^deg max|c| is not met within budget.
std::vector<Complex> poly_roots(const std::vector<Complex>& coeffs);

Complex eval_poly(const std::vector<Complex>& coeffs, Complex z);

/// Flattened term table for evaluation in hot loops (orbits, flows, pixels).
/// Evaluation uses per-variable power tables; with 1e4+ terms per coordinate it
/// switches to compensated accumulation.
class CompiledPolyMap {
public:
    CompiledPolyMap() = default;
    explicit CompiledPolyMap(const PolyMap& P);

    int input_dimension() const { return nvars_; }
    int output_dimension() const { return static_cast<int>(coord_begin_.size()) - 1; }

    Eigen::VectorXcd eval(const Eigen::VectorXcd& v) const;

    /// Splits the map into homogeneous layers and evaluates
    ///   sum_d e^{(d - base_degree) * log_scale} F_d(u),
    /// the scaled evaluation of F(e^{log_scale} u) with e^{base_degree*log_scale}
    /// factored out. Layers whose scale factor underflows are skipped.
    Eigen::VectorXcd eval_scaled(const Eigen::VectorXcd& u, double log_scale, int base_degree) const;

    /// Fully anisotropic form: variable i carries its own log scale s_i, and
    /// e^{base_r} is factored out of output coordinate r. Each term contributes
    ///   c u^a exp(sum_i a_i s_i - base_r).
    /// Terms touching a variable with s_i <= -1e250 (exact zero marker) vanish.
    Eigen::VectorXcd eval_anisotropic(const Eigen::VectorXcd& u, const std::vector<double>& var_log_scales,
                                      const std::vector<double>& out_bases) const;

    /// Per output coordinate, the largest exponent-scale sum max_a sum_i a_i s_i
    /// over stored terms (-1e300 when every term touches a zeroed variable):
    /// the natural normalization base for eval_anisotropic.
    std::vector<double> max_exponent_dot(const std::vector<double>& var_log_scales) const;

    int min_degree() const { return min_degree_; }
    int max_degree() const { return max_degree_; }

private:
    int nvars_ = 0;
    int min_degree_ = 0;
    int max_degree_ = 0;
    std::vector<int> coord_begin_;      // term range per output coordinate
    std::vector<int> exps_;             // nvars entries per term
    std::vector<int> term_degree_;      // total degree per term
    std::vector<Complex> coeffs_;
    std::vector<int> max_pow_;          // per variable
};

/// Compiled Jacobian: all m_out x m_in partial derivatives, evaluated together.
class CompiledJacobian {
public:
    CompiledJacobian() = default;
    explicit CompiledJacobian(const PolyMap& P);

    Eigen::MatrixXcd eval(const Eigen::VectorXcd& v) const;
    /// Scaled evaluation of DF at e^{log_scale} u with e^{(base_degree-1)*log_scale}
    /// factored out (entries of DF are homogeneous layers of degree d-1).
    Eigen::MatrixXcd eval_scaled(const Eigen::VectorXcd& u, double log_scale, int base_degree) const;

    /// Anisotropically equilibrated Jacobian: entry (r, c) is
    ///   e^{-row_base_r + s_c} dF_r/dv_c at the point with per-variable scales,
    /// i.e. the matrix M with DF = diag(e^{row_base}) M diag(e^{-s}). Each term
    /// keeps the exponent sum of its undifferentiated monomial, so all factors
    /// stay bounded when row_base_r dominates.
    Eigen::MatrixXcd eval_anisotropic(const Eigen::VectorXcd& u, const std::vector<double>& var_log_scales,
                                      const std::vector<double>& row_bases) const;

private:
    int rows_ = 0, cols_ = 0;
    CompiledPolyMap flat_;      // stacked row-major entries as one map
    std::vector<int> flat_var_; // differentiated variable per flat term
};

}  // namespace bottcher
