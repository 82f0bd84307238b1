#include "bottcher/quasihom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "bottcher/numeric.hpp"

namespace bottcher {

namespace {

int block_degree_of(const Exponent& e, const BlockStructure& s, int block) {
    const int off = s.offset(block), d = s.dims[block];
    int deg = 0;
    for (int i = 0; i < d; ++i) deg += e[off + i];
    return deg;
}

int total_degree_of(const Exponent& e) {
    int deg = 0;
    for (int k : e) deg += k;
    return deg;
}

bool pure_block_monomial(const Exponent& e, const BlockStructure& s, int block) {
    return block_degree_of(e, s, block) == total_degree_of(e);
}

}  // namespace

PolyMap QuasihomogeneousMap::assembled() const {
    const int m = blocks.dimension();
    std::vector<PolyMap::Terms> coords(m);
    for (int j = 0; j < blocks.block_count(); ++j) {
        const int off = blocks.offset(j), d = blocks.dims[j];
        if (d == 0) continue;
        for (int r = 0; r < d; ++r)
            for (const auto& [e, c] : factors[j].coords()[r]) {
                Exponent full(m, 0);
                for (int i = 0; i < d; ++i) full[off + i] = e[i];
                coords[off + r][full] = c;
            }
    }
    return PolyMap(blocks, blocks, std::move(coords));
}

QuasihomogeneousMap make_quasihomogeneous(BlockStructure blocks, std::vector<PolyMap> factors) {
    if (!blocks.has_degrees()) throw StructuralError("quasihomogeneous map needs degrees");
    if (static_cast<int>(factors.size()) != blocks.block_count())
        throw StructuralError("one factor per block required");
    for (int j = 0; j < blocks.block_count(); ++j) {
        if (factors[j].input_dimension() != blocks.dims[j] ||
            factors[j].output_dimension() != blocks.dims[j])
            throw DimensionMismatchError("factor dimensions do not match block");
        for (const auto& terms : factors[j].coords())
            for (const auto& [e, c] : terms)
                if (total_degree_of(e) != blocks.degree(j))
                    throw StructuralError("factor is not homogeneous of the stated degree");
    }
    return QuasihomogeneousMap{std::move(blocks), std::move(factors)};
}

AdaptedGerm extract_quasihomogeneous_part(const PolyMap& F, BlockStructure blocks) {
    if (F.input_dimension() != blocks.dimension() || F.output_dimension() != blocks.dimension())
        throw DimensionMismatchError("germ dimensions do not match block structure");
    const int p = blocks.block_count();

    // F(0) = 0
    for (int r = 0; r < F.output_dimension(); ++r) {
        Exponent zero(F.input_dimension(), 0);
        if (F.coefficient(r, zero) != Complex(0.0))
            throw StructuralError("germ does not fix the origin");
    }

    // resolve degrees: use supplied ones, else infer k_j as the minimal degree
    // of the pure E_j monomials of F_j (the candidate homogeneous part)
    std::vector<int> degrees = blocks.degrees;
    if (degrees.empty()) {
        degrees.assign(p, -1);
        for (int j = 0; j < p; ++j) {
            if (blocks.dims[j] == 0) {
                degrees[j] = 2;  // degenerate block, conventional
                continue;
            }
            const int off = blocks.offset(j), d = blocks.dims[j];
            for (int r = off; r < off + d; ++r)
                for (const auto& [e, c] : F.coords()[r]) {
                    if (!pure_block_monomial(e, blocks, j)) continue;
                    int bd = block_degree_of(e, blocks, j);
                    if (degrees[j] < 0 || bd < degrees[j]) degrees[j] = bd;
                }
            if (degrees[j] < 0)
                throw StructuralError("F_j vanishes identically on E_j; block degree is ambiguous");
            if (degrees[j] < 2)
                throw StructuralError("inferred block degree below 2: not superattracting");
        }
    }
    BlockStructure with_degrees(blocks.dims, degrees);

    // split: H_j = pure E_j monomials of degree exactly k_j; everything else
    // must satisfy the remainder criterion
    std::vector<PolyMap> factors;
    std::vector<OffendingMonomial> certificate;
    for (int j = 0; j < p; ++j) {
        const int off = with_degrees.offset(j), d = with_degrees.dims[j];
        const int kj = degrees[j];
        std::vector<PolyMap::Terms> factor_coords(d);
        for (int r = 0; r < d; ++r) {
            for (const auto& [e, c] : F.coords()[off + r]) {
                const int bd = block_degree_of(e, with_degrees, j);
                const int td = total_degree_of(e);
                if (bd == kj && td == kj) {
                    Exponent local(d);
                    for (int i = 0; i < d; ++i) local[i] = e[off + i];
                    factor_coords[r][local] = c;
                } else if (bd < kj || td < kj + 1) {
                    certificate.push_back({j, off + r, e, c, bd, td});
                }
            }
        }
        BlockStructure factor_block = d > 0 ? single_block(d, kj) : BlockStructure({0}, {kj});
        factors.emplace_back(factor_block, factor_block, std::move(factor_coords));
    }

    std::vector<NondegeneracyVerdict> verdicts;
    bool all_nondegenerate = true;
    for (int j = 0; j < p; ++j) {
        if (with_degrees.dims[j] == 0) {
            NondegeneracyVerdict v;
            v.kind = NondegeneracyKind::CertifiedYes;
            v.method = "dimension-0 block";
            verdicts.push_back(v);
            continue;
        }
        auto v = check_nondegenerate(factors[j]);
        all_nondegenerate = all_nondegenerate && v.nondegenerate();
        verdicts.push_back(std::move(v));
    }

    AdaptedGerm germ{F.with_blocks(with_degrees, with_degrees),
                     QuasihomogeneousMap{with_degrees, std::move(factors)},
                     std::move(certificate), std::move(verdicts), false};
    germ.adapted = germ.certificate.empty() && all_nondegenerate;
    return germ;
}

std::vector<double> euler_residual(const PolyMap& H, const BlockStructure& blocks, int samples,
                                   std::uint64_t seed) {
    if (!blocks.has_degrees()) throw StructuralError("euler_residual needs block degrees");
    const int m = blocks.dimension();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> residual(blocks.block_count(), 0.0);

    std::vector<PolyMap> partials;
    for (int c = 0; c < m; ++c) partials.push_back(partial_derivative(H, c));

    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXcd v(m);
        for (int i = 0; i < m; ++i) v[i] = Complex(gauss(rng), gauss(rng));
        double norm = v.norm();
        if (norm > 1.0) v /= norm;  // keep |v| <= 1

        Eigen::MatrixXcd J(m, m);
        for (int c = 0; c < m; ++c) J.col(c) = partials[c].eval(v);
        Eigen::VectorXcd Hv = H.eval(v);

        for (int j = 0; j < blocks.block_count(); ++j) {
            const int off = blocks.offset(j), d = blocks.dims[j];
            if (d == 0) continue;
            Eigen::VectorXcd vj = Eigen::VectorXcd::Zero(m);
            vj.segment(off, d) = v.segment(off, d);
            Eigen::VectorXcd lhs = J * vj;
            Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(m);
            rhs.segment(off, d) = double(blocks.degree(j)) * Hv.segment(off, d);
            residual[j] = std::max(residual[j], (lhs - rhs).norm());
        }
    }
    return residual;
}

namespace {

// Sylvester resultant of two binary forms of degree k given by their
// dehomogenizations a(t) = A(t,1), b(t) = B(t,1), both padded to length k+1.
Complex binary_resultant(const std::vector<Complex>& a, const std::vector<Complex>& b, int k) {
    const int n = 2 * k;
    Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(n, n);
    for (int row = 0; row < k; ++row)
        for (int i = 0; i <= k; ++i) S(row, row + i) = a[k - i];
    for (int row = 0; row < k; ++row)
        for (int i = 0; i <= k; ++i) S(k + row, row + i) = b[k - i];
    return Eigen::PartialPivLU<Eigen::MatrixXcd>(S).determinant();
}

}  // namespace

NondegeneracyVerdict check_nondegenerate(const PolyMap& Hj, int sphere_samples) {
    const int dim = Hj.input_dimension();
    NondegeneracyVerdict verdict;

    if (dim == 0) {
        verdict.kind = NondegeneracyKind::CertifiedYes;
        verdict.method = "dimension-0 block";
        return verdict;
    }

    // homogeneity sanity
    const int k = Hj.total_degree();
    for (const auto& terms : Hj.coords())
        for (const auto& [e, c] : terms)
            if (total_degree_of(e) != k)
                throw StructuralError("check_nondegenerate expects a homogeneous map");

    if (dim == 1) {
        // H(z) = c z^k
        Complex c = k > 0 ? Hj.coefficient(0, {k}) : Complex(0.0);
        if (c == Complex(0.0)) {
            verdict.kind = NondegeneracyKind::CertifiedNo;
            Eigen::VectorXcd w(1);
            w[0] = 1.0;
            verdict.witness = w;
            verdict.method = "zero 1-d factor";
        } else {
            verdict.kind = NondegeneracyKind::CertifiedYes;
            verdict.method = "nonzero leading coefficient";
        }
        return verdict;
    }

    if (dim == 2) {
        // resultant of the two coordinate forms, padded to common degree k
        double scale = 0.0;
        std::vector<std::vector<Complex>> dehom(2, std::vector<Complex>(k + 1, 0.0));
        for (int r = 0; r < 2; ++r)
            for (const auto& [e, c] : Hj.coords()[r]) {
                dehom[r][e[0]] = c;  // coefficient of t^{e0} with t = v0, homogenized by v1
                scale = std::max(scale, std::abs(c));
            }
        if (scale == 0.0) {
            verdict.kind = NondegeneracyKind::CertifiedNo;
            Eigen::VectorXcd w(2);
            w << 1.0, 0.0;
            verdict.witness = w;
            verdict.method = "zero factor";
            return verdict;
        }
        for (auto& poly : dehom)
            for (auto& c : poly) c /= scale;
        Complex res = binary_resultant(dehom[0], dehom[1], k);
        verdict.method = "binary resultant";
        if (std::abs(res) > 1e-10) {
            verdict.kind = NondegeneracyKind::CertifiedYes;
            verdict.confidence = std::abs(res);
            return verdict;
        }
        // find a common projective zero to report
        verdict.kind = NondegeneracyKind::CertifiedNo;
        // try the point at infinity [1:0] first
        if (std::abs(dehom[0][k]) < 1e-9 && std::abs(dehom[1][k]) < 1e-9) {
            Eigen::VectorXcd w(2);
            w << 1.0, 0.0;
            verdict.witness = w;
            return verdict;
        }
        // otherwise a finite root of the first form with minimal |second form|
        std::vector<Complex> a(dehom[0]);
        while (!a.empty() && a.back() == Complex(0.0)) a.pop_back();
        auto roots = poly_roots(a);
        Complex best = roots.empty() ? Complex(0.0) : roots[0];
        double best_val = 1e300;
        for (const auto& r : roots) {
            double val = std::abs(eval_poly(dehom[1], r));
            if (val < best_val) {
                best_val = val;
                best = r;
            }
        }
        Eigen::VectorXcd w(2);
        w << best, 1.0;
        w /= w.norm();
        verdict.witness = w;
        return verdict;
    }

    // dim >= 3: sampled certificate only
    double min_norm = 1e300;
    Eigen::VectorXcd min_point;
    for (const auto& u : low_discrepancy_sphere(dim, sphere_samples)) {
        double n = Hj.eval(u).norm();
        if (n < min_norm) {
            min_norm = n;
            min_point = u;
        }
    }
    verdict.method = "low-discrepancy sphere sampling";
    // Gauss-Newton polish from the sampled minimum in an affine chart (the
    // dominant coordinate pinned), so the trivial zero at the origin cannot
    // absorb the iteration. Landing on an exact zero certifies degeneracy.
    {
        std::vector<PolyMap> partials;
        for (int c = 0; c < dim; ++c) partials.push_back(partial_derivative(Hj, c));
        int pivot = 0;
        for (int i = 1; i < dim; ++i)
            if (std::abs(min_point[i]) > std::abs(min_point[pivot])) pivot = i;
        Eigen::VectorXcd z = min_point / min_point[pivot];
        for (int it = 0; it < 200; ++it) {
            Eigen::VectorXcd val = Hj.eval(z);
            if (val.norm() < 1e-15) break;
            Eigen::MatrixXcd J(dim, dim - 1);
            int col = 0;
            for (int c = 0; c < dim; ++c) {
                if (c == pivot) continue;
                J.col(col++) = partials[c].eval(z);
            }
            Eigen::VectorXcd step = J.completeOrthogonalDecomposition().solve(val);
            if (!step.allFinite() || step.norm() > 10.0) break;
            col = 0;
            for (int c = 0; c < dim; ++c) {
                if (c == pivot) continue;
                z[c] -= step[col++];
            }
        }
        if (z.allFinite() && z.norm() > 1e-6 &&
            Hj.eval(z).norm() < 1e-12 * std::pow(z.norm(), k)) {
            verdict.kind = NondegeneracyKind::CertifiedNo;
            verdict.witness = z / z.norm();
            return verdict;
        }
    }
    verdict.kind = NondegeneracyKind::SampledYes;
    verdict.confidence = min_norm;
    return verdict;
}

TotalInvarianceReport total_invariance_residual(const AdaptedGerm& germ, int j, double radius,
                                                int samples, std::uint64_t seed) {
    const auto& blocks = germ.blocks();
    const auto& F = germ.map;
    const int m = blocks.dimension();
    const int off = blocks.offset(j), d = blocks.dims[j];
    TotalInvarianceReport report;

    // (a) exact containment: F_j monomials must all involve E_j variables
    report.exact_containment = true;
    for (int r = off; r < off + d; ++r)
        for (const auto& [e, c] : F.coords()[r])
            if (block_degree_of(e, blocks, j) == 0) {
                report.exact_containment = false;
                report.containment_witnesses.push_back(
                    {j, r, e, c, 0, total_degree_of(e)});
            }

    // (b) Newton preimages of plane points w = F(v0), v0 on E_j^T, started
    // slightly off the plane. Only meaningful once (a) holds.
    if (!report.exact_containment) return report;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<PolyMap> partials;
    for (int c = 0; c < m; ++c) partials.push_back(partial_derivative(F, c));

    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXcd v0(m);
        for (int i = 0; i < m; ++i) v0[i] = Complex(gauss(rng), gauss(rng));
        v0.segment(off, d).setZero();
        double n0 = v0.norm();
        if (n0 == 0.0) continue;
        v0 *= radius / n0;
        Eigen::VectorXcd w = F.eval(v0);

        Eigen::VectorXcd v = v0;
        for (int i = 0; i < d; ++i)
            v[off + i] = radius * 1e-2 * Complex(gauss(rng), gauss(rng));

        // The on-plane root has multiplicity k_j in the block directions, so
        // Newton converges linearly there; run until the steps stagnate.
        bool converged = false;
        for (int it = 0; it < 300; ++it) {
            Eigen::VectorXcd res = F.eval(v) - w;
            if (res.norm() < 1e-17 * std::max(1.0, w.norm())) {
                converged = true;
                break;
            }
            Eigen::MatrixXcd J(m, m);
            for (int c = 0; c < m; ++c) J.col(c) = partials[c].eval(v);
            Eigen::VectorXcd step = J.completeOrthogonalDecomposition().solve(res);
            if (!step.allFinite()) break;
            v -= step;
            if (!v.allFinite() || v.norm() > 1e6) break;
            if (step.norm() < 1e-14 * (radius + v.norm())) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            ++report.newton_failures;
            continue;
        }
        ++report.preimage_samples;
        double block_part = v.segment(off, d).norm();
        report.max_preimage_residual = std::max(report.max_preimage_residual, block_part);
    }
    return report;
}

}  // namespace bottcher
