#pragma once

// Shared builders and oracles for the test suites. Everything here is
// deliberately independent of the library internals it is used to check:
// finite differences, hand expansions, radicals, brute-force iteration.

#include <complex>
#include <random>
#include <vector>

#include "bottcher/algebra.hpp"

namespace testsupport {

using bottcher::BlockStructure;
using bottcher::BlockVector;
using bottcher::Complex;
using bottcher::Exponent;
using bottcher::PolyMap;

inline BlockVector vec(const BlockStructure& s, std::vector<Complex> entries) {
    Eigen::VectorXcd v(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) v[i] = entries[i];
    return BlockVector(s, v);
}

struct TermSpec {
    int coord;
    Exponent exp;
    Complex coeff;
};

inline PolyMap map_of(BlockStructure in, BlockStructure out, const std::vector<TermSpec>& terms) {
    std::vector<PolyMap::Terms> coords(out.dimension());
    for (const auto& t : terms) coords[t.coord][t.exp] += t.coeff;
    return PolyMap(std::move(in), std::move(out), std::move(coords));
}

/// The running two-variable demo map (x, y) -> (x^2 + y^3, y^2).
inline PolyMap cusp_map() {
    BlockStructure s({1, 1});
    return map_of(s, s, {{0, {2, 0}, 1.0}, {0, {0, 3}, 1.0}, {1, {0, 2}, 1.0}});
}

/// Its degree-2 model (x, y) -> (x^2, y^2).
inline PolyMap squares_map() {
    BlockStructure s({1, 1});
    return map_of(s, s, {{0, {2, 0}, 1.0}, {1, {0, 2}, 1.0}});
}

/// Central finite-difference Jacobian oracle.
inline Eigen::MatrixXcd fd_jacobian(const PolyMap& P, const BlockVector& v, double step = 1e-6) {
    const int m = P.input_dimension();
    Eigen::MatrixXcd J(P.output_dimension(), m);
    for (int c = 0; c < m; ++c) {
        Eigen::VectorXcd hi = v.coords(), lo = v.coords();
        hi[c] += step;
        lo[c] -= step;
        J.col(c) = (P.eval(hi) - P.eval(lo)) / (2.0 * step);
    }
    return J;
}

/// Finite-difference Jacobian of an arbitrary vector function.
template <typename Fn>
Eigen::MatrixXcd fd_jacobian_fn(Fn&& f, const Eigen::VectorXcd& v, double step = 1e-6) {
    Eigen::VectorXcd base = f(v);
    Eigen::MatrixXcd J(base.size(), v.size());
    for (int c = 0; c < v.size(); ++c) {
        Eigen::VectorXcd hi = v, lo = v;
        hi[c] += step;
        lo[c] -= step;
        J.col(c) = (f(hi) - f(lo)) / (2.0 * step);
    }
    return J;
}

inline Complex random_unit_complex(std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    return {u(rng), u(rng)};
}

inline Eigen::VectorXcd random_vector(int n, std::mt19937& rng, double scale = 1.0) {
    Eigen::VectorXcd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * random_unit_complex(rng);
    return v;
}

/// Random sparse PolyMap with total degree <= max_degree.
inline PolyMap random_polymap(const BlockStructure& s, int max_degree, std::mt19937& rng,
                              int terms_per_coord = 6) {
    const int m = s.dimension();
    std::uniform_int_distribution<int> deg(0, max_degree);
    std::vector<PolyMap::Terms> coords(m);
    for (int r = 0; r < m; ++r) {
        for (int t = 0; t < terms_per_coord; ++t) {
            int total = deg(rng);
            Exponent e(m, 0);
            for (int d = 0; d < total; ++d) e[std::uniform_int_distribution<int>(0, m - 1)(rng)]++;
            coords[r][e] += random_unit_complex(rng);
        }
    }
    return PolyMap(s, s, std::move(coords));
}

/// Random homogeneous map of exact degree k on a block of dimension dim.
inline PolyMap random_homogeneous(int dim, int k, std::mt19937& rng, int terms_per_coord = 5) {
    BlockStructure s({dim});
    std::vector<PolyMap::Terms> coords(dim);
    for (int r = 0; r < dim; ++r) {
        Exponent pure(dim, 0);  // guarantee nondegeneracy-friendly diagonal term
        pure[r] = k;
        coords[r][pure] = 1.0;
        for (int t = 0; t < terms_per_coord; ++t) {
            Exponent e(dim, 0);
            for (int d = 0; d < k; ++d) e[std::uniform_int_distribution<int>(0, dim - 1)(rng)]++;
            coords[r][e] += 0.3 * random_unit_complex(rng);
        }
    }
    return PolyMap(s, s, std::move(coords));
}

}  // namespace testsupport
