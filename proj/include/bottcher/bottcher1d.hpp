#pragma once

#include <vector>

#include "bottcher/algebra.hpp"

namespace bottcher {

/// One-variable superattracting germ f(z) = a z^k + t_1 z^{k+1} + ...
struct Germ1D {
    Complex a;
    int k = 2;
    std::vector<Complex> tail;  // coefficients of z^{k+1}, z^{k+2}, ...

    Complex eval(Complex z) const;
    /// f(z) / (a z^k) = 1 + (t_1/a) z + ..., evaluated without forming z^k.
    Complex normalized_ratio(Complex z) const;
};

/// Series data of the coordinate phi(z) = z + c_2 z^2 + ... conjugating the
/// germ to w -> a w^k.
struct BottcherMap1D {
    Complex a;
    int k = 2;
    std::vector<Complex> coeffs;  // c_2 ... c_N
    double convergence_radius_estimate = 0.0;

    Complex eval_series(Complex z) const;
};

/// Solves the conjugacy phi(f(z)) = a phi(z)^k order by order; the degree
/// (k+j) equation determines c_{j+1} with pivot a*k, which never vanishes.
BottcherMap1D bottcher_series(const Germ1D& f, int N);

/// Evaluates phi(z) through the telescoping logarithm
///   log(phi(z)/z) = sum_n k^{-(n+1)} log( f^{n+1}(z) / (a f^n(z)^k) )
/// with principal branches. Throws BranchError when an early ratio strays too
/// far from 1 (retry with smaller |z|), NumericalError when z is not in the
/// basin.
Complex bottcher_eval(const Germ1D& f, Complex z);

struct ExternalData {
    double potential = 0.0;  // Green value at infinity
    double angle = 0.0;      // external angle in turns, [0, 1)
};

/// Potential and external angle of an escaping point of a monic polynomial
/// (ascending coefficients, leading coefficient 1 implied checked). The tail
/// past the escape radius runs in the w = 1/z coordinate so nothing overflows.
/// Throws NumericalError for non-escaping points.
ExternalData external_data(const std::vector<Complex>& monic_coeffs, Complex z,
                           int escape_budget = 2000);

}  // namespace bottcher
