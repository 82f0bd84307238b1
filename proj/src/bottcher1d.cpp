#include "bottcher/bottcher1d.hpp"

#include <algorithm>
#include <cmath>

namespace bottcher {

namespace {

using Series = std::vector<Complex>;  // ascending, index = degree

Series series_multiply(const Series& a, const Series& b, int order) {
    Series out(order + 1, Complex(0.0));
    for (int i = 0; i <= order && i < static_cast<int>(a.size()); ++i) {
        if (a[i] == Complex(0.0)) continue;
        for (int j = 0; j + i <= order && j < static_cast<int>(b.size()); ++j)
            out[i + j] += a[i] * b[j];
    }
    return out;
}

Series series_power(const Series& a, int p, int order) {
    Series out(order + 1, Complex(0.0));
    out[0] = 1.0;
    for (int i = 0; i < p; ++i) out = series_multiply(out, a, order);
    return out;
}

// phi composed with f, both ascending series, truncated
Series series_compose(const Series& phi, const Series& f, int order) {
    Series out(order + 1, Complex(0.0));
    Series fpow(order + 1, Complex(0.0));
    fpow[0] = 1.0;
    for (int n = 0; n < static_cast<int>(phi.size()); ++n) {
        if (n > 0) fpow = series_multiply(fpow, f, order);
        if (phi[n] == Complex(0.0)) continue;
        for (int i = 0; i <= order; ++i) out[i] += phi[n] * fpow[i];
    }
    return out;
}

}  // namespace

Complex Germ1D::eval(Complex z) const {
    // Horner over the full coefficient list a z^k (1 + tail/a ...)
    Complex acc(0.0);
    for (auto it = tail.rbegin(); it != tail.rend(); ++it) acc = (acc + *it) * z;
    acc = (acc + a);
    for (int i = 0; i < k; ++i) acc *= z;
    return acc;
}

Complex Germ1D::normalized_ratio(Complex z) const {
    Complex acc(0.0);
    for (auto it = tail.rbegin(); it != tail.rend(); ++it) acc = (acc + *it / a) * z;
    return 1.0 + acc;
}

Complex BottcherMap1D::eval_series(Complex z) const {
    Complex acc(0.0);
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = (acc + *it) * z;
    return z * (1.0 + acc);  // z + c_2 z^2 + ...
}

BottcherMap1D bottcher_series(const Germ1D& f, int N) {
    if (N < 2) throw StructuralError("bottcher_series needs N >= 2");
    if (f.a == Complex(0.0) || f.k < 2) throw StructuralError("not a superattracting germ");
    const int order = f.k + N - 1;

    Series fs(order + 1, Complex(0.0));
    if (f.k <= order) fs[f.k] = f.a;
    for (std::size_t i = 0; i < f.tail.size(); ++i)
        if (f.k + 1 + static_cast<int>(i) <= order) fs[f.k + 1 + i] = f.tail[i];

    Series phi(N + 1, Complex(0.0));
    phi[1] = 1.0;
    for (int j = 1; j <= N - 1; ++j) {
        // defect of the conjugacy at order k + j with c_{j+1} still zero
        Series lhs = series_compose(phi, fs, f.k + j);
        Series rhs = series_power(phi, f.k, f.k + j);
        Complex defect = lhs[f.k + j] - f.a * rhs[f.k + j];
        phi[j + 1] = defect / (f.a * double(f.k));
    }

    BottcherMap1D out;
    out.a = f.a;
    out.k = f.k;
    out.coeffs.assign(phi.begin() + 2, phi.end());

    // radius estimate from the coefficient growth of phi and of the germ's
    // normalized tail; deliberately conservative
    double growth = 0.0;
    for (int n = 2; n <= N; ++n)
        if (phi[n] != Complex(0.0))
            growth = std::max(growth, std::pow(std::abs(phi[n]), 1.0 / (n - 1)));
    for (std::size_t i = 0; i < f.tail.size(); ++i)
        if (f.tail[i] != Complex(0.0))
            growth = std::max(growth, std::pow(std::abs(f.tail[i] / f.a), 1.0 / double(i + 1)));
    growth = std::max(growth, std::pow(std::abs(f.a), 1.0 / (f.k - 1)));
    out.convergence_radius_estimate = std::min(1.0, 0.5 / std::max(growth, 1e-12));
    return out;
}

Complex bottcher_eval(const Germ1D& f, Complex z) {
    if (z == Complex(0.0)) return 0.0;
    Complex sum(0.0);
    Complex zn = z;
    double weight = 1.0 / double(f.k);
    const int max_terms = 200;
    for (int n = 0; n < max_terms; ++n) {
        Complex ratio = f.normalized_ratio(zn);
        if (ratio == Complex(0.0))
            throw NumericalError("orbit met a zero of f(z)/(a z^k); no principal branch");
        Complex term = weight * std::log(ratio);
        if (n < 6 && std::abs(std::arg(ratio)) > M_PI / 2.0)
            throw BranchError("ratio far from 1 near the start of the orbit; use smaller |z|");
        sum += term;
        if (std::abs(term) < 1e-14) break;
        zn = f.eval(zn);
        weight /= double(f.k);
        if (std::abs(zn) > 1e3 || !std::isfinite(std::abs(zn)))
            throw NumericalError("orbit escapes: point is not in the basin of 0");
        if (n == max_terms - 1)
            throw NumericalError("telescoping series did not settle within budget");
    }
    return z * std::exp(sum);
}

ExternalData external_data(const std::vector<Complex>& monic_coeffs, Complex z,
                           int escape_budget) {
    const int d = static_cast<int>(monic_coeffs.size()) - 1;
    if (d < 2) throw StructuralError("external data needs degree >= 2");
    if (std::abs(monic_coeffs[d] - Complex(1.0)) > 1e-12)
        throw StructuralError("polynomial must be monic");

    double coeff_sum = 0.0;
    for (int i = 0; i < d; ++i) coeff_sum += std::abs(monic_coeffs[i]);
    const double escape_radius = std::max(2.0, 2.0 * (1.0 + coeff_sum));

    // head: iterate until the orbit clears the escape radius
    Complex zn = z;
    int n = 0;
    while (std::abs(zn) <= escape_radius) {
        if (n++ >= escape_budget)
            throw NumericalError("orbit did not escape within budget");
        zn = eval_poly(monic_coeffs, zn);
    }

    // Track potential and angle along the whole orbit from z. For the head we
    // recompute the ratio p(z)/z^d directly (moderate magnitudes); past the
    // escape point we switch to w = 1/z so nothing overflows.
    double potential = std::log(std::abs(z));
    double angle = std::arg(z);
    double scale = 1.0;
    Complex cur = z;
    for (int i = 0; i < n; ++i) {
        Complex next = eval_poly(monic_coeffs, cur);
        Complex zd = std::pow(cur, d);
        Complex ratio = next / zd;
        scale /= double(d);
        potential += scale * std::log(std::abs(ratio));
        angle += scale * std::arg(ratio);
        cur = next;
    }

    // tail in the inverted coordinate
    Complex w = 1.0 / cur;
    for (int i = 0; i < 300; ++i) {
        // r = 1 + c_{d-1} w + ... + c_0 w^d
        Complex r(0.0);
        for (int j = 0; j < d; ++j) r = (r + monic_coeffs[j]) * w;
        r += 1.0;
        scale /= double(d);
        if (r == Complex(0.0)) break;
        potential += scale * std::log(std::abs(r));
        angle += scale * std::arg(r);
        if (std::abs(r - Complex(1.0)) < 1e-15) break;
        Complex wd = std::pow(w, d);
        w = wd / r;
        if (std::abs(w) < 1e-300) break;
    }

    ExternalData out;
    out.potential = potential;
    double turns = angle / (2.0 * M_PI);
    turns -= std::floor(turns);
    out.angle = turns;
    return out;
}

}  // namespace bottcher
