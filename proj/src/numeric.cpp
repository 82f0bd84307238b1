#include "bottcher/numeric.hpp"

#include <cmath>

#include "bottcher/errors.hpp"

namespace bottcher {

std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw StructuralError("fit_line needs two samples at least");
    const double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw StructuralError("fit_line: degenerate abscissae");
    const double slope = (n * sxy - sx * sy) / denom;
    return {slope, (sy - slope * sx) / n};
}

namespace {

// inverse of the standard normal CDF (Acklam's rational approximation);
// plenty for quasi-random direction generation
double inverse_normal_cdf(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    if (p <= 0) p = 1e-16;
    if (p >= 1) p = 1 - 1e-16;
    if (p < plow) {
        double q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > phigh) {
        double q = std::sqrt(-2 * std::log(1 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    double q = p - 0.5, r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

// additive-recurrence (Kronecker) sequence in [0,1)^dim
std::vector<double> kronecker_point(int index, int dim, std::uint64_t seed) {
    // generalized golden ratios
    double phi = 1.0;
    for (int it = 0; it < 32; ++it) phi = std::pow(1.0 + phi, 1.0 / (dim + 1));
    std::vector<double> point(dim);
    const double offset = 0.5 + 1e-4 * double(seed % 9973);
    double alpha = 1.0;
    for (int i = 0; i < dim; ++i) {
        alpha /= phi;
        point[i] = std::fmod(offset + alpha * (index + 1), 1.0);
    }
    return point;
}

}  // namespace

std::vector<Eigen::VectorXcd> low_discrepancy_sphere(int n, int count, std::uint64_t seed) {
    std::vector<Eigen::VectorXcd> out;
    out.reserve(count);
    const int dim = 2 * n;
    for (int s = 0; s < count; ++s) {
        auto u = kronecker_point(s, dim, seed);
        Eigen::VectorXd g(dim);
        for (int i = 0; i < dim; ++i) g[i] = inverse_normal_cdf(u[i]);
        double norm = g.norm();
        if (norm < 1e-12) {
            g.setOnes();
            norm = g.norm();
        }
        g /= norm;
        Eigen::VectorXcd z(n);
        for (int i = 0; i < n; ++i) z[i] = std::complex<double>(g[2 * i], g[2 * i + 1]);
        out.push_back(std::move(z));
    }
    return out;
}

std::vector<std::complex<double>> low_discrepancy_disk(int count, std::uint64_t seed) {
    std::vector<std::complex<double>> out;
    out.reserve(count);
    for (int s = 0; s < count; ++s) {
        auto u = kronecker_point(s, 2, seed);
        double r = std::sqrt(u[0]);
        double theta = 2.0 * M_PI * u[1];
        out.emplace_back(r * std::cos(theta), r * std::sin(theta));
    }
    return out;
}

}  // namespace bottcher
