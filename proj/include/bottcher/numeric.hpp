#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace bottcher {

/// Neumaier compensated accumulator. Used whenever a sparse sum has enough
/// terms that naive accumulation would eat into the working tolerances.
class CompensatedSum {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

class CompensatedComplexSum {
public:
    void add(std::complex<double> z) {
        re_.add(z.real());
        im_.add(z.imag());
    }
    std::complex<double> value() const { return {re_.value(), im_.value()}; }

private:
    CompensatedSum re_, im_;
};

/// Least-squares slope of y against x. Returns {slope, intercept}.
std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Low-discrepancy points on the unit sphere of C^n (R^{2n} sphere), generated
/// from an additive-recurrence sequence pushed through an inverse-normal map.
/// Deterministic for a given (n, count, seed).
std::vector<Eigen::VectorXcd> low_discrepancy_sphere(int n, int count, std::uint64_t seed = 0);

/// Low-discrepancy points of the complex unit disk (Halton-in-polar).
std::vector<std::complex<double>> low_discrepancy_disk(int count, std::uint64_t seed = 0);

}  // namespace bottcher
