#include <doctest.h>

#include <cmath>
#include <random>

#include "bottcher/bottcher1d.hpp"
#include "bottcher/numeric.hpp"
#include "support.hpp"

using namespace bottcher;

namespace {

Germ1D square_plus_cube() { return Germ1D{1.0, 2, {1.0}}; }

}  // namespace

TEST_CASE("series: pure powers are already in normal form") {
    auto phi = bottcher_series(Germ1D{1.0, 2, {}}, 8);
    for (const auto& c : phi.coeffs) CHECK(std::abs(c) == 0.0);

    auto cubic = bottcher_series(Germ1D{2.0, 3, {}}, 8);
    for (const auto& c : cubic.coeffs) CHECK(std::abs(c) == 0.0);
}

TEST_CASE("series: first correction of z^2 + z^3 is 1/2") {
    // order-by-order matcher at N=2: coefficient of z^3 gives 1 = 2 c_2
    auto phi = bottcher_series(square_plus_cube(), 2);
    REQUIRE(phi.coeffs.size() == 1);
    CHECK(std::abs(phi.coeffs[0] - Complex(0.5)) < 1e-14);
}

TEST_CASE("eval: pure square is the identity") {
    Germ1D f{1.0, 2, {}};
    CHECK(std::abs(bottcher_eval(f, Complex(0.3)) - Complex(0.3)) < 1e-14);
}

TEST_CASE("eval: series and limit methods agree") {
    auto f = square_plus_cube();
    auto phi = bottcher_series(f, 20);
    CHECK(std::abs(bottcher_eval(f, Complex(0.01)) - phi.eval_series(Complex(0.01))) < 1e-10);

    // the declared overlap: |z| <= half the radius estimate
    double r = 0.5 * phi.convergence_radius_estimate;
    REQUIRE(r > 0.0);
    for (int i = 0; i < 24; ++i) {
        double theta = 2.0 * M_PI * i / 24.0;
        Complex z = r * Complex(std::cos(theta), std::sin(theta));
        CHECK(std::abs(bottcher_eval(f, z) - phi.eval_series(z)) < 1e-9);
    }
}

TEST_CASE("eval: conjugacy residual of the limit method") {
    for (Germ1D f : {square_plus_cube(), Germ1D{3.0, 2, {0.0, 1.0}}}) {
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            double theta = 2.0 * M_PI * i / 100.0;
            Complex z = 0.05 * Complex(std::cos(theta), std::sin(theta));
            Complex lhs = bottcher_eval(f, f.eval(z));
            Complex rhs = f.a * std::pow(bottcher_eval(f, z), f.k);
            worst = std::max(worst, std::abs(lhs - rhs));
        }
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("eval: basin and branch guards") {
    auto f = square_plus_cube();
    CHECK_THROWS_AS(bottcher_eval(f, Complex(5.0)), NumericalError);
    // just past the zero of 1 + z: the first ratio has argument beyond pi/2
    CHECK_THROWS_AS(bottcher_eval(f, Complex(-1.0001, 0.001)), BranchError);
}

TEST_CASE("property: truncated-series conjugacy residual decays like r^{k+N}") {
    auto f = square_plus_cube();
    auto phi = bottcher_series(f, 2);  // residual order k + 2
    std::vector<double> logr, logres;
    for (double r : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3}) {
        double worst = 0.0;
        for (int i = 0; i < 32; ++i) {
            double theta = 2.0 * M_PI * i / 32.0;
            Complex z = r * Complex(std::cos(theta), std::sin(theta));
            Complex lhs = phi.eval_series(f.eval(z));
            Complex rhs = f.a * std::pow(phi.eval_series(z), f.k);
            worst = std::max(worst, std::abs(lhs - rhs));
        }
        logr.push_back(std::log(r));
        logres.push_back(std::log(worst));
    }
    auto [slope, intercept] = fit_line(logr, logres);
    CHECK(slope >= f.k + 0.5);
}

TEST_CASE("external data: pure square at 2 e^{i pi/3}") {
    std::vector<Complex> p{0.0, 0.0, 1.0};  // z^2
    Complex z = 2.0 * Complex(std::cos(M_PI / 3.0), std::sin(M_PI / 3.0));
    auto data = external_data(p, z);
    CHECK(std::abs(data.potential - std::log(2.0)) < 1e-12);
    CHECK(std::abs(data.angle - 1.0 / 6.0) < 1e-12);
}

TEST_CASE("external data: doubling and the potential functional equation") {
    std::vector<Complex> p{Complex(-0.12, 0.08), 0.0, 1.0};  // z^2 + c, small c
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> angle(0.0, 2 * M_PI);
    for (int i = 0; i < 40; ++i) {
        Complex z = 1.8 * std::exp(Complex(0.0, angle(rng)));
        ExternalData at_z, at_pz;
        try {
            at_z = external_data(p, z);
            at_pz = external_data(p, eval_poly(p, z));
        } catch (const NumericalError&) {
            continue;  // non-escaping sample
        }
        double doubling = std::fmod(2.0 * at_z.angle, 1.0);
        double diff = std::abs(at_pz.angle - doubling);
        diff = std::min(diff, 1.0 - diff);
        CHECK(diff < 1e-8);
        CHECK(std::abs(at_pz.potential - 2.0 * at_z.potential) < 1e-10);
    }
}

TEST_CASE("external data: degree-d multiplication of angles") {
    std::vector<Complex> p{0.1, 0.0, Complex(0.0, -0.05), 1.0};  // cubic
    for (int i = 0; i < 20; ++i) {
        double theta = 2.0 * M_PI * i / 20.0;
        Complex z = 2.2 * std::exp(Complex(0.0, theta));
        ExternalData at_z, at_pz;
        try {
            at_z = external_data(p, z);
            at_pz = external_data(p, eval_poly(p, z));
        } catch (const NumericalError&) {
            continue;
        }
        double tripled = std::fmod(3.0 * at_z.angle, 1.0);
        double diff = std::abs(at_pz.angle - tripled);
        diff = std::min(diff, 1.0 - diff);
        CHECK(diff < 1e-8);
    }
}

TEST_CASE("external data: non-escaping points are rejected") {
    std::vector<Complex> p{0.0, 0.0, 1.0};
    CHECK_THROWS_AS(external_data(p, Complex(0.5), 100), NumericalError);
}
