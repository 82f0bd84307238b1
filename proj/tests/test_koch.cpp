#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

#include "bottcher/koch.hpp"
#include "support.hpp"

using namespace bottcher;
using namespace bottcher::koch;

namespace {

Eigen::VectorXcd make_vec(std::vector<Complex> entries) {
    Eigen::VectorXcd v(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) v[i] = entries[i];
    return v;
}

}  // namespace

TEST_CASE("build_px: m=2 closed form t^3 - 3 s^2 t") {
    for (Complex s : {Complex(1.0), Complex(0.4, -0.7)}) {
        auto P = build_px(make_vec({s, -s}));
        REQUIRE(P.degree() == 3);
        CHECK(std::abs(P.coeffs[3] - Complex(1.0)) < 1e-14);
        CHECK(std::abs(P.coeffs[2]) < 1e-14);
        CHECK(std::abs(P.coeffs[1] + 3.0 * s * s) < 1e-13);
        CHECK(std::abs(P.coeffs[0]) < 1e-13);
        // critical values sum to zero
        CHECK(std::abs(P.eval(s) + P.eval(-s)) < 1e-12);
    }
}

TEST_CASE("build_px: audits on random source points") {
    std::mt19937 rng(8);
    for (int m : {2, 3, 4, 5}) {
        for (int trial = 0; trial < 3; ++trial) {
            Eigen::VectorXcd x = testsupport::random_vector(m, rng);
            x.array() -= x.sum() / double(m);
            auto P = build_px(x);
            // monic and centered
            CHECK(std::abs(P.coeffs[m + 1] - Complex(1.0)) < 1e-12);
            CHECK(std::abs(P.coeffs[m]) < 1e-12);
            // critical points are exactly the x_i
            auto crit = poly_roots(P.derivative_coeffs());
            REQUIRE(static_cast<int>(crit.size()) == m);
            for (int i = 0; i < m; ++i) {
                double best = 1e300;
                for (const auto& c : crit) best = std::min(best, std::abs(c - x[i]));
                CHECK(best < 1e-8);
            }
            // critical values have barycenter zero
            Complex cv(0.0);
            for (int i = 0; i < m; ++i) cv += P.eval(x[i]);
            CHECK(std::abs(cv) < 1e-10);
        }
    }
}

TEST_CASE("build_px: homogeneity P_{lambda x}(lambda t) = lambda^{m+1} P_x(t)") {
    std::mt19937 rng(9);
    const Complex lambda(1.0, 1.0);
    for (int m : {2, 3, 4}) {
        Eigen::VectorXcd x = testsupport::random_vector(m, rng);
        x.array() -= x.sum() / double(m);
        auto P = build_px(x);
        auto Pl = build_px(Eigen::VectorXcd(lambda * x));
        for (Complex t : {Complex(0.3, 0.1), Complex(-1.2, 0.4)}) {
            Complex lhs = Pl.eval(lambda * t);
            Complex rhs = std::pow(lambda, m + 1) * P.eval(t);
            CHECK(std::abs(lhs - rhs) < 1e-12 * std::max(1.0, std::abs(rhs)));
        }
    }
}

TEST_CASE("koch_h: fixed values and homogeneity") {
    CHECK(koch_h(make_vec({Complex(0.0), Complex(0.0)})).norm() == 0.0);

    for (Complex s : {Complex(1.0), Complex(0.2, 0.9)}) {
        auto y = koch_h(make_vec({s, -s}));
        CHECK(std::abs(y[0] + 2.0 * s * s * s) < 1e-12);
        CHECK(std::abs(y[1] - 2.0 * s * s * s) < 1e-12);
    }

    std::mt19937 rng(10);
    for (int m : {2, 3, 4, 5}) {
        Eigen::VectorXcd x = testsupport::random_vector(m, rng);
        x.array() -= x.sum() / double(m);
        for (Complex lambda : {Complex(2, 0), Complex(0, 1), Complex(0.3, 0.4)}) {
            Eigen::VectorXcd lhs = koch_h(Eigen::VectorXcd(lambda * x));
            Eigen::VectorXcd rhs = std::pow(lambda, m + 1) * koch_h(x);
            CHECK((lhs - rhs).norm() < 1e-12 * std::max(1.0, rhs.norm()));
        }
    }
}

TEST_CASE("ambient map evaluates identically to the numeric family map") {
    std::mt19937 rng(11);
    for (int m : {2, 3, 4}) {
        const auto& H = koch_ambient_map(m);
        for (int trial = 0; trial < 5; ++trial) {
            Eigen::VectorXcd x = testsupport::random_vector(m, rng);
            x.array() -= x.sum() / double(m);
            CHECK((H.eval(x) - koch_h(x)).norm() < 1e-12 * std::max(1.0, koch_h(x).norm()));
        }
    }
}

TEST_CASE("fixed points: censuses for m = 2, 3, 4") {
    // m=2: x = +/- (i/sqrt 2, -i/sqrt 2) from -2s^3 = s
    auto census2 = koch_fixed_points(2);
    REQUIRE(census2.points.size() == 2);
    Complex s(0.0, 1.0 / std::sqrt(2.0));
    double best = 1e300;
    for (const auto& p : census2.points) best = std::min(best, (p - make_vec({s, -s})).norm());
    CHECK(best < 1e-12);

    // m=3: the three cube roots of -1/3 in every order
    auto census3 = koch_fixed_points(3);
    REQUIRE(census3.points.size() == 6);
    std::vector<Complex> expected_roots;
    for (int j = 0; j < 3; ++j) {
        double arg = M_PI * (2 * j + 1) / 3.0;
        expected_roots.push_back(std::pow(1.0 / 3.0, 1.0 / 3.0) *
                                 Complex(std::cos(arg), std::sin(arg)));
    }
    for (const auto& p : census3.points)
        for (int i = 0; i < 3; ++i) {
            double nearest = 1e300;
            for (const auto& r : expected_roots) nearest = std::min(nearest, std::abs(p[i] - r));
            CHECK(nearest < 1e-12);
        }

    for (int m : {2, 3, 4}) {
        auto census = koch_fixed_points(m);
        int expected = 1;
        for (int i = 2; i <= m; ++i) expected *= i;
        CHECK(static_cast<int>(census.points.size()) == expected);
        CHECK(census.max_residual < 1e-12);
        CHECK(census.min_pairwise_distance > 1e-3);
    }
}

TEST_CASE("fixed point polynomial reproduces (6/5) z + z^6 at m=5") {
    auto x = koch_fixed_points(5).points.front();
    auto P = build_px(x);
    auto expected = fixed_point_polynomial(5);
    REQUIRE(P.coeffs.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(std::abs(P.coeffs[i] - expected[i]) < 1e-12);
}

TEST_CASE("spectrum: eigenvalues (m+1)/k with power eigenvectors") {
    auto check_spectrum = [](int m) {
        auto census = koch_fixed_points(m);
        auto spec = koch_spectrum(census.points.front());
        REQUIRE(spec.eigenvalues.size() == m - 1);
        for (int k = 1; k <= m - 1; ++k) {
            double expected = double(m + 1) / double(k);
            // eigenvalues sorted by descending real part; k-th largest is (m+1)/k
            CHECK(std::abs(spec.eigenvalues[k - 1] - Complex(expected)) < 1e-8);
            CHECK(spec.alignment_residuals[k - 1] < 1e-8);
        }
    };
    check_spectrum(3);
    check_spectrum(5);

    // radial direction: D_xH(x) = (m+1) x (Euler at a fixed point)
    auto x = koch_fixed_points(3).points.front();
    auto J = jacobian(koch_ambient_map(3), BlockVector(single_block(3), x));
    CHECK((J.entries * x - 4.0 * x).norm() < 1e-10);
}

TEST_CASE("partitions: contraction order and enumeration") {
    auto J = Partition::of({{0, 1}, {2, 3}});
    auto K = Partition::of({{0, 1, 2, 3}});
    CHECK(is_contraction(K, J));
    CHECK_FALSE(is_contraction(J, Partition::of({{0, 2}, {1, 3}})));
    CHECK(is_contraction(J, J));

    auto parts4 = all_partitions(4, 2);
    CHECK(parts4.size() == 14);  // Bell(4) - 1
}

TEST_CASE("stratum expansion: constant 5 for the (a,a,a,-3a) example") {
    // m=4, block {0,1,2} at a=1: C_J = (5/4)(a - (-3a)) = 5
    auto part = Partition::of({{0, 1, 2}, {3}});
    Eigen::VectorXcd x = make_vec({1.0, 1.0, 1.0, -3.0});

    std::mt19937 rng(12);
    Eigen::VectorXcd v = testsupport::random_vector(4, rng);
    v.array() -= v.sum() / 4.0;

    auto expansion = stratum_expansion(x, part, 0, v);
    CHECK(std::abs(expansion.leading_constant - Complex(5.0)) < 1e-12);
    CHECK(expansion.slope >= 3.0 + 1.5);  // |J| + 1.5 with |J| = 3

    // direction inside the stratum: the leading term cancels identically and
    // the residual is smaller at every ladder point
    Eigen::VectorXcd tangent = stratum_basis(4, part).col(0);
    auto degenerate = stratum_expansion(x, part, 0, tangent);
    for (std::size_t i = 0; i < degenerate.residuals.size(); ++i)
        CHECK(degenerate.residuals[i] <= expansion.residuals[i] + 1e-12);
}

TEST_CASE("critical orders along merge strata") {
    auto singles = Partition::singletons(4);
    auto order2 = critical_order_check(4, singles, 0, 1, 5);
    CHECK(order2.expected == 2);
    CHECK(std::abs(order2.slope - 2.0) < 0.05);

    auto pairs = Partition::of({{0, 1}, {2, 3}});
    auto order4 = critical_order_check(4, pairs, 0, 1, 6);
    CHECK(order4.expected == 4);
    CHECK(std::abs(order4.slope - 4.0) < 0.05);

    // degree audit: sum of merge multiplicities = (|J| - 1) m
    for (const auto& part : all_partitions(4, 2))
        CHECK(merge_degree_total(part) == (part.block_count() - 1) * 4);
}

TEST_CASE("super-saddle structure at fixed points") {
    // fixed point on the line L_J for m=3, J = {{0,1},{2}}
    auto part = Partition::of({{0, 1}, {2}});
    Eigen::MatrixXcd B = stratum_basis(3, part);
    Eigen::VectorXcd u = B.col(0);
    // H(u) = c u on the invariant line; fixed point at t with c t^3 = 1
    Eigen::VectorXcd hu = koch_h(u);
    Complex c = hu[0] / u[0];
    CHECK((hu - c * u).norm() < 1e-10);
    Complex t = std::pow(1.0 / c, 1.0 / 3.0);
    Eigen::VectorXcd x = t * u;
    CHECK((koch_h(x) - x).norm() < 1e-9);

    auto report = super_saddle_report(x, part);
    CHECK(report.rank == 1);
    CHECK(report.stratum_dimension == 1);
    CHECK(report.image_alignment < 1e-8);
    CHECK(report.kernel_separation > 1e-6);
    CHECK(report.splits);
    REQUIRE(report.restricted_eigenvalues.size() == 1);
    CHECK(std::abs(report.restricted_eigenvalues[0] - Complex(4.0)) < 1e-8);

    // off-diagonal fixed point: full rank, eigenvalues (m+1)/k all outside
    // the closed unit disk
    auto x3 = koch_fixed_points(3).points.front();
    auto full = super_saddle_report(x3, Partition::singletons(3));
    CHECK(full.rank == 2);
    CHECK(full.min_restricted_modulus > 1.0);
    CHECK(full.splits);
}

TEST_CASE("quadratic differentials: pairing basics") {
    Eigen::VectorXcd poles = make_vec({Complex(1.0), Complex(-1.0)});
    Eigen::VectorXcd lead(1);
    lead[0] = 1.0;
    auto q = make_quadratic_differential(poles, lead, 4.0);
    CHECK(std::abs(q.residues.sum()) == 0.0);

    CHECK(std::abs(qd_pairing(q, make_vec({1.0, 0.0})) - Complex(1.0)) < 1e-15);
    // block-constant tangent value pairs to zero because residues sum to zero
    CHECK(std::abs(qd_pairing(q, make_vec({0.7, 0.7}))) < 1e-15);
}

TEST_CASE("push-forward: scalar 1/3 at the m=2 fixed point") {
    auto x = koch_fixed_points(2).points.front();
    auto P = build_px(x);
    double R = certify_disk_radius(P);
    Eigen::VectorXcd lead(1);
    lead[0] = 1.0;
    auto q = make_quadratic_differential(x, lead, R);
    auto result = qd_pushforward(P, q, 20000);
    CHECK(std::abs(result.value.residues[0] - Complex(1.0 / 3.0)) < 1e-6);
    CHECK(std::abs(result.value.residues[1] + Complex(1.0 / 3.0)) < 1e-6);
    CHECK(result.result_l1 < result.source_l1);

    auto duality = pushforward_duality(x, Partition::singletons(2));
    CHECK(std::abs(duality.tangent_matrix(0, 0) - Complex(3.0)) < 1e-8);
    CHECK(std::abs(duality.pushforward_matrix(0, 0) - Complex(1.0 / 3.0)) < 1e-6);
    CHECK(duality.max_entry_error < 1e-6);
    CHECK(duality.spectral_radius < 1.0);
}

TEST_CASE("push-forward: duality matrix identity for m=3") {
    auto x = koch_fixed_points(3).points.front();
    auto duality = pushforward_duality(x, Partition::singletons(3));
    CHECK(duality.max_entry_error < 1e-6);
    CHECK(duality.spectral_radius < 1.0);
}

TEST_CASE("push-forward: strict L1 contraction on random differentials") {
    auto x = koch_fixed_points(2).points.front();
    auto P = build_px(x);
    double R = certify_disk_radius(P);
    std::mt19937 rng(14);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXcd lead(1);
        lead[0] = testsupport::random_unit_complex(rng);
        if (std::abs(lead[0]) < 0.1) lead[0] = 1.0;
        auto q = make_quadratic_differential(x, lead, R);
        auto result = qd_pushforward(P, q, 20000);
        CHECK(result.result_l1 < result.source_l1);
    }
}

TEST_CASE("chart germ: the (3,1)-block chart at m=4") {
    auto part = Partition::of({{0, 1, 2}, {3}});
    auto chart = chart_germ(4, part);
    CHECK(chart.germ.adapted);
    CHECK(chart.germ.certificate.empty());
    // jet degrees inferred from the expansion: (|J_1|+1, conventional 2 on the
    // zero-dimensional second block)
    CHECK(chart.germ.blocks().dims == std::vector<int>{2, 0});
    CHECK(chart.germ.blocks().degrees[0] == 4);

    // normalization data: mu0 = -1/64 and C_J = 5 for the big block
    CHECK(std::abs(chart.mu0 - Complex(-1.0 / 64.0)) < 1e-12);
    CHECK(std::abs(chart.stratum_constants[0] - Complex(5.0)) < 1e-12);
    CHECK(std::abs(chart.model_scales[0] - chart.mu0 * chart.stratum_constants[0]) < 1e-9);
    CHECK(chart.model_scale_fit_error < 1e-9);

    // the jet agrees with the exact chart map near the fixed point
    std::mt19937 rng(15);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXcd v = testsupport::random_vector(2, rng);
        v *= 0.01 / v.norm();
        Eigen::VectorXcd jet_val = chart.germ.map.eval(v);
        Eigen::VectorXcd exact_val = chart.exact_step(v);
        CHECK((jet_val - exact_val).norm() < 1e-10);
    }
}

TEST_CASE("chart germ: the (2,2)-block chart at m=4") {
    auto part = Partition::of({{0, 1}, {2, 3}});
    auto chart = chart_germ(4, part);
    CHECK(chart.germ.adapted);
    CHECK(chart.germ.blocks().dims == std::vector<int>{1, 1});
    CHECK(chart.germ.blocks().degrees == std::vector<int>{3, 3});
    for (const auto& verdict : chart.germ.factor_verdicts) CHECK(verdict.nondegenerate());
    for (int b = 0; b < 2; ++b)
        CHECK(std::abs(chart.model_scales[b] - chart.mu0 * chart.stratum_constants[b]) < 1e-9);

    std::mt19937 rng(16);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXcd v = testsupport::random_vector(2, rng);
        v *= 0.02 / v.norm();
        CHECK((chart.germ.map.eval(v) - chart.exact_step(v)).norm() < 1e-9);
    }
}

TEST_CASE("projective step: scaling invariance and stratum invariance") {
    std::mt19937 rng(17);
    Eigen::VectorXcd x = testsupport::random_vector(4, rng);
    x.array() -= x.sum() / 4.0;
    auto a = projective_step(x);
    auto b = projective_step(Eigen::VectorXcd(2.0 * x));
    CHECK((a - b).norm() < 1e-12 * std::max(1.0, a.norm()));

    // points of L_J stay block-constant
    auto part = Partition::of({{0, 1}, {2, 3}});
    Eigen::VectorXcd values = make_vec({Complex(0.9, 0.2), Complex(-0.4, 0.3)});
    Eigen::VectorXcd y = stratum_point(4, part, values);
    auto stepped = projective_step(y);
    CHECK_NOTHROW(block_values(stepped, part, 1e-12));
}

TEST_CASE("projective step: attraction toward the two-block fixed point") {
    auto part = Partition::of({{0, 1, 2}, {3}});
    Eigen::VectorXcd base = make_vec({1.0, 1.0, 1.0, -3.0});
    Eigen::VectorXcd target = projective_step(base);  // the fixed representative
    // H fixes [base]: its normalized image equals base's normalization
    Eigen::VectorXcd base_norm = base / base[3];
    CHECK((target - base_norm).norm() < 1e-12);

    std::mt19937 rng(18);
    Eigen::VectorXcd z = base + 0.05 * testsupport::random_vector(4, rng);
    z.array() -= z.sum() / 4.0;
    for (int i = 0; i < 12; ++i) z = projective_step(z);
    CHECK((z - base_norm).norm() < 1e-10);
}
