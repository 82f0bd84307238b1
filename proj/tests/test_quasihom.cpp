#include <doctest.h>

#include <cmath>
#include <random>

#include "bottcher/quasihom.hpp"
#include "support.hpp"

using namespace bottcher;
using namespace testsupport;

TEST_CASE("extract: cusp map is not adapted, with the y^3 witness") {
    auto F = cusp_map();
    auto germ = extract_quasihomogeneous_part(F, BlockStructure({1, 1}));
    CHECK_FALSE(germ.adapted);
    // quasihomogeneous part is (x^2, y^2)
    CHECK(germ.blocks().degrees == std::vector<int>{2, 2});
    CHECK(germ.quasihomogeneous_part.factors[0].coefficient(0, {2}) == Complex(1.0));
    CHECK(germ.quasihomogeneous_part.factors[1].coefficient(0, {2}) == Complex(1.0));
    REQUIRE(germ.certificate.size() == 1);
    const auto& offender = germ.certificate[0];
    CHECK(offender.block == 0);
    CHECK(offender.exponent == Exponent{0, 3});
    CHECK(offender.block_degree == 0);  // y^3 has E_1-degree 0 < 2
}

TEST_CASE("extract: a quasihomogeneous map is adapted with empty certificate") {
    std::mt19937 rng(11);
    auto H1 = random_homogeneous(2, 3, rng);
    auto H2 = random_homogeneous(1, 2, rng);
    auto H = make_quasihomogeneous(BlockStructure({2, 1}, {3, 2}), {H1, H2}).assembled();
    auto germ = extract_quasihomogeneous_part(H, BlockStructure({2, 1}));
    CHECK(germ.adapted);
    CHECK(germ.certificate.empty());
    CHECK(germ.blocks().degrees == std::vector<int>{3, 2});
}

TEST_CASE("extract: rejects germs that move the origin or have linear blocks") {
    BlockStructure s({1});
    auto affine = map_of(s, s, {{0, {0}, 1.0}, {0, {2}, 1.0}});
    CHECK_THROWS_AS(extract_quasihomogeneous_part(affine, s), StructuralError);

    auto linear = map_of(s, s, {{0, {1}, 1.0}});
    CHECK_THROWS_AS(extract_quasihomogeneous_part(linear, s), StructuralError);

    auto zero = PolyMap::zero(s, s);
    CHECK_THROWS_AS(extract_quasihomogeneous_part(zero, s), StructuralError);
}

TEST_CASE("euler_residual: exact for pure powers, positive for the cusp map") {
    BlockStructure one({1}, {2});
    auto sq = map_of(one, one, {{0, {2}, 1.0}});
    auto r = euler_residual(sq, one, 50, 7);
    CHECK(r[0] < 1e-14);

    // H(x,y) = (x^2 + y^3, y^2) treated as a degree-(2,2) candidate: the y^3
    // term breaks the identity in block 1.
    auto F = cusp_map();
    auto rf = euler_residual(F, BlockStructure({1, 1}, {2, 2}), 100, 7);
    CHECK(rf[0] > 1e-2);
    // direct evaluation at v = (0,1): DH_v(v_1) = 0 while 2 pi_1 H(v) = (2, 0)
    auto J = jacobian(F, vec(F.input_blocks(), {0.0, 1.0}));
    Eigen::VectorXcd v1 = Eigen::VectorXcd::Zero(2);
    Eigen::VectorXcd lhs = J.entries * v1;
    CHECK(std::abs(lhs.norm() - 0.0) < 1e-15);
    CHECK(rf[0] > 0.5);
}

TEST_CASE("euler_residual: scales linearly in the map") {
    std::mt19937 rng(3);
    // a genuinely non-quasihomogeneous candidate: add a cross term
    BlockStructure s({1, 1}, {2, 2});
    auto F = map_of(s, s, {{0, {2, 0}, 1.0}, {0, {1, 1}, 0.5}, {1, {0, 2}, 1.0}});
    auto base = euler_residual(F, s, 60, 99);
    for (Complex lambda : {Complex(2.0, 0.0), Complex(0.0, 1.0)}) {
        auto scaled = euler_residual(scale(lambda, F), s, 60, 99);
        for (std::size_t j = 0; j < base.size(); ++j)
            CHECK(std::abs(scaled[j] - std::abs(lambda) * base[j]) < 1e-10 * (1.0 + base[j]));
    }
}

TEST_CASE("check_nondegenerate: resultant certificates in dimension 2") {
    BlockStructure two({2});
    auto squares = map_of(two, two, {{0, {2, 0}, 1.0}, {1, {0, 2}, 1.0}});
    auto yes = check_nondegenerate(squares);
    CHECK(yes.kind == NondegeneracyKind::CertifiedYes);

    auto degenerate = map_of(two, two, {{0, {1, 1}, 1.0}, {1, {1, 1}, 1.0}});
    auto no = check_nondegenerate(degenerate);
    CHECK(no.kind == NondegeneracyKind::CertifiedNo);
    REQUIRE(no.witness.has_value());
    CHECK(no.witness->norm() > 1e-6);
    CHECK(degenerate.eval(*no.witness).norm() < 1e-12);
}

TEST_CASE("check_nondegenerate: 1-d factors and sampled high dimension") {
    BlockStructure one({1});
    auto cube = map_of(one, one, {{0, {3}, 2.0}});
    CHECK(check_nondegenerate(cube).kind == NondegeneracyKind::CertifiedYes);

    BlockStructure three({3});
    auto diag = map_of(three, three,
                       {{0, {2, 0, 0}, 1.0}, {1, {0, 2, 0}, 1.0}, {2, {0, 0, 2}, 1.0}});
    auto v = check_nondegenerate(diag, 20000);
    CHECK(v.kind == NondegeneracyKind::SampledYes);
    CHECK(v.confidence > 0.1);  // min |H| on the sphere is 1/sqrt(3) here

    // degenerate: last coordinate form misses the e3 axis
    auto bad = map_of(three, three,
                      {{0, {2, 0, 0}, 1.0}, {1, {0, 2, 0}, 1.0}, {2, {1, 0, 1}, 1.0}});
    auto nv = check_nondegenerate(bad, 20000);
    CHECK(nv.kind == NondegeneracyKind::CertifiedNo);
    REQUIRE(nv.witness.has_value());
    CHECK(bad.eval(*nv.witness).norm() < 1e-12);
}

TEST_CASE("total_invariance: exact for quasihomogeneous, fails for the cusp map") {
    std::mt19937 rng(5);
    auto H1 = random_homogeneous(1, 2, rng);
    auto H2 = random_homogeneous(2, 3, rng);
    auto H = make_quasihomogeneous(BlockStructure({1, 2}, {2, 3}), {H1, H2}).assembled();
    auto germ = extract_quasihomogeneous_part(H, BlockStructure({1, 2}));
    auto report = total_invariance_residual(germ, 0, 0.3, 40);
    CHECK(report.exact_containment);
    CHECK(report.preimage_samples > 30);
    CHECK(report.max_preimage_residual < 1e-8);

    auto F = cusp_map();
    auto cusp = extract_quasihomogeneous_part(F, BlockStructure({1, 1}));
    auto bad = total_invariance_residual(cusp, 0, 0.3, 10);
    CHECK_FALSE(bad.exact_containment);
    REQUIRE(!bad.containment_witnesses.empty());
    CHECK(bad.containment_witnesses[0].exponent == Exponent{0, 3});
}

TEST_CASE("property: adaptedness monomial criterion matches the scaling bound") {
    // For adapted germs the ratio |F_j(v) - H_j(v_j)| / (|v| |v_j|^{k_j}) stays
    // bounded along all scaling regimes; for the cusp map it blows up.
    std::mt19937 rng(17);
    BlockStructure s({1, 1}, {2, 2});
    // adapted perturbation of (x^2, y^2): x^2 y is allowed in block 0
    auto adapted_map =
        map_of(s, s, {{0, {2, 0}, 1.0}, {0, {2, 1}, 0.7}, {1, {0, 2}, 1.0}, {1, {1, 2}, 0.4}});
    auto adapted = extract_quasihomogeneous_part(adapted_map, s);
    CHECK(adapted.adapted);
    auto cusp = extract_quasihomogeneous_part(cusp_map(), BlockStructure({1, 1}));

    auto ratio = [](const AdaptedGerm& germ, int j, double eps, double s_exp,
                    std::mt19937& gen) {
        const auto& blocks = germ.blocks();
        const int m = blocks.dimension();
        Eigen::VectorXcd u = random_vector(m, gen);
        u /= u.norm();
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(m);
        const int off = blocks.offset(j), d = blocks.dims[j];
        for (int i = 0; i < m; ++i)
            v[i] = (i >= off && i < off + d) ? std::pow(eps, s_exp) * u[i] : eps * u[i];
        BlockVector bv(blocks, v);
        auto Fv = germ.map.eval(bv);
        auto Hv = germ.quasihomogeneous_part.assembled().eval(bv.project(j));
        double num = (Fv.coords().segment(off, d) - Hv.coords().segment(off, d)).norm();
        double den = bv.norm() * std::pow(bv.block_norm(j), blocks.degree(j));
        return den > 0 ? num / den : 0.0;
    };

    for (double s_exp : {0.5, 1.0, 2.0, 4.0}) {
        double prev = -1.0;
        bool adapted_bounded = true;
        for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
            double r = ratio(adapted, 0, eps, s_exp, rng);
            if (prev >= 0 && r > 50.0 * std::max(prev, 1.0)) adapted_bounded = false;
            prev = r;
        }
        CHECK(adapted_bounded);
    }
    // the cusp map blows up along the regime where the transverse part dominates
    double r_coarse = ratio(cusp, 0, 1e-2, 4.0, rng);
    double r_fine = ratio(cusp, 0, 1e-4, 4.0, rng);
    CHECK(r_fine > 100.0 * r_coarse);
}

TEST_CASE("property: assembling and extracting homogeneous factors round-trips") {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        int d1 = 1 + trial % 2, d2 = 1 + (trial / 2) % 2;
        int k1 = 2 + trial % 3, k2 = 2 + (trial / 3) % 3;
        auto H1 = random_homogeneous(d1, k1, rng);
        auto H2 = random_homogeneous(d2, k2, rng);
        auto q = make_quasihomogeneous(BlockStructure({d1, d2}, {k1, k2}), {H1, H2});
        auto germ = extract_quasihomogeneous_part(q.assembled(), BlockStructure({d1, d2}));
        CHECK(germ.adapted);
        for (int j = 0; j < 2; ++j) {
            const auto& in = q.factors[j];
            const auto& out = germ.quasihomogeneous_part.factors[j];
            for (int r = 0; r < in.output_dimension(); ++r)
                for (const auto& [e, c] : in.coords()[r])
                    CHECK(std::abs(out.coefficient(r, e) - c) == 0.0);
        }
    }
}
