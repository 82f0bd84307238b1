#include "bottcher/green.hpp"

#include <algorithm>
#include <cmath>

#include "bottcher/numeric.hpp"

namespace bottcher {

ExtendedReal extended_max(const std::vector<ExtendedReal>& values) {
    ExtendedReal out = ExtendedReal::minus_infinity();
    for (const auto& v : values) {
        if (!v.finite) continue;
        if (!out.finite || v.value > out.value) out = v;
    }
    return out;
}

double contraction_radius(const PolyMap& F) {
    // |F(v)| <= sqrt(sum_r (sum_a |c_a| r^{|a|})^2) for |v| <= r
    auto bound = [&](double r) {
        double sq = 0.0;
        for (const auto& terms : F.coords()) {
            double row = 0.0;
            for (const auto& [e, c] : terms) {
                int deg = 0;
                for (int k : e) deg += k;
                row += std::abs(c) * std::pow(r, deg);
            }
            sq += row * row;
        }
        return std::sqrt(sq);
    };
    double r = 1.0;
    for (int it = 0; it < 60; ++it) {
        if (bound(r) <= 0.5 * r) return r;
        r *= 0.5;
    }
    return r;
}

namespace {

GreenEvaluator build_evaluator(PolyMap map, QuasihomogeneousMap model, const GreenOptions& opts) {
    GreenEvaluator ev;
    ev.map = std::move(map);
    ev.model = std::move(model);
    ev.compiled_map = CompiledPolyMap(ev.map);
    for (const auto& factor : ev.model.factors) ev.compiled_factors.emplace_back(factor);
    ev.capture_radius = opts.capture_radius.value_or(contraction_radius(ev.map));
    if (opts.n_max) ev.n_max = *opts.n_max;
    if (opts.escape_radius) ev.escape_radius = *opts.escape_radius;
    if (opts.sublevel_threshold) ev.sublevel_threshold = *opts.sublevel_threshold;
    if (opts.tol) ev.tol = *opts.tol;
    ev.compensated_accumulation = opts.compensated_accumulation;
    return ev;
}

// Per-block renormalized continuation: starting from block value w_j at orbit
// index n0, appends G_j^{n} for n > n0 by iterating the homogeneous factor on
// the unit sphere of the block.
struct BlockTail {
    bool infinite = false;       // block value is exactly 0
    Eigen::VectorXcd direction;  // unit vector
    double reduced_log = 0.0;    // k^{-s} Lambda_s, so G^{n0+s} = k^{-n0} reduced_log
    CompensatedSum comp;
    double plain = 0.0;
    bool use_comp = false;
};

}  // namespace

GreenEvaluator make_green_evaluator(const AdaptedGerm& germ, const GreenOptions& opts) {
    for (const auto& verdict : germ.factor_verdicts)
        if (!verdict.nondegenerate())
            throw StructuralError("green evaluator: degenerate quasihomogeneous factor");
    return build_evaluator(germ.map, germ.quasihomogeneous_part, opts);
}

GreenEvaluator make_green_evaluator(const QuasihomogeneousMap& model, const GreenOptions& opts) {
    return build_evaluator(model.assembled(), model, opts);
}

namespace {

// Core trace computation. min_trace entries are always produced (up to n_max)
// even after convergence, so sublevel membership at a given n stays exact.
GreenValue green_core(const GreenEvaluator& ev, const BlockVector& v, int min_trace) {
    const auto& blocks = ev.map.input_blocks();
    const int p = blocks.block_count();
    GreenValue out;
    out.trace.reserve(16);

    auto record = [&](const std::vector<ExtendedReal>& row) { out.trace.push_back(row); };

    // phase 1: exact orbit
    Eigen::VectorXcd x = v.coords();
    std::vector<BlockTail> tails(p);
    int n = 0;
    bool switched = false;
    while (true) {
        std::vector<ExtendedReal> row(p);
        for (int j = 0; j < p; ++j) {
            const int off = blocks.offset(j), d = blocks.dims[j];
            double norm = d > 0 ? x.segment(off, d).norm() : 0.0;
            row[j] = norm > 0.0
                         ? ExtendedReal::of(std::log(norm) / std::pow(double(blocks.degree(j)), n))
                         : ExtendedReal::minus_infinity();
        }
        record(row);
        double norm = x.norm();
        if (norm > ev.escape_radius)
            throw OrbitEscapeError("orbit left the working ball", n, norm);
        if (norm <= ev.switch_radius || n >= ev.n_max) {
            switched = norm <= ev.switch_radius;
            break;
        }
        x = ev.compiled_map.eval(x);
        ++n;
    }

    // phase 2: renormalized per-block continuation with the model factors
    if (switched && n < ev.n_max) {
        const int n0 = n;
        for (int j = 0; j < p; ++j) {
            auto& tail = tails[j];
            const int off = blocks.offset(j), d = blocks.dims[j];
            double norm = d > 0 ? x.segment(off, d).norm() : 0.0;
            if (norm == 0.0) {
                tail.infinite = true;
                continue;
            }
            tail.direction = x.segment(off, d) / norm;
            tail.plain = std::log(norm);
            tail.use_comp = ev.compensated_accumulation;
            if (tail.use_comp) tail.comp.add(std::log(norm));
            tail.reduced_log = std::log(norm);
        }
        while (n < ev.n_max) {
            ++n;
            std::vector<ExtendedReal> row(p);
            for (int j = 0; j < p; ++j) {
                auto& tail = tails[j];
                if (tail.infinite || blocks.dims[j] == 0) {
                    row[j] = ExtendedReal::minus_infinity();
                    continue;
                }
                const double kj = double(blocks.degree(j));
                Eigen::VectorXcd b = ev.compiled_factors[j].eval(tail.direction);
                double bn = b.norm();
                // nondegenerate factors keep bn > 0; guard anyway
                if (bn == 0.0) {
                    tail.infinite = true;
                    row[j] = ExtendedReal::minus_infinity();
                    continue;
                }
                double increment = std::log(bn) / std::pow(kj, n - n0);
                if (tail.use_comp) {
                    tail.comp.add(increment);
                    tail.reduced_log = tail.comp.value();
                } else {
                    tail.plain += increment;
                    tail.reduced_log = tail.plain;
                }
                tail.direction = b / bn;
                row[j] = ExtendedReal::of(tail.reduced_log / std::pow(kj, n0));
            }
            record(row);

            // converged (all finite blocks stable) and past the requested length?
            if (n >= min_trace) {
                bool done = true;
                for (int j = 0; j < p; ++j) {
                    const auto& cur = out.trace[n][j];
                    const auto& prev = out.trace[n - 1][j];
                    if (!cur.finite || !prev.finite) continue;
                    if (std::abs(cur.value - prev.value) >= ev.tol * 1e-3) done = false;
                }
                if (done) break;
            }
        }
    }

    // per-block first convergence
    out.per_block.assign(p, ExtendedReal::minus_infinity());
    int n_used = 0;
    for (int j = 0; j < p; ++j) {
        int star = static_cast<int>(out.trace.size()) - 1;
        for (std::size_t i = 1; i < out.trace.size(); ++i) {
            const auto& cur = out.trace[i][j];
            const auto& prev = out.trace[i - 1][j];
            if (!cur.finite && !prev.finite) {
                star = static_cast<int>(i);
                break;
            }
            if (cur.finite && prev.finite && std::abs(cur.value - prev.value) < ev.tol) {
                star = static_cast<int>(i);
                break;
            }
        }
        out.per_block[j] = out.trace[star][j];
        if (out.per_block[j].finite) n_used = std::max(n_used, star);
    }
    out.n_used = n_used;
    out.max_value = extended_max(out.per_block);
    return out;
}

}  // namespace

GreenValue green_adapted(const GreenEvaluator& ev, const BlockVector& v) {
    GreenValue value = green_core(ev, v, 0);
    // functional-equation self check G_j(F v) = k_j G_j(v)
    BlockVector fv = ev.map.eval(v);
    GreenValue next = green_core(ev, fv, 0);
    const auto& blocks = ev.map.input_blocks();
    value.functional_residual.assign(blocks.block_count(), 0.0);
    for (int j = 0; j < blocks.block_count(); ++j) {
        if (!value.per_block[j].finite || !next.per_block[j].finite) continue;
        value.functional_residual[j] =
            std::abs(next.per_block[j].value - blocks.degree(j) * value.per_block[j].value);
    }
    return value;
}

HomogeneousGreenValue green_homogeneous(const QuasihomogeneousMap& H, const BlockVector& v) {
    for (int j = 0; j < H.blocks.block_count(); ++j) {
        if (H.blocks.dims[j] == 0) continue;
        auto verdict = check_nondegenerate(H.factors[j], 4000);
        if (!verdict.nondegenerate())
            throw StructuralError("green_homogeneous: degenerate factor");
    }
    GreenOptions opts;
    opts.escape_radius = 1e300;  // no working-ball restriction for the model
    GreenEvaluator ev = make_green_evaluator(H, opts);
    // renormalized continuation works from any starting norm: force the switch
    ev.switch_radius = 1e300;
    HomogeneousGreenValue out;
    out.green = green_core(ev, v, 0);
    out.green.functional_residual.assign(H.blocks.block_count(), 0.0);
    // functional equation attached as in the adapted case
    GreenValue next = green_core(ev, ev.map.eval(v), 0);
    for (int j = 0; j < H.blocks.block_count(); ++j) {
        if (!out.green.per_block[j].finite || !next.per_block[j].finite) continue;
        out.green.functional_residual[j] = std::abs(
            next.per_block[j].value - H.blocks.degree(j) * out.green.per_block[j].value);
    }
    if (out.green.max_value.finite && v.norm() > 0.0)
        out.homogeneity_offset = std::abs(out.green.max_value.value - std::log(v.norm()));
    return out;
}

std::vector<bool> sublevel_membership(const GreenEvaluator& ev, const BlockVector& v, int n) {
    if (n > ev.n_max) throw StructuralError("sublevel level exceeds the iteration budget");
    GreenValue value = green_core(ev, v, n);
    const int p = ev.map.input_blocks().block_count();
    std::vector<bool> members(p, false);
    int idx = std::min<int>(n, static_cast<int>(value.trace.size()) - 1);
    for (int j = 0; j < p; ++j)
        members[j] = value.trace[idx][j].less_than(-ev.sublevel_threshold);
    return members;
}

BasinClass classify_basin(const GreenEvaluator& ev, const BlockVector& v) {
    Eigen::VectorXcd x = v.coords();
    for (int n = 0; n <= ev.n_max; ++n) {
        double norm = x.norm();
        if (norm < ev.capture_radius) return BasinClass::Attracted;
        if (norm > ev.escape_radius) return BasinClass::Escaped;
        x = ev.compiled_map.eval(x);
    }
    return BasinClass::Undecided;
}

}  // namespace bottcher
