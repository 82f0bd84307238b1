#include "bottcher/algebra.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bottcher/numeric.hpp"

namespace bottcher {

namespace {

int exponent_degree(const Exponent& e) {
    return std::accumulate(e.begin(), e.end(), 0);
}

bool nonneg(const Exponent& e) {
    return std::all_of(e.begin(), e.end(), [](int k) { return k >= 0; });
}

}  // namespace

// ---------------------------------------------------------------------------
// BlockStructure / BlockVector

BlockStructure::BlockStructure(std::vector<int> dims_, std::vector<int> degrees_)
    : dims(std::move(dims_)), degrees(std::move(degrees_)) {
    if (dims.empty()) throw StructuralError("block structure needs at least one block");
    for (int d : dims)
        if (d < 0) throw StructuralError("negative block dimension");
    if (!degrees.empty()) {
        if (degrees.size() != dims.size())
            throw StructuralError("degree list does not match block list");
        for (int k : degrees)
            if (k < 2) throw StructuralError("multidegree entries must be >= 2");
    }
}

int BlockStructure::dimension() const {
    return std::accumulate(dims.begin(), dims.end(), 0);
}

int BlockStructure::offset(int block) const {
    int off = 0;
    for (int j = 0; j < block; ++j) off += dims[j];
    return off;
}

int BlockStructure::degree(int block) const {
    if (degrees.empty()) throw StructuralError("block structure carries no degrees");
    return degrees[block];
}

BlockStructure single_block(int m, int degree) {
    return degree > 0 ? BlockStructure({m}, {degree}) : BlockStructure({m});
}

BlockVector::BlockVector(BlockStructure structure, Eigen::VectorXcd coords)
    : structure_(std::move(structure)), coords_(std::move(coords)) {
    if (coords_.size() != structure_.dimension())
        throw DimensionMismatchError("coordinate count does not match block structure");
}

BlockVector BlockVector::zero(const BlockStructure& s) {
    return BlockVector(s, Eigen::VectorXcd::Zero(s.dimension()));
}

Eigen::VectorXcd BlockVector::block(int j) const {
    return coords_.segment(structure_.offset(j), structure_.dims[j]);
}

BlockVector BlockVector::project(int j) const {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(coords_.size());
    out.segment(structure_.offset(j), structure_.dims[j]) =
        coords_.segment(structure_.offset(j), structure_.dims[j]);
    return BlockVector(structure_, std::move(out));
}

BlockVector operator+(const BlockVector& a, const BlockVector& b) {
    if (a.dimension() != b.dimension()) throw DimensionMismatchError("block vector sizes differ");
    return BlockVector(a.structure_, a.coords_ + b.coords_);
}

BlockVector operator-(const BlockVector& a, const BlockVector& b) {
    if (a.dimension() != b.dimension()) throw DimensionMismatchError("block vector sizes differ");
    return BlockVector(a.structure_, a.coords_ - b.coords_);
}

BlockVector operator*(Complex s, const BlockVector& v) {
    return BlockVector(v.structure_, s * v.coords_);
}

// ---------------------------------------------------------------------------
// PolyMap

PolyMap::PolyMap(BlockStructure in, BlockStructure out, std::vector<Terms> coords,
                 std::optional<int> truncation_degree)
    : in_(std::move(in)), out_(std::move(out)), coords_(std::move(coords)),
      truncation_degree_(truncation_degree) {
    if (static_cast<int>(coords_.size()) != out_.dimension())
        throw DimensionMismatchError("coordinate functions do not match output dimension");
    const int m = in_.dimension();
    for (auto& terms : coords_) {
        for (auto it = terms.begin(); it != terms.end();) {
            if (static_cast<int>(it->first.size()) != m)
                throw DimensionMismatchError("exponent length does not match input dimension");
            if (!nonneg(it->first)) throw StructuralError("negative exponent");
            if (it->second == Complex(0.0, 0.0))
                it = terms.erase(it);
            else
                ++it;
        }
    }
}

PolyMap PolyMap::identity(const BlockStructure& s) {
    const int m = s.dimension();
    std::vector<Terms> coords(m);
    for (int i = 0; i < m; ++i) {
        Exponent e(m, 0);
        e[i] = 1;
        coords[i][e] = 1.0;
    }
    return PolyMap(s, s, std::move(coords));
}

PolyMap PolyMap::zero(BlockStructure in, BlockStructure out) {
    std::vector<Terms> coords(out.dimension());
    return PolyMap(std::move(in), std::move(out), std::move(coords));
}

int PolyMap::total_degree() const {
    int deg = 0;
    for (const auto& terms : coords_)
        for (const auto& [e, c] : terms) deg = std::max(deg, exponent_degree(e));
    return deg;
}

int PolyMap::min_degree() const {
    int deg = -1;
    for (const auto& terms : coords_)
        for (const auto& [e, c] : terms) {
            int d = exponent_degree(e);
            if (deg < 0 || d < deg) deg = d;
        }
    return deg < 0 ? 0 : deg;
}

std::size_t PolyMap::term_count() const {
    std::size_t n = 0;
    for (const auto& terms : coords_) n += terms.size();
    return n;
}

void PolyMap::set_coefficient(int coord, Exponent e, Complex c) {
    if (static_cast<int>(e.size()) != input_dimension())
        throw DimensionMismatchError("exponent length does not match input dimension");
    if (c == Complex(0.0, 0.0))
        coords_[coord].erase(e);
    else
        coords_[coord][std::move(e)] = c;
}

Complex PolyMap::coefficient(int coord, const Exponent& e) const {
    auto it = coords_[coord].find(e);
    return it == coords_[coord].end() ? Complex(0.0) : it->second;
}

Eigen::VectorXcd PolyMap::eval(const Eigen::VectorXcd& v) const {
    if (v.size() != input_dimension())
        throw DimensionMismatchError("input vector does not match map dimension");
    const int m = input_dimension();
    Eigen::VectorXcd out(output_dimension());
    for (int r = 0; r < output_dimension(); ++r) {
        const auto& terms = coords_[r];
        const bool compensated = terms.size() >= 10000;
        CompensatedComplexSum csum;
        Complex plain(0.0);
        for (const auto& [e, c] : terms) {
            Complex t = c;
            for (int i = 0; i < m; ++i)
                for (int k = 0; k < e[i]; ++k) t *= v[i];
            if (compensated)
                csum.add(t);
            else
                plain += t;
        }
        out[r] = compensated ? csum.value() : plain;
    }
    return out;
}

BlockVector PolyMap::eval(const BlockVector& v) const {
    return BlockVector(out_, eval(v.coords()));
}

PolyMap PolyMap::with_blocks(BlockStructure in, BlockStructure out) const {
    PolyMap copy(std::move(in), std::move(out), coords_, truncation_degree_);
    if (truncation_dropped_) copy.mark_truncation_dropped();
    return copy;
}

PolyMap PolyMap::with_truncation(std::optional<int> trunc) const {
    PolyMap copy(in_, out_, coords_, trunc);
    if (truncation_dropped_) copy.mark_truncation_dropped();
    return copy;
}

PolyMap partial_derivative(const PolyMap& P, int var) {
    std::vector<PolyMap::Terms> coords(P.output_dimension());
    for (int r = 0; r < P.output_dimension(); ++r) {
        for (const auto& [e, c] : P.coords()[r]) {
            if (e[var] == 0) continue;
            Exponent d = e;
            d[var] -= 1;
            coords[r][d] += c * double(e[var]);
        }
        for (auto it = coords[r].begin(); it != coords[r].end();)
            it = (it->second == Complex(0.0)) ? coords[r].erase(it) : std::next(it);
    }
    return PolyMap(P.input_blocks(), P.output_blocks(), std::move(coords));
}

JacobianMatrix jacobian(const PolyMap& P, const BlockVector& v) {
    if (v.dimension() != P.input_dimension())
        throw DimensionMismatchError("jacobian base point does not match map dimension");
    const int m = P.input_dimension();
    Eigen::MatrixXcd J(P.output_dimension(), m);
    for (int c = 0; c < m; ++c)
        J.col(c) = partial_derivative(P, c).eval(v.coords());
    return JacobianMatrix{std::move(J), v};
}

PolyMap::Terms multiply_terms(const PolyMap::Terms& a, const PolyMap::Terms& b,
                              std::optional<int> trunc, bool* dropped) {
    PolyMap::Terms out;
    for (const auto& [ea, ca] : a) {
        const int da = exponent_degree(ea);
        for (const auto& [eb, cb] : b) {
            if (trunc && da + exponent_degree(eb) > *trunc) {
                if (dropped) *dropped = true;
                continue;
            }
            Exponent e(ea.size());
            for (std::size_t i = 0; i < e.size(); ++i) e[i] = ea[i] + eb[i];
            out[e] += ca * cb;
        }
    }
    for (auto it = out.begin(); it != out.end();)
        it = (it->second == Complex(0.0)) ? out.erase(it) : std::next(it);
    return out;
}

PolyMap compose(const PolyMap& P, const PolyMap& Q, int trunc) {
    if (Q.output_dimension() != P.input_dimension())
        throw DimensionMismatchError("compose: output of Q does not match input of P");
    const int nv = Q.input_dimension();
    bool dropped = false;

    Exponent zero_exp(nv, 0);
    PolyMap::Terms one;
    one[zero_exp] = 1.0;

    // memoized powers Q_i^k
    std::vector<std::vector<PolyMap::Terms>> powers(P.input_dimension());
    auto power = [&](int i, int k) -> const PolyMap::Terms& {
        auto& cache = powers[i];
        if (cache.empty()) cache.push_back(one);
        while (static_cast<int>(cache.size()) <= k)
            cache.push_back(multiply_terms(cache.back(), Q.coords()[i], trunc, &dropped));
        return cache[k];
    };

    std::vector<PolyMap::Terms> coords(P.output_dimension());
    for (int r = 0; r < P.output_dimension(); ++r) {
        for (const auto& [e, c] : P.coords()[r]) {
            PolyMap::Terms term = one;
            for (int i = 0; i < P.input_dimension(); ++i)
                if (e[i] > 0) term = multiply_terms(term, power(i, e[i]), trunc, &dropped);
            for (const auto& [me, mc] : term) coords[r][me] += c * mc;
        }
        for (auto it = coords[r].begin(); it != coords[r].end();)
            it = (it->second == Complex(0.0)) ? coords[r].erase(it) : std::next(it);
    }
    PolyMap result(Q.input_blocks(), P.output_blocks(), std::move(coords), trunc);
    if (dropped) result.mark_truncation_dropped();
    return result;
}

PolyMap homogeneous_part(const PolyMap& P, int d) {
    if (d < 0) throw StructuralError("homogeneous part of negative degree");
    std::vector<PolyMap::Terms> coords(P.output_dimension());
    for (int r = 0; r < P.output_dimension(); ++r)
        for (const auto& [e, c] : P.coords()[r])
            if (exponent_degree(e) == d) coords[r][e] = c;
    return PolyMap(P.input_blocks(), P.output_blocks(), std::move(coords));
}

PolyMap add(const PolyMap& a, const PolyMap& b) {
    if (a.input_dimension() != b.input_dimension() || a.output_dimension() != b.output_dimension())
        throw DimensionMismatchError("add: map dimensions differ");
    std::vector<PolyMap::Terms> coords = a.coords();
    for (int r = 0; r < b.output_dimension(); ++r)
        for (const auto& [e, c] : b.coords()[r]) {
            coords[r][e] += c;
            if (coords[r][e] == Complex(0.0)) coords[r].erase(e);
        }
    return PolyMap(a.input_blocks(), a.output_blocks(), std::move(coords));
}

PolyMap subtract(const PolyMap& a, const PolyMap& b) { return add(a, scale(-1.0, b)); }

PolyMap scale(Complex s, const PolyMap& a) {
    std::vector<PolyMap::Terms> coords(a.output_dimension());
    if (s != Complex(0.0))
        for (int r = 0; r < a.output_dimension(); ++r)
            for (const auto& [e, c] : a.coords()[r]) coords[r][e] = s * c;
    return PolyMap(a.input_blocks(), a.output_blocks(), std::move(coords));
}

// ---------------------------------------------------------------------------
// Root finding

Complex eval_poly(const std::vector<Complex>& coeffs, Complex z) {
    Complex acc(0.0);
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * z + *it;
    return acc;
}

namespace {

Complex eval_poly_derivative(const std::vector<Complex>& coeffs, Complex z) {
    Complex acc(0.0);
    for (int k = static_cast<int>(coeffs.size()) - 1; k >= 1; --k)
        acc = acc * z + double(k) * coeffs[k];
    return acc;
}

}  // namespace

std::vector<Complex> poly_roots(const std::vector<Complex>& coeffs_in) {
    std::vector<Complex> coeffs = coeffs_in;
    while (!coeffs.empty() && coeffs.back() == Complex(0.0)) coeffs.pop_back();
    if (coeffs.size() < 2) throw StructuralError("poly_roots needs degree >= 1");

    double coeff_scale = 0.0;
    for (const auto& c : coeffs_in) coeff_scale = std::max(coeff_scale, std::abs(c));

    // factor out roots at the origin
    std::vector<Complex> roots;
    std::size_t first = 0;
    while (first < coeffs.size() - 1 && coeffs[first] == Complex(0.0)) {
        roots.push_back(0.0);
        ++first;
    }
    std::vector<Complex> p(coeffs.begin() + first, coeffs.end());
    const int n = static_cast<int>(p.size()) - 1;

    if (n >= 1) {
        // monic normalization and Fujiwara bound
        const Complex lead = p.back();
        for (auto& c : p) c /= lead;
        double radius = 0.0;
        for (int k = 1; k <= n; ++k)
            radius = std::max(radius, std::pow(std::abs(p[n - k]), 1.0 / k));
        radius = std::max(2.0 * radius, 1e-3);

        std::vector<Complex> z(n);
        for (int i = 0; i < n; ++i) {
            double theta = 2.0 * M_PI * (i + 0.25) / n + 0.42;
            z[i] = radius * Complex(std::cos(theta), std::sin(theta));
        }

        const int max_iters = 400;
        bool converged = false;
        for (int iter = 0; iter < max_iters && !converged; ++iter) {
            double max_step = 0.0;
            for (int i = 0; i < n; ++i) {
                Complex pv = eval_poly(p, z[i]);
                Complex dv = eval_poly_derivative(p, z[i]);
                if (pv == Complex(0.0)) continue;
                Complex newton = (dv == Complex(0.0)) ? Complex(0.0) : pv / dv;
                Complex repulsion(0.0);
                for (int j = 0; j < n; ++j)
                    if (j != i && z[i] != z[j]) repulsion += 1.0 / (z[i] - z[j]);
                Complex denom = 1.0 - newton * repulsion;
                Complex step = (std::abs(denom) > 1e-300) ? newton / denom : newton;
                z[i] -= step;
                max_step = std::max(max_step, std::abs(step) / (1.0 + std::abs(z[i])));
            }
            converged = max_step < 1e-14;
        }

        // Newton polishing (skipped near multiple roots, where it cannot help)
        for (int i = 0; i < n; ++i) {
            for (int it = 0; it < 3; ++it) {
                Complex pv = eval_poly(p, z[i]);
                Complex dv = eval_poly_derivative(p, z[i]);
                if (std::abs(dv) < 1e-13 * (1.0 + std::abs(pv))) break;
                z[i] -= pv / dv;
            }
        }

        for (int i = 0; i < n; ++i) roots.push_back(z[i]);
    }

    const int deg = static_cast<int>(coeffs.size()) - 1;
    for (const auto& r : roots) {
        double tol = 1e-10 * std::pow(1.0 + std::abs(r), deg) * coeff_scale;
        if (std::abs(eval_poly(coeffs, r)) > tol)
            throw RootFindingError("poly_roots: residual above tolerance after iteration budget",
                                   roots);
    }
    std::sort(roots.begin(), roots.end(), [](const Complex& a, const Complex& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    return roots;
}

// ---------------------------------------------------------------------------
// Compiled evaluation

CompiledPolyMap::CompiledPolyMap(const PolyMap& P) {
    nvars_ = P.input_dimension();
    max_pow_.assign(nvars_, 0);
    coord_begin_.push_back(0);
    min_degree_ = -1;
    max_degree_ = 0;
    for (const auto& terms : P.coords()) {
        for (const auto& [e, c] : terms) {
            for (int i = 0; i < nvars_; ++i) {
                exps_.push_back(e[i]);
                max_pow_[i] = std::max(max_pow_[i], e[i]);
            }
            int d = exponent_degree(e);
            term_degree_.push_back(d);
            min_degree_ = (min_degree_ < 0) ? d : std::min(min_degree_, d);
            max_degree_ = std::max(max_degree_, d);
            coeffs_.push_back(c);
        }
        coord_begin_.push_back(static_cast<int>(coeffs_.size()));
    }
    if (min_degree_ < 0) min_degree_ = 0;
}

Eigen::VectorXcd CompiledPolyMap::eval(const Eigen::VectorXcd& v) const {
    return eval_scaled(v, 0.0, 0);
}

Eigen::VectorXcd CompiledPolyMap::eval_scaled(const Eigen::VectorXcd& u, double log_scale,
                                              int base_degree) const {
    if (u.size() != nvars_) throw DimensionMismatchError("compiled eval: wrong input size");
    // power tables
    static thread_local std::vector<std::vector<Complex>> pow_table;
    pow_table.resize(nvars_);
    for (int i = 0; i < nvars_; ++i) {
        auto& tab = pow_table[i];
        tab.resize(max_pow_[i] + 1);
        tab[0] = 1.0;
        for (int k = 1; k <= max_pow_[i]; ++k) tab[k] = tab[k - 1] * u[i];
    }
    const int ncoords = output_dimension();
    Eigen::VectorXcd out(ncoords);
    for (int r = 0; r < ncoords; ++r) {
        const int begin = coord_begin_[r], end = coord_begin_[r + 1];
        const bool compensated = (end - begin) >= 10000;
        CompensatedComplexSum csum;
        Complex plain(0.0);
        for (int t = begin; t < end; ++t) {
            double scale_exp = (term_degree_[t] - base_degree) * log_scale;
            if (scale_exp < -745.0) continue;  // underflows to zero exactly
            Complex term = coeffs_[t];
            const int* e = &exps_[static_cast<std::size_t>(t) * nvars_];
            for (int i = 0; i < nvars_; ++i)
                if (e[i] > 0) term *= pow_table[i][e[i]];
            if (scale_exp != 0.0) term *= std::exp(scale_exp);
            if (compensated)
                csum.add(term);
            else
                plain += term;
        }
        out[r] = compensated ? csum.value() : plain;
    }
    return out;
}

Eigen::VectorXcd CompiledPolyMap::eval_anisotropic(const Eigen::VectorXcd& u,
                                                   const std::vector<double>& var_log_scales,
                                                   const std::vector<double>& out_bases) const {
    if (u.size() != nvars_ || static_cast<int>(var_log_scales.size()) != nvars_)
        throw DimensionMismatchError("anisotropic eval: wrong input size");
    if (static_cast<int>(out_bases.size()) != output_dimension())
        throw DimensionMismatchError("anisotropic eval: one base per output coordinate");
    static thread_local std::vector<std::vector<Complex>> pow_table;
    pow_table.resize(nvars_);
    for (int i = 0; i < nvars_; ++i) {
        auto& tab = pow_table[i];
        tab.resize(max_pow_[i] + 1);
        tab[0] = 1.0;
        for (int k = 1; k <= max_pow_[i]; ++k) tab[k] = tab[k - 1] * u[i];
    }
    const int ncoords = output_dimension();
    Eigen::VectorXcd out(ncoords);
    for (int r = 0; r < ncoords; ++r) {
        Complex acc(0.0);
        for (int t = coord_begin_[r]; t < coord_begin_[r + 1]; ++t) {
            const int* e = &exps_[static_cast<std::size_t>(t) * nvars_];
            double log_factor = -out_bases[r];
            for (int i = 0; i < nvars_; ++i)
                if (e[i] > 0) log_factor += e[i] * var_log_scales[i];
            if (!(log_factor < 700.0))
                throw NumericalError("anisotropic eval: scale factor overflow");
            if (log_factor < -745.0) continue;
            Complex term = coeffs_[t] * std::exp(log_factor);
            for (int i = 0; i < nvars_; ++i)
                if (e[i] > 0) term *= pow_table[i][e[i]];
            acc += term;
        }
        out[r] = acc;
    }
    return out;
}

std::vector<double> CompiledPolyMap::max_exponent_dot(
    const std::vector<double>& var_log_scales) const {
    std::vector<double> bases(output_dimension(), -1e300);
    for (int r = 0; r < output_dimension(); ++r) {
        for (int t = coord_begin_[r]; t < coord_begin_[r + 1]; ++t) {
            const int* e = &exps_[static_cast<std::size_t>(t) * nvars_];
            double dot = 0.0;
            bool dead = false;
            for (int i = 0; i < nvars_ && !dead; ++i) {
                if (e[i] == 0) continue;
                if (var_log_scales[i] <= -1e250) dead = true;
                dot += e[i] * var_log_scales[i];
            }
            if (!dead) bases[r] = std::max(bases[r], dot);
        }
    }
    return bases;
}

CompiledJacobian::CompiledJacobian(const PolyMap& P) {
    rows_ = P.output_dimension();
    cols_ = P.input_dimension();
    std::vector<PolyMap::Terms> flat;
    flat.reserve(static_cast<std::size_t>(rows_) * cols_);
    for (int r = 0; r < rows_; ++r)
        for (int c = 0; c < cols_; ++c) {
            PolyMap::Terms terms;
            for (const auto& [e, coeff] : P.coords()[r]) {
                if (e[c] == 0) continue;
                Exponent d = e;
                d[c] -= 1;
                terms[d] += coeff * double(e[c]);
            }
            flat.push_back(std::move(terms));
        }
    BlockStructure out_rows(std::vector<int>{rows_ * cols_});
    flat_ = CompiledPolyMap(PolyMap(P.input_blocks(), out_rows, std::move(flat)));
}

Eigen::MatrixXcd CompiledJacobian::eval(const Eigen::VectorXcd& v) const {
    return eval_scaled(v, 0.0, 1);
}

Eigen::MatrixXcd CompiledJacobian::eval_scaled(const Eigen::VectorXcd& u, double log_scale,
                                               int base_degree) const {
    Eigen::VectorXcd entries = flat_.eval_scaled(u, log_scale, base_degree - 1);
    Eigen::MatrixXcd J(rows_, cols_);
    for (int r = 0; r < rows_; ++r)
        for (int c = 0; c < cols_; ++c) J(r, c) = entries[r * cols_ + c];
    return J;
}

Eigen::MatrixXcd CompiledJacobian::eval_anisotropic(const Eigen::VectorXcd& u,
                                                    const std::vector<double>& var_log_scales,
                                                    const std::vector<double>& row_bases) const {
    // The stored entry (r, c) carries the monomials a - e_c of dF_r/dv_c; the
    // exponent sum of the undifferentiated monomial is recovered by shifting
    // the base of that entry by the scale of the differentiated variable.
    std::vector<double> bases(static_cast<std::size_t>(rows_) * cols_);
    for (int r = 0; r < rows_; ++r)
        for (int c = 0; c < cols_; ++c) {
            double vc = var_log_scales[c];
            bases[r * cols_ + c] = (vc <= -1e250) ? 1e260 : row_bases[r] - vc;
        }
    Eigen::VectorXcd entries = flat_.eval_anisotropic(u, var_log_scales, bases);
    Eigen::MatrixXcd J(rows_, cols_);
    for (int r = 0; r < rows_; ++r)
        for (int c = 0; c < cols_; ++c) J(r, c) = entries[r * cols_ + c];
    return J;
}

}  // namespace bottcher
