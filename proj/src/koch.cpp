#include "bottcher/koch.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "bottcher/numeric.hpp"

namespace bottcher::koch {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::VectorXcd recenter(Eigen::VectorXcd x) {
    Complex mean = x.sum() / double(x.size());
    for (int i = 0; i < x.size(); ++i) x[i] -= mean;
    return x;
}

}  // namespace

KochSpec make_spec(int m) {
    if (m < 2) throw StructuralError("the family needs m >= 2");
    return KochSpec{m};
}

bool is_zero_average(const Eigen::VectorXcd& x, double tol) {
    double scale = 0.0;
    for (int i = 0; i < x.size(); ++i) scale = std::max(scale, std::abs(x[i]));
    return std::abs(x.sum()) <= tol * double(x.size()) * std::max(scale, 1.0);
}

Eigen::MatrixXcd zero_average_basis(int n) {
    Eigen::MatrixXcd Q = Eigen::MatrixXcd::Zero(n, n - 1);
    for (int r = 1; r < n; ++r) {
        double norm = std::sqrt(double(r) * (r + 1));
        for (int i = 0; i < r; ++i) Q(i, r - 1) = 1.0 / norm;
        Q(r, r - 1) = -double(r) / norm;
    }
    return Q;
}

// ---------------------------------------------------------------------------
// The ambient polynomial map

namespace {

using Terms = PolyMap::Terms;

// elementary symmetric polynomials of x_0..x_{m-1} as scalar term maps
std::vector<Terms> elementary_symmetric(int m) {
    std::vector<Terms> e(m + 1);
    e[0][Exponent(m, 0)] = 1.0;
    // iteratively multiply (1 + x_i t) and collect t-coefficients
    for (int i = 0; i < m; ++i) {
        for (int k = std::min(i + 1, m); k >= 1; --k) {
            // e_k += x_i * e_{k-1}
            for (const auto& [exp, c] : e[k - 1]) {
                Exponent shifted = exp;
                shifted[i] += 1;
                e[k][shifted] += c;
            }
        }
    }
    return e;
}

PolyMap build_ambient_map(int m) {
    auto e = elementary_symmetric(m);
    // A(t) = sum_k (-1)^k e_k t^{m+1-k} / (m+1-k); A(x_i) substitutes t = x_i
    auto antiderivative_at = [&](int i) {
        Terms acc;
        for (int k = 0; k <= m; ++k) {
            double denom = double(m + 1 - k);
            double sign = (k % 2 == 0) ? 1.0 : -1.0;
            for (const auto& [exp, c] : e[k]) {
                Exponent shifted = exp;
                shifted[i] += m + 1 - k;
                acc[shifted] += sign * c / denom;
            }
        }
        return acc;
    };

    std::vector<Terms> a_at(m);
    Terms a_sum;
    for (int i = 0; i < m; ++i) {
        a_at[i] = antiderivative_at(i);
        for (const auto& [exp, c] : a_at[i]) a_sum[exp] += c;
    }

    // H_i = (m+1) A(x_i) - ((m+1)/m) sum_j A(x_j)
    std::vector<Terms> coords(m);
    const double mp1 = double(m + 1);
    for (int i = 0; i < m; ++i) {
        for (const auto& [exp, c] : a_at[i]) coords[i][exp] += mp1 * c;
        for (const auto& [exp, c] : a_sum) {
            coords[i][exp] -= (mp1 / double(m)) * c;
            if (std::abs(coords[i][exp]) < 1e-14) coords[i].erase(exp);
        }
    }
    BlockStructure blocks({m}, {m + 1});
    return PolyMap(blocks, blocks, std::move(coords));
}

}  // namespace

const PolyMap& koch_ambient_map(int m) {
    static std::mutex mu;
    static std::map<int, PolyMap> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(m);
    if (it == cache.end()) it = cache.emplace(m, build_ambient_map(m)).first;
    return it->second;
}

PolyMap koch_reduced_map(int m) {
    Eigen::MatrixXcd Q = zero_average_basis(m);
    const int d = m - 1;
    BlockStructure reduced(std::vector<int>{d}, std::vector<int>{m + 1});
    BlockStructure ambient(std::vector<int>{m});
    std::vector<Terms> embed(m);
    for (int i = 0; i < m; ++i)
        for (int c = 0; c < d; ++c) {
            if (Q(i, c) == Complex(0.0)) continue;
            Exponent e(d, 0);
            e[c] = 1;
            embed[i][e] = Q(i, c);
        }
    PolyMap inner = compose(koch_ambient_map(m), PolyMap(reduced, ambient, std::move(embed)),
                            m + 1);
    std::vector<Terms> coords(d);
    for (int r = 0; r < d; ++r)
        for (int i = 0; i < m; ++i) {
            Complex w = std::conj(Q(i, r));
            if (w == Complex(0.0)) continue;
            for (const auto& [e, c] : inner.coords()[i]) {
                coords[r][e] += w * c;
                if (std::abs(coords[r][e]) < 1e-14) coords[r].erase(e);
            }
        }
    return PolyMap(reduced, reduced, std::move(coords));
}

// ---------------------------------------------------------------------------
// Critical polynomials and the numeric family map

Complex CriticalPolynomial::eval(Complex t) const { return eval_poly(coeffs, t); }

Complex CriticalPolynomial::derivative(Complex t) const {
    Complex acc(0.0);
    for (int k = degree(); k >= 1; --k) acc = acc * t + double(k) * coeffs[k];
    return acc;
}

std::vector<Complex> CriticalPolynomial::derivative_coeffs() const {
    std::vector<Complex> d(coeffs.size() - 1);
    for (std::size_t k = 1; k < coeffs.size(); ++k) d[k - 1] = double(k) * coeffs[k];
    return d;
}

CriticalPolynomial build_px(const Eigen::VectorXcd& x) {
    const int m = static_cast<int>(x.size());
    if (m < 1) throw StructuralError("empty critical set");
    if (!is_zero_average(x))
        throw StructuralError("critical points must have zero average");

    // W(w) = prod (w - x_i), ascending coefficients
    std::vector<Complex> W{1.0};
    for (int i = 0; i < m; ++i) {
        std::vector<Complex> next(W.size() + 1, Complex(0.0));
        for (std::size_t j = 0; j < W.size(); ++j) {
            next[j + 1] += W[j];
            next[j] -= x[i] * W[j];
        }
        W = std::move(next);
    }

    // antiderivative with A(0) = 0
    std::vector<Complex> A(W.size() + 1, Complex(0.0));
    for (std::size_t j = 0; j < W.size(); ++j) A[j + 1] = W[j] / double(j + 1);

    Complex a_sum(0.0);
    for (int i = 0; i < m; ++i) a_sum += eval_poly(A, x[i]);

    CriticalPolynomial P;
    P.coeffs.resize(m + 2);
    const double mp1 = double(m + 1);
    for (std::size_t j = 0; j < A.size(); ++j) P.coeffs[j] = mp1 * A[j];
    P.coeffs[0] -= (mp1 / double(m)) * a_sum;
    P.source = x;
    return P;
}

Eigen::VectorXcd koch_h(const Eigen::VectorXcd& x) {
    auto P = build_px(x);
    Eigen::VectorXcd y(x.size());
    for (int i = 0; i < x.size(); ++i) y[i] = P.eval(x[i]);
    return recenter(y);
}

std::vector<Complex> fixed_point_polynomial(int m) {
    std::vector<Complex> p(m + 2, Complex(0.0));
    p[1] = double(m + 1) / double(m);
    p[m + 1] = 1.0;
    return p;
}

FixedPointCensus koch_fixed_points(int m) {
    if (m < 2) throw StructuralError("the family needs m >= 2");
    // critical points of the fixed polynomial: the m-th roots of -1/m
    std::vector<Complex> roots(m);
    const double radius = std::pow(1.0 / double(m), 1.0 / double(m));
    for (int r = 0; r < m; ++r) {
        double theta = kPi * (2.0 * r + 1.0) / double(m);
        roots[r] = radius * Complex(std::cos(theta), std::sin(theta));
    }

    const PolyMap& H = koch_ambient_map(m);
    std::vector<PolyMap> partials;
    for (int c = 0; c < m; ++c) partials.push_back(partial_derivative(H, c));
    Eigen::MatrixXcd Q = zero_average_basis(m);

    FixedPointCensus census;
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    double max_residual = 0.0;
    do {
        Eigen::VectorXcd x(m);
        for (int i = 0; i < m; ++i) x[i] = roots[perm[i]];
        // one Newton polish on the zero-average subspace
        Eigen::VectorXcd res = H.eval(x) - x;
        Eigen::MatrixXcd J(m, m);
        for (int c = 0; c < m; ++c) J.col(c) = partials[c].eval(x);
        Eigen::MatrixXcd Jr = Q.adjoint() * (J - Eigen::MatrixXcd::Identity(m, m)) * Q;
        Eigen::VectorXcd step = Jr.partialPivLu().solve(Q.adjoint() * res);
        x -= Q * step;
        max_residual = std::max(max_residual, (H.eval(x) - x).norm());
        census.points.push_back(std::move(x));
    } while (std::next_permutation(perm.begin(), perm.end()));

    census.max_residual = max_residual;
    census.min_pairwise_distance = 1e300;
    for (std::size_t i = 0; i < census.points.size(); ++i)
        for (std::size_t j = i + 1; j < census.points.size(); ++j)
            census.min_pairwise_distance = std::min(
                census.min_pairwise_distance, (census.points[i] - census.points[j]).norm());
    return census;
}

SpectrumResult koch_spectrum(const Eigen::VectorXcd& x) {
    const int m = static_cast<int>(x.size());
    const PolyMap& H = koch_ambient_map(m);
    Eigen::VectorXcd fx = H.eval(x);
    if ((fx - x).norm() > 1e-10 * std::max(1.0, x.norm()))
        throw StructuralError("spectrum requested at a non-fixed point");

    Eigen::MatrixXcd J(m, m);
    for (int c = 0; c < m; ++c) J.col(c) = partial_derivative(H, c).eval(x);
    Eigen::MatrixXcd Q = zero_average_basis(m);
    Eigen::MatrixXcd restricted = Q.adjoint() * J * Q;

    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(restricted);
    Eigen::VectorXcd eigen = solver.eigenvalues();
    std::vector<Complex> sorted(eigen.data(), eigen.data() + eigen.size());
    std::sort(sorted.begin(), sorted.end(),
              [](Complex a, Complex b) { return a.real() > b.real(); });

    SpectrumResult out;
    out.eigenvalues = Eigen::Map<Eigen::VectorXcd>(sorted.data(), sorted.size());
    for (int k = 1; k <= m - 1; ++k) {
        Eigen::VectorXcd w(m);
        for (int i = 0; i < m; ++i) w[i] = std::pow(x[i], k);
        double lambda = double(m + 1) / double(k);
        out.alignment_residuals.push_back((J * w - lambda * w).norm() / std::max(w.norm(), 1e-300));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Partitions and strata

Partition Partition::of(std::vector<std::vector<int>> blocks) {
    for (auto& b : blocks) {
        if (b.empty()) throw StructuralError("empty partition block");
        std::sort(b.begin(), b.end());
    }
    std::sort(blocks.begin(), blocks.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    // validate disjoint cover of 0..n-1
    std::vector<int> all;
    for (const auto& b : blocks) all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i)
        if (all[i] != static_cast<int>(i)) throw StructuralError("blocks do not partition 0..n-1");
    Partition p;
    p.blocks = std::move(blocks);
    return p;
}

Partition Partition::singletons(int m) {
    std::vector<std::vector<int>> blocks;
    for (int i = 0; i < m; ++i) blocks.push_back({i});
    return of(std::move(blocks));
}

int Partition::ground_size() const {
    int n = 0;
    for (const auto& b : blocks) n += static_cast<int>(b.size());
    return n;
}

int Partition::block_of(int i) const {
    for (int b = 0; b < block_count(); ++b)
        if (std::binary_search(blocks[b].begin(), blocks[b].end(), i)) return b;
    throw StructuralError("element outside the ground set");
}

bool is_contraction(const Partition& K, const Partition& J) {
    if (K.ground_size() != J.ground_size()) return false;
    // every block of J must be contained in a single block of K
    for (const auto& jb : J.blocks) {
        int target = K.block_of(jb.front());
        for (int i : jb)
            if (K.block_of(i) != target) return false;
    }
    return true;
}

std::vector<Partition> all_partitions(int m, int min_blocks) {
    // restricted-growth strings
    std::vector<Partition> out;
    std::vector<int> assign(m, 0);
    auto emit = [&]() {
        int nblocks = *std::max_element(assign.begin(), assign.end()) + 1;
        if (nblocks < min_blocks) return;
        std::vector<std::vector<int>> blocks(nblocks);
        for (int i = 0; i < m; ++i) blocks[assign[i]].push_back(i);
        out.push_back(Partition::of(std::move(blocks)));
    };
    auto rec = [&](auto&& self, int i, int maxused) -> void {
        if (i == m) {
            emit();
            return;
        }
        for (int b = 0; b <= maxused + 1; ++b) {
            assign[i] = b;
            self(self, i + 1, std::max(maxused, b));
        }
    };
    rec(rec, 1, 0);  // assign[0] = 0 fixed
    return out;
}

Eigen::MatrixXcd stratum_basis(int m, const Partition& J) {
    const int p = J.block_count();
    Eigen::MatrixXcd raw = Eigen::MatrixXcd::Zero(m, p);
    for (int b = 0; b < p; ++b) {
        for (int i : J.blocks[b]) raw(i, b) = 1.0;
        // project out the all-ones direction
        double weight = double(J.blocks[b].size()) / double(m);
        for (int i = 0; i < m; ++i) raw(i, b) -= weight;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(raw);
    Eigen::MatrixXcd Qfull = qr.householderQ();
    return Qfull.leftCols(p - 1);
}

Eigen::VectorXcd stratum_point(int m, const Partition& J, const Eigen::VectorXcd& values) {
    if (values.size() != J.block_count()) throw DimensionMismatchError("one value per block");
    Eigen::VectorXcd x(m);
    for (int b = 0; b < J.block_count(); ++b)
        for (int i : J.blocks[b]) x[i] = values[b];
    return recenter(x);
}

Eigen::VectorXcd block_values(const Eigen::VectorXcd& x, const Partition& J, double tol) {
    Eigen::VectorXcd values(J.block_count());
    for (int b = 0; b < J.block_count(); ++b) {
        Complex v = x[J.blocks[b].front()];
        for (int i : J.blocks[b])
            if (std::abs(x[i] - v) > tol * std::max(1.0, x.norm()))
                throw StructuralError("vector is not constant on the partition blocks");
        values[b] = v;
    }
    return values;
}

namespace {

// pi_J: restrict to the block and subtract the block average
Eigen::VectorXcd block_projection(const Eigen::VectorXcd& u, const std::vector<int>& block) {
    Eigen::VectorXcd out(block.size());
    Complex mean(0.0);
    for (std::size_t i = 0; i < block.size(); ++i) {
        out[i] = u[block[i]];
        mean += u[block[i]];
    }
    mean /= double(block.size());
    for (int i = 0; i < out.size(); ++i) out[i] -= mean;
    return out;
}

std::vector<double> default_ladder() {
    std::vector<double> t;
    for (double v = 1e-4; v <= 1.001e-2; v *= std::pow(100.0, 1.0 / 8.0)) t.push_back(v);
    return t;
}

}  // namespace

StratumExpansion stratum_expansion(const Eigen::VectorXcd& x, const Partition& part,
                                   int block_index, const Eigen::VectorXcd& v,
                                   const std::vector<double>& ladder_in) {
    const int m = static_cast<int>(x.size());
    Eigen::VectorXcd values = block_values(x, part);  // throws off the stratum
    for (int a = 0; a < values.size(); ++a)
        for (int b = a + 1; b < values.size(); ++b)
            if (std::abs(values[a] - values[b]) < 1e-9)
                throw StructuralError("point lies on a sub-stratum");

    const auto& block = part.blocks[block_index];
    const int mj = static_cast<int>(block.size());
    if (mj < 2) throw StructuralError("expansion needs a block of size >= 2");

    StratumExpansion out;
    Complex c = double(m + 1) / double(mj + 1);
    for (int i = 0; i < m; ++i)
        if (part.block_of(i) != block_index) c *= (values[block_index] - x[i]);
    out.leading_constant = c;

    std::vector<double> ladder = ladder_in.empty() ? default_ladder() : ladder_in;
    std::vector<double> logs_t, logs_r;
    for (double t : ladder) {
        Eigen::VectorXcd y = x + t * v;

        // pi_J(H(y))|_J evaluated through the shifted increment
        //   P_y(a_y + s) - P_y(a_y) = (m+1) int_0^s prod_i (u - (y_i - a_y)) du,
        // which involves only products of small offsets: the direct difference
        // of O(|H|) values would drown the t^{m_J+2} remainder in roundoff.
        Complex a_y(0.0);
        for (int i : block) a_y += y[i];
        a_y /= double(mj);
        std::vector<Complex> W{1.0};
        for (int i = 0; i < m; ++i) {
            Complex delta = y[i] - a_y;
            std::vector<Complex> next(W.size() + 1, Complex(0.0));
            for (std::size_t j = 0; j < W.size(); ++j) {
                next[j + 1] += W[j];
                next[j] -= delta * W[j];
            }
            W = std::move(next);
        }
        std::vector<Complex> T(W.size() + 1, Complex(0.0));
        for (std::size_t j = 0; j < W.size(); ++j) T[j + 1] = double(m + 1) * W[j] / double(j + 1);

        Eigen::VectorXcd lhs(mj);
        Complex mean(0.0);
        for (int i = 0; i < mj; ++i) {
            lhs[i] = eval_poly(T, y[block[i]] - a_y);
            mean += lhs[i];
        }
        mean /= double(mj);
        for (int i = 0; i < mj; ++i) lhs[i] -= mean;

        Eigen::VectorXcd z = block_projection(Eigen::VectorXcd(t * v), block);
        Eigen::VectorXcd rhs = c * koch_h(z);
        double r = (lhs - rhs).norm();
        out.ladder.push_back(t);
        out.residuals.push_back(r);
        if (r > 1e-300) {
            logs_t.push_back(std::log(t));
            logs_r.push_back(std::log(r));
        }
    }
    if (logs_t.size() >= 2) out.slope = fit_line(logs_t, logs_r).first;
    return out;
}

CriticalOrderResult critical_order_check(int m, const Partition& J, int j1, int j2,
                                         std::uint64_t seed) {
    if (j1 == j2) throw StructuralError("merge needs two distinct blocks");
    CriticalOrderResult out;
    out.expected = static_cast<int>(J.blocks[j1].size() + J.blocks[j2].size());

    // merged partition K
    std::vector<std::vector<int>> kb;
    std::vector<int> merged;
    for (int b = 0; b < J.block_count(); ++b) {
        if (b == j1 || b == j2)
            merged.insert(merged.end(), J.blocks[b].begin(), J.blocks[b].end());
        else
            kb.push_back(J.blocks[b]);
    }
    kb.push_back(merged);
    Partition K = Partition::of(std::move(kb));

    const PolyMap& H = koch_ambient_map(m);
    std::vector<PolyMap> partials;
    for (int c = 0; c < m; ++c) partials.push_back(partial_derivative(H, c));
    Eigen::MatrixXcd B = stratum_basis(m, J);

    // transverse direction in L_J, off L_K: indicator difference of the merged pair
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(m);
    for (int i : J.blocks[j1]) v[i] = 1.0 / double(J.blocks[j1].size());
    for (int i : J.blocks[j2]) v[i] = -1.0 / double(J.blocks[j2].size());

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int attempt = 0; attempt < 5; ++attempt) {
        out.attempts = attempt + 1;
        Eigen::VectorXcd values(K.block_count());
        for (int b = 0; b < values.size(); ++b) values[b] = Complex(u(rng), u(rng));
        bool distinct = true;
        for (int a = 0; a < values.size(); ++a)
            for (int b = a + 1; b < values.size(); ++b)
                if (std::abs(values[a] - values[b]) < 0.2) distinct = false;
        if (!distinct) continue;
        Eigen::VectorXcd x = stratum_point(m, K, values);

        std::vector<double> logs_t, logs_d;
        bool degenerate = false;
        for (double t = 1e-3; t <= 1.001e-1; t *= std::pow(100.0, 1.0 / 8.0)) {
            Eigen::VectorXcd y = x + t * v;
            Eigen::MatrixXcd full(m, m);
            for (int c = 0; c < m; ++c) full.col(c) = partials[c].eval(y);
            Eigen::MatrixXcd M = B.adjoint() * full * B;
            Complex det = Eigen::PartialPivLU<Eigen::MatrixXcd>(M).determinant();
            if (std::abs(det) < 1e-280) {
                degenerate = true;
                break;
            }
            logs_t.push_back(std::log(t));
            logs_d.push_back(std::log(std::abs(det)));
        }
        if (degenerate || logs_t.size() < 3) continue;
        out.slope = fit_line(logs_t, logs_d).first;
        return out;
    }
    throw NumericalError("critical order sampling failed repeatedly");
}

int merge_degree_total(const Partition& J) {
    int total = 0;
    for (int a = 0; a < J.block_count(); ++a)
        for (int b = a + 1; b < J.block_count(); ++b)
            total += static_cast<int>(J.blocks[a].size() + J.blocks[b].size());
    return total;
}

SuperSaddleReport super_saddle_report(const Eigen::VectorXcd& x, const Partition& part) {
    const int m = static_cast<int>(x.size());
    const PolyMap& H = koch_ambient_map(m);
    if ((H.eval(x) - x).norm() > 1e-9 * std::max(1.0, x.norm()))
        throw StructuralError("super-saddle report requested at a non-fixed point");

    Eigen::MatrixXcd J(m, m);
    for (int c = 0; c < m; ++c) J.col(c) = partial_derivative(H, c).eval(x);
    Eigen::MatrixXcd Q = zero_average_basis(m);
    Eigen::MatrixXcd D = Q.adjoint() * J * Q;  // on E, dimension m-1

    SuperSaddleReport report;
    report.stratum_dimension = part.block_count() - 1;

    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(D, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    double tol = sv.size() > 0 ? sv[0] * 1e-10 : 0.0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > tol) ++rank;
    report.rank = rank;

    // stratum basis in E coordinates
    Eigen::MatrixXcd L = Q.adjoint() * stratum_basis(m, part);  // (m-1) x (p-1), orthonormal

    // principal angles via singular values of basis products
    auto principal_angles = [](const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B) {
        Eigen::JacobiSVD<Eigen::MatrixXcd> s(A.adjoint() * B);
        Eigen::VectorXd cosines = s.singularValues();
        std::vector<double> angles;
        for (int i = 0; i < cosines.size(); ++i)
            angles.push_back(std::acos(std::min(1.0, std::max(0.0, cosines[i]))));
        return angles;
    };

    if (rank > 0) {
        Eigen::MatrixXcd image = svd.matrixU().leftCols(rank);
        auto angles = principal_angles(image, L);
        report.image_alignment = angles.empty() ? 0.0 : *std::max_element(angles.begin(), angles.end());
    }
    int nullity = static_cast<int>(sv.size()) - rank;
    if (nullity > 0) {
        Eigen::MatrixXcd kernel = svd.matrixV().rightCols(nullity);
        auto angles = principal_angles(kernel, L);
        report.kernel_separation =
            angles.empty() ? kPi / 2 : *std::min_element(angles.begin(), angles.end());
    } else {
        report.kernel_separation = kPi / 2;
    }

    Eigen::MatrixXcd restricted = L.adjoint() * D * L;
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(restricted);
    report.restricted_eigenvalues = solver.eigenvalues();
    report.min_restricted_modulus = 1e300;
    for (int i = 0; i < report.restricted_eigenvalues.size(); ++i)
        report.min_restricted_modulus =
            std::min(report.min_restricted_modulus, std::abs(report.restricted_eigenvalues[i]));

    report.splits = (report.rank + nullity == m - 1) && report.kernel_separation > 1e-6 &&
                    report.rank == report.stratum_dimension;
    return report;
}

// ---------------------------------------------------------------------------
// Quadratic differentials

Complex QuadraticDifferential::density(Complex z) const {
    Complex acc(0.0);
    for (int i = 0; i < poles.size(); ++i) acc += residues[i] / (z - poles[i]);
    return acc;
}

QuadraticDifferential make_quadratic_differential(Eigen::VectorXcd poles,
                                                  const Eigen::VectorXcd& leading,
                                                  double disk_radius) {
    const int n = static_cast<int>(poles.size());
    if (leading.size() != n - 1)
        throw DimensionMismatchError("need all but the last residue; the last is derived");
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            if (poles[a] == poles[b]) throw StructuralError("poles must be distinct");
    QuadraticDifferential q;
    q.poles = std::move(poles);
    q.residues.resize(n);
    Complex sum(0.0);
    for (int i = 0; i < n - 1; ++i) {
        q.residues[i] = leading[i];
        sum += leading[i];
    }
    q.residues[n - 1] = -sum;
    q.disk_radius = disk_radius;
    return q;
}

double certify_disk_radius(const CriticalPolynomial& P) {
    for (double R = 4.0; R < 1e12; R *= 2.0) {
        bool contained = true;
        for (int s = 0; s < 64 && contained; ++s) {
            double theta = 2.0 * kPi * s / 64.0;
            std::vector<Complex> shifted = P.coeffs;
            shifted[0] -= R * Complex(std::cos(theta), std::sin(theta));
            for (const auto& root : poly_roots(shifted))
                if (std::abs(root) >= R) contained = false;
        }
        if (contained) return R;
    }
    throw NumericalError("no certified disk radius found");
}

namespace {

// value of the push-forward density at w: sum over preimages of q/P'^2
Complex pushforward_density(const CriticalPolynomial& P, const QuadraticDifferential& q,
                            Complex w) {
    std::vector<Complex> shifted = P.coeffs;
    shifted[0] -= w;
    Complex acc(0.0);
    for (const auto& z : poly_roots(shifted)) {
        Complex dp = P.derivative(z);
        acc += q.density(z) / (dp * dp);
    }
    return acc;
}

Complex contour_residue(const CriticalPolynomial& P, const QuadraticDifferential& q,
                        Complex center, double radius, int order) {
    Complex acc(0.0);
    for (int s = 0; s < order; ++s) {
        double theta = 2.0 * kPi * s / order;
        Complex offset = radius * Complex(std::cos(theta), std::sin(theta));
        acc += pushforward_density(P, q, center + offset) * offset;
    }
    return acc / double(order);
}

}  // namespace

PushforwardResult qd_pushforward(const CriticalPolynomial& P, const QuadraticDifferential& q,
                                 int l1_samples) {
    const int n = static_cast<int>(q.poles.size());
    PushforwardResult out;

    Eigen::VectorXcd images(n);
    for (int i = 0; i < n; ++i) images[i] = P.eval(q.poles[i]);
    double min_dist = 1e300;
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            min_dist = std::min(min_dist, std::abs(images[a] - images[b]));
    if (min_dist <= 0.0) throw StructuralError("image poles collide");
    const double rho = 0.5 * min_dist;

    Eigen::VectorXcd mu(n);
    int order_used = 64;
    for (int i = 0; i < n; ++i) {
        int order = 64;
        Complex prev = contour_residue(P, q, images[i], rho, order);
        while (order <= 512) {
            Complex next = contour_residue(P, q, images[i], rho, order * 2);
            if (std::abs(next - prev) <= 1e-8 * std::max(1.0, std::abs(next))) {
                prev = next;
                order *= 2;
                break;
            }
            prev = next;
            order *= 2;
        }
        order_used = std::max(order_used, order);
        mu[i] = prev;
    }
    out.quadrature_order = order_used;

    Complex mu_sum = mu.sum();
    out.residue_sum_error = std::abs(mu_sum);
    double scale = 0.0;
    for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(mu[i]));
    if (out.residue_sum_error > 1e-8 * std::max(1.0, scale))
        throw NumericalError("push-forward residues do not sum to zero; quadrature failed");
    for (int i = 0; i < n; ++i) mu[i] -= mu_sum / double(n);

    out.value.poles = images;
    out.value.residues = mu;
    out.value.disk_radius = q.disk_radius;

    // L1 norms over D_R with shared quasi-random nodes
    const double R = q.disk_radius;
    double src = 0.0, dst = 0.0;
    auto nodes = low_discrepancy_disk(l1_samples);
    for (const auto& node : nodes) {
        Complex z = R * node;
        src += std::abs(q.density(z));
        dst += std::abs(out.value.density(z));
    }
    const double area = kPi * R * R;
    out.source_l1 = area * src / double(l1_samples);
    out.result_l1 = area * dst / double(l1_samples);
    return out;
}

Complex qd_pairing(const QuadraticDifferential& q, const Eigen::VectorXcd& tangent_values) {
    if (tangent_values.size() != q.residues.size())
        throw DimensionMismatchError("pairing needs one tangent value per pole");
    Complex acc(0.0);
    for (int i = 0; i < q.residues.size(); ++i) acc += q.residues[i] * tangent_values[i];
    return acc;
}

PushforwardDuality pushforward_duality(const Eigen::VectorXcd& x, const Partition& part) {
    const int m = static_cast<int>(x.size());
    const int p = part.block_count();
    const int dim = p - 1;
    const PolyMap& H = koch_ambient_map(m);
    if ((H.eval(x) - x).norm() > 1e-9 * std::max(1.0, x.norm()))
        throw StructuralError("duality requested at a non-fixed point");

    Eigen::VectorXcd poles = block_values(x, part);
    auto P = build_px(x);
    const double R = certify_disk_radius(P);

    // tangent basis of T_x L_J in block values: rows of the zero-WEIGHTED-sum
    // space sum_J |J| beta_J = 0
    Eigen::MatrixXcd raw = Eigen::MatrixXcd::Zero(p, dim);
    for (int r = 0; r < dim; ++r) {
        raw(r, r) = 1.0;
        raw(p - 1, r) = -double(part.blocks[r].size()) / double(part.blocks[p - 1].size());
    }
    // residue basis dual under <q, v> = sum lambda_J v_J, with sum lambda = 0
    // solve for lambda^{(s)}: [beta^{(r)T}; ones] lambda = [delta_rs; 0]
    Eigen::MatrixXcd lhs(dim + 1, p);
    for (int r = 0; r < dim; ++r) lhs.row(r) = raw.col(r).transpose();
    lhs.row(dim).setOnes();
    Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Zero(dim + 1, dim);
    for (int r = 0; r < dim; ++r) rhs(r, r) = 1.0;
    Eigen::MatrixXcd lambda = lhs.completeOrthogonalDecomposition().solve(rhs);  // p x dim

    // push each basis differential forward
    Eigen::MatrixXcd push(dim, dim);
    for (int s = 0; s < dim; ++s) {
        Eigen::VectorXcd lead = lambda.col(s).head(p - 1);
        auto q = make_quadratic_differential(poles, lead, R);
        // small cloud for the L1 side is not needed here
        auto result = qd_pushforward(P, q, 2000);
        for (int r = 0; r < dim; ++r) {
            Complex acc(0.0);
            for (int b = 0; b < p; ++b) acc += result.value.residues[b] * raw(b, r);
            push(r, s) = acc;
        }
    }

    // D_xH restricted to T_x L_J in the same tangent basis
    Eigen::MatrixXcd J(m, m);
    for (int c = 0; c < m; ++c) J.col(c) = partial_derivative(H, c).eval(x);
    Eigen::MatrixXcd tangent(dim, dim);
    Eigen::MatrixXcd basis_ambient(m, dim);
    for (int r = 0; r < dim; ++r)
        basis_ambient.col(r) = stratum_point(m, part, raw.col(r)) * 1.0;
    for (int s = 0; s < dim; ++s) {
        Eigen::VectorXcd w = J * basis_ambient.col(s);
        Eigen::VectorXcd wv = block_values(w, part, 1e-7);
        // coordinates in the raw basis: solve the overdetermined block system
        tangent.col(s) = raw.completeOrthogonalDecomposition().solve(wv);
    }

    PushforwardDuality out;
    out.pushforward_matrix = push;
    out.tangent_matrix = tangent;
    Eigen::MatrixXcd expected = tangent.inverse().transpose();
    out.max_entry_error = (push - expected).cwiseAbs().maxCoeff();
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(push);
    out.spectral_radius = 0.0;
    for (int i = 0; i < solver.eigenvalues().size(); ++i)
        out.spectral_radius = std::max(out.spectral_radius, std::abs(solver.eigenvalues()[i]));
    return out;
}

// ---------------------------------------------------------------------------
// Chart germs at the two-block superattracting points

namespace {

// multiply scalar term maps with truncation (thin wrapper)
Terms terms_multiply(const Terms& a, const Terms& b, int trunc) {
    bool dropped = false;
    return multiply_terms(a, b, trunc, &dropped);
}

}  // namespace

Eigen::VectorXcd ChartGerm::exact_step(const Eigen::VectorXcd& chart_point) const {
    Eigen::VectorXcd y = base_point + basis * chart_point;
    Eigen::VectorXcd hy = koch_h(y);
    // e^{J_1} of hy
    const auto& j1 = part.blocks[0];
    Complex c(0.0);
    for (int i : j1) c += hy[i];
    c /= double(j1.size());
    if (std::abs(c) < 1e-14)
        throw NumericalError("chart step left the chart (vanishing normalization)");
    return basis.adjoint() * (hy / c);
}

ChartGerm chart_germ(int m, const Partition& part, int jet_order) {
    if (part.block_count() != 2) throw StructuralError("chart germ needs a two-block partition");
    if (m < 3) throw StructuralError("chart germ needs m >= 3");
    if (part.ground_size() != m) throw StructuralError("partition does not match m");

    const auto& J1 = part.blocks[0];
    const auto& J2 = part.blocks[1];
    const int s1 = static_cast<int>(J1.size()), s2 = static_cast<int>(J2.size());
    const int d1 = s1 - 1, d2 = s2 - 1, d = d1 + d2;
    if (d == 0) throw StructuralError("both blocks are singletons; the chart is trivial");
    const int max_block_degree = std::max(s1, s2) + 1;
    if (jet_order <= 0) jet_order = max_block_degree + 2;

    ChartGerm chart;
    chart.m = m;
    chart.part = part;

    // representative with e^{J_1} = 1
    Eigen::VectorXcd base = Eigen::VectorXcd::Zero(m);
    for (int i : J1) base[i] = 1.0;
    for (int i : J2) base[i] = -double(s1) / double(s2);
    chart.base_point = base;

    // blockwise Helmert chart basis
    Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(m, d);
    if (d1 > 0) {
        Eigen::MatrixXcd Q1 = zero_average_basis(s1);
        for (int r = 0; r < d1; ++r)
            for (int i = 0; i < s1; ++i) B(J1[i], r) = Q1(i, r);
    }
    if (d2 > 0) {
        Eigen::MatrixXcd Q2 = zero_average_basis(s2);
        for (int r = 0; r < d2; ++r)
            for (int i = 0; i < s2; ++i) B(J2[i], d1 + r) = Q2(i, r);
    }
    chart.basis = B;

    // G(v) = H(base + B v) as an exact polynomial jet in the chart variables
    BlockStructure chart_blocks_plain(std::vector<int>{d1, d2});
    BlockStructure ambient(std::vector<int>{m});
    std::vector<Terms> section(m);
    for (int i = 0; i < m; ++i) {
        if (base[i] != Complex(0.0)) section[i][Exponent(d, 0)] = base[i];
        for (int c = 0; c < d; ++c) {
            if (B(i, c) == Complex(0.0)) continue;
            Exponent e(d, 0);
            e[c] = 1;
            section[i][e] = B(i, c);
        }
    }
    PolyMap sigma(chart_blocks_plain, ambient, std::move(section));
    PolyMap G = compose(koch_ambient_map(m), sigma, m + 2);  // affine: exact

    // normalization s(v) = e^{J_1}(G(v)) and its reciprocal jet
    Terms s_terms;
    for (int i : J1)
        for (const auto& [e, c] : G.coords()[i]) {
            s_terms[e] += c / double(s1);
            if (std::abs(s_terms[e]) < 1e-300) s_terms.erase(e);
        }
    Complex c0 = Complex(0.0);
    if (auto it = s_terms.find(Exponent(d, 0)); it != s_terms.end()) c0 = it->second;
    if (c0 == Complex(0.0)) throw NumericalError("degenerate chart normalization");
    chart.mu0 = 1.0 / c0;

    Terms u;  // s/c0 - 1, vanishing at 0
    for (const auto& [e, c] : s_terms) {
        bool constant = std::all_of(e.begin(), e.end(), [](int k) { return k == 0; });
        if (!constant) u[e] = c / c0;
    }
    Terms inv;  // (1/c0) sum (-u)^r
    Terms upow;
    upow[Exponent(d, 0)] = 1.0;
    double sign = 1.0;
    for (int r = 0; r <= jet_order; ++r) {
        if (r > 0) {
            upow = terms_multiply(upow, u, jet_order);
            sign = -sign;
        }
        for (const auto& [e, c] : upow) inv[e] += (sign > 0 ? c : -c) / c0;
    }

    // chart coordinates of G(v) * inv(v)
    std::vector<Terms> chart_coords(d);
    for (int r = 0; r < d; ++r) {
        Terms projected;
        for (int i = 0; i < m; ++i) {
            Complex w = std::conj(B(i, r));
            if (w == Complex(0.0)) continue;
            for (const auto& [e, c] : G.coords()[i]) projected[e] += w * c;
        }
        chart_coords[r] = terms_multiply(projected, inv, jet_order);
        for (auto it = chart_coords[r].begin(); it != chart_coords[r].end();)
            it = (std::abs(it->second) < 1e-13) ? chart_coords[r].erase(it) : std::next(it);
    }
    PolyMap jet(chart_blocks_plain, chart_blocks_plain, std::move(chart_coords), jet_order);

    chart.germ = extract_quasihomogeneous_part(jet, chart_blocks_plain);

    // stratum constants and the fitted factor scales
    Eigen::VectorXcd values = block_values(base, part);
    for (int b = 0; b < 2; ++b) {
        const auto& block = part.blocks[b];
        Complex c = double(m + 1) / double(block.size() + 1);
        for (int i = 0; i < m; ++i)
            if (part.block_of(i) != b) c *= (values[b] - base[i]);
        chart.stratum_constants.push_back(c);
    }

    chart.model_scale_fit_error = 0.0;
    for (int b = 0; b < 2; ++b) {
        const int db = (b == 0) ? d1 : d2;
        if (db == 0) {
            chart.model_scales.push_back(chart.mu0 * chart.stratum_constants[b]);
            continue;
        }
        const int sb = static_cast<int>(part.blocks[b].size());
        // the factor should be (mu0 C_J) x (block family map in Helmert coordinates)
        Eigen::MatrixXcd Qb = zero_average_basis(sb);
        BlockStructure local(std::vector<int>{db});
        BlockStructure blockspace(std::vector<int>{sb});
        std::vector<Terms> embed(sb);
        for (int i = 0; i < sb; ++i)
            for (int c = 0; c < db; ++c) {
                if (Qb(i, c) == Complex(0.0)) continue;
                Exponent e(db, 0);
                e[c] = 1;
                embed[i][e] = Qb(i, c);
            }
        PolyMap embed_map(local, blockspace, std::move(embed));
        PolyMap inner = compose(koch_ambient_map(sb), embed_map, sb + 1);
        std::vector<Terms> model(db);
        for (int r = 0; r < db; ++r)
            for (int i = 0; i < sb; ++i) {
                Complex w = std::conj(Qb(i, r));
                if (w == Complex(0.0)) continue;
                for (const auto& [e, c] : inner.coords()[i]) model[r][e] += w * c;
            }
        PolyMap model_map(local, local, std::move(model));

        // least-squares scale between the extracted factor and the model
        const auto& factor = chart.germ.quasihomogeneous_part.factors[b];
        Complex num(0.0);
        double den = 0.0;
        for (int r = 0; r < db; ++r)
            for (const auto& [e, c] : model_map.coords()[r]) {
                num += factor.coefficient(r, e) * std::conj(c);
                den += std::norm(c);
            }
        Complex scale_fit = den > 0 ? num / den : Complex(0.0);
        chart.model_scales.push_back(scale_fit);
        for (int r = 0; r < db; ++r) {
            for (const auto& [e, c] : model_map.coords()[r])
                chart.model_scale_fit_error = std::max(
                    chart.model_scale_fit_error,
                    std::abs(factor.coefficient(r, e) - scale_fit * c));
            for (const auto& [e, c] : factor.coords()[r])
                chart.model_scale_fit_error = std::max(
                    chart.model_scale_fit_error,
                    std::abs(c - scale_fit * model_map.coefficient(r, e)));
        }
    }
    return chart;
}

Eigen::VectorXcd projective_step(const Eigen::VectorXcd& x) {
    if (x.size() == 0 || x.norm() == 0.0) throw StructuralError("projective step needs x != 0");
    Eigen::VectorXcd y = koch_h(x);
    int pivot = 0;
    for (int i = 1; i < y.size(); ++i)
        if (std::abs(y[i]) > std::abs(y[pivot])) pivot = i;
    if (std::abs(y[pivot]) < 1e-300)
        throw NumericalError("projective step hit the indeterminate origin");
    return y / y[pivot];
}

}  // namespace bottcher::koch
