#include "bottcher/render.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include "bottcher/bottcher1d.hpp"
#include "bottcher/fields.hpp"
#include "bottcher/green.hpp"
#include "bottcher/koch.hpp"

namespace bottcher::render {

namespace {

constexpr std::array<std::uint8_t, 3> kBlack{0, 0, 0};
constexpr std::array<std::uint8_t, 3> kWhite{235, 235, 235};
constexpr std::array<std::uint8_t, 3> kInterior{30, 30, 60};
constexpr std::array<std::uint8_t, 3> kUndecided{128, 128, 128};
constexpr std::array<std::uint8_t, 3> kEscape{20, 20, 20};

const std::array<std::array<std::uint8_t, 3>, 5> kBasinPalette{{{220, 60, 50},
                                                                {60, 160, 220},
                                                                {240, 200, 60},
                                                                {90, 200, 110},
                                                                {170, 90, 200}}};

// rows are independent; split them across a couple of workers
void parallel_rows(int height, const std::function<void(int)>& row_job) {
    unsigned workers = std::max(1u, std::min(4u, std::thread::hardware_concurrency()));
    if (workers == 1 || height < 16) {
        for (int y = 0; y < height; ++y) row_job(y);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (int y = static_cast<int>(w); y < height; y += static_cast<int>(workers))
                row_job(y);
        });
    for (auto& t : pool) t.join();
}

}  // namespace

Complex RenderConfig::pixel_center(int px, int py) const {
    double x = center_x + width * ((px + 0.5) / px_width - 0.5);
    double y = center_y + height * (0.5 - (py + 0.5) / px_height);
    return Complex(x, y);
}

void ImageBuffer::set(int x, int y, std::array<std::uint8_t, 3> color) {
    std::size_t idx = (std::size_t(y) * width + x) * 3;
    rgb[idx] = color[0];
    rgb[idx + 1] = color[1];
    rgb[idx + 2] = color[2];
}

std::array<std::uint8_t, 3> ImageBuffer::at(int x, int y) const {
    std::size_t idx = (std::size_t(y) * width + x) * 3;
    return {rgb[idx], rgb[idx + 1], rgb[idx + 2]};
}

void write_ppm(const ImageBuffer& image, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StructuralError("cannot open output image: " + path);
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()),
              static_cast<std::streamsize>(image.rgb.size()));
}

ImageBuffer read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StructuralError("cannot open image: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw StructuralError("not a binary P6 image");
    int w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (maxval != 255) throw StructuralError("expected maxval 255");
    in.get();  // single whitespace after the header
    ImageBuffer image(w, h);
    in.read(reinterpret_cast<char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
    if (!in) throw StructuralError("truncated image data");
    return image;
}

// ---------------------------------------------------------------------------
// external-ray checkerboards

namespace {

std::array<std::uint8_t, 3> ray_color(const std::vector<Complex>& poly, Complex z, int budget,
                                      int sectors_log2) {
    ExternalData data;
    try {
        data = external_data(poly, z, budget);
    } catch (const NumericalError&) {
        return kInterior;
    }
    if (data.potential <= 0.0) return kInterior;
    long sector = long(std::floor(data.angle * double(1 << sectors_log2)));
    long band = long(std::floor(std::log2(data.potential)));
    return ((sector + band) & 1) ? kBlack : kWhite;
}

}  // namespace

std::pair<ImageBuffer, ImageBuffer> render_rays(const RenderConfig& config, Complex c) {
    std::vector<Complex> left_poly{c, 0.0, 1.0};
    std::vector<Complex> right_poly{0.0, 0.0, 1.0};
    ImageBuffer left(config.px_width, config.px_height);
    ImageBuffer right(config.px_width, config.px_height);
    parallel_rows(config.px_height, [&](int y) {
        for (int x = 0; x < config.px_width; ++x) {
            Complex z = config.pixel_center(x, y);
            left.set(x, y, ray_color(left_poly, z, config.budget, config.angle_sectors_log2));
            right.set(x, y, ray_color(right_poly, z, config.budget, config.angle_sectors_log2));
        }
    });
    return {std::move(left), std::move(right)};
}

// ---------------------------------------------------------------------------
// quintic basins

namespace {

std::vector<Complex> quintic_critical_points() {
    std::vector<Complex> out;
    const double radius = std::pow(0.2, 0.2);
    for (int r = 0; r < 5; ++r) {
        double theta = M_PI * (2.0 * r + 1.0) / 5.0;
        out.emplace_back(radius * std::cos(theta), radius * std::sin(theta));
    }
    return out;
}

// -1 escape, -2 undecided, 0..4 basin index
int quintic_class(Complex z, int budget) {
    static const std::vector<Complex> roots = quintic_critical_points();
    for (int n = 0; n < budget; ++n) {
        if (std::abs(z) > 4.0) return -1;
        for (int r = 0; r < 5; ++r)
            if (std::abs(z - roots[r]) < 0.05) return r;
        z = 1.2 * z + std::pow(z, 6);
    }
    return -2;
}

}  // namespace

ImageBuffer render_quintic_basins(const RenderConfig& config) {
    ImageBuffer image(config.px_width, config.px_height);
    parallel_rows(config.px_height, [&](int y) {
        for (int x = 0; x < config.px_width; ++x) {
            int cls = quintic_class(config.pixel_center(x, y), config.budget);
            if (cls == -1)
                image.set(x, y, kEscape);
            else if (cls == -2)
                image.set(x, y, kUndecided);
            else
                image.set(x, y, kBasinPalette[cls]);
        }
    });
    return image;
}

SymmetryCheck quintic_rotation_check(const RenderConfig& config) {
    const Complex omega = std::exp(Complex(0.0, 2.0 * M_PI / 5.0));
    SymmetryCheck check;
    long matched = 0;
    for (int y = 0; y < config.px_height; ++y)
        for (int x = 0; x < config.px_width; ++x) {
            Complex z = config.pixel_center(x, y);
            int base = quintic_class(z, config.budget);
            if (base < 0) continue;
            int rotated = quintic_class(omega * z, config.budget);
            if (rotated < 0) continue;
            ++check.decided;
            if (rotated == (base + 1) % 5) ++matched;
        }
    check.agreement = check.decided > 0 ? double(matched) / check.decided : 0.0;
    return check;
}

// ---------------------------------------------------------------------------
// chart basins at the (3,1)-block fixed point

namespace {

struct LineClassifier {
    std::array<Eigen::Vector2cd, 3> normals;  // unit normals of the invariant lines

    static LineClassifier build(const Eigen::MatrixXcd& block_basis) {
        // lines {v_i = v_j} inside the block, pairs (0,1), (0,2), (1,2)
        LineClassifier out;
        int idx = 0;
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) {
                Eigen::VectorXcd diff = block_basis.row(i) - block_basis.row(j);
                Eigen::Vector2cd n(diff[0], diff[1]);
                out.normals[idx++] = n.conjugate() / n.norm();
            }
        return out;
    }

    // nearest line of a unit direction, or -1 while the angle is too wide
    int classify(const Eigen::Vector2cd& direction, double max_angle) const {
        int best = -1;
        double best_sin = max_angle;
        for (int l = 0; l < 3; ++l) {
            double s = std::abs(normals[l].dot(direction));
            if (s < best_sin) {
                best_sin = s;
                best = l;
            }
        }
        return best;
    }
};

// -1 escape, -2 undecided, 0..2 line class. Orbits collapse to the fixed
// point doubly exponentially, so once the norm is far below every jet
// correction the iteration continues on directions alone (the model map is
// homogeneous and the invariant lines are complex, so phases drop out).
template <typename Step>
int chart_class(Eigen::Vector2cd v, const LineClassifier& lines, int budget, double escape,
                const Step& step, const CompiledPolyMap& model) {
    constexpr double kMaxAngleSin = 0.342;  // sin(20 degrees)
    bool projective = false;
    for (int n = 0; n < budget; ++n) {
        double norm = v.norm();
        if (!projective && (norm > escape || !std::isfinite(norm))) return -1;
        if (norm == 0.0) return -2;
        if (n >= 10) {
            int cls = lines.classify(v / norm, kMaxAngleSin);
            if (cls >= 0) return cls;
        }
        if (!projective && norm < 1e-8) projective = true;
        Eigen::VectorXcd next;
        if (projective) {
            next = model.eval(Eigen::VectorXcd(v / norm));
            double nn = next.norm();
            if (nn == 0.0) return -2;
            next /= nn;
        } else {
            next = step(Eigen::VectorXcd(v));
        }
        v = Eigen::Vector2cd(next[0], next[1]);
    }
    return -2;
}

std::array<std::uint8_t, 3> chart_color(int cls) {
    if (cls == -1) return kEscape;
    if (cls == -2) return kUndecided;
    return kBasinPalette[cls];
}

}  // namespace

ChartBasinResult render_chart_basins(const RenderConfig& config, const ChartBasinOptions& opts) {
    auto part = koch::Partition::of({{0, 1, 2}, {3}});
    auto chart = koch::chart_germ(4, part);
    CompiledPolyMap jet(chart.germ.map);
    PolyMap model_map = chart.germ.quasihomogeneous_part.assembled();
    CompiledPolyMap model(model_map);

    // block basis of the three-element block inside the chart coordinates
    Eigen::MatrixXcd block_basis(3, 2);
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 2; ++c) block_basis(i, c) = chart.basis(part.blocks[0][i], c);
    auto lines = LineClassifier::build(block_basis);

    const double escape = 4.0 * std::max(config.width, config.height);
    auto jet_step = [&](const Eigen::VectorXcd& v) { return jet.eval(v); };
    auto model_step = [&](const Eigen::VectorXcd& v) { return model.eval(v); };

    ChartBasinResult result;
    result.left = ImageBuffer(config.px_width, config.px_height);
    result.right = ImageBuffer(config.px_width, config.px_height);
    parallel_rows(config.px_height, [&](int y) {
        for (int x = 0; x < config.px_width; ++x) {
            Complex p = config.pixel_center(x, y);
            Eigen::Vector2cd v(p.real(), p.imag());  // real slice of the chart
            result.left.set(x, y, chart_color(chart_class(v, lines, config.budget, escape, jet_step, model)));
            result.right.set(x, y,
                             chart_color(chart_class(v, lines, config.budget, escape, model_step, model)));
        }
    });

    // relabeling symmetry of the right panel: permuting the three block
    // coordinates permutes the lines; check transposition (0 1)
    {
        Eigen::MatrixXcd perm = Eigen::MatrixXcd::Zero(3, 3);
        perm(1, 0) = perm(0, 1) = perm(2, 2) = 1.0;
        Eigen::Matrix2cd rotation = (block_basis.adjoint() * perm * block_basis).topLeftCorner(2, 2);
        // the transposition swaps lines: (01)-line fixed, (02) <-> (12)
        auto permute_class = [](int cls) { return cls == 0 ? 0 : (cls == 1 ? 2 : 1); };
        long matched = 0, decided = 0;
        const int step_x = std::max(1, config.px_width / 120);
        const int step_y = std::max(1, config.px_height / 120);
        for (int y = 0; y < config.px_height; y += step_y)
            for (int x = 0; x < config.px_width; x += step_x) {
                Complex p = config.pixel_center(x, y);
                Eigen::Vector2cd v(p.real(), p.imag());
                int base = chart_class(v, lines, config.budget, escape, model_step, model);
                if (base < 0) continue;
                int moved = chart_class(Eigen::Vector2cd(rotation * v), lines, config.budget,
                                        escape, model_step, model);
                if (moved < 0) continue;
                ++decided;
                if (moved == permute_class(base)) ++matched;
            }
        result.relabel_agreement = decided > 0 ? double(matched) / decided : 0.0;
    }

    if (opts.run_overlay) {
        LocalBottcherOptions lopts;
        lopts.diagnostics = false;
        auto coordinate = local_bottcher(
            chart.germ,
            {VectorField::block_linear(chart.germ.blocks(), 0),
             VectorField::block_linear(chart.germ.blocks(), 1)},
            opts.coordinate_level, lopts);
        long matched = 0, decided = 0;
        for (int gy = 0; gy < opts.overlay_grid; ++gy)
            for (int gx = 0; gx < opts.overlay_grid; ++gx) {
                double fx = (gx + 0.5) / opts.overlay_grid;
                double fy = (gy + 0.5) / opts.overlay_grid;
                Complex p(config.center_x + config.width * (fx - 0.5),
                          config.center_y + config.height * (0.5 - fy));
                Eigen::Vector2cd v(p.real(), p.imag());
                int base = chart_class(v, lines, config.budget, escape, jet_step, model);
                if (base < 0) continue;
                Eigen::VectorXcd vv(2);
                vv << v[0], v[1];
                BlockVector point(chart.germ.blocks(), vv);
                Eigen::Vector2cd image;
                try {
                    auto phi = coordinate.eval(point);
                    image = Eigen::Vector2cd(phi.coords()[0], phi.coords()[1]);
                } catch (const NumericalError&) {
                    continue;
                }
                int mapped = chart_class(image, lines, config.budget, escape, model_step, model);
                if (mapped < 0) continue;
                ++decided;
                if (mapped == base) ++matched;
            }
        result.overlay_decided = static_cast<int>(decided);
        result.overlay_agreement = decided > 0 ? double(matched) / decided : 0.0;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Green level bands of a one-variable superattracting polynomial

ImageBuffer render_green_levels(const RenderConfig& config, const std::vector<Complex>& coeffs) {
    BlockStructure one({1});
    std::vector<PolyMap::Terms> terms(1);
    for (std::size_t d = 0; d < coeffs.size(); ++d) {
        if (coeffs[d] == Complex(0.0)) continue;
        terms[0][Exponent{int(d)}] = coeffs[d];
    }
    auto germ = extract_quasihomogeneous_part(PolyMap(one, one, std::move(terms)), one);
    GreenOptions gopts;
    gopts.escape_radius = 1e6;
    gopts.n_max = config.budget;
    auto ev = make_green_evaluator(germ, gopts);

    ImageBuffer image(config.px_width, config.px_height);
    parallel_rows(config.px_height, [&](int y) {
        for (int x = 0; x < config.px_width; ++x) {
            Eigen::VectorXcd z(1);
            z[0] = config.pixel_center(x, y);
            BlockVector v(germ.blocks(), z);
            if (classify_basin(ev, v) != BasinClass::Attracted) {
                image.set(x, y, kEscape);
                continue;
            }
            try {
                auto g = green_adapted(ev, v);
                if (!g.max_value.finite) {
                    image.set(x, y, kInterior);
                    continue;
                }
                long band = long(std::floor(g.max_value.value / 0.5));
                image.set(x, y, (band & 1) ? kBlack : kWhite);
            } catch (const NumericalError&) {
                image.set(x, y, kUndecided);
            }
        }
    });
    return image;
}

}  // namespace bottcher::render
