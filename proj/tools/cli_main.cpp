#include "cli_main.hpp"

#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bottcher/bottcher1d.hpp"
#include "bottcher/fields.hpp"
#include "bottcher/green.hpp"
#include "bottcher/json_io.hpp"
#include "bottcher/koch.hpp"
#include "bottcher/render.hpp"

namespace bottcher {

namespace {

using nlohmann::json;

void emit(const json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw StructuralError("cannot open output file: " + out_path);
    out << j.dump(2) << "\n";
}

std::vector<Complex> parse_complex_list(const std::vector<std::string>& tokens) {
    std::vector<Complex> out;
    for (const auto& token : tokens) {
        double re = 0.0, im = 0.0;
        char comma = 0;
        std::istringstream in(token);
        in >> re;
        if (in >> comma && comma == ',') in >> im;
        out.emplace_back(re, im);
    }
    return out;
}

koch::Partition parse_partition(const std::string& text, int m) {
    // blocks separated by '|', elements by ','
    std::vector<std::vector<int>> blocks;
    std::istringstream in(text);
    std::string blk;
    while (std::getline(in, blk, '|')) {
        std::vector<int> ids;
        std::istringstream bin(blk);
        std::string tok;
        while (std::getline(bin, tok, ',')) ids.push_back(std::stoi(tok));
        blocks.push_back(std::move(ids));
    }
    auto part = koch::Partition::of(std::move(blocks));
    if (part.ground_size() != m) throw StructuralError("partition does not cover 0..m-1");
    return part;
}

json complex_json(Complex z) { return {{"re", z.real()}, {"im", z.imag()}}; }

json vector_json(const Eigen::VectorXcd& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(complex_json(v[i]));
    return out;
}

json matrix_json(const Eigen::MatrixXcd& m) {
    json out = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(complex_json(m(r, c)));
        out.push_back(std::move(row));
    }
    return out;
}

struct GlobalFlags {
    std::string map_path;
    std::string out_path;
    std::uint64_t seed = 1;
    double tol = 1e-9;
};

// named corpus germs for the conjugacy pipeline
AdaptedGerm named_germ(const std::string& name, const std::string& map_path) {
    if (name == "chart31")
        return koch::chart_germ(4, koch::Partition::of({{0, 1, 2}, {3}})).germ;
    if (name == "chart22")
        return koch::chart_germ(4, koch::Partition::of({{0, 1}, {2, 3}})).germ;
    if (name == "cusp-tail") {
        BlockStructure one({1});
        std::vector<PolyMap::Terms> coords(1);
        coords[0][{2}] = 1.0;
        coords[0][{3}] = 1.0;
        return extract_quasihomogeneous_part(PolyMap(one, one, std::move(coords)), one);
    }
    if (name == "map") {
        if (map_path.empty()) throw StructuralError("--map FILE required for --germ map");
        PolyMap map = load_polymap(map_path);
        return extract_quasihomogeneous_part(map, map.input_blocks());
    }
    throw StructuralError("unknown germ name: " + name);
}

std::vector<VectorField> block_fields(const BlockStructure& blocks) {
    std::vector<VectorField> fields;
    for (int j = 0; j < blocks.block_count(); ++j)
        fields.push_back(VectorField::block_linear(blocks, j));
    return fields;
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"numerical laboratory for superattracting coordinates"};
    app.require_subcommand(1);
    GlobalFlags flags;
    app.add_option("--map", flags.map_path, "map description file (JSON)");
    app.add_option("--seed", flags.seed, "random seed");
    app.add_option("--tol", flags.tol, "check tolerance");
    app.add_option("--out", flags.out_path, "output path");

    int exit_code = 0;

    // ---------------------------------------------------------------- bottcher1d
    auto* b1 = app.add_subcommand("bottcher1d", "one-variable coordinate");
    double b1_are = 1.0, b1_aim = 0.0;
    int b1_k = 2, b1_N = 12;
    std::vector<std::string> b1_tail;
    double b1_zre = 0.05, b1_zim = 0.0, b1_radius = 0.05;
    int b1_samples = 100;
    auto* b1_series = b1->add_subcommand("series", "series coefficients");
    auto* b1_eval = b1->add_subcommand("eval", "series and limit evaluation");
    auto* b1_res = b1->add_subcommand("residual", "conjugacy residual on a circle");
    for (auto* sub : {b1_series, b1_eval, b1_res}) {
        sub->add_option("--a-re", b1_are);
        sub->add_option("--a-im", b1_aim);
        sub->add_option("--k", b1_k);
        sub->add_option("--tail", b1_tail, "coefficients of z^{k+1}, ... as re[,im]");
    }
    b1_series->add_option("--N", b1_N);
    b1_eval->add_option("--z-re", b1_zre);
    b1_eval->add_option("--z-im", b1_zim);
    b1_res->add_option("--radius", b1_radius);
    b1_res->add_option("--samples", b1_samples);
    b1->callback([&] {
        Germ1D f{Complex(b1_are, b1_aim), b1_k, parse_complex_list(b1_tail)};
        json out;
        out["schema"] = 1;
        if (b1->got_subcommand("series")) {
            auto phi = bottcher_series(f, b1_N);
            json coeffs = json::array();
            for (const auto& c : phi.coeffs) coeffs.push_back(complex_json(c));
            out["coefficients_from_z2"] = coeffs;
            out["convergence_radius_estimate"] = phi.convergence_radius_estimate;
        } else if (b1->got_subcommand("eval")) {
            Complex z(b1_zre, b1_zim);
            Complex limit = bottcher_eval(f, z);
            auto phi = bottcher_series(f, 20);
            out["limit"] = complex_json(limit);
            out["series"] = complex_json(phi.eval_series(z));
            out["methods_difference"] = std::abs(limit - phi.eval_series(z));
        } else {
            double worst = 0.0;
            for (int i = 0; i < b1_samples; ++i) {
                double theta = 2.0 * M_PI * i / b1_samples;
                Complex z = b1_radius * Complex(std::cos(theta), std::sin(theta));
                Complex lhs = bottcher_eval(f, f.eval(z));
                Complex rhs = f.a * std::pow(bottcher_eval(f, z), f.k);
                worst = std::max(worst, std::abs(lhs - rhs));
            }
            out["conjugacy_residual"] = worst;
            out["tol"] = flags.tol;
            if (worst > flags.tol) exit_code = 1;
        }
        emit(out, flags.out_path);
    });

    // --------------------------------------------------------------------- green
    auto* green_cmd = app.add_subcommand("green", "dynamical Green functions");
    std::vector<std::string> green_point;
    int green_samples = 50;
    double green_radius = 0.3;
    auto* green_eval = green_cmd->add_subcommand("eval", "value and trace at a point");
    green_eval->add_option("--point", green_point, "coordinates as re[,im]")->required();
    auto* green_scan = green_cmd->add_subcommand("scan", "CSV over random basin samples");
    green_scan->add_option("--samples", green_samples);
    green_scan->add_option("--radius", green_radius);
    green_cmd->callback([&] {
        if (flags.map_path.empty()) throw StructuralError("green needs --map FILE");
        PolyMap map = load_polymap(flags.map_path);
        auto germ = extract_quasihomogeneous_part(map, map.input_blocks());
        auto ev = make_green_evaluator(germ);
        if (green_cmd->got_subcommand("eval")) {
            auto coords = parse_complex_list(green_point);
            Eigen::VectorXcd v(coords.size());
            for (std::size_t i = 0; i < coords.size(); ++i) v[i] = coords[i];
            auto value = green_adapted(ev, BlockVector(germ.blocks(), v));
            emit(green_value_to_json(value), flags.out_path);
        } else {
            std::mt19937_64 rng(flags.seed);
            std::normal_distribution<double> gauss(0.0, 1.0);
            std::ostringstream csv;
            csv << green_csv_header(germ.blocks().dimension(), germ.blocks().block_count())
                << "\n";
            int written = 0;
            for (int trial = 0; trial < 50 * green_samples && written < green_samples; ++trial) {
                Eigen::VectorXcd v(germ.blocks().dimension());
                for (int i = 0; i < v.size(); ++i) v[i] = Complex(gauss(rng), gauss(rng));
                v *= green_radius / v.norm();
                BlockVector x(germ.blocks(), v);
                if (classify_basin(ev, x) != BasinClass::Attracted) continue;
                csv << green_csv_row(x, green_adapted(ev, x)) << "\n";
                ++written;
            }
            if (flags.out_path.empty()) {
                std::cout << csv.str();
            } else {
                std::ofstream out(flags.out_path);
                out << csv.str();
            }
        }
    });

    // ----------------------------------------------------------------- conjugacy
    auto* conj = app.add_subcommand("conjugacy", "coordinate construction reports");
    std::string conj_germ = "chart22";
    int conj_level = 4;
    int conj_points = 30;
    auto* conj_local = conj->add_subcommand("local", "local conjugacy residuals");
    auto* conj_global = conj->add_subcommand("global", "basin extension residuals");
    for (auto* sub : {conj_local, conj_global}) {
        sub->add_option("--germ", conj_germ, "chart31|chart22|cusp-tail|map");
        sub->add_option("--level", conj_level);
        sub->add_option("--points", conj_points);
    }
    conj->callback([&] {
        auto germ = named_germ(conj_germ, flags.map_path);
        LocalBottcherOptions opts;
        opts.seed = flags.seed;
        opts.diagnostic_samples = conj_points;
        auto coordinate = local_bottcher(germ, block_fields(germ.blocks()), conj_level, opts);
        json out;
        out["schema"] = 1;
        out["level"] = conj_level;
        out["degrees"] = germ.blocks().degrees;
        out["conjugacy_residual"] = coordinate.diagnostics().conjugacy_residual;
        out["diagram_residual"] = coordinate.diagnostics().diagram_residual;
        out["cauchy_increment"] = coordinate.diagnostics().cauchy_increment;
        out["origin_derivative_error"] = coordinate.diagnostics().origin_derivative_error;
        out["samples_used"] = coordinate.diagnostics().samples_used;
        if (conj->got_subcommand("global")) {
            std::mt19937_64 rng(flags.seed);
            std::normal_distribution<double> gauss(0.0, 1.0);
            PolyMap model = germ.quasihomogeneous_part.assembled();
            double residual = 0.0, discrepancy = 0.0;
            int used = 0;
            const int m = germ.blocks().dimension();
            for (int trial = 0; trial < 40 * conj_points && used < conj_points; ++trial) {
                Eigen::VectorXcd v(m);
                for (int i = 0; i < m; ++i) v[i] = Complex(gauss(rng), gauss(rng));
                v *= (0.2 + 0.15 * (trial % 4)) / v.norm();
                BlockVector x(germ.blocks(), v);
                try {
                    auto ext = coordinate.extend(x);
                    auto ext_f = coordinate.extend(germ.map.eval(x));
                    residual =
                        std::max(residual, (ext_f.value - model.eval(ext.value)).norm());
                    discrepancy = std::max(discrepancy, ext.discrepancy);
                    ++used;
                } catch (const NumericalError&) {
                    continue;
                }
            }
            out["extension_points"] = used;
            out["global_conjugacy_residual"] = residual;
            out["backward_time_discrepancy"] = discrepancy;
            if (residual > std::max(flags.tol, 1e-5)) exit_code = 1;
        }
        emit(out, flags.out_path);
    });

    // ---------------------------------------------------------------------- koch
    auto* koch_cmd = app.add_subcommand("koch", "the critical-point family");
    int koch_m = 3;
    std::string koch_blocks = "0,1|2";
    auto* k_fixed = koch_cmd->add_subcommand("fixed-points", "census off the diagonal");
    auto* k_spec = koch_cmd->add_subcommand("spectrum", "derivative spectrum at a fixed point");
    auto* k_strata = koch_cmd->add_subcommand("strata", "merge-stratum critical orders");
    auto* k_exp = koch_cmd->add_subcommand("expansion", "block expansion constant and order");
    auto* k_push = koch_cmd->add_subcommand("pushforward", "differential push-forward duality");
    auto* k_saddle = koch_cmd->add_subcommand("super-saddle", "fixed-point splitting report");
    for (auto* sub : {k_fixed, k_spec, k_strata, k_exp, k_push, k_saddle})
        sub->add_option("--m", koch_m);
    k_exp->add_option("--blocks", koch_blocks, "partition, e.g. 0,1,2|3");
    k_saddle->add_option("--blocks", koch_blocks);
    koch_cmd->callback([&] {
        json out;
        out["schema"] = 1;
        out["m"] = koch_m;
        if (koch_cmd->got_subcommand("fixed-points")) {
            auto census = koch::koch_fixed_points(koch_m);
            out["count"] = census.points.size();
            out["max_residual"] = census.max_residual;
            out["min_pairwise_distance"] = census.min_pairwise_distance;
            json points = json::array();
            for (const auto& p : census.points) points.push_back(vector_json(p));
            out["points"] = std::move(points);
        } else if (koch_cmd->got_subcommand("spectrum")) {
            auto census = koch::koch_fixed_points(koch_m);
            auto spectrum = koch::koch_spectrum(census.points.front());
            json eigen = json::array();
            for (int i = 0; i < spectrum.eigenvalues.size(); ++i)
                eigen.push_back(complex_json(spectrum.eigenvalues[i]));
            out["eigenvalues"] = std::move(eigen);
            out["alignment_residuals"] = spectrum.alignment_residuals;
        } else if (koch_cmd->got_subcommand("strata")) {
            json rows = json::array();
            for (const auto& part : koch::all_partitions(koch_m, 2)) {
                for (int a = 0; a < part.block_count(); ++a)
                    for (int b = a + 1; b < part.block_count(); ++b) {
                        auto order = koch::critical_order_check(koch_m, part, a, b, flags.seed);
                        json row;
                        row["blocks"] = part.blocks;
                        row["merge"] = {a, b};
                        row["expected"] = order.expected;
                        row["fitted"] = order.slope;
                        rows.push_back(std::move(row));
                    }
                if (rows.size() > 40) break;  // keep the report small for large m
            }
            out["orders"] = std::move(rows);
        } else if (koch_cmd->got_subcommand("expansion")) {
            auto part = parse_partition(koch_blocks, koch_m);
            Eigen::VectorXcd values(part.block_count());
            for (int b = 0; b < part.block_count(); ++b)
                values[b] = Complex(1.0 + 0.3 * b, 0.2 * b);
            Eigen::VectorXcd x = koch::stratum_point(koch_m, part, values);
            std::mt19937_64 rng(flags.seed);
            std::normal_distribution<double> gauss(0.0, 1.0);
            Eigen::VectorXcd v(koch_m);
            for (int i = 0; i < koch_m; ++i) v[i] = Complex(gauss(rng), gauss(rng));
            v.array() -= v.sum() / double(koch_m);
            auto expansion = koch::stratum_expansion(x, part, 0, v);
            out["leading_constant"] = complex_json(expansion.leading_constant);
            out["remainder_order"] = expansion.slope;
        } else if (koch_cmd->got_subcommand("pushforward")) {
            auto census = koch::koch_fixed_points(koch_m);
            auto duality = koch::pushforward_duality(census.points.front(),
                                                     koch::Partition::singletons(koch_m));
            out["pushforward_matrix"] = matrix_json(duality.pushforward_matrix);
            out["tangent_matrix"] = matrix_json(duality.tangent_matrix);
            out["transpose_inverse_error"] = duality.max_entry_error;
            out["spectral_radius"] = duality.spectral_radius;
            auto x = census.points.front();
            auto P = koch::build_px(x);
            double R = koch::certify_disk_radius(P);
            Eigen::VectorXcd lead = Eigen::VectorXcd::Zero(koch_m - 1);
            lead[0] = 1.0;
            auto q = koch::make_quadratic_differential(x, lead, R);
            auto result = koch::qd_pushforward(P, q, 20000);
            out["contraction_ratio"] = result.result_l1 / result.source_l1;
            if (duality.max_entry_error > 1e-6 || duality.spectral_radius >= 1.0) exit_code = 1;
        } else if (koch_cmd->got_subcommand("super-saddle")) {
            auto part = parse_partition(koch_blocks, koch_m);
            Eigen::VectorXcd x;
            if (part.block_count() == 2) {
                // fixed point on the one-dimensional stratum line
                Eigen::MatrixXcd B = koch::stratum_basis(koch_m, part);
                Eigen::VectorXcd u = B.col(0);
                Eigen::VectorXcd hu = koch::koch_h(u);
                Complex c = hu[0] / u[0];
                x = std::pow(1.0 / c, 1.0 / double(koch_m)) * u;
            } else {
                x = koch::koch_fixed_points(koch_m).points.front();
            }
            auto report = koch::super_saddle_report(x, part);
            out["rank"] = report.rank;
            out["stratum_dimension"] = report.stratum_dimension;
            out["image_alignment"] = report.image_alignment;
            out["kernel_separation"] = report.kernel_separation;
            out["min_restricted_modulus"] = report.min_restricted_modulus;
            out["splits"] = report.splits;
            if (!report.splits || report.min_restricted_modulus <= 1.0) exit_code = 1;
        }
        emit(out, flags.out_path);
    });

    // -------------------------------------------------------------------- render
    auto* render_cmd = app.add_subcommand("render", "deterministic figure output");
    render::RenderConfig cfg;
    double rays_cre = -0.5, rays_cim = 0.25;
    int overlay_level = 4;
    bool size_set = false;
    auto* r_rays = render_cmd->add_subcommand("rays", "external-ray checkerboards");
    r_rays->add_option("--c-re", rays_cre);
    r_rays->add_option("--c-im", rays_cim);
    auto* r_quintic = render_cmd->add_subcommand("quintic-basins", "degree-6 basin coloring");
    auto* r_chart = render_cmd->add_subcommand("chart-basins", "two-block chart basins");
    r_chart->add_option("--level", overlay_level);
    auto* r_green = render_cmd->add_subcommand("green-levels", "Green level bands (1-d map)");
    for (auto* sub : {r_rays, r_quintic, r_chart, r_green}) {
        sub->add_option("--width", cfg.width)->each([&](const std::string&) { size_set = true; });
        sub->add_option("--px", cfg.px_width);
        sub->add_option("--budget", cfg.budget);
        sub->add_option("--center-x", cfg.center_x);
        sub->add_option("--center-y", cfg.center_y);
    }
    render_cmd->callback([&] {
        cfg.px_height = cfg.px_width;
        cfg.height = cfg.width;
        cfg.seed = flags.seed;
        std::string base = flags.out_path.empty() ? "render.ppm" : flags.out_path;
        auto stem = base.size() > 4 && base.substr(base.size() - 4) == ".ppm"
                        ? base.substr(0, base.size() - 4)
                        : base;
        json report;
        report["schema"] = 1;
        if (render_cmd->got_subcommand("rays")) {
            Complex c(rays_cre, rays_cim);
            Complex root = std::sqrt(Complex(1.0) - 4.0 * c);
            double multiplier = std::min(std::abs(1.0 - root), std::abs(1.0 + root));
            if (multiplier >= 1.0)
                std::cerr << "note: no attracting fixed point; the connected-set "
                             "assumption may fail for this parameter\n";
            auto images = render_rays(cfg, c);
            render::write_ppm(images.first, stem + "_map.ppm");
            render::write_ppm(images.second, stem + "_model.ppm");
            report["outputs"] = {stem + "_map.ppm", stem + "_model.ppm"};
        } else if (render_cmd->got_subcommand("quintic-basins")) {
            if (!size_set) cfg.width = cfg.height = 3.0;
            auto image = render_quintic_basins(cfg);
            render::write_ppm(image, stem + ".ppm");
            auto symmetry = render::quintic_rotation_check(cfg);
            report["outputs"] = {stem + ".ppm"};
            report["rotation_agreement"] = symmetry.agreement;
            if (symmetry.agreement < 0.999) exit_code = 1;
        } else if (render_cmd->got_subcommand("chart-basins")) {
            render::ChartBasinOptions opts;
            opts.coordinate_level = overlay_level;
            auto result = render_chart_basins(cfg, opts);
            render::write_ppm(result.left, stem + "_chart.ppm");
            render::write_ppm(result.right, stem + "_model.ppm");
            report["outputs"] = {stem + "_chart.ppm", stem + "_model.ppm"};
            report["overlay_agreement"] = result.overlay_agreement;
            report["overlay_decided"] = result.overlay_decided;
            report["relabel_agreement"] = result.relabel_agreement;
            if (result.overlay_agreement < 0.99 || result.relabel_agreement < 0.999)
                exit_code = 1;
        } else {
            std::vector<Complex> coeffs{0.0, 0.0, 1.0, 1.0};  // z^2 + z^3 by default
            if (!flags.map_path.empty()) {
                PolyMap map = load_polymap(flags.map_path);
                if (map.input_dimension() != 1)
                    throw StructuralError("green-levels renders one-variable maps");
                coeffs.assign(map.total_degree() + 1, Complex(0.0));
                for (const auto& [e, c] : map.coords()[0]) coeffs[e[0]] = c;
            }
            if (!size_set) cfg.width = cfg.height = 1.6;
            auto image = render_green_levels(cfg, coeffs);
            render::write_ppm(image, stem + ".ppm");
            report["outputs"] = {stem + ".ppm"};
        }
        emit(report, "");
    });

    // ---------------------------------------------------------------------- demo
    auto* demo = app.add_subcommand("demo", "worked obstruction examples");
    demo->add_subcommand("cusp", "the quadratic-cubic map whose critical curve has a cusp");
    demo->add_subcommand("nonopen", "squared nilpotent-derivative map and the non-open model");
    demo->require_subcommand(1);
    demo->callback([&] {
        json out;
        out["schema"] = 1;
        BlockStructure two({1, 1});
        if (demo->got_subcommand("cusp")) {
            std::vector<PolyMap::Terms> coords(2);
            coords[0][{2, 0}] = 1.0;
            coords[0][{0, 3}] = 1.0;
            coords[1][{0, 2}] = 1.0;
            PolyMap F(two, two, std::move(coords));
            auto germ = extract_quasihomogeneous_part(F, two);
            out["germ"] = germ_report_to_json(germ);
            out["euler"] =
                euler_report_to_json(euler_residual(F, BlockStructure({1, 1}, {2, 2}), 100, 7));
            // the image of the vertical axis is the cuspidal curve (t^3, t^2)
            json curve = json::array();
            for (double t : {0.1, 0.2, 0.3}) {
                Eigen::VectorXcd v(2);
                v << 0.0, t;
                curve.push_back(vector_json(F.eval(v)));
            }
            out["axis_image_samples"] = std::move(curve);
            if (germ.adapted) exit_code = 1;  // this map must be flagged non-adapted
        } else {
            std::vector<PolyMap::Terms> coords(2);
            coords[0][{2, 0}] = 1.0;
            coords[0][{0, 3}] = -1.0;
            coords[1][{0, 2}] = 1.0;
            PolyMap F(two, two, std::move(coords));
            auto FF = compose(F, F, 16);
            out["square_jet"] = polymap_to_json(FF);
            // the candidate model (x, y) -> (y^2, y^4) has a one-dimensional
            // image: every value satisfies second = first^2 exactly
            std::mt19937_64 rng(flags.seed);
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            double max_defect = 0.0;
            int grid = 0;
            for (int i = 0; i < 400; ++i) {
                Complex y(u(rng), u(rng));
                Complex first = y * y, second = y * y * y * y;
                max_defect = std::max(max_defect, std::abs(second - first * first));
                ++grid;
            }
            out["model_image_relation_defect"] = max_defect;
            out["model_image_dimension"] = max_defect < 1e-12 ? 1 : 2;
            out["grid_samples"] = grid;
            if (max_defect > 1e-12) exit_code = 1;
        }
        emit(out, flags.out_path);
    });

    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help() << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    return exit_code;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
    try {
        return run(args);
    } catch (const StructuralError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace bottcher
