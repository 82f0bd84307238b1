#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bottcher/algebra.hpp"

namespace bottcher::render {

struct RenderConfig {
    double center_x = 0.0;
    double center_y = 0.0;
    double width = 4.0;   // world units
    double height = 4.0;
    int px_width = 600;
    int px_height = 600;
    int budget = 60;       // iteration budget
    std::uint64_t seed = 0;
    int angle_sectors_log2 = 4;  // checkerboard angular resolution
    std::string out_path;

    Complex pixel_center(int px, int py) const;
};

struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // rows top to bottom, 3 bytes per pixel

    ImageBuffer() = default;
    ImageBuffer(int w, int h) : width(w), height(h), rgb(std::size_t(w) * h * 3, 0) {}
    void set(int x, int y, std::array<std::uint8_t, 3> color);
    std::array<std::uint8_t, 3> at(int x, int y) const;
    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

/// Binary P6, maxval 255.
void write_ppm(const ImageBuffer& image, const std::string& path);
ImageBuffer read_ppm(const std::string& path);

/// External-ray checkerboards of a quadratic polynomial and its model z^2:
/// escaping pixels are colored by the parity of the angular sector and the
/// dyadic potential band, non-escaping pixels solid.
std::pair<ImageBuffer, ImageBuffer> render_rays(const RenderConfig& config, Complex c);

/// Basins of the five superattracting fixed critical points of the quintic
/// interpolation family polynomial (6/5) z + z^6.
ImageBuffer render_quintic_basins(const RenderConfig& config);

/// Classified-pixel comparison of two renders of the same deterministic
/// procedure, class equality measured through the palette permutation.
struct SymmetryCheck {
    double agreement = 0.0;  // fraction of decided pixels whose classes match
    int decided = 0;
};

/// Rotation symmetry of the quintic basins: classes at e^{2 pi i/5} p match
/// the shifted palette.
SymmetryCheck quintic_rotation_check(const RenderConfig& config);

struct ChartBasinResult {
    ImageBuffer left;    // chart germ at the two-block fixed point
    ImageBuffer right;   // block family map on the same chart
    double overlay_agreement = 0.0;  // coordinate respects the coloring
    int overlay_decided = 0;
    double relabel_agreement = 0.0;  // coordinate-permutation symmetry of the right panel
};

struct ChartBasinOptions {
    int coordinate_level = 4;  // level of the local coordinate for the overlay
    int overlay_grid = 50;
    bool run_overlay = true;
};

/// Real-slice basin pictures at the (3,1)-block superattracting point for
/// m = 4: every decided pixel is colored by the invariant line its orbit
/// direction converges to.
ChartBasinResult render_chart_basins(const RenderConfig& config, const ChartBasinOptions& opts = {});

/// Level bands of the Green function of a one-variable map given by ascending
/// polynomial coefficients (f(0) = 0 superattracting).
ImageBuffer render_green_levels(const RenderConfig& config, const std::vector<Complex>& coeffs);

}  // namespace bottcher::render
