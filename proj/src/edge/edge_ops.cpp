#include "edge/edge_ops.hpp"

#include "edge/fft.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecdm::edge {

namespace {

constexpr double kPi = 3.14159265358979323846264338328;

// Signed normalized frequency of DFT bin k out of n, in [-0.5, 0.5).
double signed_freq(int k, int n) {
    const int half = n / 2;
    const int s = (k <= (n - 1) / 2) ? k : k - n;
    (void)half;
    return static_cast<double>(s) / n;
}

EdgeMap apply_mask(const EdgeMap& input, const HighPassConfig& cfg) {
    const int h = input.height, w = input.width;
    std::vector<cplx> grid(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < grid.size(); ++i) grid[i] = cplx(input.values[i], 0.0);
    fft2(grid, h, w);
    const std::vector<double> mask = highpass_mask(h, w, cfg);
    for (size_t i = 0; i < grid.size(); ++i) grid[i] *= mask[i];
    ifft2(grid, h, w);
    EdgeMap out(h, w);
    for (size_t i = 0; i < grid.size(); ++i) out.values[i] = grid[i].real();
    return out;
}

} // namespace

void validate(const HighPassConfig& cfg) {
    if (!(cfg.cutoff_fraction > 0.0) || !(cfg.cutoff_fraction < 1.0))
        throw std::invalid_argument("HighPassConfig: cutoff_fraction must be in (0, 1)");
    if (cfg.soft_width < 0.0)
        throw std::invalid_argument("HighPassConfig: soft_width must be >= 0");
}

std::vector<double> highpass_mask(int height, int width, const HighPassConfig& cfg) {
    validate(cfg);
    if (height < 2 || width < 2)
        throw std::invalid_argument("highpass_mask: grid must be at least 2x2");

    std::vector<double> mask(static_cast<size_t>(height) * width);
    const double lo = cfg.cutoff_fraction;
    const double hi = cfg.cutoff_fraction + cfg.soft_width;
    for (int u = 0; u < height; ++u) {
        const double fu = signed_freq(u, height);
        for (int v = 0; v < width; ++v) {
            const double fv = signed_freq(v, width);
            // radius normalized so 1.0 is the Nyquist frequency on each axis
            const double r = std::sqrt(fu * fu + fv * fv) / 0.5;
            double m;
            if (r <= lo) {
                m = 0.0;
            } else if (r >= hi || cfg.soft_width == 0.0) {
                m = 1.0;
            } else {
                const double x = (r - lo) / cfg.soft_width;
                m = 0.5 - 0.5 * std::cos(kPi * x);
            }
            mask[static_cast<size_t>(u) * width + v] = m;
        }
    }
    mask[0] = 0.0;  // DC always removed
    return mask;
}

EdgeMap luminance(const ImageTensor& image) {
    EdgeMap out(image.height, image.width);
    if (image.channels == 1) {
        out.values.assign(image.values.begin(), image.values.end());
    } else if (image.channels == 3) {
        const size_t plane = static_cast<size_t>(image.height) * image.width;
        for (size_t i = 0; i < plane; ++i) {
            out.values[i] = 0.299 * image.values[i] + 0.587 * image.values[plane + i] +
                            0.114 * image.values[2 * plane + i];
        }
    } else {
        throw std::invalid_argument("luminance: expected 1 or 3 channels, got " +
                                    std::to_string(image.channels));
    }
    return out;
}

EdgeMap extract_edges(const ImageTensor& image, const HighPassConfig& cfg) {
    if (image.height < 2 || image.width < 2)
        throw std::invalid_argument("extract_edges: image must be at least 2x2");
    return apply_mask(luminance(image), cfg);
}

EdgeMap extract_edges(const EdgeMap& map, const HighPassConfig& cfg) {
    if (map.height < 2 || map.width < 2)
        throw std::invalid_argument("extract_edges: map must be at least 2x2");
    return apply_mask(map, cfg);
}

EdgeMap normalize_condition(const EdgeMap& map) {
    double peak = 0.0;
    for (double v : map.values) peak = std::max(peak, std::abs(v));
    EdgeMap out = map;
    if (peak > 0.0) {
        const double s = 1.0 / peak;
        for (double& v : out.values) v *= s;
    }
    return out;
}

} // namespace ecdm::edge
