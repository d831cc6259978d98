#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecdm {

// Raster image in CHW layout, values normalized to [-1, 1].
// channels is 1 for thermal/edge images and 3 for visible images.
struct ImageTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    ImageTensor() = default;
    ImageTensor(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          values(static_cast<size_t>(c) * h * w, fill) {}

    size_t size() const { return values.size(); }
    double& at(int c, int y, int x) {
        return values[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return values[(static_cast<size_t>(c) * height + y) * width + x];
    }
    bool same_shape(const ImageTensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Single-channel high-pass edge image; spatial mean is ~0 by construction
// because the DC bin is removed by the filter.
struct EdgeMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    EdgeMap() = default;
    EdgeMap(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

    size_t size() const { return values.size(); }
    double& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
};

inline void require_same_shape(const ImageTensor& a, const ImageTensor& b,
                               const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(a.channels) + "x" + std::to_string(a.height) +
                                    "x" + std::to_string(a.width) + " vs " +
                                    std::to_string(b.channels) + "x" + std::to_string(b.height) +
                                    "x" + std::to_string(b.width) + ")");
}

} // namespace ecdm
