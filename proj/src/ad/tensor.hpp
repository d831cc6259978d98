#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ecdm::ad {

// Dense float tensor in NCHW layout. 2-D data (e.g. embeddings) uses {n, c}
// with h = w = 1; scalars use {1,1,1,1}.
struct Tensor {
    int n = 1, c = 1, h = 1, w = 1;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

    static Tensor scalar(float value) {
        Tensor t(1, 1, 1, 1);
        t.v[0] = value;
        return t;
    }

    size_t numel() const { return v.size(); }
    size_t plane() const { return static_cast<size_t>(h) * w; }
    size_t sample_stride() const { return static_cast<size_t>(c) * h * w; }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    std::string shape_str() const {
        return "{" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + "}";
    }

    float* sample(int i) { return v.data() + static_cast<size_t>(i) * sample_stride(); }
    const float* sample(int i) const {
        return v.data() + static_cast<size_t>(i) * sample_stride();
    }
};

// Trainable parameter: value plus accumulated gradient. Optimizer state
// (Adam moments) lives with the optimizer, keyed by parameter identity.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string name_, Tensor value_)
        : name(std::move(name_)), grad(value_.n, value_.c, value_.h, value_.w) {
        value = std::move(value_);
    }

    void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0f); }
};

} // namespace ecdm::ad
