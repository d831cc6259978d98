#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "ad/graph.hpp"
#include "core/rng.hpp"

namespace ecdm::nn {

struct DiscriminatorConfig {
    int in_channels = 1;
    int base_channels = 32;  // doubles at each of the first three layers
    void validate() const;
};

// Patch-level convolutional classifier: three strided/unit-stride 4x4 conv +
// leaky-ReLU layers followed by a 1-channel conv and a sigmoid, giving a grid
// of per-patch scores in (0,1). No normalization layers, so a patch's score
// depends only on pixels inside its receptive field.
class Discriminator {
public:
    Discriminator(const DiscriminatorConfig& cfg, uint64_t init_seed);

    ad::Graph::Id build(ad::Graph& g, ad::Graph::Id image);
    ad::Tensor forward(const ad::Tensor& image);

    std::vector<ad::Param*> params();
    int64_t param_count();
    const DiscriminatorConfig& config() const { return cfg_; }

    // Conservative geometry for receptive-field probes: a score at grid cell
    // (i, j) depends only on input pixels within `receptive_field` of
    // (i*stride, j*stride).
    static constexpr int receptive_field() { return 34; }
    static constexpr int output_stride() { return 4; }

private:
    struct Layer {
        ad::Param *w, *b;
        int stride;
    };
    ad::Param* make_param(const std::string& name, ad::Tensor init);
    Layer make_layer(const std::string& name, int c_in, int c_out, int stride, Rng& rng);

    DiscriminatorConfig cfg_;
    std::vector<std::unique_ptr<ad::Param>> store_;
    std::vector<Layer> layers_;
};

} // namespace ecdm::nn
