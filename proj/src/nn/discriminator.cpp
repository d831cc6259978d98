#include "nn/discriminator.hpp"

#include <cmath>
#include <stdexcept>

namespace ecdm::nn {

void DiscriminatorConfig::validate() const {
    if (in_channels < 1 || base_channels < 1)
        throw std::invalid_argument("DiscriminatorConfig: counts must be positive");
}

ad::Param* Discriminator::make_param(const std::string& name, ad::Tensor init) {
    store_.push_back(std::make_unique<ad::Param>(name, std::move(init)));
    return store_.back().get();
}

Discriminator::Layer Discriminator::make_layer(const std::string& name, int c_in, int c_out,
                                               int stride, Rng& rng) {
    ad::Tensor w(c_out, c_in, 4, 4);
    const double std = std::sqrt(2.0 / (static_cast<double>(c_in) * 16));
    for (auto& v : w.v) v = static_cast<float>(rng.normal() * std);
    Layer layer;
    layer.w = make_param(name + ".w", std::move(w));
    layer.b = make_param(name + ".b", ad::Tensor(1, c_out, 1, 1));
    layer.stride = stride;
    return layer;
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    const int b = cfg_.base_channels;
    layers_.push_back(make_layer("d0", cfg_.in_channels, b, 2, rng));
    layers_.push_back(make_layer("d1", b, 2 * b, 2, rng));
    layers_.push_back(make_layer("d2", 2 * b, 4 * b, 1, rng));
    layers_.push_back(make_layer("d3", 4 * b, 1, 1, rng));
}

ad::Graph::Id Discriminator::build(ad::Graph& g, ad::Graph::Id image) {
    const ad::Tensor& v = g.value(image);
    if (v.c != cfg_.in_channels)
        throw std::invalid_argument("discriminator: expected " +
                                    std::to_string(cfg_.in_channels) + "-channel input, got " +
                                    std::to_string(v.c));
    ad::Graph::Id h = image;
    for (size_t i = 0; i < layers_.size(); ++i) {
        h = g.conv2d(h, g.param(*layers_[i].w), g.param(*layers_[i].b), 4, layers_[i].stride, 1);
        if (i + 1 < layers_.size()) h = g.leaky_relu(h, 0.2f);
    }
    return g.sigmoid(h);
}

ad::Tensor Discriminator::forward(const ad::Tensor& image) {
    ad::Graph g;
    g.freeze(params());
    return g.value(build(g, g.input(image)));
}

std::vector<ad::Param*> Discriminator::params() {
    std::vector<ad::Param*> out;
    out.reserve(store_.size());
    for (auto& p : store_) out.push_back(p.get());
    return out;
}

int64_t Discriminator::param_count() { return count_params(params()); }

} // namespace ecdm::nn
