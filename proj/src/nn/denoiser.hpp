#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "ad/graph.hpp"
#include "core/rng.hpp"

namespace ecdm::nn {

using ad::Graph;
using ad::Param;
using ad::Tensor;

// Sinusoidal position embedding: first dim/2 entries sin(t*w_k), last dim/2
// cos(t*w_k), with frequencies geometrically spaced from 1 down to 1/10000.
// dim must be even, t >= 0.
std::vector<float> timestep_embedding(int t, int dim);

// Total scalar parameter count of a parameter set; 0 for an empty set.
int64_t count_params(const std::vector<Param*>& params);

struct DenoiserConfig {
    int base_channels = 32;
    std::vector<int> channel_multipliers = {1, 2, 4};
    std::vector<int> attention_levels = {2};  // resolution levels with attention
    int time_embed_dim = 128;
    int in_channels = 2;   // image channels + 1 condition channel
    int out_channels = 1;  // image channels
    int norm_groups = 8;

    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    int downsample_factor() const { return 1 << (levels() - 1); }
    void validate() const;
};

namespace blocks {

struct Conv {
    Param *w = nullptr, *b = nullptr;
    int kernel = 3, stride = 1, pad = 1;
    Graph::Id apply(Graph& g, Graph::Id x) const {
        return g.conv2d(x, g.param(*w), g.param(*b), kernel, stride, pad);
    }
};

struct Dense {
    Param *w = nullptr, *b = nullptr;
    Graph::Id apply(Graph& g, Graph::Id x) const {
        return g.linear(x, g.param(*w), g.param(*b));
    }
};

struct Norm {
    Param *gamma = nullptr, *beta = nullptr;
    int groups = 8;
    Graph::Id apply(Graph& g, Graph::Id x) const {
        return g.group_norm(x, groups, g.param(*gamma), g.param(*beta));
    }
};

// GroupNorm -> SiLU -> conv, additive time signal after the first conv via
// the per-block Linear + sigmoid projection, then a second norm/conv and the
// residual shortcut (1x1 conv when the channel count changes).
struct ResBlock {
    Norm norm1;
    Conv conv1;
    Dense time_proj;
    Norm norm2;
    Conv conv2;
    std::optional<Conv> shortcut;
    Graph::Id apply(Graph& g, Graph::Id x, Graph::Id temb) const;
};

struct AttnBlock {
    Norm norm;
    Conv q, k, v, proj;
    Graph::Id apply(Graph& g, Graph::Id x) const;
};

} // namespace blocks

// The conditional noise predictor: a UNet taking the noised image, the edge
// condition (concatenated as an extra input channel), and the diffusion step.
class Denoiser {
public:
    Denoiser(const DenoiserConfig& cfg, uint64_t init_seed);

    // Builds the forward computation into an existing graph (training path).
    // x_t: {N, out_channels, H, W}; condition: {N, 1, H, W}; t: per-sample
    // steps. Returns the predicted noise node, same shape as x_t.
    Graph::Id build(Graph& g, Graph::Id x_t, Graph::Id condition,
                    const std::vector<int>& t);

    // Inference-only forward pass.
    Tensor forward(const Tensor& x_t, const Tensor& condition, const std::vector<int>& t);

    std::vector<Param*> params();
    int64_t param_count();
    const DenoiserConfig& config() const { return cfg_; }

private:
    Param* make_param(const std::string& name, Tensor init);
    blocks::Conv make_conv(const std::string& name, int c_in, int c_out, int kernel,
                           int stride, int pad, ecdm::Rng& rng, bool zero_init = false);
    blocks::Dense make_dense(const std::string& name, int d_in, int d_out, ecdm::Rng& rng);
    blocks::Norm make_norm(const std::string& name, int channels);
    blocks::ResBlock make_res(const std::string& name, int c_in, int c_out, ecdm::Rng& rng);
    blocks::AttnBlock make_attn(const std::string& name, int channels, ecdm::Rng& rng);
    bool has_attention(int level) const;

    DenoiserConfig cfg_;
    std::vector<std::unique_ptr<Param>> store_;

    blocks::Dense time_embed_;
    blocks::Conv stem_;
    std::vector<blocks::ResBlock> down_res_;
    std::vector<blocks::AttnBlock> down_attn_;  // parallel to down_res_ where present
    std::vector<bool> down_has_attn_;
    std::vector<blocks::Conv> downsample_;
    blocks::ResBlock mid_res_a_, mid_res_b_;
    std::optional<blocks::AttnBlock> mid_attn_;
    std::vector<blocks::Conv> up_conv_;
    std::vector<blocks::ResBlock> up_res_;
    std::vector<blocks::AttnBlock> up_attn_;
    std::vector<bool> up_has_attn_;
    blocks::Norm out_norm_;
    blocks::Conv out_conv_;
};

} // namespace ecdm::nn
