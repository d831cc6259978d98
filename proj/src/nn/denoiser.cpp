#include "nn/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecdm::nn {

std::vector<float> timestep_embedding(int t, int dim) {
    if (dim <= 0 || dim % 2 != 0)
        throw std::invalid_argument("timestep_embedding: dim must be positive and even");
    if (t < 0) throw std::invalid_argument("timestep_embedding: t must be >= 0");
    const int half = dim / 2;
    std::vector<float> out(dim);
    for (int k = 0; k < half; ++k) {
        const double expo = (half == 1) ? 0.0 : static_cast<double>(k) / (half - 1);
        const double omega = std::pow(10000.0, -expo);
        out[k] = static_cast<float>(std::sin(t * omega));
        out[half + k] = static_cast<float>(std::cos(t * omega));
    }
    return out;
}

int64_t count_params(const std::vector<Param*>& params) {
    int64_t total = 0;
    for (const Param* p : params) total += static_cast<int64_t>(p->value.numel());
    return total;
}

void DenoiserConfig::validate() const {
    if (base_channels < 1 || time_embed_dim < 2 || time_embed_dim % 2 != 0 ||
        in_channels < 2 || out_channels < 1 || norm_groups < 1)
        throw std::invalid_argument("DenoiserConfig: counts must be positive (and even "
                                    "time_embed_dim)");
    if (channel_multipliers.empty())
        throw std::invalid_argument("DenoiserConfig: need at least one channel multiplier");
    for (int m : channel_multipliers)
        if (m < 1) throw std::invalid_argument("DenoiserConfig: multipliers must be >= 1");
    for (int level : attention_levels)
        if (level < 0 || level >= levels())
            throw std::invalid_argument("DenoiserConfig: attention level " +
                                        std::to_string(level) + " outside available levels");
}

namespace blocks {

Graph::Id ResBlock::apply(Graph& g, Graph::Id x, Graph::Id temb) const {
    Graph::Id h = norm1.apply(g, x);
    h = g.silu(h);
    h = conv1.apply(g, h);
    Graph::Id e = g.sigmoid(time_proj.apply(g, temb));
    h = g.add_nc(h, e);
    h = norm2.apply(g, h);
    h = g.silu(h);
    h = conv2.apply(g, h);
    const Graph::Id sk = shortcut ? shortcut->apply(g, x) : x;
    return g.add(h, sk);
}

Graph::Id AttnBlock::apply(Graph& g, Graph::Id x) const {
    const auto& shape = g.value(x);
    const int n = shape.n, c = shape.c, hh = shape.h, ww = shape.w;
    const int len = hh * ww;
    Graph::Id hn = norm.apply(g, x);
    Graph::Id qv = g.reshape(q.apply(g, hn), n, c, len, 1);
    Graph::Id kv = g.reshape(k.apply(g, hn), n, c, len, 1);
    Graph::Id vv = g.reshape(v.apply(g, hn), n, c, len, 1);
    Graph::Id scores = g.attn_scores(qv, kv);
    Graph::Id attn = g.softmax_last(scores);
    Graph::Id o = g.attn_apply(vv, attn);
    o = g.reshape(o, n, c, hh, ww);
    o = proj.apply(g, o);
    return g.add(x, o);
}

} // namespace blocks

Param* Denoiser::make_param(const std::string& name, Tensor init) {
    store_.push_back(std::make_unique<Param>(name, std::move(init)));
    return store_.back().get();
}

blocks::Conv Denoiser::make_conv(const std::string& name, int c_in, int c_out, int kernel,
                                 int stride, int pad, ecdm::Rng& rng, bool zero_init) {
    Tensor w(c_out, c_in, kernel, kernel);
    if (!zero_init) {
        const double std = std::sqrt(2.0 / (static_cast<double>(c_in) * kernel * kernel));
        for (auto& v : w.v) v = static_cast<float>(rng.normal() * std);
    }
    blocks::Conv conv;
    conv.w = make_param(name + ".w", std::move(w));
    conv.b = make_param(name + ".b", Tensor(1, c_out, 1, 1));
    conv.kernel = kernel;
    conv.stride = stride;
    conv.pad = pad;
    return conv;
}

blocks::Dense Denoiser::make_dense(const std::string& name, int d_in, int d_out,
                                   ecdm::Rng& rng) {
    Tensor w(d_out, d_in, 1, 1);
    const double std = std::sqrt(1.0 / static_cast<double>(d_in));
    for (auto& v : w.v) v = static_cast<float>(rng.normal() * std);
    blocks::Dense dense;
    dense.w = make_param(name + ".w", std::move(w));
    dense.b = make_param(name + ".b", Tensor(1, d_out, 1, 1));
    return dense;
}

blocks::Norm Denoiser::make_norm(const std::string& name, int channels) {
    blocks::Norm norm;
    Tensor gamma(1, channels, 1, 1, 1.0f);
    norm.gamma = make_param(name + ".g", std::move(gamma));
    norm.beta = make_param(name + ".b", Tensor(1, channels, 1, 1));
    norm.groups = std::min(cfg_.norm_groups, channels);
    while (channels % norm.groups != 0) --norm.groups;
    return norm;
}

blocks::ResBlock Denoiser::make_res(const std::string& name, int c_in, int c_out,
                                    ecdm::Rng& rng) {
    blocks::ResBlock res;
    res.norm1 = make_norm(name + ".n1", c_in);
    res.conv1 = make_conv(name + ".c1", c_in, c_out, 3, 1, 1, rng);
    res.time_proj = make_dense(name + ".t", cfg_.time_embed_dim, c_out, rng);
    res.norm2 = make_norm(name + ".n2", c_out);
    res.conv2 = make_conv(name + ".c2", c_out, c_out, 3, 1, 1, rng);
    if (c_in != c_out) res.shortcut = make_conv(name + ".sc", c_in, c_out, 1, 1, 0, rng);
    return res;
}

blocks::AttnBlock Denoiser::make_attn(const std::string& name, int channels,
                                      ecdm::Rng& rng) {
    blocks::AttnBlock attn;
    attn.norm = make_norm(name + ".n", channels);
    attn.q = make_conv(name + ".q", channels, channels, 1, 1, 0, rng);
    attn.k = make_conv(name + ".k", channels, channels, 1, 1, 0, rng);
    attn.v = make_conv(name + ".v", channels, channels, 1, 1, 0, rng);
    attn.proj = make_conv(name + ".p", channels, channels, 1, 1, 0, rng, /*zero_init=*/true);
    return attn;
}

bool Denoiser::has_attention(int level) const {
    return std::find(cfg_.attention_levels.begin(), cfg_.attention_levels.end(), level) !=
           cfg_.attention_levels.end();
}

Denoiser::Denoiser(const DenoiserConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    ecdm::Rng rng(init_seed);
    const int levels = cfg_.levels();
    std::vector<int> ch(levels);
    for (int l = 0; l < levels; ++l) ch[l] = cfg_.base_channels * cfg_.channel_multipliers[l];

    time_embed_ = make_dense("time", cfg_.time_embed_dim, cfg_.time_embed_dim, rng);
    stem_ = make_conv("stem", cfg_.in_channels, ch[0], 3, 1, 1, rng);

    for (int l = 0; l + 1 < levels; ++l) {
        const std::string base = "down" + std::to_string(l);
        down_res_.push_back(make_res(base + ".res", ch[l], ch[l], rng));
        down_has_attn_.push_back(has_attention(l));
        if (down_has_attn_.back())
            down_attn_.push_back(make_attn(base + ".attn", ch[l], rng));
        downsample_.push_back(make_conv(base + ".ds", ch[l], ch[l + 1], 3, 2, 1, rng));
    }

    const int cb = ch[levels - 1];
    mid_res_a_ = make_res("mid.res_a", cb, cb, rng);
    if (has_attention(levels - 1)) mid_attn_ = make_attn("mid.attn", cb, rng);
    mid_res_b_ = make_res("mid.res_b", cb, cb, rng);

    for (int l = levels - 2; l >= 0; --l) {
        const std::string base = "up" + std::to_string(l);
        up_conv_.push_back(make_conv(base + ".us", ch[l + 1], ch[l], 3, 1, 1, rng));
        up_res_.push_back(make_res(base + ".res", 2 * ch[l], ch[l], rng));
        up_has_attn_.push_back(has_attention(l));
        if (up_has_attn_.back()) up_attn_.push_back(make_attn(base + ".attn", ch[l], rng));
    }

    out_norm_ = make_norm("out.n", ch[0]);
    out_conv_ = make_conv("out.c", ch[0], cfg_.out_channels, 3, 1, 1, rng, /*zero_init=*/true);
}

Graph::Id Denoiser::build(Graph& g, Graph::Id x_t, Graph::Id condition,
                          const std::vector<int>& t) {
    const Tensor& vx = g.value(x_t);
    const Tensor& vc = g.value(condition);
    if (vc.h != vx.h || vc.w != vx.w || vc.n != vx.n)
        throw std::invalid_argument("denoiser: condition spatial shape " + vc.shape_str() +
                                    " does not match input " + vx.shape_str());
    if (vx.c + vc.c != cfg_.in_channels)
        throw std::invalid_argument("denoiser: channel count mismatch with config");
    if (static_cast<int>(t.size()) != vx.n)
        throw std::invalid_argument("denoiser: need one diffusion step per sample");
    const int factor = cfg_.downsample_factor();
    if (vx.h % factor != 0 || vx.w % factor != 0)
        throw std::invalid_argument("denoiser: spatial dims must be divisible by " +
                                    std::to_string(factor));

    Tensor emb(vx.n, cfg_.time_embed_dim, 1, 1);
    for (int n = 0; n < vx.n; ++n) {
        const std::vector<float> row = timestep_embedding(t[n], cfg_.time_embed_dim);
        std::copy(row.begin(), row.end(), emb.v.begin() + static_cast<size_t>(n) * cfg_.time_embed_dim);
    }
    Graph::Id temb = g.sigmoid(time_embed_.apply(g, g.input(std::move(emb))));

    Graph::Id h = g.concat_c(x_t, condition);
    h = stem_.apply(g, h);

    std::vector<Graph::Id> skips;
    size_t attn_idx = 0;
    for (size_t l = 0; l < down_res_.size(); ++l) {
        h = down_res_[l].apply(g, h, temb);
        if (down_has_attn_[l]) h = down_attn_[attn_idx++].apply(g, h);
        skips.push_back(h);
        h = downsample_[l].apply(g, h);
    }

    h = mid_res_a_.apply(g, h, temb);
    if (mid_attn_) h = mid_attn_->apply(g, h);
    h = mid_res_b_.apply(g, h, temb);

    attn_idx = 0;
    for (size_t u = 0; u < up_res_.size(); ++u) {
        h = g.upsample_nearest2(h);
        h = up_conv_[u].apply(g, h);
        h = g.concat_c(h, skips[skips.size() - 1 - u]);
        h = up_res_[u].apply(g, h, temb);
        if (up_has_attn_[u]) h = up_attn_[attn_idx++].apply(g, h);
    }

    h = out_norm_.apply(g, h);
    h = g.silu(h);
    return out_conv_.apply(g, h);
}

Tensor Denoiser::forward(const Tensor& x_t, const Tensor& condition,
                         const std::vector<int>& t) {
    Graph g;
    g.freeze(params());
    const Graph::Id out = build(g, g.input(x_t), g.input(condition), t);
    return g.value(out);
}

std::vector<Param*> Denoiser::params() {
    std::vector<Param*> out;
    out.reserve(store_.size());
    for (auto& p : store_) out.push_back(p.get());
    return out;
}

int64_t Denoiser::param_count() { return count_params(params()); }

} // namespace ecdm::nn
