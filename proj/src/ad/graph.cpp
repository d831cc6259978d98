#include "ad/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "core/parallel.hpp"

namespace ecdm::ad {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

int conv_out_dim(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

} // namespace

namespace detail {

void im2col(const float* x, int c_in, int h, int w, int kernel, int stride, int pad,
            int out_h, int out_w, float* col) {
    const size_t patch = static_cast<size_t>(out_h) * out_w;
    for (int ci = 0; ci < c_in; ++ci) {
        for (int dy = 0; dy < kernel; ++dy) {
            for (int dx = 0; dx < kernel; ++dx) {
                float* row = col + ((static_cast<size_t>(ci) * kernel + dy) * kernel + dx) * patch;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + dy - pad;
                    float* dst = row + static_cast<size_t>(oy) * out_w;
                    if (iy < 0 || iy >= h) {
                        std::memset(dst, 0, sizeof(float) * out_w);
                        continue;
                    }
                    const float* src = x + (static_cast<size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + dx - pad;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im(const float* col, int c_in, int h, int w, int kernel, int stride, int pad,
            int out_h, int out_w, float* x) {
    const size_t patch = static_cast<size_t>(out_h) * out_w;
    for (int ci = 0; ci < c_in; ++ci) {
        for (int dy = 0; dy < kernel; ++dy) {
            for (int dx = 0; dx < kernel; ++dx) {
                const float* row =
                    col + ((static_cast<size_t>(ci) * kernel + dy) * kernel + dx) * patch;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + dy - pad;
                    if (iy < 0 || iy >= h) continue;
                    const float* src = row + static_cast<size_t>(oy) * out_w;
                    float* dst = x + (static_cast<size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + dx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

} // namespace detail

Graph::Id Graph::emplace(Tensor val, bool needs_grad) {
    Node node;
    node.val = std::move(val);
    node.needs_grad = needs_grad;
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Graph::grad_buf(Id id) {
    Node& node = nodes_[id];
    if (!node.grad_alloc) {
        node.grad = Tensor(node.val.n, node.val.c, node.val.h, node.val.w);
        node.grad_alloc = true;
    }
    return node.grad;
}

Tensor Graph::grad_of(Id id) const {
    const Node& node = nodes_[id];
    if (node.grad_alloc) return node.grad;
    return Tensor(node.val.n, node.val.c, node.val.h, node.val.w);
}

Graph::Id Graph::input(Tensor value) { return emplace(std::move(value), false); }

Graph::Id Graph::param(Param& p) {
    const bool frozen = std::find(frozen_.begin(), frozen_.end(), &p) != frozen_.end();
    const Id id = emplace(p.value, !frozen);
    if (!frozen) nodes_[id].bound = &p;
    return id;
}

void Graph::freeze(const std::vector<Param*>& params) {
    frozen_.insert(frozen_.end(), params.begin(), params.end());
}

Graph::Id Graph::add(Id a, Id b) { return lincomb(1.0f, a, 1.0f, b); }
Graph::Id Graph::sub(Id a, Id b) { return lincomb(1.0f, a, -1.0f, b); }

Graph::Id Graph::lincomb(float sa, Id a, float sb, Id b) {
    const Tensor& va = nodes_[a].val;
    const Tensor& vb = nodes_[b].val;
    if (!va.same_shape(vb))
        throw std::invalid_argument("lincomb: shape mismatch " + va.shape_str() + " vs " +
                                    vb.shape_str());
    Tensor out(va.n, va.c, va.h, va.w);
    for (size_t i = 0; i < out.numel(); ++i) out.v[i] = sa * va.v[i] + sb * vb.v[i];
    const Id id = emplace(std::move(out), wants_grad(a) || wants_grad(b));
    nodes_[id].back = [a, b, sa, sb](Graph& g, Node& nd) {
        if (g.wants_grad(a)) {
            Tensor& da = g.grad_buf(a);
            for (size_t i = 0; i < da.numel(); ++i) da.v[i] += sa * nd.grad.v[i];
        }
        if (g.wants_grad(b)) {
            Tensor& db = g.grad_buf(b);
            for (size_t i = 0; i < db.numel(); ++i) db.v[i] += sb * nd.grad.v[i];
        }
    };
    return id;
}

Graph::Id Graph::mul(Id a, Id b) {
    const Tensor& va = nodes_[a].val;
    const Tensor& vb = nodes_[b].val;
    if (!va.same_shape(vb)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out(va.n, va.c, va.h, va.w);
    for (size_t i = 0; i < out.numel(); ++i) out.v[i] = va.v[i] * vb.v[i];
    const Id id = emplace(std::move(out), wants_grad(a) || wants_grad(b));
    nodes_[id].back = [a, b](Graph& g, Node& nd) {
        const Tensor& va2 = g.nodes_[a].val;
        const Tensor& vb2 = g.nodes_[b].val;
        if (g.wants_grad(a)) {
            Tensor& da = g.grad_buf(a);
            for (size_t i = 0; i < da.numel(); ++i) da.v[i] += vb2.v[i] * nd.grad.v[i];
        }
        if (g.wants_grad(b)) {
            Tensor& db = g.grad_buf(b);
            for (size_t i = 0; i < db.numel(); ++i) db.v[i] += va2.v[i] * nd.grad.v[i];
        }
    };
    return id;
}

Graph::Id Graph::affine(Id x, float mul, float add) {
    const Tensor& vx = nodes_[x].val;
    Tensor out(vx.n, vx.c, vx.h, vx.w);
    for (size_t i = 0; i < out.numel(); ++i) out.v[i] = mul * vx.v[i] + add;
    const Id id = emplace(std::move(out), wants_grad(x));
    nodes_[id].back = [x, mul](Graph& g, Node& nd) {
        if (!g.wants_grad(x)) return;
        Tensor& dx = g.grad_buf(x);
        for (size_t i = 0; i < dx.numel(); ++i) dx.v[i] += mul * nd.grad.v[i];
    };
    return id;
}

Graph::Id Graph::silu(Id x) {
    const Tensor& vx = nodes_[x].val;
    Tensor out(vx.n, vx.c, vx.h, vx.w);
    for (size_t i = 0; i < out.numel(); ++i) {
        const float s = 1.0f / (1.0f + std::exp(-vx.v[i]));
        out.v[i] = vx.v[i] * s;
    }
    const Id id = emplace(std::move(out), wants_grad(x));
    nodes_[id].back = [x](Graph& g, Node& nd) {
        if (!g.wants_grad(x)) return;
        const Tensor& vx2 = g.nodes_[x].val;
        Tensor& dx = g.grad_buf(x);
        for (size_t i = 0; i < dx.numel(); ++i) {
            const float s = 1.0f / (1.0f + std::exp(-vx2.v[i]));
            dx.v[i] += nd.grad.v[i] * s * (1.0f + vx2.v[i] * (1.0f - s));
        }
    };
    return id;
}

Graph::Id Graph::sigmoid(Id x) {
    const Tensor& vx = nodes_[x].val;
    Tensor out(vx.n, vx.c, vx.h, vx.w);
    for (size_t i = 0; i < out.numel(); ++i) out.v[i] = 1.0f / (1.0f + std::exp(-vx.v[i]));
    const Id id = emplace(std::move(out), wants_grad(x));
    nodes_[id].back = [x](Graph& g, Node& nd) {
        if (!g.wants_grad(x)) return;
        Tensor& dx = g.grad_buf(x);
        for (size_t i = 0; i < dx.numel(); ++i) {
            const float y = nd.val.v[i];
            dx.v[i] += nd.grad.v[i] * y * (1.0f - y);
        }
    };
    return id;
}

Graph::Id Graph::leaky_relu(Id x, float slope) {
    const Tensor& vx = nodes_[x].val;
    Tensor out(vx.n, vx.c, vx.h, vx.w);
    for (size_t i = 0; i < out.numel(); ++i)
        out.v[i] = vx.v[i] > 0.0f ? vx.v[i] : slope * vx.v[i];
    const Id id = emplace(std::move(out), wants_grad(x));
    nodes_[id].back = [x, slope](Graph& g, Node& nd) {
        if (!g.wants_grad(x)) return;
        const Tensor& vx2 = g.nodes_[x].val;
        Tensor& dx = g.grad_buf(x);
        for (size_t i = 0; i < dx.numel(); ++i)
            dx.v[i] += nd.grad.v[i] * (vx2.v[i] > 0.0f ? 1.0f : slope);
    };
    return id;
}

Graph::Id Graph::clamp(Id x, float lo, float hi) {
    const Tensor& vx = nodes_[x].val;
    Tensor out(vx.n, vx.c, vx.h, vx.w);
    for (size_t i = 0; i < out.numel(); ++i) out.v[i] = std::clamp(vx.v[i], lo, hi);
    const Id id = emplace(std::move(out), wants_grad(x));
    nodes_[id].back = [x, lo, hi](Graph& g, Node& nd) {
        if (!g.wants_grad(x)) return;
        const Tensor& vx2 = g.nodes_[x].val;
        Tensor& dx = g.grad_buf(x);
        for (size_t i = 0; i < dx.numel(); ++i)
            if (vx2.v[i] > lo && vx2.v[i] < hi) dx.v[i] += nd.grad.v[i];
    };
    return id;
}

Graph::Id Graph::log_clamped(Id x, float eps) {
    const Tensor& vx = nodes_[x].val;
    Tensor out(vx.n, vx.c, vx.h, vx.w);
    for (size_t i = 0; i < out.numel(); ++i) {
        const float c = std::clamp(vx.v[i], eps, 1.0f - eps);
        if (c != vx.v[i]) log_clamp_fired_ = true;
        out.v[i] = std::log(c);
    }
    const Id id = emplace(std::move(out), wants_grad(x));
    nodes_[id].back = [x, eps](Graph& g, Node& nd) {
        if (!g.wants_grad(x)) return;
        const Tensor& vx2 = g.nodes_[x].val;
        Tensor& dx = g.grad_buf(x);
        for (size_t i = 0; i < dx.numel(); ++i)
            if (vx2.v[i] > eps && vx2.v[i] < 1.0f - eps)
                dx.v[i] += nd.grad.v[i] / vx2.v[i];
    };
    return id;
}

Graph::Id Graph::add_bias(Id x, Id bias) {
    const Tensor& vx = nodes_[x].val;
    const Tensor& vb = nodes_[bias].val;
    if (static_cast<int>(vb.numel()) != vx.c)
        throw std::invalid_argument("add_bias: bias size must equal channel count");
    Tensor out = vx;
    const size_t plane = vx.plane();
    for (int n = 0; n < vx.n; ++n)
        for (int c = 0; c < vx.c; ++c) {
            float* dst = out.sample(n) + c * plane;
            const float b = vb.v[c];
            for (size_t i = 0; i < plane; ++i) dst[i] += b;
        }
    const Id id = emplace(std::move(out), wants_grad(x) || wants_grad(bias));
    nodes_[id].back = [x, bias](Graph& g, Node& nd) {
        const Tensor& v = nd.grad;
        const size_t plane = v.plane();
        if (g.wants_grad(x)) {
            Tensor& dx = g.grad_buf(x);
            for (size_t i = 0; i < dx.numel(); ++i) dx.v[i] += v.v[i];
        }
        if (g.wants_grad(bias)) {
            Tensor& db = g.grad_buf(bias);
            for (int n = 0; n < v.n; ++n)
                for (int c = 0; c < v.c; ++c) {
                    const float* src = v.sample(n) + c * plane;
                    double acc = 0.0;
                    for (size_t i = 0; i < plane; ++i) acc += src[i];
                    db.v[c] += static_cast<float>(acc);
                }
        }
    };
    return id;
}

Graph::Id Graph::add_nc(Id x, Id e) {
    const Tensor& vx = nodes_[x].val;
    const Tensor& ve = nodes_[e].val;
    if (ve.n != vx.n || ve.c != vx.c || ve.h != 1 || ve.w != 1)
        throw std::invalid_argument("add_nc: expected {N,C} tensor, got " + ve.shape_str());
    Tensor out = vx;
    const size_t plane = vx.plane();
    for (int n = 0; n < vx.n; ++n)
        for (int c = 0; c < vx.c; ++c) {
            float* dst = out.sample(n) + c * plane;
            const float b = ve.v[static_cast<size_t>(n) * vx.c + c];
            for (size_t i = 0; i < plane; ++i) dst[i] += b;
        }
    const Id id = emplace(std::move(out), wants_grad(x) || wants_grad(e));
    nodes_[id].back = [x, e](Graph& g, Node& nd) {
        const Tensor& v = nd.grad;
        const size_t plane = v.plane();
        if (g.wants_grad(x)) {
            Tensor& dx = g.grad_buf(x);
            for (size_t i = 0; i < dx.numel(); ++i) dx.v[i] += v.v[i];
        }
        if (g.wants_grad(e)) {
            Tensor& de = g.grad_buf(e);
            for (int n = 0; n < v.n; ++n)
                for (int c = 0; c < v.c; ++c) {
                    const float* src = v.sample(n) + c * plane;
                    double acc = 0.0;
                    for (size_t i = 0; i < plane; ++i) acc += src[i];
                    de.v[static_cast<size_t>(n) * v.c + c] += static_cast<float>(acc);
                }
        }
    };
    return id;
}

Graph::Id Graph::concat_c(Id a, Id b) {
    const Tensor& va = nodes_[a].val;
    const Tensor& vb = nodes_[b].val;
    if (va.n != vb.n || va.h != vb.h || va.w != vb.w)
        throw std::invalid_argument("concat_c: spatial/batch mismatch");
    Tensor out(va.n, va.c + vb.c, va.h, va.w);
    const size_t plane = va.plane();
    for (int n = 0; n < va.n; ++n) {
        std::memcpy(out.sample(n), va.sample(n), sizeof(float) * va.c * plane);
        std::memcpy(out.sample(n) + va.c * plane, vb.sample(n), sizeof(float) * vb.c * plane);
    }
    const Id id = emplace(std::move(out), wants_grad(a) || wants_grad(b));
    const int ca = va.c;
    nodes_[id].back = [a, b, ca](Graph& g, Node& nd) {
        const Tensor& v = nd.grad;
        const size_t plane = v.plane();
        if (g.wants_grad(a)) {
            Tensor& da = g.grad_buf(a);
            for (int n = 0; n < v.n; ++n) {
                const float* src = v.sample(n);
                float* dst = da.sample(n);
                for (size_t i = 0; i < static_cast<size_t>(ca) * plane; ++i) dst[i] += src[i];
            }
        }
        if (g.wants_grad(b)) {
            Tensor& db = g.grad_buf(b);
            const int cb = v.c - ca;
            for (int n = 0; n < v.n; ++n) {
                const float* src = v.sample(n) + ca * plane;
                float* dst = db.sample(n);
                for (size_t i = 0; i < static_cast<size_t>(cb) * plane; ++i) dst[i] += src[i];
            }
        }
    };
    return id;
}

Graph::Id Graph::reshape(Id x, int n, int c, int h, int w) {
    const Tensor& vx = nodes_[x].val;
    if (static_cast<size_t>(n) * c * h * w != vx.numel())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out(n, c, h, w);
    out.v = vx.v;
    const Id id = emplace(std::move(out), wants_grad(x));
    nodes_[id].back = [x](Graph& g, Node& nd) {
        if (!g.wants_grad(x)) return;
        Tensor& dx = g.grad_buf(x);
        for (size_t i = 0; i < dx.numel(); ++i) dx.v[i] += nd.grad.v[i];
    };
    return id;
}

Graph::Id Graph::conv2d(Id x, Id weight, Id bias, int kernel, int stride, int pad) {
    const Tensor& vx = nodes_[x].val;
    const Tensor& vw = nodes_[weight].val;
    const Tensor& vb = nodes_[bias].val;
    const int c_in = vx.c;
    const int c_out = vw.n;
    if (vw.c != c_in || vw.h != kernel || vw.w != kernel)
        throw std::invalid_argument("conv2d: weight shape " + vw.shape_str() +
                                    " incompatible with input " + vx.shape_str());
    if (static_cast<int>(vb.numel()) != c_out)
        throw std::invalid_argument("conv2d: bias size mismatch");
    const int out_h = conv_out_dim(vx.h, kernel, stride, pad);
    const int out_w = conv_out_dim(vx.w, kernel, stride, pad);
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("conv2d: output would be empty");

    const int k_dim = c_in * kernel * kernel;
    const size_t patch = static_cast<size_t>(out_h) * out_w;
    Tensor out(vx.n, c_out, out_h, out_w);

    const int in_h = vx.h, in_w = vx.w;
    parallel_for(vx.n, [&](int64_t begin, int64_t end) {
        std::vector<float> col(static_cast<size_t>(k_dim) * patch);
        CMapRM wm(vw.v.data(), c_out, k_dim);
        for (int64_t n = begin; n < end; ++n) {
            detail::im2col(vx.sample(static_cast<int>(n)), c_in, in_h, in_w, kernel, stride,
                           pad, out_h, out_w, col.data());
            CMapRM cm(col.data(), k_dim, static_cast<Eigen::Index>(patch));
            MapRM ym(out.sample(static_cast<int>(n)), c_out, static_cast<Eigen::Index>(patch));
            ym.noalias() = wm * cm;
            for (int co = 0; co < c_out; ++co) ym.row(co).array() += vb.v[co];
        }
    });

    const bool ng = wants_grad(x) || wants_grad(weight) || wants_grad(bias);
    const Id id = emplace(std::move(out), ng);
    nodes_[id].back = [x, weight, bias, kernel, stride, pad, k_dim, patch, c_in, c_out, in_h,
                       in_w, out_h, out_w](Graph& g, Node& nd) {
        const Tensor& vx2 = g.nodes_[x].val;
        const Tensor& vw2 = g.nodes_[weight].val;
        const Tensor& dy = nd.grad;
        const bool need_x = g.wants_grad(x);
        const bool need_w = g.wants_grad(weight);
        const bool need_b = g.wants_grad(bias);

        const int chunks = parallel_chunk_count(vx2.n);
        std::vector<std::vector<float>> dw_part, db_part;
        if (need_w) dw_part.assign(chunks, std::vector<float>(vw2.numel(), 0.0f));
        if (need_b) db_part.assign(chunks, std::vector<float>(c_out, 0.0f));
        Tensor* dx = need_x ? &g.grad_buf(x) : nullptr;

        parallel_for_indexed(vx2.n, [&](int chunk, int64_t begin, int64_t end) {
            std::vector<float> col(static_cast<size_t>(k_dim) * patch);
            std::vector<float> dcol(need_x ? static_cast<size_t>(k_dim) * patch : 0);
            CMapRM wm(vw2.v.data(), c_out, k_dim);
            for (int64_t n = begin; n < end; ++n) {
                CMapRM dym(dy.sample(static_cast<int>(n)), c_out,
                           static_cast<Eigen::Index>(patch));
                if (need_w || need_x)
                    detail::im2col(vx2.sample(static_cast<int>(n)), c_in, in_h, in_w, kernel,
                                   stride, pad, out_h, out_w, col.data());
                if (need_w) {
                    CMapRM cm(col.data(), k_dim, static_cast<Eigen::Index>(patch));
                    MapRM dwm(dw_part[chunk].data(), c_out, k_dim);
                    dwm.noalias() += dym * cm.transpose();
                }
                if (need_b) {
                    for (int co = 0; co < c_out; ++co)
                        db_part[chunk][co] += dym.row(co).sum();
                }
                if (need_x) {
                    MapRM dcm(dcol.data(), k_dim, static_cast<Eigen::Index>(patch));
                    dcm.noalias() = wm.transpose() * dym;
                    detail::col2im(dcol.data(), c_in, in_h, in_w, kernel, stride, pad, out_h,
                                   out_w, dx->sample(static_cast<int>(n)));
                }
            }
        });

        if (need_w) {
            Tensor& dw = g.grad_buf(weight);
            for (const auto& part : dw_part)
                for (size_t i = 0; i < dw.numel(); ++i) dw.v[i] += part[i];
        }
        if (need_b) {
            Tensor& db = g.grad_buf(bias);
            for (const auto& part : db_part)
                for (int co = 0; co < c_out; ++co) db.v[co] += part[co];
        }
    };
    return id;
}

Graph::Id Graph::upsample_nearest2(Id x) {
    const Tensor& vx = nodes_[x].val;
    Tensor out(vx.n, vx.c, vx.h * 2, vx.w * 2);
    for (int n = 0; n < vx.n; ++n)
        for (int c = 0; c < vx.c; ++c) {
            const float* src = vx.sample(n) + static_cast<size_t>(c) * vx.plane();
            float* dst = out.sample(n) + static_cast<size_t>(c) * out.plane();
            for (int y = 0; y < vx.h; ++y)
                for (int xx = 0; xx < vx.w; ++xx) {
                    const float v = src[static_cast<size_t>(y) * vx.w + xx];
                    float* d = dst + (static_cast<size_t>(2 * y) * out.w + 2 * xx);
                    d[0] = v;
                    d[1] = v;
                    d[out.w] = v;
                    d[out.w + 1] = v;
                }
        }
    const Id id = emplace(std::move(out), wants_grad(x));
    nodes_[id].back = [x](Graph& g, Node& nd) {
        if (!g.wants_grad(x)) return;
        Tensor& dx = g.grad_buf(x);
        const Tensor& dy = nd.grad;
        for (int n = 0; n < dx.n; ++n)
            for (int c = 0; c < dx.c; ++c) {
                float* dst = dx.sample(n) + static_cast<size_t>(c) * dx.plane();
                const float* src = dy.sample(n) + static_cast<size_t>(c) * dy.plane();
                for (int y = 0; y < dx.h; ++y)
                    for (int xx = 0; xx < dx.w; ++xx) {
                        const float* s = src + (static_cast<size_t>(2 * y) * dy.w + 2 * xx);
                        dst[static_cast<size_t>(y) * dx.w + xx] +=
                            s[0] + s[1] + s[dy.w] + s[dy.w + 1];
                    }
            }
    };
    return id;
}

Graph::Id Graph::group_norm(Id x, int groups, Id gamma, Id beta, float eps) {
    const Tensor& vx = nodes_[x].val;
    if (vx.c % groups != 0)
        throw std::invalid_argument("group_norm: channels not divisible by groups");
    const int cg = vx.c / groups;
    const size_t plane = vx.plane();
    const size_t group_elems = static_cast<size_t>(cg) * plane;
    const Tensor& vgamma = nodes_[gamma].val;
    const Tensor& vbeta = nodes_[beta].val;
    if (static_cast<int>(vgamma.numel()) != vx.c || static_cast<int>(vbeta.numel()) != vx.c)
        throw std::invalid_argument("group_norm: affine parameter size mismatch");

    auto stats = std::make_shared<std::vector<float>>(static_cast<size_t>(vx.n) * groups * 2);
    Tensor out(vx.n, vx.c, vx.h, vx.w);
    for (int n = 0; n < vx.n; ++n) {
        for (int gidx = 0; gidx < groups; ++gidx) {
            const float* src = vx.sample(n) + static_cast<size_t>(gidx) * group_elems;
            double sum = 0.0, sq = 0.0;
            for (size_t i = 0; i < group_elems; ++i) {
                sum += src[i];
                sq += static_cast<double>(src[i]) * src[i];
            }
            const double mean = sum / static_cast<double>(group_elems);
            const double var = sq / static_cast<double>(group_elems) - mean * mean;
            const float invstd = static_cast<float>(1.0 / std::sqrt(std::max(var, 0.0) + eps));
            (*stats)[(static_cast<size_t>(n) * groups + gidx) * 2] = static_cast<float>(mean);
            (*stats)[(static_cast<size_t>(n) * groups + gidx) * 2 + 1] = invstd;
            float* dst = out.sample(n) + static_cast<size_t>(gidx) * group_elems;
            for (int cc = 0; cc < cg; ++cc) {
                const int c = gidx * cg + cc;
                const float gmul = vgamma.v[c];
                const float gadd = vbeta.v[c];
                for (size_t i = 0; i < plane; ++i) {
                    const float xn =
                        (src[cc * plane + i] - static_cast<float>(mean)) * invstd;
                    dst[cc * plane + i] = gmul * xn + gadd;
                }
            }
        }
    }
    const bool ng = wants_grad(x) || wants_grad(gamma) || wants_grad(beta);
    const Id id = emplace(std::move(out), ng);
    nodes_[id].back = [x, gamma, beta, groups, cg, plane, group_elems, stats](Graph& g,
                                                                              Node& nd) {
        const Tensor& vx2 = g.nodes_[x].val;
        const Tensor& vgamma2 = g.nodes_[gamma].val;
        const Tensor& dy = nd.grad;
        const bool need_x = g.wants_grad(x);
        const bool need_g = g.wants_grad(gamma);
        const bool need_b = g.wants_grad(beta);
        Tensor* dx = need_x ? &g.grad_buf(x) : nullptr;
        Tensor* dgamma = need_g ? &g.grad_buf(gamma) : nullptr;
        Tensor* dbeta = need_b ? &g.grad_buf(beta) : nullptr;
        for (int n = 0; n < vx2.n; ++n) {
            for (int gidx = 0; gidx < groups; ++gidx) {
                const float mean = (*stats)[(static_cast<size_t>(n) * groups + gidx) * 2];
                const float invstd =
                    (*stats)[(static_cast<size_t>(n) * groups + gidx) * 2 + 1];
                const float* src = vx2.sample(n) + static_cast<size_t>(gidx) * group_elems;
                const float* dys = dy.sample(n) + static_cast<size_t>(gidx) * group_elems;
                double m1 = 0.0, m2 = 0.0;
                for (int cc = 0; cc < cg; ++cc) {
                    const int c = gidx * cg + cc;
                    const float gmul = vgamma2.v[c];
                    for (size_t i = 0; i < plane; ++i) {
                        const float xn = (src[cc * plane + i] - mean) * invstd;
                        const float dxh = dys[cc * plane + i] * gmul;
                        m1 += dxh;
                        m2 += static_cast<double>(dxh) * xn;
                    }
                }
                m1 /= static_cast<double>(group_elems);
                m2 /= static_cast<double>(group_elems);
                for (int cc = 0; cc < cg; ++cc) {
                    const int c = gidx * cg + cc;
                    const float gmul = vgamma2.v[c];
                    double dg = 0.0, db = 0.0;
                    for (size_t i = 0; i < plane; ++i) {
                        const float xn = (src[cc * plane + i] - mean) * invstd;
                        const float dyv = dys[cc * plane + i];
                        if (need_x) {
                            const float dxh = dyv * gmul;
                            dx->sample(n)[static_cast<size_t>(gidx) * group_elems +
                                          cc * plane + i] +=
                                invstd * (dxh - static_cast<float>(m1) -
                                          xn * static_cast<float>(m2));
                        }
                        dg += static_cast<double>(dyv) * xn;
                        db += dyv;
                    }
                    if (need_g) dgamma->v[c] += static_cast<float>(dg);
                    if (need_b) dbeta->v[c] += static_cast<float>(db);
                }
            }
        }
    };
    return id;
}

Graph::Id Graph::linear(Id x, Id weight, Id bias) {
    const Tensor& vx = nodes_[x].val;
    const Tensor& vw = nodes_[weight].val;
    const Tensor& vb = nodes_[bias].val;
    const int batch = vx.n;
    const int d_in = vx.c;
    const int d_out = vw.n;
    if (vx.h != 1 || vx.w != 1 || vw.c != d_in)
        throw std::invalid_argument("linear: expected x {N,D}, weight {Dout,Din}");
    if (static_cast<int>(vb.numel()) != d_out)
        throw std::invalid_argument("linear: bias size mismatch");
    Tensor out(batch, d_out, 1, 1);
    {
        CMapRM xm(vx.v.data(), batch, d_in);
        CMapRM wm(vw.v.data(), d_out, d_in);
        MapRM ym(out.v.data(), batch, d_out);
        ym.noalias() = xm * wm.transpose();
        for (int i = 0; i < batch; ++i)
            for (int j = 0; j < d_out; ++j) ym(i, j) += vb.v[j];
    }
    const bool ng = wants_grad(x) || wants_grad(weight) || wants_grad(bias);
    const Id id = emplace(std::move(out), ng);
    nodes_[id].back = [x, weight, bias, batch, d_in, d_out](Graph& g, Node& nd) {
        const Tensor& vx2 = g.nodes_[x].val;
        const Tensor& vw2 = g.nodes_[weight].val;
        CMapRM dym(nd.grad.v.data(), batch, d_out);
        if (g.wants_grad(x)) {
            Tensor& dx = g.grad_buf(x);
            MapRM dxm(dx.v.data(), batch, d_in);
            CMapRM wm(vw2.v.data(), d_out, d_in);
            dxm.noalias() += dym * wm;
        }
        if (g.wants_grad(weight)) {
            Tensor& dw = g.grad_buf(weight);
            MapRM dwm(dw.v.data(), d_out, d_in);
            CMapRM xm(vx2.v.data(), batch, d_in);
            dwm.noalias() += dym.transpose() * xm;
        }
        if (g.wants_grad(bias)) {
            Tensor& db = g.grad_buf(bias);
            for (int i = 0; i < batch; ++i)
                for (int j = 0; j < d_out; ++j) db.v[j] += dym(i, j);
        }
    };
    return id;
}

Graph::Id Graph::attn_scores(Id q, Id k) {
    const Tensor& vq = nodes_[q].val;
    const Tensor& vk = nodes_[k].val;
    if (vq.n != vk.n || vq.c != vk.c || vq.h != vk.h || vq.w != 1 || vk.w != 1)
        throw std::invalid_argument("attn_scores: expected matching {N,C,L} tensors");
    const int batch = vq.n, ch = vq.c, len = vq.h;
    const float scale = 1.0f / std::sqrt(static_cast<float>(ch));
    Tensor out(batch, len, len, 1);
    for (int n = 0; n < batch; ++n) {
        CMapRM qm(vq.sample(n), ch, len);
        CMapRM km(vk.sample(n), ch, len);
        MapRM sm(out.sample(n), len, len);
        sm.noalias() = qm.transpose() * km;
        sm *= scale;
    }
    const Id id = emplace(std::move(out), wants_grad(q) || wants_grad(k));
    nodes_[id].back = [q, k, batch, ch, len, scale](Graph& g, Node& nd) {
        const Tensor& vq2 = g.nodes_[q].val;
        const Tensor& vk2 = g.nodes_[k].val;
        for (int n = 0; n < batch; ++n) {
            CMapRM dsm(nd.grad.sample(n), len, len);
            if (g.wants_grad(q)) {
                MapRM dqm(g.grad_buf(q).sample(n), ch, len);
                CMapRM km(vk2.sample(n), ch, len);
                dqm.noalias() += km * dsm.transpose() * scale;
            }
            if (g.wants_grad(k)) {
                MapRM dkm(g.grad_buf(k).sample(n), ch, len);
                CMapRM qm(vq2.sample(n), ch, len);
                dkm.noalias() += qm * dsm * scale;
            }
        }
    };
    return id;
}

Graph::Id Graph::softmax_last(Id x) {
    const Tensor& vx = nodes_[x].val;
    const int rows = vx.n * vx.c;
    const int cols = vx.h * vx.w;
    Tensor out(vx.n, vx.c, vx.h, vx.w);
    for (int r = 0; r < rows; ++r) {
        const float* src = vx.v.data() + static_cast<size_t>(r) * cols;
        float* dst = out.v.data() + static_cast<size_t>(r) * cols;
        float peak = src[0];
        for (int i = 1; i < cols; ++i) peak = std::max(peak, src[i]);
        double sum = 0.0;
        for (int i = 0; i < cols; ++i) {
            dst[i] = std::exp(src[i] - peak);
            sum += dst[i];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (int i = 0; i < cols; ++i) dst[i] *= inv;
    }
    const Id id = emplace(std::move(out), wants_grad(x));
    nodes_[id].back = [x, rows, cols](Graph& g, Node& nd) {
        if (!g.wants_grad(x)) return;
        Tensor& dx = g.grad_buf(x);
        for (int r = 0; r < rows; ++r) {
            const float* y = nd.val.v.data() + static_cast<size_t>(r) * cols;
            const float* dy = nd.grad.v.data() + static_cast<size_t>(r) * cols;
            float* dst = dx.v.data() + static_cast<size_t>(r) * cols;
            double dot = 0.0;
            for (int i = 0; i < cols; ++i) dot += static_cast<double>(dy[i]) * y[i];
            for (int i = 0; i < cols; ++i)
                dst[i] += y[i] * (dy[i] - static_cast<float>(dot));
        }
    };
    return id;
}

Graph::Id Graph::attn_apply(Id v, Id a) {
    const Tensor& vv = nodes_[v].val;
    const Tensor& va = nodes_[a].val;
    const int batch = vv.n, ch = vv.c, len = vv.h;
    if (va.n != batch || va.c != len || va.h != len || vv.w != 1 || va.w != 1)
        throw std::invalid_argument("attn_apply: expected {N,C,L} values and {N,L,L} weights");
    Tensor out(batch, ch, len, 1);
    for (int n = 0; n < batch; ++n) {
        CMapRM vm(vv.sample(n), ch, len);
        CMapRM am(va.sample(n), len, len);
        MapRM om(out.sample(n), ch, len);
        om.noalias() = vm * am.transpose();
    }
    const Id id = emplace(std::move(out), wants_grad(v) || wants_grad(a));
    nodes_[id].back = [v, a, batch, ch, len](Graph& g, Node& nd) {
        const Tensor& vv2 = g.nodes_[v].val;
        const Tensor& va2 = g.nodes_[a].val;
        for (int n = 0; n < batch; ++n) {
            CMapRM dom(nd.grad.sample(n), ch, len);
            if (g.wants_grad(v)) {
                MapRM dvm(g.grad_buf(v).sample(n), ch, len);
                CMapRM am(va2.sample(n), len, len);
                dvm.noalias() += dom * am;
            }
            if (g.wants_grad(a)) {
                MapRM dam(g.grad_buf(a).sample(n), len, len);
                CMapRM vm(vv2.sample(n), ch, len);
                dam.noalias() += dom.transpose() * vm;
            }
        }
    };
    return id;
}

Graph::Id Graph::highpass(Id x, const edge::HighPassConfig& cfg) {
    const Tensor& vx = nodes_[x].val;
    if (vx.c != 1)
        throw std::invalid_argument("highpass: expected single-channel input");
    auto apply = [](const Tensor& src, const edge::HighPassConfig& c) {
        Tensor out(src.n, 1, src.h, src.w);
        for (int n = 0; n < src.n; ++n) {
            EdgeMap m(src.h, src.w);
            const float* s = src.sample(n);
            for (size_t i = 0; i < m.values.size(); ++i) m.values[i] = s[i];
            const EdgeMap filtered = edge::extract_edges(m, c);
            float* d = out.sample(n);
            for (size_t i = 0; i < m.values.size(); ++i)
                d[i] = static_cast<float>(filtered.values[i]);
        }
        return out;
    };
    Tensor out = apply(vx, cfg);
    const Id id = emplace(std::move(out), wants_grad(x));
    const edge::HighPassConfig cfg_copy = cfg;
    nodes_[id].back = [x, cfg_copy, apply](Graph& g, Node& nd) {
        if (!g.wants_grad(x)) return;
        // self-adjoint linear operator: adjoint = forward
        Tensor dt = apply(nd.grad, cfg_copy);
        Tensor& dx = g.grad_buf(x);
        for (size_t i = 0; i < dx.numel(); ++i) dx.v[i] += dt.v[i];
    };
    return id;
}

Graph::Id Graph::mean_all(Id x) {
    const Tensor& vx = nodes_[x].val;
    double acc = 0.0;
    for (float v : vx.v) acc += v;
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(vx.numel())));
    const Id id = emplace(std::move(out), wants_grad(x));
    nodes_[id].back = [x](Graph& g, Node& nd) {
        if (!g.wants_grad(x)) return;
        Tensor& dx = g.grad_buf(x);
        const float scale = nd.grad.v[0] / static_cast<float>(dx.numel());
        for (size_t i = 0; i < dx.numel(); ++i) dx.v[i] += scale;
    };
    return id;
}

Graph::Id Graph::mse(Id a, Id b) {
    const Tensor& va = nodes_[a].val;
    const Tensor& vb = nodes_[b].val;
    if (!va.same_shape(vb)) throw std::invalid_argument("mse: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < va.numel(); ++i) {
        const double d = static_cast<double>(va.v[i]) - vb.v[i];
        acc += d * d;
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(va.numel())));
    const Id id = emplace(std::move(out), wants_grad(a) || wants_grad(b));
    nodes_[id].back = [a, b](Graph& g, Node& nd) {
        const Tensor& va2 = g.nodes_[a].val;
        const Tensor& vb2 = g.nodes_[b].val;
        const float coeff = 2.0f * nd.grad.v[0] / static_cast<float>(va2.numel());
        if (g.wants_grad(a)) {
            Tensor& da = g.grad_buf(a);
            for (size_t i = 0; i < da.numel(); ++i)
                da.v[i] += coeff * (va2.v[i] - vb2.v[i]);
        }
        if (g.wants_grad(b)) {
            Tensor& db = g.grad_buf(b);
            for (size_t i = 0; i < db.numel(); ++i)
                db.v[i] -= coeff * (va2.v[i] - vb2.v[i]);
        }
    };
    return id;
}

Graph::Id Graph::wsum(const std::vector<Id>& xs, const std::vector<float>& weights) {
    if (xs.size() != weights.size() || xs.empty())
        throw std::invalid_argument("wsum: size mismatch or empty");
    double acc = 0.0;
    bool ng = false;
    for (size_t i = 0; i < xs.size(); ++i) {
        const Tensor& v = nodes_[xs[i]].val;
        if (v.numel() != 1) throw std::invalid_argument("wsum: operands must be scalars");
        acc += static_cast<double>(weights[i]) * v.v[0];
        ng = ng || wants_grad(xs[i]);
    }
    const Id id = emplace(Tensor::scalar(static_cast<float>(acc)), ng);
    std::vector<Id> xs_copy = xs;
    std::vector<float> w_copy = weights;
    nodes_[id].back = [xs_copy, w_copy](Graph& g, Node& nd) {
        for (size_t i = 0; i < xs_copy.size(); ++i)
            if (g.wants_grad(xs_copy[i]))
                g.grad_buf(xs_copy[i]).v[0] += w_copy[i] * nd.grad.v[0];
    };
    return id;
}

void Graph::backward(Id loss) {
    if (nodes_[loss].val.numel() != 1)
        throw std::invalid_argument("backward: loss must be a scalar node");
    grad_buf(loss).v[0] = 1.0f;
    for (Id id = loss; id >= 0; --id) {
        Node& node = nodes_[id];
        if (!node.needs_grad || !node.grad_alloc) continue;
        if (node.bound) {
            Tensor& dst = node.bound->grad;
            for (size_t i = 0; i < dst.numel(); ++i) dst.v[i] += node.grad.v[i];
        }
        if (node.back) node.back(*this, node);
    }
}

} // namespace ecdm::ad
