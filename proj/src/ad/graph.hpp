#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ad/tensor.hpp"
#include "edge/edge_ops.hpp"

namespace ecdm::ad {

// Reverse-mode autodiff over a dynamically built DAG. Nodes are identified by
// creation index; every op's inputs were created earlier, so the reverse
// creation order is a valid topological order for backward.
//
// A Graph is built per training step and discarded afterwards. Parameters are
// external Param objects; backward accumulates into Param::grad unless the
// graph was told to freeze them (frozen params still carry activations but
// receive no gradient).
class Graph {
public:
    using Id = int;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaves
    Id input(Tensor value);               // constant, no gradient
    Id param(Param& p);                   // trainable leaf
    void freeze(const std::vector<Param*>& params);  // exclude from this graph's backward

    // Elementwise
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id affine(Id x, float mul, float add);            // mul*x + add
    Id lincomb(float sa, Id a, float sb, Id b);       // sa*a + sb*b
    Id silu(Id x);
    Id sigmoid(Id x);
    Id leaky_relu(Id x, float slope);
    Id clamp(Id x, float lo, float hi);               // pass-through gradient inside range
    Id log_clamped(Id x, float eps);                  // log(clamp(x, eps, 1-eps)); flags when clamping fired

    // Broadcasts
    Id add_bias(Id x, Id bias);      // bias {1,C,1,1} or {C} over NCHW
    Id add_nc(Id x, Id e);           // e {N,C} added over spatial dims

    // Structure
    Id concat_c(Id a, Id b);
    Id reshape(Id x, int n, int c, int h, int w);

    // Neural network
    Id conv2d(Id x, Id weight, Id bias, int kernel, int stride, int pad);
    Id upsample_nearest2(Id x);
    Id group_norm(Id x, int groups, Id gamma, Id beta, float eps = 1e-5f);
    Id linear(Id x, Id weight, Id bias);  // x {N,D}, weight {Dout,Din}, bias {Dout}

    // Single-head attention pieces over {N,C,L} tensors
    Id attn_scores(Id q, Id k);           // {N,L,L}, scaled by 1/sqrt(C)
    Id softmax_last(Id x);                // softmax over the last varying dim of {N,A,B}
    Id attn_apply(Id v, Id a);            // {N,C,L} x {N,L,L} -> {N,C,L}

    // High-pass edge filter on {N,1,H,W}; linear and self-adjoint, so the
    // backward pass applies the same filter to the gradient.
    Id highpass(Id x, const edge::HighPassConfig& cfg);

    // Reductions
    Id mean_all(Id x);
    Id mse(Id a, Id b);
    Id wsum(const std::vector<Id>& xs, const std::vector<float>& weights);

    // Runs the reverse sweep from a scalar node (seeds with 1).
    void backward(Id loss);

    const Tensor& value(Id id) const { return nodes_[id].val; }
    // Gradient of a node; zero tensor if the node never received one.
    Tensor grad_of(Id id) const;

    bool log_clamp_fired() const { return log_clamp_fired_; }
    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor val;
        Tensor grad;          // allocated lazily during backward
        bool needs_grad = false;
        bool grad_alloc = false;
        Param* bound = nullptr;
        // Backward: reads this node's grad, accumulates into parents' grads.
        std::function<void(Graph&, Node&)> back;
    };

    Id emplace(Tensor val, bool needs_grad);
    Tensor& grad_buf(Id id);  // lazily allocated, zero-filled
    bool wants_grad(Id id) const { return nodes_[id].needs_grad; }

    std::vector<Node> nodes_;
    std::vector<Param*> frozen_;
    bool log_clamp_fired_ = false;
};

// Shared scratch-free helpers used by both autodiff and inference paths.
namespace detail {
void im2col(const float* x, int c_in, int h, int w, int kernel, int stride, int pad,
            int out_h, int out_w, float* col);
void col2im(const float* col, int c_in, int h, int w, int kernel, int stride, int pad,
            int out_h, int out_w, float* x);
} // namespace detail

} // namespace ecdm::ad
