#pragma once

#include <cstdint>
#include <vector>

#include "ad/tensor.hpp"

namespace ecdm::nn {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over a fixed parameter list. Moment tensors are exposed for
// checkpointing, indexed in the same order as the parameter list.
class Adam {
public:
    Adam(std::vector<ad::Param*> params, const AdamConfig& cfg);

    void step();
    void zero_grad();

    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
    double learning_rate() const { return cfg_.learning_rate; }
    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }

    size_t size() const { return params_.size(); }
    ad::Tensor& moment1(size_t i) { return m_[i]; }
    ad::Tensor& moment2(size_t i) { return v_[i]; }
    const ad::Param* param(size_t i) const { return params_[i]; }

private:
    std::vector<ad::Param*> params_;
    std::vector<ad::Tensor> m_, v_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

} // namespace ecdm::nn
