#include "nn/adam.hpp"

#include <cmath>

namespace ecdm::nn {

Adam::Adam(std::vector<ad::Param*> params, const AdamConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const ad::Param* p : params_) {
        m_.emplace_back(p->value.n, p->value.c, p->value.h, p->value.w);
        v_.emplace_back(p->value.n, p->value.c, p->value.h, p->value.w);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const float b1 = static_cast<float>(cfg_.beta1);
    const float b2 = static_cast<float>(cfg_.beta2);
    for (size_t i = 0; i < params_.size(); ++i) {
        ad::Param& p = *params_[i];
        float* m = m_[i].v.data();
        float* v = v_[i].v.data();
        const float* g = p.grad.v.data();
        float* w = p.value.v.data();
        for (size_t j = 0; j < p.value.numel(); ++j) {
            m[j] = b1 * m[j] + (1.0f - b1) * g[j];
            v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            w[j] -= static_cast<float>(cfg_.learning_rate * mh / (std::sqrt(vh) + cfg_.eps));
        }
    }
}

void Adam::zero_grad() {
    for (ad::Param* p : params_) p->zero_grad();
}

} // namespace ecdm::nn
