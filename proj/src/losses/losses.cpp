#include "losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecdm::losses {

namespace {

double mse(const ImageTensor& a, const ImageTensor& b, const char* what) {
    require_same_shape(a, b, what);
    double acc = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.values.size());
}

double clamp_score(double s, bool* clamped) {
    const double c = std::clamp(s, kScoreEps, 1.0 - kScoreEps);
    if (clamped && c != s) *clamped = true;
    return c;
}

} // namespace

void LossWeights::validate() const {
    if (lambda_real < 0 || lambda_diff < 0 || lambda_style < 0 || lambda_mod < 0 ||
        lambda_edge < 0)
        throw std::invalid_argument("LossWeights: weights must be non-negative");
}

double diffusion_loss(const ImageTensor& eps_true, const ImageTensor& eps_pred) {
    return mse(eps_true, eps_pred, "diffusion_loss");
}

ImageTensor diffusion_loss_grad(const ImageTensor& eps_true, const ImageTensor& eps_pred) {
    require_same_shape(eps_true, eps_pred, "diffusion_loss_grad");
    ImageTensor grad = eps_pred;
    const double coeff = 2.0 / static_cast<double>(grad.values.size());
    for (size_t i = 0; i < grad.values.size(); ++i)
        grad.values[i] = coeff * (eps_pred.values[i] - eps_true.values[i]);
    return grad;
}

double style_loss(const ImageTensor& x_hat_tir, const ImageTensor& x_tir) {
    return mse(x_hat_tir, x_tir, "style_loss");
}

ImageTensor style_loss_grad(const ImageTensor& x_hat_tir, const ImageTensor& x_tir) {
    return diffusion_loss_grad(x_tir, x_hat_tir);
}

double modality_loss(const ScoreGrid& d_fake_vis) {
    double acc = 0.0;
    for (double s : d_fake_vis.values) {
        const double d = 1.0 - s;
        acc += d * d;
    }
    return acc / static_cast<double>(d_fake_vis.values.size());
}

ScoreGrid modality_loss_grad(const ScoreGrid& d_fake_vis) {
    ScoreGrid grad = d_fake_vis;
    const double coeff = 2.0 / static_cast<double>(grad.values.size());
    for (size_t i = 0; i < grad.values.size(); ++i)
        grad.values[i] = -coeff * (1.0 - d_fake_vis.values[i]);
    return grad;
}

double edge_loss(const ImageTensor& x_vis, const ImageTensor& x_hat_vis,
                 const edge::HighPassConfig& cfg) {
    const EdgeMap ha = edge::extract_edges(x_vis, cfg);
    const EdgeMap hb = edge::extract_edges(x_hat_vis, cfg);
    double acc = 0.0;
    for (size_t i = 0; i < ha.values.size(); ++i) {
        const double d = ha.values[i] - hb.values[i];
        acc += d * d;
    }
    return acc / static_cast<double>(ha.values.size());
}

ImageTensor edge_loss_grad(const ImageTensor& x_vis, const ImageTensor& x_hat_vis,
                           const edge::HighPassConfig& cfg) {
    if (x_hat_vis.channels != 1)
        throw std::invalid_argument("edge_loss_grad: gradient only defined for "
                                    "single-channel generated images");
    const EdgeMap ha = edge::extract_edges(x_vis, cfg);
    const EdgeMap hb = edge::extract_edges(x_hat_vis, cfg);
    EdgeMap residual(ha.height, ha.width);
    const double coeff = 2.0 / static_cast<double>(ha.values.size());
    for (size_t i = 0; i < residual.values.size(); ++i)
        residual.values[i] = coeff * (hb.values[i] - ha.values[i]);
    const EdgeMap back = edge::extract_edges(residual, cfg);
    ImageTensor grad(1, x_hat_vis.height, x_hat_vis.width);
    grad.values.assign(back.values.begin(), back.values.end());
    return grad;
}

double discriminator_loss(const ScoreGrid& d_real, const ScoreGrid& d_fake,
                          const LossWeights& w, bool* clamped) {
    if (clamped) *clamped = false;
    double real_term = 0.0;
    for (double s : d_real.values) {
        const double l = std::log(clamp_score(s, clamped));
        real_term += l * l;
    }
    real_term /= static_cast<double>(d_real.values.size());
    double fake_term = 0.0;
    for (double s : d_fake.values) {
        const double l = std::log(clamp_score(1.0 - s, clamped));
        fake_term += l * l;
    }
    fake_term /= static_cast<double>(d_fake.values.size());
    return w.lambda_real * real_term + fake_term;
}

ScoreGrid discriminator_loss_grad_real(const ScoreGrid& d_real, const LossWeights& w) {
    ScoreGrid grad = d_real;
    const double scale = 2.0 * w.lambda_real / static_cast<double>(d_real.values.size());
    for (size_t i = 0; i < grad.values.size(); ++i) {
        const double s = d_real.values[i];
        if (s <= kScoreEps || s >= 1.0 - kScoreEps) {
            grad.values[i] = 0.0;
        } else {
            grad.values[i] = scale * std::log(s) / s;
        }
    }
    return grad;
}

ScoreGrid discriminator_loss_grad_fake(const ScoreGrid& d_fake) {
    ScoreGrid grad = d_fake;
    const double scale = 2.0 / static_cast<double>(d_fake.values.size());
    for (size_t i = 0; i < grad.values.size(); ++i) {
        const double one_minus = 1.0 - d_fake.values[i];
        if (one_minus <= kScoreEps || one_minus >= 1.0 - kScoreEps) {
            grad.values[i] = 0.0;
        } else {
            grad.values[i] = -scale * std::log(one_minus) / one_minus;
        }
    }
    return grad;
}

double discriminator_loss_loglik(const ScoreGrid& d_real, const ScoreGrid& d_fake,
                                 const LossWeights& w, bool* clamped) {
    if (clamped) *clamped = false;
    double real_term = 0.0;
    for (double s : d_real.values) real_term += std::log(clamp_score(s, clamped));
    real_term /= static_cast<double>(d_real.values.size());
    double fake_term = 0.0;
    for (double s : d_fake.values) fake_term += std::log(clamp_score(1.0 - s, clamped));
    fake_term /= static_cast<double>(d_fake.values.size());
    return -(w.lambda_real * real_term + fake_term);
}

double generator_objective(double diff, double style, double mod, double edge,
                           const LossWeights& w) {
    for (double part : {diff, style, mod, edge})
        if (!std::isfinite(part))
            throw std::invalid_argument("generator_objective: non-finite loss part");
    return w.lambda_diff * diff + w.lambda_style * style + w.lambda_mod * mod +
           w.lambda_edge * edge;
}

} // namespace ecdm::losses
