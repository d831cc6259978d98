#pragma once

#include "core/image.hpp"
#include "edge/edge_ops.hpp"

namespace ecdm::losses {

// Loss weights; defaults are the paper's settings.
struct LossWeights {
    double lambda_real = 10.0;
    double lambda_diff = 0.1;
    double lambda_style = 100.0;
    double lambda_mod = 1.0;
    double lambda_edge = 1000.0;
    void validate() const;
};

// Patch-score grids are carried as single-channel ImageTensors with values
// in (0,1).
using ScoreGrid = ImageTensor;

// Mean squared error over all pixels. All squared-norm objectives here are
// means, not sums, so the lambda weights are resolution-independent.
double diffusion_loss(const ImageTensor& eps_true, const ImageTensor& eps_pred);
// d(diffusion_loss)/d(eps_pred) = 2 (eps_pred - eps_true) / N
ImageTensor diffusion_loss_grad(const ImageTensor& eps_true, const ImageTensor& eps_pred);

double style_loss(const ImageTensor& x_hat_tir, const ImageTensor& x_tir);
ImageTensor style_loss_grad(const ImageTensor& x_hat_tir, const ImageTensor& x_tir);

// mean((1 - d)^2); minimized when the discriminator accepts the samples.
double modality_loss(const ScoreGrid& d_fake_vis);
ScoreGrid modality_loss_grad(const ScoreGrid& d_fake_vis);

// MSE between the high-pass filtered images.
double edge_loss(const ImageTensor& x_vis, const ImageTensor& x_hat_vis,
                 const edge::HighPassConfig& cfg);
// Gradient w.r.t. x_hat_vis; the filter is self-adjoint so the chain rule
// reapplies it to the residual.
ImageTensor edge_loss_grad(const ImageTensor& x_vis, const ImageTensor& x_hat_vis,
                           const edge::HighPassConfig& cfg);

// Squared-log objective: lambda_real*mean((log d_real)^2) + mean((log(1-d_fake))^2).
// Scores are clamped to [eps, 1-eps] with eps = 1e-7 before the logs;
// *clamped reports whether clamping fired.
double discriminator_loss(const ScoreGrid& d_real, const ScoreGrid& d_fake,
                          const LossWeights& w, bool* clamped = nullptr);
ScoreGrid discriminator_loss_grad_real(const ScoreGrid& d_real, const LossWeights& w);
ScoreGrid discriminator_loss_grad_fake(const ScoreGrid& d_fake);

// The log-likelihood adversarial form, negated so that descending it drives
// d_real up and d_fake down. Available behind a config switch; the squared-log
// objective above is the default executable form.
double discriminator_loss_loglik(const ScoreGrid& d_real, const ScoreGrid& d_fake,
                                 const LossWeights& w, bool* clamped = nullptr);

// lambda_diff*diff + lambda_style*style + lambda_mod*mod + lambda_edge*edge.
double generator_objective(double diff, double style, double mod, double edge,
                           const LossWeights& w);

inline constexpr double kScoreEps = 1e-7;

} // namespace ecdm::losses
