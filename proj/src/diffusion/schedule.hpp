#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/image.hpp"

namespace ecdm::diffusion {

// Precomputed variance-schedule tables for a T-step diffusion chain.
// All derived tables are computed once, in double precision, at construction.
// Index convention: tables are stored for t = 1..T; alpha_bar(0) == 1.
class NoiseSchedule {
public:
    // Linear beta schedule inclusive of both endpoints.
    // Requires T >= 1 and 0 < beta_start <= beta_end < 1.
    static NoiseSchedule linear(int T, double beta_start, double beta_end);

    int steps() const { return T_; }
    double beta_start() const { return beta_start_; }
    double beta_end() const { return beta_end_; }

    double beta(int t) const { check_t(t); return betas_[t - 1]; }
    double alpha(int t) const { check_t(t); return alphas_[t - 1]; }
    // alpha_bar(0) == 1 by convention, which makes the posterior variance at
    // t=1 exactly zero and the final reverse step deterministic.
    double alpha_bar(int t) const;
    double posterior_variance(int t) const { check_t(t); return posterior_vars_[t - 1]; }

    double sqrt_alpha_bar(int t) const;
    double sqrt_one_minus_alpha_bar(int t) const;

    // Serialized as the three defining scalars only; derived tables are always
    // recomputed on load, never stored.
    std::string serialize() const;
    static NoiseSchedule deserialize(const std::string& text);

private:
    NoiseSchedule() = default;
    void check_t(int t) const;

    int T_ = 0;
    double beta_start_ = 0.0;
    double beta_end_ = 0.0;
    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;      // index t-1 holds alpha_bar(t)
    std::vector<double> posterior_vars_;  // index t-1 holds sigma_t^2
};

// One forward step: sqrt(1-beta_t) * x_prev + sqrt(beta_t) * noise.
ImageTensor q_step(const ImageTensor& x_prev, int t, const NoiseSchedule& schedule,
                   const ImageTensor& noise);

// Closed-form jump to step t: sqrt(abar_t) * x0 + sqrt(1-abar_t) * kappa.
ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& kappa,
                     const NoiseSchedule& schedule);

// Reverse-process mean. The default uses 1/sqrt(alpha_t); the printed form
// with 1/sqrt(alpha_bar_t) is available behind the flag for side-by-side
// comparison (it diverges for large t and breaks the t=1 identity).
ImageTensor posterior_mean(const ImageTensor& x_t, const ImageTensor& eps_pred, int t,
                           const NoiseSchedule& schedule,
                           bool use_alpha_bar_form = false);

double posterior_variance(int t, const NoiseSchedule& schedule);

} // namespace ecdm::diffusion
