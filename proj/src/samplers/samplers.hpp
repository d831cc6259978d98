#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ad/tensor.hpp"
#include "core/image.hpp"
#include "diffusion/schedule.hpp"
#include "nn/denoiser.hpp"

namespace ecdm::samplers {

// Fast-sampler settings mirroring the published solver table. The executed
// solver is the fixed-step multistep update at the configured order;
// `method`/`atol`/`rtol` record the adaptive controller's settings but the
// adaptive mode itself is never executed.
struct FastSamplerConfig {
    int timesteps = 5;
    int order = 3;
    std::string skip = "time_uniform";
    std::string method = "multistep";  // "adaptive" accepted as inert metadata
    std::string solver_type = "taylor";
    double condition_scale = 0.5;
    double atol = 0.0078;
    double rtol = 0.05;
    void validate() const;
};

// Batch denoiser abstraction so samplers can run against the real network or
// a test oracle. Inputs/outputs are float {N,C,H,W} tensors.
using DenoiserFn = std::function<ad::Tensor(const ad::Tensor& x_t, const ad::Tensor& cond,
                                            const std::vector<int>& t)>;

DenoiserFn wrap(nn::Denoiser& net);

// Integer evaluation times for the time-uniform skip: grid[0] = T down to
// grid[n-1] = 1 (n >= 2), uniformly spaced and rounded.
std::vector<int> time_uniform_grid(int T, int n);

// Ancestral DDPM sampling from x_T ~ N(0,I); the final step adds no noise.
// Output is clamped to [-1, 1].
std::vector<ImageTensor> ancestral_sample_batch(const DenoiserFn& denoiser,
                                                const std::vector<EdgeMap>& conditions,
                                                const diffusion::NoiseSchedule& schedule,
                                                uint64_t seed,
                                                bool mu_alpha_bar_form = false);
ImageTensor ancestral_sample(const DenoiserFn& denoiser, const EdgeMap& condition,
                             const diffusion::NoiseSchedule& schedule, uint64_t seed,
                             bool mu_alpha_bar_form = false);

// Fixed-step multistep solver in data-prediction form. Evaluates the
// denoiser exactly cfg.timesteps times (twice that when condition_scale != 1,
// for the zero-condition pass). Output is clamped to [-1, 1].
std::vector<ImageTensor> fast_sample_batch(const DenoiserFn& denoiser,
                                           const std::vector<EdgeMap>& conditions,
                                           const diffusion::NoiseSchedule& schedule,
                                           const FastSamplerConfig& cfg, uint64_t seed,
                                           int* eval_count = nullptr);
ImageTensor fast_sample(const DenoiserFn& denoiser, const EdgeMap& condition,
                        const diffusion::NoiseSchedule& schedule,
                        const FastSamplerConfig& cfg, uint64_t seed,
                        int* eval_count = nullptr);

// Differentiable rollout of the same multistep solver, built into an autodiff
// graph so losses on the generated images backpropagate through all solver
// steps into the denoiser parameters. Returns the (unclamped) generated
// image node.
ad::Graph::Id build_rollout(ad::Graph& g, nn::Denoiser& net, ad::Graph::Id conditions,
                            const diffusion::NoiseSchedule& schedule,
                            const FastSamplerConfig& cfg, uint64_t seed);

// Solver coefficients shared by the double-precision sampler and the
// differentiable rollout.
struct SolverGrid {
    std::vector<int> times;        // evaluation times, T .. 1, plus virtual 0
    std::vector<double> alpha;     // sqrt(alpha_bar) at each grid point
    std::vector<double> sigma;     // sqrt(1 - alpha_bar)
    std::vector<double> lambda;    // log(alpha/sigma); +inf at time 0
};
SolverGrid make_solver_grid(const diffusion::NoiseSchedule& schedule, int timesteps);

} // namespace ecdm::samplers
