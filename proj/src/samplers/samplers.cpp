#include "samplers/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace ecdm::samplers {

namespace {

using ad::Tensor;

void fill_gaussian_per_sample(Tensor& t, uint64_t seed) {
    const size_t stride = t.sample_stride();
    for (int n = 0; n < t.n; ++n) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(n)));
        float* dst = t.sample(n);
        for (size_t i = 0; i < stride; ++i) dst[i] = static_cast<float>(rng.normal());
    }
}

Tensor conditions_to_tensor(const std::vector<EdgeMap>& conditions) {
    if (conditions.empty()) throw std::invalid_argument("sampler: no conditions given");
    const int h = conditions[0].height, w = conditions[0].width;
    Tensor out(static_cast<int>(conditions.size()), 1, h, w);
    for (size_t n = 0; n < conditions.size(); ++n) {
        if (conditions[n].height != h || conditions[n].width != w)
            throw std::invalid_argument("sampler: conditions must share spatial dims");
        float* dst = out.sample(static_cast<int>(n));
        for (size_t i = 0; i < conditions[n].values.size(); ++i)
            dst[i] = static_cast<float>(conditions[n].values[i]);
    }
    return out;
}

void check_finite(const Tensor& t, const char* what) {
    for (float v : t.v)
        if (!std::isfinite(v))
            throw NumericError(std::string(what) + ": non-finite denoiser output "
                               "(untrained or corrupted parameters?)");
}

std::vector<ImageTensor> split_clamped(const Tensor& x) {
    std::vector<ImageTensor> out;
    out.reserve(x.n);
    for (int n = 0; n < x.n; ++n) {
        ImageTensor img(1, x.h, x.w);
        const float* src = x.sample(n);
        for (size_t i = 0; i < img.values.size(); ++i)
            img.values[i] = std::clamp(static_cast<double>(src[i]), -1.0, 1.0);
        out.push_back(std::move(img));
    }
    return out;
}

} // namespace

void FastSamplerConfig::validate() const {
    if (order < 1 || order > 3)
        throw std::invalid_argument("FastSamplerConfig: order must be in [1, 3]");
    if (timesteps < order)
        throw std::invalid_argument("FastSamplerConfig: order exceeds timesteps");
    if (condition_scale < 0.0)
        throw std::invalid_argument("FastSamplerConfig: condition_scale must be >= 0");
    if (skip != "time_uniform")
        throw std::invalid_argument("FastSamplerConfig: unsupported skip type '" + skip + "'");
    if (method != "multistep" && method != "adaptive")
        throw std::invalid_argument("FastSamplerConfig: unknown method '" + method + "'");
}

DenoiserFn wrap(nn::Denoiser& net) {
    return [&net](const Tensor& x_t, const Tensor& cond, const std::vector<int>& t) {
        return net.forward(x_t, cond, t);
    };
}

std::vector<int> time_uniform_grid(int T, int n) {
    if (n < 1) throw std::invalid_argument("time_uniform_grid: need at least one step");
    std::vector<int> grid(n);
    if (n == 1) {
        grid[0] = T;
        return grid;
    }
    for (int i = 0; i < n; ++i) {
        const double t = T - static_cast<double>(i) * (T - 1) / (n - 1);
        grid[i] = std::max(1, static_cast<int>(std::lround(t)));
    }
    return grid;
}

SolverGrid make_solver_grid(const diffusion::NoiseSchedule& schedule, int timesteps) {
    SolverGrid g;
    g.times = time_uniform_grid(schedule.steps(), timesteps);
    g.times.push_back(0);  // virtual clean endpoint
    const size_t n = g.times.size();
    g.alpha.resize(n);
    g.sigma.resize(n);
    g.lambda.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const double abar = schedule.alpha_bar(g.times[i]);
        g.alpha[i] = std::sqrt(abar);
        g.sigma[i] = std::sqrt(1.0 - abar);
        g.lambda[i] = (g.sigma[i] == 0.0) ? std::numeric_limits<double>::infinity()
                                          : std::log(g.alpha[i] / g.sigma[i]);
    }
    return g;
}

std::vector<ImageTensor> ancestral_sample_batch(const DenoiserFn& denoiser,
                                                const std::vector<EdgeMap>& conditions,
                                                const diffusion::NoiseSchedule& schedule,
                                                uint64_t seed, bool mu_alpha_bar_form) {
    const Tensor cond = conditions_to_tensor(conditions);
    const int batch = cond.n;
    Tensor x(batch, 1, cond.h, cond.w);
    fill_gaussian_per_sample(x, mix_seed(seed, 0xa5c0));

    // one generator per sample so results are independent of batch grouping
    std::vector<Rng> noise_rngs;
    noise_rngs.reserve(batch);
    for (int n = 0; n < batch; ++n)
        noise_rngs.emplace_back(mix_seed(seed, 0x57e9, static_cast<uint64_t>(n)));

    const int T = schedule.steps();
    for (int t = T; t >= 1; --t) {
        const std::vector<int> steps(batch, t);
        const Tensor eps = denoiser(x, cond, steps);
        if (t == T) check_finite(eps, "ancestral_sample");
        const double denom = mu_alpha_bar_form ? schedule.sqrt_alpha_bar(t)
                                               : std::sqrt(schedule.alpha(t));
        const double scale = 1.0 / denom;
        const double eps_coeff = schedule.beta(t) / schedule.sqrt_one_minus_alpha_bar(t);
        const double sigma = std::sqrt(schedule.posterior_variance(t));
        for (int n = 0; n < batch; ++n) {
            float* xs = x.sample(n);
            const float* es = eps.sample(n);
            for (size_t i = 0; i < x.sample_stride(); ++i) {
                double mu = scale * (xs[i] - eps_coeff * es[i]);
                if (t > 1) mu += sigma * noise_rngs[n].normal();
                xs[i] = static_cast<float>(mu);
            }
        }
    }
    return split_clamped(x);
}

ImageTensor ancestral_sample(const DenoiserFn& denoiser, const EdgeMap& condition,
                             const diffusion::NoiseSchedule& schedule, uint64_t seed,
                             bool mu_alpha_bar_form) {
    return ancestral_sample_batch(denoiser, {condition}, schedule, seed,
                                  mu_alpha_bar_form)[0];
}

namespace {

// One multistep update in any numeric container supporting indexed access.
struct SolverCoeffs {
    double sigma_ratio;
    double c_d0;              // multiplies the newest data prediction
    double c_d1 = 0.0;        // multiplies D1
    double c_d2 = 0.0;        // multiplies D2
    double r0 = 0.0, r1 = 0.0;
    int order = 1;
    bool final_step = false;  // target time 0: x <- D0
};

SolverCoeffs step_coeffs(const SolverGrid& grid, int i, int order_config) {
    const int n_evals = static_cast<int>(grid.times.size()) - 1;
    SolverCoeffs c;
    // warmup on the first steps, order-1 on the final step to time 0
    c.order = std::min({order_config, i + 1, n_evals - i});
    if (grid.times[i + 1] == 0) {
        c.final_step = true;
        return c;
    }
    const double h = grid.lambda[i + 1] - grid.lambda[i];
    const double phi1 = std::expm1(-h);
    const double alpha_next = grid.alpha[i + 1];
    c.sigma_ratio = grid.sigma[i + 1] / grid.sigma[i];
    c.c_d0 = -alpha_next * phi1;
    if (c.order >= 2) {
        c.r0 = (grid.lambda[i] - grid.lambda[i - 1]) / h;
        const double phi2 = phi1 / h + 1.0;
        c.c_d1 = alpha_next * phi2;
    }
    if (c.order >= 3) {
        c.r1 = (grid.lambda[i - 1] - grid.lambda[i - 2]) / h;
        const double phi2 = phi1 / h + 1.0;
        const double phi3 = phi2 / h - 0.5;
        c.c_d2 = -alpha_next * phi3;
    }
    return c;
}

} // namespace

std::vector<ImageTensor> fast_sample_batch(const DenoiserFn& denoiser,
                                           const std::vector<EdgeMap>& conditions,
                                           const diffusion::NoiseSchedule& schedule,
                                           const FastSamplerConfig& cfg, uint64_t seed,
                                           int* eval_count) {
    cfg.validate();
    const Tensor cond = conditions_to_tensor(conditions);
    const int batch = cond.n;
    const size_t stride = static_cast<size_t>(cond.h) * cond.w;
    const bool guided = cfg.condition_scale != 1.0;
    const Tensor zero_cond(batch, 1, cond.h, cond.w);

    Tensor x(batch, 1, cond.h, cond.w);
    fill_gaussian_per_sample(x, mix_seed(seed, 0xfa57));

    const SolverGrid grid = make_solver_grid(schedule, cfg.timesteps);
    const int n_evals = cfg.timesteps;
    int evals = 0;

    std::vector<Tensor> history;  // newest last
    for (int i = 0; i < n_evals; ++i) {
        const std::vector<int> steps(batch, grid.times[i]);
        Tensor eps = denoiser(x, cond, steps);
        ++evals;
        if (guided) {
            const Tensor eps_u = denoiser(x, zero_cond, steps);
            ++evals;
            const float s = static_cast<float>(cfg.condition_scale);
            for (size_t j = 0; j < eps.v.size(); ++j)
                eps.v[j] = eps_u.v[j] + s * (eps.v[j] - eps_u.v[j]);
        }
        if (i == 0) check_finite(eps, "fast_sample");

        // data prediction x0 = (x - sigma*eps) / alpha
        Tensor x0(batch, 1, cond.h, cond.w);
        const double inv_a = 1.0 / grid.alpha[i];
        const double sig = grid.sigma[i];
        for (int n = 0; n < batch; ++n) {
            const float* xs = x.sample(n);
            const float* es = eps.sample(n);
            float* d = x0.sample(n);
            for (size_t j = 0; j < stride; ++j)
                d[j] = static_cast<float>((xs[j] - sig * es[j]) * inv_a);
        }
        history.push_back(std::move(x0));
        if (history.size() > 3) history.erase(history.begin());

        const SolverCoeffs c = step_coeffs(grid, i, cfg.order);
        const Tensor& d0 = history.back();
        if (c.final_step) {
            x = d0;
            continue;
        }
        Tensor next(batch, 1, cond.h, cond.w);
        const Tensor* prev1 = history.size() >= 2 ? &history[history.size() - 2] : nullptr;
        const Tensor* prev2 = history.size() >= 3 ? &history[history.size() - 3] : nullptr;
        for (size_t j = 0; j < next.v.size(); ++j) {
            double v = c.sigma_ratio * x.v[j] + c.c_d0 * d0.v[j];
            if (c.order >= 2) {
                const double d1_0 = (d0.v[j] - prev1->v[j]) / c.r0;
                if (c.order == 2) {
                    v += c.c_d1 * d1_0;
                } else {
                    const double d1_1 = (prev1->v[j] - prev2->v[j]) / c.r1;
                    const double d1 = d1_0 + c.r0 / (c.r0 + c.r1) * (d1_0 - d1_1);
                    const double d2 = (d1_0 - d1_1) / (c.r0 + c.r1);
                    v += c.c_d1 * d1 + c.c_d2 * d2;
                }
            }
            next.v[j] = static_cast<float>(v);
        }
        x = std::move(next);
    }
    if (eval_count) *eval_count = evals;
    return split_clamped(x);
}

ImageTensor fast_sample(const DenoiserFn& denoiser, const EdgeMap& condition,
                        const diffusion::NoiseSchedule& schedule,
                        const FastSamplerConfig& cfg, uint64_t seed, int* eval_count) {
    return fast_sample_batch(denoiser, {condition}, schedule, cfg, seed, eval_count)[0];
}

ad::Graph::Id build_rollout(ad::Graph& g, nn::Denoiser& net, ad::Graph::Id conditions,
                            const diffusion::NoiseSchedule& schedule,
                            const FastSamplerConfig& cfg, uint64_t seed) {
    cfg.validate();
    const Tensor& cond_val = g.value(conditions);
    const int batch = cond_val.n;
    const bool guided = cfg.condition_scale != 1.0;
    const ad::Graph::Id zero_cond =
        guided ? g.input(Tensor(batch, 1, cond_val.h, cond_val.w)) : -1;

    Tensor x0_noise(batch, 1, cond_val.h, cond_val.w);
    fill_gaussian_per_sample(x0_noise, mix_seed(seed, 0xfa57));
    ad::Graph::Id x = g.input(std::move(x0_noise));

    const SolverGrid grid = make_solver_grid(schedule, cfg.timesteps);
    const int n_evals = cfg.timesteps;
    std::vector<ad::Graph::Id> history;

    for (int i = 0; i < n_evals; ++i) {
        const std::vector<int> steps(batch, grid.times[i]);
        ad::Graph::Id eps = net.build(g, x, conditions, steps);
        if (guided) {
            const ad::Graph::Id eps_u = net.build(g, x, zero_cond, steps);
            eps = g.lincomb(1.0f - static_cast<float>(cfg.condition_scale), eps_u,
                            static_cast<float>(cfg.condition_scale), eps);
        }
        const double inv_a = 1.0 / grid.alpha[i];
        const ad::Graph::Id x0 = g.lincomb(static_cast<float>(inv_a), x,
                                           static_cast<float>(-grid.sigma[i] * inv_a), eps);
        history.push_back(x0);
        if (history.size() > 3) history.erase(history.begin());

        const SolverCoeffs c = step_coeffs(grid, i, cfg.order);
        const ad::Graph::Id d0 = history.back();
        if (c.final_step) {
            x = d0;
            continue;
        }
        ad::Graph::Id next = g.lincomb(static_cast<float>(c.sigma_ratio), x,
                                       static_cast<float>(c.c_d0), d0);
        if (c.order >= 2) {
            const ad::Graph::Id p1 = history[history.size() - 2];
            const ad::Graph::Id d1_0 = g.lincomb(static_cast<float>(1.0 / c.r0), d0,
                                                 static_cast<float>(-1.0 / c.r0), p1);
            if (c.order == 2) {
                next = g.lincomb(1.0f, next, static_cast<float>(c.c_d1), d1_0);
            } else {
                const ad::Graph::Id p2 = history[history.size() - 3];
                const ad::Graph::Id d1_1 = g.lincomb(static_cast<float>(1.0 / c.r1), p1,
                                                     static_cast<float>(-1.0 / c.r1), p2);
                const double w = c.r0 / (c.r0 + c.r1);
                const ad::Graph::Id d1 = g.lincomb(static_cast<float>(1.0 + w), d1_0,
                                                   static_cast<float>(-w), d1_1);
                const ad::Graph::Id d2 =
                    g.lincomb(static_cast<float>(1.0 / (c.r0 + c.r1)), d1_0,
                              static_cast<float>(-1.0 / (c.r0 + c.r1)), d1_1);
                next = g.lincomb(1.0f, next, static_cast<float>(c.c_d1), d1);
                next = g.lincomb(1.0f, next, static_cast<float>(c.c_d2), d2);
            }
        }
        x = next;
    }
    return x;
}

} // namespace ecdm::samplers
