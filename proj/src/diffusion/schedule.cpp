#include "diffusion/schedule.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ecdm::diffusion {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    if (T < 1)
        throw std::invalid_argument("NoiseSchedule: T must be >= 1, got " + std::to_string(T));
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw std::invalid_argument("NoiseSchedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T_ = T;
    s.beta_start_ = beta_start;
    s.beta_end_ = beta_end;
    s.betas_.resize(T);
    s.alphas_.resize(T);
    s.alpha_bars_.resize(T);
    s.posterior_vars_.resize(T);

    double abar = 1.0;  // alpha_bar(0)
    for (int t = 1; t <= T; ++t) {
        const double frac = (T == 1) ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        const double abar_prev = abar;
        abar *= 1.0 - beta;
        s.betas_[t - 1] = beta;
        s.alphas_[t - 1] = 1.0 - beta;
        s.alpha_bars_[t - 1] = abar;
        s.posterior_vars_[t - 1] = (1.0 - abar_prev) / (1.0 - abar) * beta;
    }
    return s;
}

void NoiseSchedule::check_t(int t) const {
    if (t < 1 || t > T_)
        throw std::out_of_range("NoiseSchedule: step " + std::to_string(t) +
                                " out of range [1, " + std::to_string(T_) + "]");
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t == 0) return 1.0;
    check_t(t);
    return alpha_bars_[t - 1];
}

double NoiseSchedule::sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar(t)); }

double NoiseSchedule::sqrt_one_minus_alpha_bar(int t) const {
    return std::sqrt(1.0 - alpha_bar(t));
}

std::string NoiseSchedule::serialize() const {
    std::ostringstream out;
    out.precision(17);
    out << "T=" << T_ << "\n"
        << "beta_start=" << beta_start_ << "\n"
        << "beta_end=" << beta_end_ << "\n";
    return out.str();
}

NoiseSchedule NoiseSchedule::deserialize(const std::string& text) {
    int T = 0;
    double beta_start = 0.0, beta_end = 0.0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "T") T = std::stoi(val);
        else if (key == "beta_start") beta_start = std::stod(val);
        else if (key == "beta_end") beta_end = std::stod(val);
        else throw std::invalid_argument("NoiseSchedule: unknown key '" + key + "'");
    }
    return linear(T, beta_start, beta_end);
}

ImageTensor q_step(const ImageTensor& x_prev, int t, const NoiseSchedule& schedule,
                   const ImageTensor& noise) {
    require_same_shape(x_prev, noise, "q_step");
    const double beta = schedule.beta(t);
    const double a = std::sqrt(1.0 - beta);
    const double b = std::sqrt(beta);
    ImageTensor out = x_prev;
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = a * x_prev.values[i] + b * noise.values[i];
    return out;
}

ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& kappa,
                     const NoiseSchedule& schedule) {
    require_same_shape(x0, kappa, "q_sample");
    const double a = schedule.sqrt_alpha_bar(t);
    const double b = schedule.sqrt_one_minus_alpha_bar(t);
    ImageTensor out = x0;
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = a * x0.values[i] + b * kappa.values[i];
    return out;
}

ImageTensor posterior_mean(const ImageTensor& x_t, const ImageTensor& eps_pred, int t,
                           const NoiseSchedule& schedule, bool use_alpha_bar_form) {
    require_same_shape(x_t, eps_pred, "posterior_mean");
    const double denom =
        use_alpha_bar_form ? schedule.sqrt_alpha_bar(t) : std::sqrt(schedule.alpha(t));
    const double scale = 1.0 / denom;
    const double eps_coeff = schedule.beta(t) / schedule.sqrt_one_minus_alpha_bar(t);
    ImageTensor out = x_t;
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = scale * (x_t.values[i] - eps_coeff * eps_pred.values[i]);
    return out;
}

double posterior_variance(int t, const NoiseSchedule& schedule) {
    return schedule.posterior_variance(t);
}

} // namespace ecdm::diffusion
