#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edge/edge_ops.hpp"
#include "losses/losses.hpp"
#include "nn/denoiser.hpp"
#include "nn/discriminator.hpp"
#include "samplers/samplers.hpp"

namespace ecdm::tmat {

// All knobs of the two-stage training loop. Defaults are the paper's
// full-scale settings; toy() scales them down to desk size.
struct TmatConfig {
    int s_diff = 70;  // stage-1 epochs
    int s_adv = 20;   // stage-2 epochs (0 disables stage 2)
    int s_g = 2;      // generator steps per stage-2 round
    int s_d = 1;      // discriminator steps per stage-2 round
    int batch_size = 4;
    double learning_rate = 2e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    losses::LossWeights weights;
    samplers::FastSamplerConfig sampler;  // in-training generation
    int schedule_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    nn::DenoiserConfig model;
    nn::DiscriminatorConfig disc;
    edge::HighPassConfig edge_cfg;
    bool eq11_adversarial = false;   // log-likelihood discriminator objective
    bool mu_alpha_bar_form = false;  // printed-form reverse mean (comparison only)
    uint64_t seed = 0;
    std::string thermal_data;  // dataset root containing manifest.json
    std::string visible_data;  // dataset root for the unpaired visible set

    static TmatConfig toy();
    void validate() const;
};

// Flat key=value config files ('#' comments); --set style overrides use the
// same "key=value" syntax. Unknown keys are rejected.
TmatConfig parse_config_text(const std::string& text,
                             const std::vector<std::string>& overrides = {});
TmatConfig parse_config_file(const std::string& path,
                             const std::vector<std::string>& overrides = {});

// Fully resolved config as canonical key=value text (stable key order).
std::string canonical_text(const TmatConfig& cfg);

// Hash over the training-relevant fields (dataset paths excluded); a resumed
// run must match the checkpoint's hash.
std::string config_hash(const TmatConfig& cfg);

} // namespace ecdm::tmat
