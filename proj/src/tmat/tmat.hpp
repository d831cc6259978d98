#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "diffusion/schedule.hpp"
#include "nn/adam.hpp"
#include "nn/checkpoint.hpp"
#include "nn/denoiser.hpp"
#include "nn/discriminator.hpp"
#include "tmat/config.hpp"

namespace ecdm::tmat {

// In-memory training set: thermal images with their edge conditions, and the
// unpaired visible set's conditions plus raw high-pass targets for the edge
// loss.
struct TrainData {
    int height = 0, width = 0;
    std::vector<ImageTensor> thermal;       // 1ch, [-1,1]
    std::vector<EdgeMap> thermal_cond;      // normalized H(thermal)
    std::vector<EdgeMap> visible_cond;      // normalized H(visible)
    std::vector<EdgeMap> visible_edges;     // raw H(visible), edge-loss target
};

TrainData load_train_data(const std::string& thermal_root, const std::string& visible_root,
                          const edge::HighPassConfig& edge_cfg);

struct StepRecord {
    int64_t step = 0;
    int stage = 1;
    double l_diff = 0, l_style = 0, l_mod = 0, l_edge = 0, l_d = 0, l_g = 0;
    std::string to_json_line() const;
};

// Owns the models, optimizers, and counters of one TMAT run. Stage-2 methods
// refuse to run until stage 1 has completed.
class Trainer {
public:
    explicit Trainer(const TmatConfig& cfg);

    // One full pass over the thermal set: per minibatch, sample t and kappa,
    // form x_t, and take one optimizer step on the diffusion loss.
    void stage1_epoch(const TrainData& data);

    // One adversarial round: s_g generator steps (diffusion + style +
    // modality + edge objectives, generations via the differentiable fast
    // sampler) then s_d discriminator steps.
    void stage2_round(const TrainData& data, const std::vector<int>& thermal_batch,
                      const std::vector<int>& visible_batch);

    // Full schedule: s_diff stage-1 epochs then s_adv stage-2 epochs, with
    // checkpoints at every epoch, the stage boundary, and the end. Returns
    // the final checkpoint path.
    std::string run(const TrainData& data, const std::string& out_dir);

    void save_checkpoint(const std::string& path) const;
    static std::unique_ptr<Trainer> from_checkpoint(const std::string& path,
                                                    const TmatConfig& cfg);

    nn::Denoiser& denoiser() { return *denoiser_; }
    nn::Discriminator& discriminator() { return *disc_; }
    const diffusion::NoiseSchedule& schedule() const { return schedule_; }
    const TmatConfig& config() const { return cfg_; }

    int stage() const { return stage_; }
    int epoch_in_stage() const { return epoch_in_stage_; }
    int64_t global_step() const { return global_step_; }
    void begin_stage2();  // requires stage-1 completion

    const std::vector<StepRecord>& records() const { return records_; }
    void clear_records() { records_.clear(); }

private:
    ad::Tensor batch_images(const std::vector<ImageTensor>& pool,
                            const std::vector<int>& idx) const;
    ad::Tensor batch_maps(const std::vector<EdgeMap>& pool, const std::vector<int>& idx) const;
    void generator_step(const TrainData& data, const std::vector<int>& thermal_batch,
                        const std::vector<int>& visible_batch);
    void discriminator_step(const TrainData& data, const std::vector<int>& thermal_batch,
                            const std::vector<int>& visible_batch);
    std::vector<int> shuffled_indices(size_t n, uint64_t purpose, int epoch) const;

    TmatConfig cfg_;
    diffusion::NoiseSchedule schedule_;
    std::unique_ptr<nn::Denoiser> denoiser_;
    std::unique_ptr<nn::Discriminator> disc_;
    std::unique_ptr<nn::Adam> adam_g_, adam_d_;

    int stage_ = 1;
    int epoch_in_stage_ = 0;
    bool stage1_complete_ = false;
    int64_t global_step_ = 0;
    std::vector<StepRecord> records_;
};

// Algorithm entry point: loads data per cfg, trains, writes losses.jsonl and
// checkpoints under out_dir, returns the final checkpoint path. Resumable via
// resume_ckpt (config hash must match).
std::string run_tmat(const TmatConfig& cfg, const std::string& out_dir,
                     const std::string& resume_ckpt = "");

// Inference-side view of a checkpoint: the generator, its schedule, and the
// edge preprocessing recorded at training time.
struct LoadedModel {
    TmatConfig cfg;
    std::unique_ptr<nn::Denoiser> denoiser;
    diffusion::NoiseSchedule schedule = diffusion::NoiseSchedule::linear(1, 0.5, 0.5);
};
LoadedModel load_model(const std::string& ckpt_path);

} // namespace ecdm::tmat
