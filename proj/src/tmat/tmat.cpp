#include "tmat/tmat.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "data/manifest.hpp"
#include "data/png_io.hpp"
#include "samplers/samplers.hpp"

namespace ecdm::tmat {

namespace fs = std::filesystem;

namespace {

// seed-derivation purposes
constexpr uint64_t kPurposeInitG = 0x01;
constexpr uint64_t kPurposeInitD = 0x02;
constexpr uint64_t kPurposeOrder = 0x03;
constexpr uint64_t kPurposeStep = 0x04;
constexpr uint64_t kPurposeRollTir = 0x05;
constexpr uint64_t kPurposeRollVis = 0x06;
constexpr uint64_t kPurposeRollDisc = 0x07;

EdgeMap edge_of(const ImageTensor& img, const edge::HighPassConfig& cfg) {
    return edge::extract_edges(img, cfg);
}

void check_finite(double v, const char* what, int64_t step) {
    if (!std::isfinite(v))
        throw NumericError("tmat: non-finite " + std::string(what) + " at step " +
                           std::to_string(step) + "; aborting");
}

} // namespace

TrainData load_train_data(const std::string& thermal_root, const std::string& visible_root,
                          const edge::HighPassConfig& edge_cfg) {
    const auto thermal_manifest =
        data::load_manifest((fs::path(thermal_root) / "manifest.json").string());
    const auto visible_manifest =
        data::load_manifest((fs::path(visible_root) / "manifest.json").string());
    if (thermal_manifest.records.empty() || visible_manifest.records.empty())
        throw DataError("tmat: empty training dataset");

    TrainData out;
    for (const auto& rec : thermal_manifest.records) {
        const std::string path = data::path_for_modality(thermal_root, rec, "thermal");
        ImageTensor img = data::load_image(path);
        if (img.channels != 1)
            throw DataError("tmat: thermal image is not single-channel: " + path);
        if (out.height == 0) {
            out.height = img.height;
            out.width = img.width;
        } else if (img.height != out.height || img.width != out.width) {
            throw DataError("tmat: inconsistent image sizes in " + thermal_root);
        }
        out.thermal_cond.push_back(edge::normalize_condition(edge_of(img, edge_cfg)));
        out.thermal.push_back(std::move(img));
    }
    for (const auto& rec : visible_manifest.records) {
        const std::string path = data::path_for_modality(visible_root, rec, "visible");
        const ImageTensor img = data::load_image(path);
        if (img.height != out.height || img.width != out.width)
            throw DataError("tmat: visible image size mismatch: " + path);
        EdgeMap raw = edge_of(img, edge_cfg);
        out.visible_cond.push_back(edge::normalize_condition(raw));
        out.visible_edges.push_back(std::move(raw));
    }
    return out;
}

std::string StepRecord::to_json_line() const {
    std::ostringstream os;
    os.precision(10);
    os << "{\"step\":" << step << ",\"stage\":" << stage << ",\"l_diff\":" << l_diff
       << ",\"l_style\":" << l_style << ",\"l_mod\":" << l_mod << ",\"l_edge\":" << l_edge
       << ",\"l_d\":" << l_d << ",\"l_g\":" << l_g << "}";
    return os.str();
}

Trainer::Trainer(const TmatConfig& cfg)
    : cfg_(cfg),
      schedule_(diffusion::NoiseSchedule::linear(cfg.schedule_steps, cfg.beta_start,
                                                 cfg.beta_end)) {
    cfg_.validate();
    denoiser_ = std::make_unique<nn::Denoiser>(cfg_.model,
                                               mix_seed(cfg_.seed, kPurposeInitG));
    disc_ = std::make_unique<nn::Discriminator>(cfg_.disc, mix_seed(cfg_.seed, kPurposeInitD));
    nn::AdamConfig adam;
    adam.learning_rate = cfg_.learning_rate;
    adam.beta1 = cfg_.adam_beta1;
    adam.beta2 = cfg_.adam_beta2;
    adam_g_ = std::make_unique<nn::Adam>(denoiser_->params(), adam);
    adam_d_ = std::make_unique<nn::Adam>(disc_->params(), adam);
}

std::vector<int> Trainer::shuffled_indices(size_t n, uint64_t purpose, int epoch) const {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(mix_seed(cfg_.seed, purpose, static_cast<uint64_t>(stage_)),
                     static_cast<uint64_t>(epoch)));
    for (size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
    return idx;
}

ad::Tensor Trainer::batch_images(const std::vector<ImageTensor>& pool,
                                 const std::vector<int>& idx) const {
    const int b = static_cast<int>(idx.size());
    const ImageTensor& first = pool[idx[0]];
    ad::Tensor out(b, first.channels, first.height, first.width);
    for (int i = 0; i < b; ++i) {
        const ImageTensor& img = pool[idx[i]];
        float* dst = out.sample(i);
        for (size_t j = 0; j < img.values.size(); ++j)
            dst[j] = static_cast<float>(img.values[j]);
    }
    return out;
}

ad::Tensor Trainer::batch_maps(const std::vector<EdgeMap>& pool,
                               const std::vector<int>& idx) const {
    const int b = static_cast<int>(idx.size());
    const EdgeMap& first = pool[idx[0]];
    ad::Tensor out(b, 1, first.height, first.width);
    for (int i = 0; i < b; ++i) {
        const EdgeMap& m = pool[idx[i]];
        float* dst = out.sample(i);
        for (size_t j = 0; j < m.values.size(); ++j) dst[j] = static_cast<float>(m.values[j]);
    }
    return out;
}

void Trainer::stage1_epoch(const TrainData& data) {
    if (stage_ != 1)
        throw ConfigError("tmat: stage1_epoch called after stage 1 completed");
    if (data.thermal.empty()) throw DataError("tmat: empty dataset");

    const std::vector<int> order =
        shuffled_indices(data.thermal.size(), kPurposeOrder, epoch_in_stage_);
    const int T = schedule_.steps();
    const size_t plane = static_cast<size_t>(data.height) * data.width;

    for (size_t pos = 0; pos < order.size(); pos += cfg_.batch_size) {
        const size_t end = std::min(order.size(), pos + cfg_.batch_size);
        const std::vector<int> idx(order.begin() + pos, order.begin() + end);
        const int b = static_cast<int>(idx.size());

        Rng step_rng(mix_seed(cfg_.seed, kPurposeStep, static_cast<uint64_t>(global_step_)));
        std::vector<int> t(b);
        for (int i = 0; i < b; ++i) t[i] = static_cast<int>(step_rng.uniform_int(1, T));

        ad::Tensor x_t(b, 1, data.height, data.width);
        ad::Tensor kappa(b, 1, data.height, data.width);
        for (int i = 0; i < b; ++i) {
            const ImageTensor& x0 = data.thermal[idx[i]];
            const double a = schedule_.sqrt_alpha_bar(t[i]);
            const double s = schedule_.sqrt_one_minus_alpha_bar(t[i]);
            float* xd = x_t.sample(i);
            float* kd = kappa.sample(i);
            for (size_t j = 0; j < plane; ++j) {
                const double k = step_rng.normal();
                kd[j] = static_cast<float>(k);
                xd[j] = static_cast<float>(a * x0.values[j] + s * k);
            }
        }

        ad::Graph g;
        const auto eps_pred =
            denoiser_->build(g, g.input(std::move(x_t)),
                             g.input(batch_maps(data.thermal_cond, idx)), t);
        const auto loss = g.mse(g.input(std::move(kappa)), eps_pred);
        const double l_diff = g.value(loss).v[0];
        check_finite(l_diff, "diffusion loss", global_step_);
        g.backward(loss);
        adam_g_->step();
        adam_g_->zero_grad();

        StepRecord rec;
        rec.step = global_step_;
        rec.stage = 1;
        rec.l_diff = l_diff;
        rec.l_g = l_diff;
        records_.push_back(rec);
        ++global_step_;
    }
    ++epoch_in_stage_;
    if (epoch_in_stage_ >= cfg_.s_diff) stage1_complete_ = true;
}

void Trainer::begin_stage2() {
    if (!stage1_complete_)
        throw ConfigError("tmat: stage 2 requested before stage 1 completed (" +
                          std::to_string(epoch_in_stage_) + "/" + std::to_string(cfg_.s_diff) +
                          " epochs)");
    if (stage_ == 1) {
        stage_ = 2;
        epoch_in_stage_ = 0;
    }
}

void Trainer::generator_step(const TrainData& data, const std::vector<int>& thermal_batch,
                             const std::vector<int>& visible_batch) {
    const int T = schedule_.steps();
    const int b = static_cast<int>(thermal_batch.size());
    const size_t plane = static_cast<size_t>(data.height) * data.width;

    ad::Graph g;
    g.freeze(disc_->params());

    // diffusion term on the thermal batch
    Rng step_rng(mix_seed(cfg_.seed, kPurposeStep, static_cast<uint64_t>(global_step_)));
    std::vector<int> t(b);
    for (int i = 0; i < b; ++i) t[i] = static_cast<int>(step_rng.uniform_int(1, T));
    ad::Tensor x_t(b, 1, data.height, data.width);
    ad::Tensor kappa(b, 1, data.height, data.width);
    for (int i = 0; i < b; ++i) {
        const ImageTensor& x0 = data.thermal[thermal_batch[i]];
        const double a = schedule_.sqrt_alpha_bar(t[i]);
        const double s = schedule_.sqrt_one_minus_alpha_bar(t[i]);
        float* xd = x_t.sample(i);
        float* kd = kappa.sample(i);
        for (size_t j = 0; j < plane; ++j) {
            const double k = step_rng.normal();
            kd[j] = static_cast<float>(k);
            xd[j] = static_cast<float>(a * x0.values[j] + s * k);
        }
    }
    const auto cond_tir = g.input(batch_maps(data.thermal_cond, thermal_batch));
    const auto eps_pred = denoiser_->build(g, g.input(std::move(x_t)), cond_tir, t);
    const auto l_diff = g.mse(g.input(std::move(kappa)), eps_pred);

    // style: thermal-edge generation vs the real thermal image
    const auto x_hat_tir = samplers::build_rollout(
        g, *denoiser_, cond_tir, schedule_, cfg_.sampler,
        mix_seed(cfg_.seed, kPurposeRollTir, static_cast<uint64_t>(global_step_)));
    const auto l_style = g.mse(x_hat_tir, g.input(batch_images(data.thermal, thermal_batch)));

    // modality + edge: visible-edge generation
    const auto cond_vis = g.input(batch_maps(data.visible_cond, visible_batch));
    const auto x_hat_vis = samplers::build_rollout(
        g, *denoiser_, cond_vis, schedule_, cfg_.sampler,
        mix_seed(cfg_.seed, kPurposeRollVis, static_cast<uint64_t>(global_step_)));
    const auto d_fake = disc_->build(g, x_hat_vis);
    const auto& d_shape = g.value(d_fake);
    const auto l_mod =
        g.mse(g.input(ad::Tensor(d_shape.n, d_shape.c, d_shape.h, d_shape.w, 1.0f)), d_fake);
    const auto h_hat = g.highpass(x_hat_vis, cfg_.edge_cfg);
    const auto l_edge = g.mse(g.input(batch_maps(data.visible_edges, visible_batch)), h_hat);

    const auto l_g = g.wsum({l_diff, l_style, l_mod, l_edge},
                            {static_cast<float>(cfg_.weights.lambda_diff),
                             static_cast<float>(cfg_.weights.lambda_style),
                             static_cast<float>(cfg_.weights.lambda_mod),
                             static_cast<float>(cfg_.weights.lambda_edge)});

    StepRecord rec;
    rec.step = global_step_;
    rec.stage = 2;
    rec.l_diff = g.value(l_diff).v[0];
    rec.l_style = g.value(l_style).v[0];
    rec.l_mod = g.value(l_mod).v[0];
    rec.l_edge = g.value(l_edge).v[0];
    rec.l_g = g.value(l_g).v[0];
    check_finite(rec.l_diff, "l_diff", global_step_);
    check_finite(rec.l_style, "l_style", global_step_);
    check_finite(rec.l_mod, "l_mod", global_step_);
    check_finite(rec.l_edge, "l_edge", global_step_);

    g.backward(l_g);
    adam_g_->step();
    adam_g_->zero_grad();
    records_.push_back(rec);
    ++global_step_;
}

void Trainer::discriminator_step(const TrainData& data, const std::vector<int>& thermal_batch,
                                 const std::vector<int>& visible_batch) {
    // regenerate fakes without gradients (the round's parameters have moved)
    ad::Tensor fake;
    {
        ad::Graph g;
        g.freeze(denoiser_->params());
        g.freeze(disc_->params());
        const auto cond_vis = g.input(batch_maps(data.visible_cond, visible_batch));
        const auto x_hat = samplers::build_rollout(
            g, *denoiser_, cond_vis, schedule_, cfg_.sampler,
            mix_seed(cfg_.seed, kPurposeRollDisc, static_cast<uint64_t>(global_step_)));
        fake = g.value(x_hat);
    }

    ad::Graph g;
    g.freeze(denoiser_->params());
    const auto d_real = disc_->build(g, g.input(batch_images(data.thermal, thermal_batch)));
    const auto d_fake = disc_->build(g, g.input(std::move(fake)));

    ad::Graph::Id l_d;
    if (cfg_.eq11_adversarial) {
        // negated log-likelihood form
        const auto log_real = g.mean_all(g.log_clamped(d_real, losses::kScoreEps));
        const auto log_fake =
            g.mean_all(g.log_clamped(g.affine(d_fake, -1.0f, 1.0f), losses::kScoreEps));
        l_d = g.wsum({log_real, log_fake},
                     {static_cast<float>(-cfg_.weights.lambda_real), -1.0f});
    } else {
        // squared-log form
        const auto log_real = g.log_clamped(d_real, losses::kScoreEps);
        const auto log_fake = g.log_clamped(g.affine(d_fake, -1.0f, 1.0f), losses::kScoreEps);
        const auto& rs = g.value(log_real);
        const auto& fs = g.value(log_fake);
        const auto sq_real = g.mse(log_real, g.input(ad::Tensor(rs.n, rs.c, rs.h, rs.w)));
        const auto sq_fake = g.mse(log_fake, g.input(ad::Tensor(fs.n, fs.c, fs.h, fs.w)));
        l_d = g.wsum({sq_real, sq_fake}, {static_cast<float>(cfg_.weights.lambda_real), 1.0f});
    }

    StepRecord rec;
    rec.step = global_step_;
    rec.stage = 2;
    rec.l_d = g.value(l_d).v[0];
    check_finite(rec.l_d, "l_d", global_step_);

    g.backward(l_d);
    adam_d_->step();
    adam_d_->zero_grad();
    records_.push_back(rec);
    ++global_step_;
}

void Trainer::stage2_round(const TrainData& data, const std::vector<int>& thermal_batch,
                           const std::vector<int>& visible_batch) {
    if (stage_ != 2)
        throw ConfigError("tmat: stage2_round before begin_stage2()");
    if (thermal_batch.empty() || visible_batch.size() != thermal_batch.size())
        throw ConfigError("tmat: stage-2 batches must be non-empty and equal-sized");
    for (int k = 0; k < cfg_.s_g; ++k) generator_step(data, thermal_batch, visible_batch);
    for (int l = 0; l < cfg_.s_d; ++l) discriminator_step(data, thermal_batch, visible_batch);
}

std::string Trainer::run(const TrainData& data, const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError("tmat: cannot create " + out_dir + ": " + ec.message());
    const std::string loss_path = (fs::path(out_dir) / "losses.jsonl").string();
    std::ofstream loss_log(loss_path, std::ios::app);
    if (!loss_log) throw DataError("tmat: cannot open " + loss_path);

    auto flush_records = [&] {
        for (const auto& r : records_) loss_log << r.to_json_line() << "\n";
        loss_log.flush();
        records_.clear();
    };

    while (stage_ == 1 && epoch_in_stage_ < cfg_.s_diff) {
        stage1_epoch(data);
        flush_records();
        save_checkpoint((fs::path(out_dir) / "last.ckpt").string());
    }
    if (stage_ == 1) save_checkpoint((fs::path(out_dir) / "stage1.ckpt").string());

    if (cfg_.s_adv > 0) {
        begin_stage2();
        while (epoch_in_stage_ < cfg_.s_adv) {
            const auto thermal_order =
                shuffled_indices(data.thermal.size(), kPurposeOrder, epoch_in_stage_);
            const auto visible_order = shuffled_indices(
                data.visible_cond.size(), kPurposeOrder ^ 0xff, epoch_in_stage_);
            const size_t rounds = thermal_order.size() / cfg_.batch_size;
            for (size_t r = 0; r < rounds; ++r) {
                std::vector<int> tb, vb;
                for (int i = 0; i < cfg_.batch_size; ++i) {
                    tb.push_back(thermal_order[(r * cfg_.batch_size + i) % thermal_order.size()]);
                    vb.push_back(visible_order[(r * cfg_.batch_size + i) % visible_order.size()]);
                }
                stage2_round(data, tb, vb);
            }
            ++epoch_in_stage_;
            flush_records();
            save_checkpoint((fs::path(out_dir) / "last.ckpt").string());
        }
    }

    const std::string final_path = (fs::path(out_dir) / "final.ckpt").string();
    save_checkpoint(final_path);
    flush_records();
    return final_path;
}

void Trainer::save_checkpoint(const std::string& path) const {
    nn::Checkpoint ckpt;
    ckpt.meta["format"] = 1;
    ckpt.meta["config"] = canonical_text(cfg_);
    ckpt.meta["config_hash"] = config_hash(cfg_);
    ckpt.meta["schedule"] = schedule_.serialize();
    ckpt.meta["edge"] = {{"cutoff_fraction", cfg_.edge_cfg.cutoff_fraction},
                         {"soft_width", cfg_.edge_cfg.soft_width},
                         {"normalize_condition", true}};
    ckpt.meta["state"] = {{"stage", stage_},
                          {"epoch_in_stage", epoch_in_stage_},
                          {"stage1_complete", stage1_complete_},
                          {"global_step", global_step_},
                          {"seed", cfg_.seed},
                          {"adam_g_steps", adam_g_->step_count()},
                          {"adam_d_steps", adam_d_->step_count()}};

    for (ad::Param* p : const_cast<Trainer*>(this)->denoiser_->params())
        ckpt.add("G." + p->name, p->value);
    for (ad::Param* p : const_cast<Trainer*>(this)->disc_->params())
        ckpt.add("D." + p->name, p->value);
    for (size_t i = 0; i < adam_g_->size(); ++i) {
        ckpt.add("adamG." + adam_g_->param(i)->name + ".m1", adam_g_->moment1(i));
        ckpt.add("adamG." + adam_g_->param(i)->name + ".m2", adam_g_->moment2(i));
    }
    for (size_t i = 0; i < adam_d_->size(); ++i) {
        ckpt.add("adamD." + adam_d_->param(i)->name + ".m1", adam_d_->moment1(i));
        ckpt.add("adamD." + adam_d_->param(i)->name + ".m2", adam_d_->moment2(i));
    }
    ckpt.save(path);
}

std::unique_ptr<Trainer> Trainer::from_checkpoint(const std::string& path,
                                                  const TmatConfig& cfg) {
    const nn::Checkpoint ckpt = nn::Checkpoint::load(path);
    const std::string stored_hash = ckpt.meta.at("config_hash").get<std::string>();
    if (stored_hash != config_hash(cfg))
        throw ConfigError("tmat: resume rejected, config hash " + config_hash(cfg) +
                          " does not match checkpoint " + stored_hash);

    auto trainer = std::make_unique<Trainer>(cfg);
    auto restore = [&](const std::string& prefix, std::vector<ad::Param*> params) {
        for (ad::Param* p : params) {
            const ad::Tensor* t = ckpt.find(prefix + p->name);
            if (!t || !t->same_shape(p->value))
                throw DataError("tmat: checkpoint missing tensor " + prefix + p->name);
            p->value = *t;
        }
    };
    restore("G.", trainer->denoiser_->params());
    restore("D.", trainer->disc_->params());
    auto restore_adam = [&](const std::string& prefix, nn::Adam& adam) {
        for (size_t i = 0; i < adam.size(); ++i) {
            const ad::Tensor* m1 = ckpt.find(prefix + adam.param(i)->name + ".m1");
            const ad::Tensor* m2 = ckpt.find(prefix + adam.param(i)->name + ".m2");
            if (!m1 || !m2)
                throw DataError("tmat: checkpoint missing optimizer state for " +
                                adam.param(i)->name);
            adam.moment1(i) = *m1;
            adam.moment2(i) = *m2;
        }
    };
    restore_adam("adamG.", *trainer->adam_g_);
    restore_adam("adamD.", *trainer->adam_d_);

    const auto& state = ckpt.meta.at("state");
    trainer->stage_ = state.at("stage").get<int>();
    trainer->epoch_in_stage_ = state.at("epoch_in_stage").get<int>();
    trainer->stage1_complete_ = state.at("stage1_complete").get<bool>();
    trainer->global_step_ = state.at("global_step").get<int64_t>();
    trainer->adam_g_->set_step_count(state.at("adam_g_steps").get<int64_t>());
    trainer->adam_d_->set_step_count(state.at("adam_d_steps").get<int64_t>());
    return trainer;
}

LoadedModel load_model(const std::string& ckpt_path) {
    const nn::Checkpoint ckpt = nn::Checkpoint::load(ckpt_path);
    LoadedModel out;
    out.cfg = parse_config_text(ckpt.meta.at("config").get<std::string>());
    out.schedule = diffusion::NoiseSchedule::deserialize(
        ckpt.meta.at("schedule").get<std::string>());
    out.denoiser = std::make_unique<nn::Denoiser>(out.cfg.model,
                                                  mix_seed(out.cfg.seed, kPurposeInitG));
    for (ad::Param* p : out.denoiser->params()) {
        const ad::Tensor* t = ckpt.find("G." + p->name);
        if (!t || !t->same_shape(p->value))
            throw DataError("load_model: checkpoint missing tensor G." + p->name);
        p->value = *t;
    }
    return out;
}

std::string run_tmat(const TmatConfig& cfg, const std::string& out_dir,
                     const std::string& resume_ckpt) {
    if (cfg.thermal_data.empty())
        throw ConfigError("tmat: data.thermal must point at a dataset root");
    const std::string visible_root =
        cfg.visible_data.empty() ? cfg.thermal_data : cfg.visible_data;
    const TrainData data = load_train_data(cfg.thermal_data, visible_root, cfg.edge_cfg);

    std::unique_ptr<Trainer> trainer;
    if (!resume_ckpt.empty())
        trainer = Trainer::from_checkpoint(resume_ckpt, cfg);
    else
        trainer = std::make_unique<Trainer>(cfg);
    return trainer->run(data, out_dir);
}

} // namespace ecdm::tmat
