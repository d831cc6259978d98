#include "augment/augment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "data/png_io.hpp"
#include "tmat/tmat.hpp"

namespace ecdm::augment {

namespace fs = std::filesystem;

Mode mode_from_string(const std::string& s) {
    if (s == "multiple") return Mode::multiple;
    if (s == "mixed") return Mode::mixed;
    throw ConfigError("augment: mode must be 'multiple' or 'mixed', got '" + s + "'");
}

std::string to_string(Mode m) { return m == Mode::multiple ? "multiple" : "mixed"; }

AugmentPlan plan_counts(int64_t n_real, double ratio, Mode mode) {
    if (n_real < 0) throw std::invalid_argument("plan_counts: n_real must be >= 0");
    if (ratio < 0.0 || ratio > 1.0)
        throw std::invalid_argument("plan_counts: ratio must be in [0, 1]");
    AugmentPlan plan;
    plan.mode = mode;
    plan.ratio = ratio;
    plan.n_real = n_real;
    plan.n_pseudo = static_cast<int64_t>(std::floor(ratio * static_cast<double>(n_real) + 0.5));
    plan.n_real_used = (mode == Mode::multiple) ? n_real : n_real - plan.n_pseudo;
    return plan;
}

data::DatasetManifest synthesize_pseudo(const data::DatasetManifest& visible_manifest,
                                        const std::string& visible_root,
                                        const std::string& ckpt_path,
                                        const samplers::FastSamplerConfig& sampler_cfg,
                                        const std::string& out_dir, uint64_t seed,
                                        const edge::HighPassConfig* override_edge_cfg) {
    tmat::LoadedModel model = tmat::load_model(ckpt_path);
    if (override_edge_cfg) {
        if (override_edge_cfg->cutoff_fraction != model.cfg.edge_cfg.cutoff_fraction ||
            override_edge_cfg->soft_width != model.cfg.edge_cfg.soft_width)
            throw ConfigError("synthesize_pseudo: requested edge preprocessing (cutoff " +
                              std::to_string(override_edge_cfg->cutoff_fraction) +
                              ") differs from the checkpoint's (cutoff " +
                              std::to_string(model.cfg.edge_cfg.cutoff_fraction) + ")");
    }

    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "pseudo", ec);
    if (ec) throw DataError("synthesize_pseudo: cannot create " + out_dir);

    const auto denoise = samplers::wrap(*model.denoiser);
    data::DatasetManifest out;
    out.name = visible_manifest.name + "-pseudo";
    out.split = visible_manifest.split;
    out.modality = "thermal";

    // batch the sampling for throughput; per-record seeds keep the output
    // independent of the batch grouping
    const size_t batch = 16;
    for (size_t begin = 0; begin < visible_manifest.records.size(); begin += batch) {
        const size_t end = std::min(visible_manifest.records.size(), begin + batch);
        std::vector<EdgeMap> conds;
        for (size_t i = begin; i < end; ++i) {
            const auto& rec = visible_manifest.records[i];
            const ImageTensor vis = data::load_image(
                (fs::path(visible_root) / rec.image).string());
            conds.push_back(edge::normalize_condition(
                edge::extract_edges(vis, model.cfg.edge_cfg)));
        }
        // per-record seeds inside the batch
        for (size_t i = begin; i < end; ++i) {
            const ImageTensor sample =
                samplers::fast_sample(denoise, conds[i - begin], model.schedule, sampler_cfg,
                                      mix_seed(seed, 0x95e0d0, static_cast<uint64_t>(i)));
            const auto& rec = visible_manifest.records[i];
            const std::string name = fs::path(rec.image).filename().string();
            data::save_image((fs::path(out_dir) / "pseudo" / name).string(), sample);

            data::DetectionRecord pr;
            pr.image = "pseudo/" + name;
            pr.boxes = rec.boxes;    // pixel alignment lets labels transfer unchanged
            pr.labels = rec.labels;
            pr.source = "pseudo";
            out.records.push_back(std::move(pr));
        }
    }
    data::save_manifest(out, (fs::path(out_dir) / "manifest.json").string());
    return out;
}

data::DatasetManifest merge_datasets(const data::DatasetManifest& real,
                                     const data::DatasetManifest& pseudo,
                                     const AugmentPlan& plan, uint64_t seed) {
    if (static_cast<int64_t>(real.records.size()) < plan.n_real_used)
        throw DataError("merge_datasets: plan needs " + std::to_string(plan.n_real_used) +
                        " real records, have " + std::to_string(real.records.size()));
    if (static_cast<int64_t>(pseudo.records.size()) < plan.n_pseudo)
        throw DataError("merge_datasets: plan needs " + std::to_string(plan.n_pseudo) +
                        " pseudo records, have " + std::to_string(pseudo.records.size()));

    auto pick = [](const std::vector<data::DetectionRecord>& pool, int64_t count,
                   uint64_t seed) {
        std::vector<int> idx(pool.size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(seed);
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1],
                      idx[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
        std::vector<data::DetectionRecord> out;
        for (int64_t i = 0; i < count; ++i) out.push_back(pool[idx[i]]);
        return out;
    };

    data::DatasetManifest merged;
    merged.name = real.name + "+" + pseudo.name;
    merged.split = real.split;
    merged.modality = real.modality;
    auto real_part = pick(real.records, plan.n_real_used, mix_seed(seed, 0x4ea1));
    auto pseudo_part = pick(pseudo.records, plan.n_pseudo, mix_seed(seed, 0xfa4e));
    for (auto& r : real_part) {
        r.source = "real";
        merged.records.push_back(std::move(r));
    }
    for (auto& r : pseudo_part) {
        r.source = "pseudo";
        merged.records.push_back(std::move(r));
    }
    // final deterministic shuffle of the merged order
    Rng rng(mix_seed(seed, 0x3f0));
    for (size_t i = merged.records.size(); i > 1; --i)
        std::swap(merged.records[i - 1],
                  merged.records[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
    return merged;
}

} // namespace ecdm::augment
