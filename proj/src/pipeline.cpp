#include "pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "augment/augment.hpp"
#include "core/errors.hpp"
#include "core/rng.hpp"
#include "data/manifest.hpp"
#include "data/png_io.hpp"
#include "samplers/samplers.hpp"
#include "tmat/tmat.hpp"

namespace ecdm::pipeline {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> list_pngs(const std::string& dir) {
    if (!fs::exists(dir)) throw DataError("no such directory: " + dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw DataError("no PNG images in " + dir);
    return names;
}

std::string resolve_manifest(const std::string& path) {
    if (fs::is_directory(path)) return (fs::path(path) / "manifest.json").string();
    return path;
}

} // namespace

int run_edges(const std::string& in_dir, const std::string& out_dir,
              const edge::HighPassConfig& cfg) {
    edge::validate(cfg);
    const auto names = list_pngs(in_dir);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError("edges: cannot create " + out_dir + ": " + ec.message());
    for (const auto& name : names) {
        const ImageTensor img = data::load_image((fs::path(in_dir) / name).string());
        const EdgeMap cond = edge::normalize_condition(edge::extract_edges(img, cfg));
        ImageTensor out(1, cond.height, cond.width);
        out.values = cond.values;
        data::save_image((fs::path(out_dir) / name).string(), out);
    }
    return static_cast<int>(names.size());
}

int run_sample(const std::string& ckpt_path, const std::string& edges_dir,
               const std::string& out_dir, int steps, double condition_scale, uint64_t seed,
               const std::string& method) {
    if (method != "fast" && method != "ancestral")
        throw ConfigError("sample: method must be 'fast' or 'ancestral', got '" + method + "'");
    tmat::LoadedModel model = tmat::load_model(ckpt_path);
    const auto denoise = samplers::wrap(*model.denoiser);
    const auto names = list_pngs(edges_dir);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError("sample: cannot create " + out_dir + ": " + ec.message());

    samplers::FastSamplerConfig cfg = model.cfg.sampler;
    cfg.timesteps = steps;
    cfg.order = std::min(cfg.order, steps);
    cfg.condition_scale = condition_scale;

    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    const size_t batch = 16;
    for (size_t begin = 0; begin < names.size(); begin += batch) {
        const size_t end = std::min(names.size(), begin + batch);
        std::vector<EdgeMap> conds;
        std::vector<uint64_t> seeds;
        for (size_t i = begin; i < end; ++i) {
            const ImageTensor img =
                data::load_image((fs::path(edges_dir) / names[i]).string());
            EdgeMap m(img.height, img.width);
            m.values.assign(img.values.begin(), img.values.begin() + m.values.size());
            conds.push_back(edge::normalize_condition(m));
            seeds.push_back(mix_seed(seed, static_cast<uint64_t>(i)));
        }
        for (size_t i = begin; i < end; ++i) {
            ImageTensor out;
            if (method == "fast")
                out = samplers::fast_sample(denoise, conds[i - begin], model.schedule, cfg,
                                            seeds[i - begin]);
            else
                out = samplers::ancestral_sample(denoise, conds[i - begin], model.schedule,
                                                 seeds[i - begin],
                                                 model.cfg.mu_alpha_bar_form);
            data::save_image((fs::path(out_dir) / names[i]).string(), out);
            nlohmann::ordered_json entry;
            entry["condition"] = (fs::path(edges_dir) / names[i]).string();
            entry["output"] = (fs::path(out_dir) / names[i]).string();
            entry["seed"] = seeds[i - begin];
            manifest.push_back(std::move(entry));
        }
    }
    std::ofstream mf((fs::path(out_dir) / "manifest.json").string(), std::ios::trunc);
    mf << manifest.dump(2) << "\n";
    return static_cast<int>(names.size());
}

metrics::MetricsReport run_eval(const std::string& gen_dir, const std::string& ref_dir,
                                const std::string& report_path, uint64_t extractor_seed) {
    metrics::FeatureExtractor fx;
    fx.seed = extractor_seed;
    const metrics::MetricsReport report = metrics::evaluate_set(gen_dir, ref_dir, fx);
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw DataError("eval: cannot open " + report_path);
    out << report.to_json();
    return report;
}

std::string run_augment(const std::string& real_manifest, const std::string& visible_manifest,
                        const std::string& ckpt_path, const std::string& mode, double ratio,
                        uint64_t seed, const std::string& out_dir, int sampler_steps,
                        double condition_scale) {
    const std::string real_path = resolve_manifest(real_manifest);
    const std::string visible_path = resolve_manifest(visible_manifest);
    const data::DatasetManifest real = data::load_manifest(real_path);
    const data::DatasetManifest visible = data::load_manifest(visible_path);
    const std::string real_root = fs::path(real_path).parent_path().string();
    const std::string visible_root = fs::path(visible_path).parent_path().string();

    const augment::AugmentPlan plan = augment::plan_counts(
        static_cast<int64_t>(real.records.size()), ratio, augment::mode_from_string(mode));

    samplers::FastSamplerConfig scfg;
    scfg.timesteps = sampler_steps;
    scfg.order = std::min(3, sampler_steps);
    scfg.condition_scale = condition_scale;

    // synthesize only what the plan needs, in manifest order
    data::DatasetManifest visible_needed = visible;
    if (static_cast<int64_t>(visible_needed.records.size()) < plan.n_pseudo)
        throw DataError("augment: plan needs " + std::to_string(plan.n_pseudo) +
                        " pseudo records but the visible manifest has only " +
                        std::to_string(visible_needed.records.size()));
    visible_needed.records.resize(static_cast<size_t>(plan.n_pseudo));
    data::DatasetManifest pseudo;
    if (plan.n_pseudo > 0)
        pseudo = augment::synthesize_pseudo(visible_needed, visible_root, ckpt_path, scfg,
                                            out_dir, seed);

    data::DatasetManifest merged = augment::merge_datasets(real, pseudo, plan, seed);

    // self-contained output: copy the selected real images next to pseudo/
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "real", ec);
    for (auto& rec : merged.records) {
        if (rec.source == "real") {
            const std::string name = fs::path(rec.image).filename().string();
            fs::copy_file(fs::path(real_root) / rec.image, fs::path(out_dir) / "real" / name,
                          fs::copy_options::overwrite_existing, ec);
            if (ec)
                throw DataError("augment: cannot copy " + rec.image + ": " + ec.message());
            rec.image = "real/" + name;
        }
    }
    const std::string merged_path = (fs::path(out_dir) / "manifest.json").string();
    data::save_manifest(merged, merged_path);
    return merged_path;
}

} // namespace ecdm::pipeline
