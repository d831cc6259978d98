#pragma once

#include <cstdint>
#include <string>

#include "data/manifest.hpp"
#include "samplers/samplers.hpp"

namespace ecdm::augment {

enum class Mode { multiple, mixed };

Mode mode_from_string(const std::string& s);
std::string to_string(Mode m);

// Mixing arithmetic for the two protocols. `multiple` keeps all real records
// and adds round(ratio * n_real) pseudo ones; `mixed` holds the total at
// n_real and replaces round(ratio * n_real) records with pseudo ones.
// Rounding is half-up.
struct AugmentPlan {
    Mode mode = Mode::multiple;
    double ratio = 0.0;
    int64_t n_real = 0;
    int64_t n_real_used = 0;
    int64_t n_pseudo = 0;
};

AugmentPlan plan_counts(int64_t n_real, double ratio, Mode mode);

// Generates a pseudo-thermal dataset from a visible detection dataset: per
// record, extract edges with the checkpoint's stored preprocessing, sample a
// thermal image with the fast sampler, and transfer boxes/labels verbatim.
// Writes images under out_dir/pseudo/ plus out_dir/manifest.json.
// If override_edge_cfg is non-null it must equal the checkpoint's stored edge
// preprocessing, otherwise synthesis is rejected.
data::DatasetManifest synthesize_pseudo(const data::DatasetManifest& visible_manifest,
                                        const std::string& visible_root,
                                        const std::string& ckpt_path,
                                        const samplers::FastSamplerConfig& sampler_cfg,
                                        const std::string& out_dir, uint64_t seed,
                                        const edge::HighPassConfig* override_edge_cfg = nullptr);

// Samples without replacement per the plan and concatenates with a seeded
// shuffle; records keep their source tags.
data::DatasetManifest merge_datasets(const data::DatasetManifest& real,
                                     const data::DatasetManifest& pseudo,
                                     const AugmentPlan& plan, uint64_t seed);

} // namespace ecdm::augment
