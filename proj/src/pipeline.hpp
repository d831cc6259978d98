#pragma once

#include <cstdint>
#include <string>

#include "edge/edge_ops.hpp"
#include "metrics/metrics.hpp"

namespace ecdm::pipeline {

// Materializes edge maps for every PNG in in_dir as 8-bit grayscale files
// (normalized to unit max-absolute-value, affinely mapped from [-1,1]).
// Returns the number of images processed.
int run_edges(const std::string& in_dir, const std::string& out_dir,
              const edge::HighPassConfig& cfg);

// Samples one image per edge map in edges_dir with the checkpoint's model,
// writing out_dir/<name>.png plus out_dir/manifest.json mapping condition ->
// output -> per-image seed. method is "fast" or "ancestral"; steps and
// condition_scale configure the fast sampler.
int run_sample(const std::string& ckpt_path, const std::string& edges_dir,
               const std::string& out_dir, int steps, double condition_scale, uint64_t seed,
               const std::string& method);

// evaluate_set + report written to report_path.
metrics::MetricsReport run_eval(const std::string& gen_dir, const std::string& ref_dir,
                                const std::string& report_path, uint64_t extractor_seed);

// Full augmentation pipeline: plan from the real manifest's size, pseudo
// synthesis from the visible manifest, merge, and a self-contained output
// tree (real images copied next to the pseudo ones). Returns the merged
// manifest path.
std::string run_augment(const std::string& real_manifest, const std::string& visible_manifest,
                        const std::string& ckpt_path, const std::string& mode, double ratio,
                        uint64_t seed, const std::string& out_dir, int sampler_steps,
                        double condition_scale);

} // namespace ecdm::pipeline
