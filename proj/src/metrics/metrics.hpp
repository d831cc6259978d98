#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/image.hpp"

namespace ecdm::metrics {

// Deterministic feature embedding for desk-scale FID/KID: a frozen
// random-weight convolutional projection. Same (kind, seed, dim) gives
// identical features for identical input across runs.
struct FeatureExtractor {
    std::string kind = "random-projection-conv";
    uint64_t seed = 17;
    int feature_dim = 64;
};

// Features of a single-channel (or luminance-reduced) image.
std::vector<double> extract_features(const ImageTensor& image, const FeatureExtractor& fx);

using FeatureMatrix = std::vector<std::vector<double>>;

// Frechet distance between Gaussians fitted to the two feature sets. Matrix
// square root via symmetric eigendecomposition with negative eigenvalues
// clipped at zero; near-singular covariances are regularized with 1e-6*I
// (reported through *regularized).
double fid(const FeatureMatrix& feats_a, const FeatureMatrix& feats_b,
           bool* regularized = nullptr);

// Unbiased MMD^2 estimate with kernel k(x,y) = (x.y/d + 1)^3.
double kid(const FeatureMatrix& feats_a, const FeatureMatrix& feats_b);

// PSNR in dB over [0,1]-normalized images ([-1,1] inputs are remapped);
// infinity for identical images.
double psnr(const ImageTensor& a, const ImageTensor& b);

// Mean SSIM over sliding 8x8 windows, c1 = 0.01^2, c2 = 0.03^2.
double ssim(const ImageTensor& a, const ImageTensor& b);

// Normalized cross-correlation of two maps (mean-removed), in [-1, 1].
double ncc(const std::vector<double>& a, const std::vector<double>& b);

struct MetricsReport {
    double fid = 0.0;
    double kid = 0.0;
    std::optional<double> psnr_mean;  // present only when filenames pair
    std::optional<double> ssim_mean;
    int n_gen = 0;
    int n_ref = 0;
    uint64_t extractor_seed = 0;
    bool cov_regularized = false;
    bool no_pairs = false;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
};

// Evaluates a directory of generated images against a reference directory.
// FID/KID over all images; PSNR/SSIM only over files present in both
// directories under the same name.
MetricsReport evaluate_set(const std::string& generated_dir, const std::string& reference_dir,
                           const FeatureExtractor& fx);

} // namespace ecdm::metrics
