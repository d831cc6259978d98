#pragma once

#include "core/image.hpp"

#include <vector>

namespace ecdm::edge {

// High-pass filter parameters. cutoff_fraction is the fraction of the
// Nyquist radius below which frequencies are zeroed; soft_width (same units)
// is the width of a raised-cosine transition band, 0 meaning an ideal mask.
struct HighPassConfig {
    double cutoff_fraction = 0.05;
    double soft_width = 0.0;
};

void validate(const HighPassConfig& cfg);

// Frequency-domain mask on an height x width DFT grid. The DC bin is always
// zero; values are 1 above cutoff_fraction + soft_width, with a monotone
// transition in between. Symmetric under frequency negation.
std::vector<double> highpass_mask(int height, int width, const HighPassConfig& cfg);

// The edge operator: FFT -> high-pass mask -> inverse FFT, on the luminance
// of the input (Rec.601 weights for 3-channel images). Output is real with
// zero spatial mean.
EdgeMap extract_edges(const ImageTensor& image, const HighPassConfig& cfg);

// Same operator acting on an existing single-channel map; used for loss
// gradients, where the operator is its own adjoint.
EdgeMap extract_edges(const EdgeMap& map, const HighPassConfig& cfg);

// Rescales an edge map to unit max-absolute-value. Applied to edge maps
// before they are used as conditions; the choice is recorded in checkpoints
// so sampling reproduces the training-time preprocessing.
EdgeMap normalize_condition(const EdgeMap& map);

// Rec.601 luminance of an image; pass-through for single-channel inputs.
EdgeMap luminance(const ImageTensor& image);

} // namespace ecdm::edge
