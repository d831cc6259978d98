#pragma once

#include <ostream>
#include <string>

namespace ecdm {

// Fast end-to-end invariant suite over generated toy data: diffusion math
// against Monte-Carlo and oracle-denoiser checks, schedule fidelity, loss
// gradients against finite differences, edge-operator properties, metric
// oracles, augmentation arithmetic, and a 200-step training smoke run.
// Prints one line per check; returns 0 when everything passes.
int run_selftest(const std::string& workdir, std::ostream& log);

} // namespace ecdm
