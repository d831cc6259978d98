#pragma once

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

#include "ad/tensor.hpp"

namespace ecdm::nn {

// Single-file checkpoint archive: a magic string, a JSON metadata block, and
// raw little-endian float32 tensor payloads. Writes go to a temp file that is
// renamed into place, so a checkpoint on disk is never half-written.
struct Checkpoint {
    static constexpr const char* kMagic = "ECDM-CKPT-1\n";

    nlohmann::ordered_json meta;
    std::vector<std::pair<std::string, ad::Tensor>> tensors;

    void add(const std::string& name, const ad::Tensor& t) { tensors.emplace_back(name, t); }
    const ad::Tensor* find(const std::string& name) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

} // namespace ecdm::nn
