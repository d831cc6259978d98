#include "nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "core/errors.hpp"

namespace ecdm::nn {

namespace fs = std::filesystem;

const ad::Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void Checkpoint::save(const std::string& path) const {
    nlohmann::ordered_json header = meta;
    header["tensors"] = nlohmann::ordered_json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        nlohmann::ordered_json jt;
        jt["name"] = name;
        jt["shape"] = {t.n, t.c, t.h, t.w};
        jt["offset"] = offset;
        jt["count"] = t.numel();
        header["tensors"].push_back(std::move(jt));
        offset += t.numel() * sizeof(float);
    }
    const std::string header_text = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("checkpoint: cannot open " + tmp + " for writing");
        out.write(kMagic, static_cast<std::streamsize>(std::strlen(kMagic)));
        const uint64_t len = header_text.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
        for (const auto& [name, t] : tensors)
            out.write(reinterpret_cast<const char*>(t.v.data()),
                      static_cast<std::streamsize>(t.v.size() * sizeof(float)));
        if (!out) throw DataError("checkpoint: short write to " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw DataError("checkpoint: rename to " + path + " failed: " + ec.message());
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path);
    const size_t magic_len = std::strlen(kMagic);
    std::string magic(magic_len, '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic_len));
    if (!in || magic != kMagic)
        throw DataError("checkpoint: " + path + " is not an ECDM-CKPT-1 file");
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header_text(len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("checkpoint: truncated header in " + path);

    Checkpoint ckpt;
    try {
        ckpt.meta = nlohmann::ordered_json::parse(header_text);
    } catch (const std::exception& e) {
        throw DataError("checkpoint: bad header JSON in " + path + ": " + e.what());
    }
    if (!ckpt.meta.contains("tensors"))
        throw DataError("checkpoint: missing tensor index in " + path);
    for (const auto& jt : ckpt.meta["tensors"]) {
        const std::string name = jt.at("name").get<std::string>();
        const auto shape = jt.at("shape").get<std::vector<int>>();
        if (shape.size() != 4) throw DataError("checkpoint: bad tensor shape for " + name);
        ad::Tensor t(shape[0], shape[1], shape[2], shape[3]);
        in.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(float)));
        if (!in) throw DataError("checkpoint: truncated tensor payload for " + name);
        ckpt.tensors.emplace_back(name, std::move(t));
    }
    ckpt.meta.erase("tensors");
    return ckpt;
}

} // namespace ecdm::nn
