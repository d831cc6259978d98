#include "data/manifest.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "core/errors.hpp"
#include "data/png_io.hpp"

namespace ecdm::data {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string manifest_to_json(const DatasetManifest& manifest) {
    ordered_json j;
    j["name"] = manifest.name;
    j["split"] = manifest.split;
    j["modality"] = manifest.modality;
    j["records"] = ordered_json::array();
    for (const auto& r : manifest.records) {
        ordered_json jr;
        jr["image"] = r.image;
        jr["boxes"] = ordered_json::array();
        for (const auto& b : r.boxes) jr["boxes"].push_back({b.x, b.y, b.w, b.h});
        jr["labels"] = r.labels;
        jr["source"] = r.source;
        j["records"].push_back(std::move(jr));
    }
    return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw DataError(std::string("manifest: invalid JSON: ") + e.what());
    }
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.split = j.at("split").get<std::string>();
        m.modality = j.at("modality").get<std::string>();
    } catch (const std::exception& e) {
        throw DataError(std::string("manifest: missing header field: ") + e.what());
    }
    if (m.split != "train" && m.split != "test")
        throw DataError("manifest: split must be 'train' or 'test', got '" + m.split + "'");
    if (!j.contains("records") || !j["records"].is_array())
        throw DataError("manifest: missing records array");
    for (size_t i = 0; i < j["records"].size(); ++i) {
        const auto& jr = j["records"][i];
        DetectionRecord r;
        try {
            r.image = jr.at("image").get<std::string>();
            r.source = jr.at("source").get<std::string>();
            r.labels = jr.at("labels").get<std::vector<int>>();
            for (const auto& jb : jr.at("boxes")) {
                if (!jb.is_array() || jb.size() != 4)
                    throw DataError("box must be [x,y,w,h]");
                r.boxes.push_back(Box{jb[0].get<int>(), jb[1].get<int>(), jb[2].get<int>(),
                                      jb[3].get<int>()});
            }
        } catch (const std::exception& e) {
            throw DataError("manifest: record " + std::to_string(i) + ": " + e.what());
        }
        if (r.source != "real" && r.source != "pseudo")
            throw DataError("manifest: record " + std::to_string(i) +
                            ": source must be 'real' or 'pseudo'");
        if (r.boxes.size() != r.labels.size())
            throw DataError("manifest: record " + std::to_string(i) +
                            ": boxes/labels length mismatch");
        m.records.push_back(std::move(r));
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("save_manifest: cannot open " + path);
    out << manifest_to_json(manifest);
    if (!out) throw DataError("save_manifest: short write to " + path);
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_manifest: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    DatasetManifest m = manifest_from_json(text);

    const fs::path dir = fs::path(path).parent_path();
    for (size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        const fs::path img = dir / r.image;
        if (!fs::exists(img))
            throw DataError("load_manifest: record " + std::to_string(i) +
                            ": image not found: " + img.string());
        int w = 0, h = 0;
        read_png_header(img.string(), &w, &h, nullptr);
        for (const auto& b : r.boxes) {
            if (b.w <= 0 || b.h <= 0 || b.x < 0 || b.y < 0 || b.x + b.w > w ||
                b.y + b.h > h)
                throw DataError("load_manifest: record " + std::to_string(i) +
                                ": box [" + std::to_string(b.x) + "," + std::to_string(b.y) +
                                "," + std::to_string(b.w) + "," + std::to_string(b.h) +
                                "] outside " + std::to_string(w) + "x" + std::to_string(h) +
                                " image " + r.image);
        }
    }
    return m;
}

std::string path_for_modality(const std::string& manifest_dir, const DetectionRecord& record,
                              const std::string& modality) {
    const fs::path rel(record.image);
    return (fs::path(manifest_dir) / modality / rel.filename()).string();
}

} // namespace ecdm::data
