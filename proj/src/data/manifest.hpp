#pragma once

#include <string>
#include <vector>

namespace ecdm::data {

struct Box {
    int x = 0, y = 0, w = 0, h = 0;  // COCO-style [x, y, w, h], pixels
    bool operator==(const Box&) const = default;
};

struct DetectionRecord {
    std::string image;        // path relative to the manifest's directory
    std::vector<Box> boxes;
    std::vector<int> labels;  // class ids, parallel to boxes
    std::string source = "real";  // "real" or "pseudo"
    bool operator==(const DetectionRecord&) const = default;
};

struct DatasetManifest {
    std::string name;
    std::string split = "train";      // "train" or "test"
    std::string modality = "thermal"; // "visible", "thermal", or "edge"
    std::vector<DetectionRecord> records;
    bool operator==(const DatasetManifest&) const = default;
};

// JSON round trip. Loading validates the schema, that each image exists under
// the manifest's directory, and that boxes lie inside the image bounds;
// violations are reported with the offending record index.
void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Parse/serialize without touching the filesystem (validation of paths is
// skipped); used by tests and by in-memory pipelines.
DatasetManifest manifest_from_json(const std::string& text);
std::string manifest_to_json(const DatasetManifest& manifest);

// Path of the record's image within a sibling modality directory, e.g. the
// thermal counterpart of "visible/000017.png".
std::string path_for_modality(const std::string& manifest_dir, const DetectionRecord& record,
                              const std::string& modality);

// Class vocabulary of the synthetic generator.
inline constexpr int kClassPerson = 0;
inline constexpr int kClassCar = 1;

} // namespace ecdm::data
