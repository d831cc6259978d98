#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "data/manifest.hpp"
#include "edge/edge_ops.hpp"

namespace ecdm::data {

// Synthetic paired visible/thermal scene description. The stand-in for the
// real surveillance datasets: simple shapes whose silhouettes are shared
// pixel-exactly between modalities, with texture only in the visible domain.
struct SceneObject {
    enum class Shape { rect, ellipse };
    Shape shape = Shape::rect;
    int cls = kClassPerson;
    double cx = 0, cy = 0;          // center, pixels
    double half_w = 0, half_h = 0;  // half extents, pixels
    double temperature = 0.5;       // [0,1]; thermal intensity is monotone in this
};

struct SceneSpec {
    int height = 64, width = 80;  // 4:5 aspect, divisible by 8
    std::vector<SceneObject> objects;
    double background_texture = 0.5;  // [0,1] visible texture amplitude
    double illumination = 1.0;        // (0,1] visible contrast scale
};

struct RenderedPair {
    ImageTensor visible;  // 3 channels
    ImageTensor thermal;  // 1 channel
    std::vector<Box> boxes;
    std::vector<int> labels;
    std::vector<std::vector<uint8_t>> masks;  // per-object silhouette, row-major
};

// Renders the pair. Both modalities share object silhouettes exactly; thermal
// intensity inside an object is monotone in its temperature; visible objects
// carry stripe textures scaled by illumination. Throws on objects outside the
// canvas or with silhouette area < 4 px.
RenderedPair render_pair(const SceneSpec& spec, uint64_t seed);

struct GenConfig {
    int height = 64, width = 80;
    int min_objects = 1, max_objects = 3;
    edge::HighPassConfig edge_cfg;  // used for the materialized edge maps
};

SceneSpec random_scene(const GenConfig& cfg, uint64_t seed);

// Writes n paired samples under out_dir/{visible,thermal,edges}/<id>.png plus
// out_dir/manifest.json (modality "thermal"). Deterministic per seed: two runs
// produce byte-identical trees. The stored edge maps are the normalized
// visible-edge conditions.
DatasetManifest generate_dataset(int n, const GenConfig& cfg, const std::string& out_dir,
                                 uint64_t seed);

// Builds a manifest (no annotations) from a directory of images, for mapping
// externally prepared layouts with paired folders onto two manifests that
// share ids.
DatasetManifest manifest_from_image_dir(const std::string& root, const std::string& subdir,
                                        const std::string& modality);

} // namespace ecdm::data
