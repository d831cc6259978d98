#include "data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "data/png_io.hpp"

namespace ecdm::data {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

bool inside(const SceneObject& o, double x, double y) {
    const double dx = x - o.cx, dy = y - o.cy;
    if (o.shape == SceneObject::Shape::rect)
        return std::abs(dx) <= o.half_w && std::abs(dy) <= o.half_h;
    const double nx = dx / o.half_w, ny = dy / o.half_h;
    return nx * nx + ny * ny <= 1.0;
}

std::string record_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", i);
    return buf;
}

} // namespace

RenderedPair render_pair(const SceneSpec& spec, uint64_t seed) {
    const int h = spec.height, w = spec.width;
    if (h < 8 || w < 8) throw std::invalid_argument("render_pair: canvas too small");
    for (const auto& o : spec.objects) {
        if (o.temperature < 0.0 || o.temperature > 1.0)
            throw std::invalid_argument("render_pair: temperature must be in [0,1]");
        if (o.cx - o.half_w < 0 || o.cx + o.half_w > w - 1 || o.cy - o.half_h < 0 ||
            o.cy + o.half_h > h - 1)
            throw std::invalid_argument("render_pair: object extends outside the canvas");
    }

    RenderedPair out;
    out.thermal = ImageTensor(1, h, w);
    out.visible = ImageTensor(3, h, w);

    // silhouette masks, shared by both modalities
    const int n_obj = static_cast<int>(spec.objects.size());
    out.masks.assign(n_obj, std::vector<uint8_t>(static_cast<size_t>(h) * w, 0));
    for (int k = 0; k < n_obj; ++k) {
        const auto& o = spec.objects[k];
        int area = 0;
        int minx = w, miny = h, maxx = -1, maxy = -1;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (inside(o, x, y)) {
                    out.masks[k][static_cast<size_t>(y) * w + x] = 1;
                    ++area;
                    minx = std::min(minx, x);
                    maxx = std::max(maxx, x);
                    miny = std::min(miny, y);
                    maxy = std::max(maxy, y);
                }
        if (area < 4)
            throw std::invalid_argument("render_pair: degenerate object with silhouette "
                                        "area < 4 px");
        out.boxes.push_back(Box{minx, miny, maxx - minx + 1, maxy - miny + 1});
        out.labels.push_back(o.cls);
    }

    Rng rng(mix_seed(seed, 0x5ce7e));
    // stable per-object appearance draws
    struct Appearance {
        double albedo, tex_freq, tex_phase, tex_dir, tint_r, tint_b;
    };
    std::vector<Appearance> looks(n_obj);
    for (auto& a : looks) {
        a.albedo = 0.15 + 0.7 * rng.uniform();
        a.tex_freq = 0.18 + 0.22 * rng.uniform();
        a.tex_phase = kTwoPi * rng.uniform();
        a.tex_dir = rng.uniform();  // blend between x and y stripes
        a.tint_r = 0.9 + 0.2 * rng.uniform();
        a.tint_b = 0.9 + 0.2 * rng.uniform();
    }
    const double bg_freq_x = 0.05 + 0.07 * rng.uniform();
    const double bg_freq_y = 0.05 + 0.07 * rng.uniform();
    const double bg_phase = kTwoPi * rng.uniform();
    const double illum = spec.illumination;

    Rng noise_t(mix_seed(seed, 0x7e31));
    Rng noise_v(mix_seed(seed, 0x9b2f));
    const size_t plane = static_cast<size_t>(h) * w;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            int top = -1;  // topmost object covering this pixel
            for (int k = n_obj - 1; k >= 0; --k)
                if (out.masks[k][i]) {
                    top = k;
                    break;
                }

            // thermal: low-texture; intensity monotone in object temperature
            double tv;
            if (top >= 0) {
                tv = -0.15 + 1.0 * spec.objects[top].temperature;
            } else {
                tv = -0.55 + 0.08 * (static_cast<double>(y) / h);
            }
            tv += 0.01 * noise_t.normal();
            out.thermal.values[i] = std::clamp(tv, -1.0, 1.0);

            // visible: textured background and striped objects, contrast
            // scaled by illumination
            double lum;
            double tint_r = 1.0, tint_b = 1.0;
            if (top >= 0) {
                const auto& a = looks[top];
                const auto& o = spec.objects[top];
                const double u = a.tex_dir * (x - o.cx) + (1.0 - a.tex_dir) * (y - o.cy);
                const double stripes = 0.35 * std::sin(kTwoPi * a.tex_freq * u + a.tex_phase);
                lum = illum * ((2.0 * a.albedo - 1.0) * 0.5 + stripes);
                tint_r = a.tint_r;
                tint_b = a.tint_b;
            } else {
                const double tex =
                    spec.background_texture *
                    0.3 * std::sin(kTwoPi * (bg_freq_x * x + bg_freq_y * y) + bg_phase);
                lum = illum * (-0.15 + 0.3 * (static_cast<double>(y) / h) + tex);
            }
            lum += 0.02 * noise_v.normal();
            out.visible.values[i] = std::clamp(lum * tint_r, -1.0, 1.0);
            out.visible.values[plane + i] = std::clamp(lum, -1.0, 1.0);
            out.visible.values[2 * plane + i] = std::clamp(lum * tint_b, -1.0, 1.0);
        }
    }
    return out;
}

SceneSpec random_scene(const GenConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    SceneSpec spec;
    spec.height = cfg.height;
    spec.width = cfg.width;
    spec.background_texture = 0.3 + 0.6 * rng.uniform();
    spec.illumination = 0.5 + 0.5 * rng.uniform();
    const int count =
        static_cast<int>(rng.uniform_int(cfg.min_objects, std::max(cfg.min_objects,
                                                                   cfg.max_objects)));
    const double sy = cfg.height / 64.0, sx = cfg.width / 80.0;
    for (int k = 0; k < count; ++k) {
        SceneObject o;
        const bool person = rng.uniform() < 0.6;
        o.cls = person ? kClassPerson : kClassCar;
        if (person) {
            o.shape = rng.uniform() < 0.5 ? SceneObject::Shape::ellipse
                                          : SceneObject::Shape::rect;
            o.half_w = (3.0 + 3.0 * rng.uniform()) * sx;
            o.half_h = (7.0 + 6.0 * rng.uniform()) * sy;
            o.temperature = 0.55 + 0.4 * rng.uniform();
        } else {
            o.shape = SceneObject::Shape::rect;
            o.half_w = (8.0 + 7.0 * rng.uniform()) * sx;
            o.half_h = (4.0 + 3.0 * rng.uniform()) * sy;
            o.temperature = 0.25 + 0.6 * rng.uniform();
        }
        // keep the object fully inside the canvas; retry a few times to
        // reduce overlap, which stays legal if the retries run out
        for (int attempt = 0; attempt < 20; ++attempt) {
            o.cx = o.half_w + 1 + rng.uniform() * (cfg.width - 2 * (o.half_w + 1) - 1);
            o.cy = o.half_h + 1 + rng.uniform() * (cfg.height - 2 * (o.half_h + 1) - 1);
            bool overlaps = false;
            for (const auto& other : spec.objects) {
                if (std::abs(o.cx - other.cx) < o.half_w + other.half_w &&
                    std::abs(o.cy - other.cy) < o.half_h + other.half_h) {
                    overlaps = true;
                    break;
                }
            }
            if (!overlaps) break;
        }
        spec.objects.push_back(o);
    }
    return spec;
}

DatasetManifest generate_dataset(int n, const GenConfig& cfg, const std::string& out_dir,
                                 uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    edge::validate(cfg.edge_cfg);
    std::error_code ec;
    for (const char* sub : {"visible", "thermal", "edges"}) {
        fs::create_directories(fs::path(out_dir) / sub, ec);
        if (ec)
            throw DataError("generate_dataset: cannot create " +
                            (fs::path(out_dir) / sub).string() + ": " + ec.message());
    }

    DatasetManifest manifest;
    manifest.name = "synthetic";
    manifest.split = "train";
    manifest.modality = "thermal";
    for (int i = 0; i < n; ++i) {
        const uint64_t record_seed = mix_seed(seed, 0x8ec0, static_cast<uint64_t>(i));
        const SceneSpec spec = random_scene(cfg, record_seed);
        const RenderedPair pair = render_pair(spec, record_seed);
        const std::string id = record_id(i);
        save_image((fs::path(out_dir) / "visible" / (id + ".png")).string(), pair.visible);
        save_image((fs::path(out_dir) / "thermal" / (id + ".png")).string(), pair.thermal);

        const EdgeMap cond =
            edge::normalize_condition(edge::extract_edges(pair.visible, cfg.edge_cfg));
        ImageTensor edge_img(1, cond.height, cond.width);
        edge_img.values = cond.values;
        save_image((fs::path(out_dir) / "edges" / (id + ".png")).string(), edge_img);

        DetectionRecord rec;
        rec.image = "thermal/" + id + ".png";
        rec.boxes = pair.boxes;
        rec.labels = pair.labels;
        rec.source = "real";
        manifest.records.push_back(std::move(rec));
    }
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

DatasetManifest manifest_from_image_dir(const std::string& root, const std::string& subdir,
                                        const std::string& modality) {
    const fs::path dir = fs::path(root) / subdir;
    if (!fs::exists(dir)) throw DataError("manifest_from_image_dir: no such dir: " + dir.string());
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    DatasetManifest m;
    m.name = subdir;
    m.split = "train";
    m.modality = modality;
    for (const auto& name : names) {
        DetectionRecord r;
        r.image = subdir + "/" + name;
        m.records.push_back(std::move(r));
    }
    return m;
}

} // namespace ecdm::data
