#include "metrics/metrics.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "data/png_io.hpp"
#include "edge/edge_ops.hpp"

namespace ecdm::metrics {

namespace fs = std::filesystem;

namespace {

// Plain strided 3x3 valid-padding conv stack with frozen Gaussian weights.
struct ConvStage {
    int c_in, c_out;
    std::vector<double> w;  // [c_out][c_in][3][3]
};

std::vector<ConvStage> make_stages(const FeatureExtractor& fx) {
    if (fx.kind != "random-projection-conv")
        throw ConfigError("FeatureExtractor: unsupported kind '" + fx.kind + "'");
    if (fx.feature_dim < 1) throw ConfigError("FeatureExtractor: feature_dim must be >= 1");
    Rng rng(mix_seed(fx.seed, 0xfea7));
    std::vector<ConvStage> stages;
    const int plan[4] = {8, 16, 32, fx.feature_dim};
    int c_in = 1;
    for (int s = 0; s < 4; ++s) {
        ConvStage st;
        st.c_in = c_in;
        st.c_out = plan[s];
        st.w.resize(static_cast<size_t>(st.c_out) * st.c_in * 9);
        const double std = std::sqrt(2.0 / (st.c_in * 9.0));
        for (auto& v : st.w) v = rng.normal() * std;
        stages.push_back(std::move(st));
        c_in = plan[s];
    }
    return stages;
}

std::vector<double> conv_stride2_relu(const std::vector<double>& x, int c_in, int h, int w,
                                      const ConvStage& st, int* oh, int* ow, bool relu) {
    const int out_h = (h - 3) / 2 + 1;
    const int out_w = (w - 3) / 2 + 1;
    std::vector<double> y(static_cast<size_t>(st.c_out) * out_h * out_w, 0.0);
    for (int co = 0; co < st.c_out; ++co)
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = 0.0;
                for (int ci = 0; ci < c_in; ++ci)
                    for (int dy = 0; dy < 3; ++dy)
                        for (int dx = 0; dx < 3; ++dx)
                            acc += st.w[((static_cast<size_t>(co) * c_in + ci) * 3 + dy) * 3 +
                                        dx] *
                                   x[(static_cast<size_t>(ci) * h + oy * 2 + dy) * w +
                                     ox * 2 + dx];
                if (relu && acc < 0.0) acc = 0.0;
                y[(static_cast<size_t>(co) * out_h + oy) * out_w + ox] = acc;
            }
    *oh = out_h;
    *ow = out_w;
    return y;
}

ImageTensor to_luminance_image(const ImageTensor& img) {
    if (img.channels == 1) return img;
    const EdgeMap lum = edge::luminance(img);
    ImageTensor out(1, img.height, img.width);
    out.values = lum.values;
    return out;
}

void fit_gaussian(const FeatureMatrix& feats, Eigen::VectorXd* mu, Eigen::MatrixXd* cov) {
    const int n = static_cast<int>(feats.size());
    const int d = static_cast<int>(feats[0].size());
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = feats[i][j];
    *mu = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mu->transpose();
    *cov = centered.transpose() * centered / std::max(1, n - 1);
}

} // namespace

std::vector<double> extract_features(const ImageTensor& image, const FeatureExtractor& fx) {
    const std::vector<ConvStage> stages = make_stages(fx);
    const ImageTensor lum = to_luminance_image(image);
    std::vector<double> x = lum.values;
    int c = 1, h = lum.height, w = lum.width;
    for (size_t s = 0; s < stages.size(); ++s) {
        if (h < 3 || w < 3)
            throw DataError("extract_features: image too small for the embedding");
        int oh = 0, ow = 0;
        x = conv_stride2_relu(x, c, h, w, stages[s], &oh, &ow, s + 1 < stages.size());
        c = stages[s].c_out;
        h = oh;
        w = ow;
    }
    // global average pool to feature_dim
    std::vector<double> out(c, 0.0);
    const size_t plane = static_cast<size_t>(h) * w;
    for (int ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        for (size_t i = 0; i < plane; ++i) acc += x[ci * plane + i];
        out[ci] = acc / static_cast<double>(plane);
    }
    return out;
}

double fid(const FeatureMatrix& feats_a, const FeatureMatrix& feats_b, bool* regularized) {
    if (regularized) *regularized = false;
    if (feats_a.empty() || feats_b.empty())
        throw std::invalid_argument("fid: empty feature set");
    const int d = static_cast<int>(feats_a[0].size());
    if (static_cast<int>(feats_b[0].size()) != d)
        throw std::invalid_argument("fid: feature dims differ");

    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    fit_gaussian(feats_a, &mu_a, &cov_a);
    fit_gaussian(feats_b, &mu_b, &cov_b);

    // regularize near-singular covariances
    const double tiny = 1e-10;
    auto min_eig = [](const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    };
    if (min_eig(cov_a) < tiny || min_eig(cov_b) < tiny) {
        cov_a += 1e-6 * Eigen::MatrixXd::Identity(d, d);
        cov_b += 1e-6 * Eigen::MatrixXd::Identity(d, d);
        if (regularized) *regularized = true;
    }

    // sqrt(cov_a) via eigendecomposition, negative eigenvalues clipped
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(cov_a);
    Eigen::VectorXd ev_a = es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd sqrt_a =
        es_a.eigenvectors() * ev_a.asDiagonal() * es_a.eigenvectors().transpose();

    // trace of sqrt(sqrt_a * cov_b * sqrt_a)
    Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_i(inner, Eigen::EigenvaluesOnly);
    const double trace_sqrt = es_i.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double mean_term = (mu_a - mu_b).squaredNorm();
    const double value = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
    return std::max(value, 0.0);
}

double kid(const FeatureMatrix& feats_a, const FeatureMatrix& feats_b) {
    const int m = static_cast<int>(feats_a.size());
    const int n = static_cast<int>(feats_b.size());
    if (m < 2 || n < 2) throw std::invalid_argument("kid: need at least 2 samples per side");
    const int d = static_cast<int>(feats_a[0].size());
    auto kernel = [d](const std::vector<double>& x, const std::vector<double>& y) {
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += x[i] * y[i];
        const double base = dot / d + 1.0;
        return base * base * base;
    };
    double kaa = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j) kaa += kernel(feats_a[i], feats_a[j]);
    kaa /= static_cast<double>(m) * (m - 1);
    double kbb = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) kbb += kernel(feats_b[i], feats_b[j]);
    kbb /= static_cast<double>(n) * (n - 1);
    double kab = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) kab += kernel(feats_a[i], feats_b[j]);
    kab /= static_cast<double>(m) * n;
    return kaa + kbb - 2.0 * kab;
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        // [-1,1] -> [0,1]
        const double d = (a.values[i] - b.values[i]) * 0.5;
        mse += d * d;
    }
    mse /= static_cast<double>(a.values.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

double ssim(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a, b, "ssim");
    constexpr int kWin = 8;
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    if (a.height < kWin || a.width < kWin)
        throw std::invalid_argument("ssim: image smaller than the 8x8 window");
    double total = 0.0;
    int count = 0;
    const size_t plane = static_cast<size_t>(a.height) * a.width;
    for (int c = 0; c < a.channels; ++c) {
        for (int y = 0; y + kWin <= a.height; ++y) {
            for (int x = 0; x + kWin <= a.width; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int dy = 0; dy < kWin; ++dy)
                    for (int dx = 0; dx < kWin; ++dx) {
                        const size_t i = c * plane + static_cast<size_t>(y + dy) * a.width +
                                         (x + dx);
                        const double va = (a.values[i] + 1.0) * 0.5;
                        const double vb = (b.values[i] + 1.0) * 0.5;
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                constexpr double kN = kWin * kWin;
                const double mu_a = sa / kN, mu_b = sb / kN;
                const double var_a = saa / kN - mu_a * mu_a;
                const double var_b = sbb / kN - mu_b * mu_b;
                const double cov = sab / kN - mu_a * mu_b;
                const double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
                const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / count;
}

double ncc(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("ncc: size mismatch or empty");
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        dot += da * db;
        na += da * da;
        nb += db * db;
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["fid"] = fid;
    j["kid"] = kid;
    if (psnr_mean) {
        if (std::isinf(*psnr_mean))
            j["psnr_mean"] = "inf";
        else
            j["psnr_mean"] = *psnr_mean;
    }
    if (ssim_mean) j["ssim_mean"] = *ssim_mean;
    j["n_gen"] = n_gen;
    j["n_ref"] = n_ref;
    j["extractor_seed"] = extractor_seed;
    j["cov_regularized"] = cov_regularized;
    j["no_pairs"] = no_pairs;
    return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    MetricsReport r;
    r.fid = j.at("fid").get<double>();
    r.kid = j.at("kid").get<double>();
    if (j.contains("psnr_mean")) {
        if (j["psnr_mean"].is_string())
            r.psnr_mean = std::numeric_limits<double>::infinity();
        else
            r.psnr_mean = j["psnr_mean"].get<double>();
    }
    if (j.contains("ssim_mean")) r.ssim_mean = j["ssim_mean"].get<double>();
    r.n_gen = j.at("n_gen").get<int>();
    r.n_ref = j.at("n_ref").get<int>();
    r.extractor_seed = j.at("extractor_seed").get<uint64_t>();
    r.cov_regularized = j.value("cov_regularized", false);
    r.no_pairs = j.value("no_pairs", false);
    return r;
}

MetricsReport evaluate_set(const std::string& generated_dir, const std::string& reference_dir,
                           const FeatureExtractor& fx) {
    auto list_pngs = [](const std::string& dir) {
        if (!fs::exists(dir)) throw DataError("evaluate_set: no such directory: " + dir);
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".png") names.push_back(e.path().filename().string());
        std::sort(names.begin(), names.end());
        return names;
    };
    const std::vector<std::string> gen_names = list_pngs(generated_dir);
    const std::vector<std::string> ref_names = list_pngs(reference_dir);
    if (gen_names.empty() || ref_names.empty())
        throw DataError("evaluate_set: empty image directory");

    FeatureMatrix feats_gen, feats_ref;
    for (const auto& n : gen_names)
        feats_gen.push_back(
            extract_features(data::load_image((fs::path(generated_dir) / n).string()), fx));
    for (const auto& n : ref_names)
        feats_ref.push_back(
            extract_features(data::load_image((fs::path(reference_dir) / n).string()), fx));

    MetricsReport report;
    report.n_gen = static_cast<int>(gen_names.size());
    report.n_ref = static_cast<int>(ref_names.size());
    report.extractor_seed = fx.seed;
    report.fid = fid(feats_gen, feats_ref, &report.cov_regularized);
    report.kid = kid(feats_gen, feats_ref);

    double psnr_acc = 0.0, ssim_acc = 0.0;
    int pairs = 0;
    bool psnr_inf = false;
    for (const auto& n : gen_names) {
        if (!std::binary_search(ref_names.begin(), ref_names.end(), n)) continue;
        const ImageTensor g = data::load_image((fs::path(generated_dir) / n).string());
        const ImageTensor r = data::load_image((fs::path(reference_dir) / n).string());
        if (!g.same_shape(r)) continue;
        const double p = psnr(g, r);
        if (std::isinf(p))
            psnr_inf = true;
        else
            psnr_acc += p;
        ssim_acc += ssim(g, r);
        ++pairs;
    }
    if (pairs == 0) {
        report.no_pairs = true;
    } else {
        report.psnr_mean = psnr_inf ? std::numeric_limits<double>::infinity()
                                    : psnr_acc / pairs;
        report.ssim_mean = ssim_acc / pairs;
    }
    return report;
}

} // namespace ecdm::metrics
