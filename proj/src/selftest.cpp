#include "selftest.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <vector>

#include "augment/augment.hpp"
#include "core/rng.hpp"
#include "data/synthetic.hpp"
#include "diffusion/schedule.hpp"
#include "losses/losses.hpp"
#include "metrics/metrics.hpp"
#include "samplers/samplers.hpp"
#include "tmat/tmat.hpp"

namespace ecdm {

namespace fs = std::filesystem;

namespace {

struct Suite {
    std::ostream& log;
    int failures = 0;
    void check(const std::string& name, bool ok, const std::string& detail = "") {
        log << (ok ? "[ok]   " : "[FAIL] ") << name;
        if (!detail.empty()) log << " (" << detail << ")";
        log << "\n";
        if (!ok) ++failures;
    }
};

ImageTensor random_image(int h, int w, Rng& rng, double scale = 1.0) {
    ImageTensor img(1, h, w);
    for (auto& v : img.values) v = scale * (2.0 * rng.uniform() - 1.0);
    return img;
}

// central finite difference of a scalar function at x, one coordinate
double central_diff(const std::function<double(const ImageTensor&)>& f, ImageTensor x,
                    size_t i, double h) {
    const double orig = x.values[i];
    x.values[i] = orig + h;
    const double fp = f(x);
    x.values[i] = orig - h;
    const double fm = f(x);
    x.values[i] = orig;
    return (fp - fm) / (2.0 * h);
}

bool gradcheck(const std::function<double(const ImageTensor&)>& f, const ImageTensor& x,
               const ImageTensor& analytic, double rel_tol, Rng& rng) {
    for (int probe = 0; probe < 12; ++probe) {
        const size_t i =
            static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(x.values.size()) - 1));
        const double fd = central_diff(f, x, i, 1e-5);
        const double an = analytic.values[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        if (std::abs(fd - an) / denom > rel_tol) return false;
    }
    return true;
}

void diffusion_checks(Suite& s) {
    const auto schedule = diffusion::NoiseSchedule::linear(1000, 1e-4, 0.02);

    // criterion 3: schedule fidelity
    bool fidelity = schedule.beta(1) == 1e-4 && schedule.beta(1000) == 0.02 &&
                    schedule.posterior_variance(1) == 0.0;
    for (int t = 2; t <= 1000 && fidelity; ++t)
        fidelity = schedule.posterior_variance(t) > 0.0 &&
                   schedule.posterior_variance(t) <= schedule.beta(t) &&
                   schedule.alpha_bar(t) < schedule.alpha_bar(t - 1);
    s.check("schedule fidelity (beta endpoints, sigma bounds, abar monotone)", fidelity);

    // criterion 1: closed-form q_sample vs iterated q_step moments
    const int pixels = 10000;
    ImageTensor x0(1, 100, 100);
    Rng init(7);
    for (auto& v : x0.values) v = 2.0 * init.uniform() - 1.0;
    bool moments_ok = true;
    std::string detail;
    for (int t : {1, 2, 5, 10}) {
        Rng rng(100 + t);
        double sum = 0, sumsq = 0, ref_sum = 0, ref_sumsq = 0;
        ImageTensor x = x0;
        for (int step = 1; step <= t; ++step) {
            ImageTensor noise(1, 100, 100);
            for (auto& v : noise.values) v = rng.normal();
            x = diffusion::q_step(x, step, schedule, noise);
        }
        ImageTensor kappa(1, 100, 100);
        for (auto& v : kappa.values) v = rng.normal();
        const ImageTensor closed = diffusion::q_sample(x0, t, kappa, schedule);
        for (int i = 0; i < pixels; ++i) {
            sum += x.values[i];
            sumsq += x.values[i] * x.values[i];
            ref_sum += closed.values[i];
            ref_sumsq += closed.values[i] * closed.values[i];
        }
        const double var_theory = 1.0 - schedule.alpha_bar(t);
        const double se_mean = std::sqrt(var_theory / pixels) + 1e-9;
        const double mean_iter = sum / pixels;
        const double mean_closed = ref_sum / pixels;
        const double mean_x0 = [&] {
            double m = 0;
            for (int i = 0; i < pixels; ++i) m += x0.values[i];
            return m / pixels * schedule.sqrt_alpha_bar(t);
        }();
        const double var_iter = sumsq / pixels - mean_iter * mean_iter;
        const double var_closed = ref_sumsq / pixels - mean_closed * mean_closed;
        // variance of the sample variance of a Gaussian: ~2 sigma^4 / n
        const double se_var = std::sqrt(2.0 / pixels) * (var_theory + 0.2) + 1e-9;
        if (std::abs(mean_iter - mean_x0) > 3 * se_mean ||
            std::abs(mean_closed - mean_x0) > 3 * se_mean ||
            std::abs(var_iter - var_closed) > 3 * se_var) {
            moments_ok = false;
            detail = "t=" + std::to_string(t);
            break;
        }
    }
    s.check("q_step chain matches closed-form q_sample (3 SE, 1e4 draws)", moments_ok, detail);

    // criterion 2: reverse identities with the true noise
    Rng rng(42);
    const ImageTensor planted = random_image(16, 20, rng, 0.8);
    {
        ImageTensor kappa(1, 16, 20);
        for (auto& v : kappa.values) v = rng.normal();
        const ImageTensor x1 = diffusion::q_sample(planted, 1, kappa, schedule);
        const ImageTensor rec = diffusion::posterior_mean(x1, kappa, 1, schedule);
        double rms = 0;
        for (size_t i = 0; i < rec.values.size(); ++i) {
            const double d = rec.values[i] - planted.values[i];
            rms += d * d;
        }
        rms = std::sqrt(rms / rec.values.size());
        s.check("posterior_mean at t=1 with true noise recovers x0 (1e-5 RMS)", rms < 1e-5,
                "rms=" + std::to_string(rms));
    }
    {
        // deterministic reverse pass with an oracle: x_t tracks the planted
        // trajectory, eps recovered exactly from the closed form
        ImageTensor kappa(1, 16, 20);
        for (auto& v : kappa.values) v = rng.normal();
        ImageTensor x = diffusion::q_sample(planted, 1000, kappa, schedule);
        for (int t = 1000; t >= 1; --t) {
            const double a = schedule.sqrt_alpha_bar(t);
            const double sig = schedule.sqrt_one_minus_alpha_bar(t);
            ImageTensor eps(1, 16, 20);
            for (size_t i = 0; i < eps.values.size(); ++i)
                eps.values[i] = (x.values[i] - a * planted.values[i]) / sig;
            x = diffusion::posterior_mean(x, eps, t, schedule);
        }
        double rms = 0;
        for (size_t i = 0; i < x.values.size(); ++i) {
            const double d = x.values[i] - planted.values[i];
            rms += d * d;
        }
        rms = std::sqrt(rms / x.values.size());
        s.check("oracle deterministic reverse pass recovers x0 (1e-3 RMS, T=1000)",
                rms < 1e-3, "rms=" + std::to_string(rms));
    }
    {
        // 5-step fast sampler with the oracle denoiser
        samplers::FastSamplerConfig cfg;  // 5 steps, order 3
        cfg.condition_scale = 1.0;
        auto oracle = [&](const ad::Tensor& x_t, const ad::Tensor&,
                          const std::vector<int>& t) {
            ad::Tensor eps(x_t.n, x_t.c, x_t.h, x_t.w);
            for (int n = 0; n < x_t.n; ++n) {
                const double a = schedule.sqrt_alpha_bar(t[n]);
                const double sig = schedule.sqrt_one_minus_alpha_bar(t[n]);
                const float* xs = x_t.sample(n);
                float* es = eps.sample(n);
                for (size_t i = 0; i < x_t.sample_stride(); ++i)
                    es[i] = static_cast<float>(
                        (xs[i] - a * planted.values[i]) / sig);
            }
            return eps;
        };
        const EdgeMap cond(16, 20);
        const ImageTensor out = samplers::fast_sample(oracle, cond, schedule, cfg, 99);
        double rms = 0;
        for (size_t i = 0; i < out.values.size(); ++i) {
            const double d = out.values[i] - planted.values[i];
            rms += d * d;
        }
        rms = std::sqrt(rms / out.values.size());
        s.check("5-step fast sampler with oracle denoiser recovers x0 (1e-2 RMS)",
                rms < 1e-2, "rms=" + std::to_string(rms));
    }
}

void loss_checks(Suite& s) {
    Rng rng(11);
    const losses::LossWeights w;

    const ImageTensor a = random_image(8, 8, rng);
    const ImageTensor b = random_image(8, 8, rng);
    bool ok = gradcheck([&](const ImageTensor& x) { return losses::diffusion_loss(a, x); }, b,
                        losses::diffusion_loss_grad(a, b), 1e-3, rng);
    s.check("diffusion_loss gradient matches finite differences (8x8)", ok);

    ok = gradcheck([&](const ImageTensor& x) { return losses::style_loss(x, a); }, b,
                   losses::style_loss_grad(b, a), 1e-3, rng);
    s.check("style_loss gradient matches finite differences", ok);

    ImageTensor scores(1, 8, 8);
    for (auto& v : scores.values) v = 0.1 + 0.8 * rng.uniform();
    ok = gradcheck([&](const ImageTensor& x) { return losses::modality_loss(x); }, scores,
                   losses::modality_loss_grad(scores), 1e-3, rng);
    s.check("modality_loss gradient matches finite differences", ok);

    const edge::HighPassConfig hp{0.2, 0.0};
    ok = gradcheck([&](const ImageTensor& x) { return losses::edge_loss(a, x, hp); }, b,
                   losses::edge_loss_grad(a, b, hp), 1e-3, rng);
    s.check("edge_loss gradient matches finite differences", ok);

    ImageTensor d_fake(1, 8, 8);
    for (auto& v : d_fake.values) v = 0.1 + 0.8 * rng.uniform();
    ok = gradcheck(
        [&](const ImageTensor& x) { return losses::discriminator_loss(x, d_fake, w); },
        scores, losses::discriminator_loss_grad_real(scores, w), 1e-3, rng);
    ok = ok && gradcheck(
                   [&](const ImageTensor& x) {
                       return losses::discriminator_loss(scores, x, w);
                   },
                   d_fake, losses::discriminator_loss_grad_fake(d_fake), 1e-3, rng);
    s.check("discriminator_loss gradients match finite differences", ok);

    const double obj = losses::generator_objective(1, 1, 1, 1, w);
    s.check("generator_objective(1,1,1,1) with paper weights == 1101.1",
            std::abs(obj - 1101.1) < 1e-9, "value=" + std::to_string(obj));

    ImageTensor half(1, 4, 4, 0.5);
    const double ld = losses::discriminator_loss(half, half, w);
    const double expected = 11.0 * std::log(0.5) * std::log(0.5);
    s.check("discriminator_loss at uniform 0.5 == 11*(ln 0.5)^2",
            std::abs(ld - expected) < 1e-5, "value=" + std::to_string(ld));
}

void edge_checks(Suite& s) {
    Rng rng(13);
    const edge::HighPassConfig hard{0.15, 0.0};
    bool const_ok = true, lin_ok = true, idem_ok = true, mean_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        const int h = 16, w = 20;
        const ImageTensor x = random_image(h, w, rng);
        const ImageTensor y = random_image(h, w, rng);

        if (trial == 0) {
            const ImageTensor c(1, h, w, 0.37);
            const EdgeMap e = edge::extract_edges(c, hard);
            for (double v : e.values) const_ok = const_ok && std::abs(v) < 1e-10;
        }

        const EdgeMap ex = edge::extract_edges(x, hard);
        const EdgeMap ey = edge::extract_edges(y, hard);
        ImageTensor sum = x;
        for (size_t i = 0; i < sum.values.size(); ++i) sum.values[i] += y.values[i];
        const EdgeMap esum = edge::extract_edges(sum, hard);
        for (size_t i = 0; i < esum.values.size(); ++i)
            lin_ok = lin_ok && std::abs(esum.values[i] - ex.values[i] - ey.values[i]) < 1e-5;

        const EdgeMap twice = edge::extract_edges(ex, hard);
        for (size_t i = 0; i < twice.values.size(); ++i)
            idem_ok = idem_ok && std::abs(twice.values[i] - ex.values[i]) < 1e-5;

        double mean = 0;
        for (double v : ex.values) mean += v;
        mean /= static_cast<double>(ex.values.size());
        mean_ok = mean_ok && std::abs(mean) < 1e-6;
    }
    s.check("edge operator: constant image maps to zero", const_ok);
    s.check("edge operator: linearity over 100 random images (1e-5)", lin_ok);
    s.check("edge operator: hard-mask idempotence (1e-5)", idem_ok);
    s.check("edge operator: zero spatial mean (1e-6)", mean_ok);
}

void metric_checks(Suite& s) {
    Rng rng(17);
    // FID(A,A) on real features
    metrics::FeatureMatrix feats;
    for (int i = 0; i < 80; ++i) {
        std::vector<double> f(8);
        for (auto& v : f) v = rng.normal();
        feats.push_back(std::move(f));
    }
    const double self_fid = metrics::fid(feats, feats);
    s.check("FID(A,A) < 1e-6", self_fid < 1e-6, "value=" + std::to_string(self_fid));

    // analytic shifted Gaussians: FID = |mu|^2 = 25
    metrics::FeatureMatrix ga, gb;
    for (int i = 0; i < 10000; ++i) {
        ga.push_back({rng.normal(), rng.normal()});
        gb.push_back({rng.normal() + 3.0, rng.normal() + 4.0});
    }
    const double shifted = metrics::fid(ga, gb);
    s.check("FID of N(0,I) vs N((3,4),I) == 25 within 2%", std::abs(shifted - 25.0) < 0.5,
            "value=" + std::to_string(shifted));

    // KID unbiasedness: mean over 100 trials within 3 SE of 0
    std::vector<double> kids;
    for (int trial = 0; trial < 100; ++trial) {
        metrics::FeatureMatrix xa, xb;
        for (int i = 0; i < 50; ++i) {
            std::vector<double> f(4), g(4);
            for (auto& v : f) v = rng.normal();
            for (auto& v : g) v = rng.normal();
            xa.push_back(std::move(f));
            xb.push_back(std::move(g));
        }
        kids.push_back(metrics::kid(xa, xb));
    }
    double mean = 0;
    for (double k : kids) mean += k;
    mean /= kids.size();
    double var = 0;
    for (double k : kids) var += (k - mean) * (k - mean);
    var /= (kids.size() - 1);
    const double se = std::sqrt(var / kids.size());
    s.check("KID mean within 3 SE of 0 for equal distributions",
            std::abs(mean) <= 3 * se + 1e-12,
            "mean=" + std::to_string(mean) + " se=" + std::to_string(se));

    // PSNR / SSIM anchors
    ImageTensor pa(1, 16, 16, 0.0), pb(1, 16, 16, 0.0);
    for (auto& v : pb.values) v = 0.2;  // [0,1]-scale difference of 0.1 -> MSE 0.01
    const double p = metrics::psnr(pa, pb);
    s.check("PSNR at MSE 0.01 == 20 dB", std::abs(p - 20.0) < 1e-9,
            "value=" + std::to_string(p));
    Rng r2(19);
    const ImageTensor img = random_image(16, 16, r2);
    s.check("SSIM(x,x) == 1", std::abs(metrics::ssim(img, img) - 1.0) < 1e-12);
    s.check("PSNR(x,x) is the infinity sentinel", std::isinf(metrics::psnr(img, img)));
}

void augment_checks(Suite& s) {
    bool ok = true;
    std::string detail;
    for (int n_real : {10, 100, 1000}) {
        for (double ratio : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
            const auto mul = augment::plan_counts(n_real, ratio, augment::Mode::multiple);
            const auto mix = augment::plan_counts(n_real, ratio, augment::Mode::mixed);
            const int64_t expected = static_cast<int64_t>(std::floor(ratio * n_real + 0.5));
            if (mul.n_pseudo != expected || mul.n_real_used != n_real ||
                mix.n_pseudo != expected || mix.n_real_used != n_real - expected ||
                mix.n_real_used + mix.n_pseudo != n_real) {
                ok = false;
                detail = "n=" + std::to_string(n_real) + " ratio=" + std::to_string(ratio);
            }
        }
    }
    s.check("augmentation plan arithmetic on the sweep grid", ok, detail);
}

void train_smoke(Suite& s, const std::string& workdir) {
    const fs::path root = fs::path(workdir) / "selftest-data";
    data::GenConfig gen;
    gen.height = 32;
    gen.width = 40;
    data::generate_dataset(32, gen, root.string(), 5);

    tmat::TmatConfig cfg = tmat::TmatConfig::toy();
    cfg.batch_size = 8;
    cfg.learning_rate = 3e-4;
    cfg.s_diff = 50;  // upper bound; we stop at 200 steps
    cfg.s_adv = 0;
    cfg.model.base_channels = 8;
    cfg.model.channel_multipliers = {1, 2};
    cfg.model.attention_levels = {1};
    cfg.model.time_embed_dim = 32;
    cfg.seed = 3;
    cfg.thermal_data = root.string();

    const tmat::TrainData data =
        tmat::load_train_data(root.string(), root.string(), cfg.edge_cfg);
    tmat::Trainer trainer(cfg);
    while (trainer.global_step() < 200) trainer.stage1_epoch(data);

    const auto& rec = trainer.records();
    double first = 0, last = 0;
    const int window = 8;
    for (int i = 0; i < window; ++i) {
        first += rec[i].l_diff;
        last += rec[rec.size() - 1 - i].l_diff;
    }
    s.check("200-step micro-train reduces the diffusion loss",
            last < first && std::isfinite(last),
            "first=" + std::to_string(first / window) +
                " last=" + std::to_string(last / window));

    // pseudo-synthesis label transfer on the micro checkpoint
    const fs::path ckpt = fs::path(workdir) / "selftest-ckpt.ckpt";
    trainer.save_checkpoint(ckpt.string());
    auto manifest = data::load_manifest((root / "manifest.json").string());
    manifest.records.resize(4);
    manifest.modality = "visible";
    for (auto& r : manifest.records)
        r.image = "visible/" + fs::path(r.image).filename().string();
    samplers::FastSamplerConfig fast;
    fast.timesteps = 3;
    fast.order = 2;
    fast.condition_scale = 1.0;
    const auto pseudo = augment::synthesize_pseudo(
        manifest, root.string(), ckpt.string(), fast,
        (fs::path(workdir) / "selftest-pseudo").string(), 21);
    bool transfer = pseudo.records.size() == manifest.records.size();
    for (size_t i = 0; transfer && i < pseudo.records.size(); ++i)
        transfer = pseudo.records[i].boxes == manifest.records[i].boxes &&
                   pseudo.records[i].labels == manifest.records[i].labels &&
                   pseudo.records[i].source == "pseudo";
    s.check("pseudo-synthesis transfers boxes and labels verbatim", transfer);
}

} // namespace

int run_selftest(const std::string& workdir, std::ostream& log) {
    fs::path base = workdir.empty()
                        ? fs::temp_directory_path() / "ecdm-selftest"
                        : fs::path(workdir);
    fs::create_directories(base);

    Suite suite{log};
    diffusion_checks(suite);
    loss_checks(suite);
    edge_checks(suite);
    metric_checks(suite);
    augment_checks(suite);
    train_smoke(suite, base.string());

    log << (suite.failures == 0 ? "selftest: all checks passed\n"
                                : "selftest: " + std::to_string(suite.failures) +
                                      " check(s) failed\n");
    return suite.failures == 0 ? 0 : 1;
}

} // namespace ecdm
