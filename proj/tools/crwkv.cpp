// crwkv: training, inference, evaluation, scaling benchmarks and spectrum
// analysis for the CRWKV denoiser. Exit codes: 0 success, 1 usage error,
// 2 data/config error, 3 invariant failure.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "crwkv/checkpoint.hpp"
#include "crwkv/data.hpp"
#include "crwkv/selftest.hpp"
#include "crwkv/training.hpp"

namespace fs = std::filesystem;
using namespace crwkv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInvariant = 3;

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << text;
}

void write_run_meta(const fs::path& dir, const std::string& command, std::uint64_t seed,
                    const nlohmann::json& extra = {}) {
    nlohmann::json j;
    j["command"] = command;
    j["seed"] = seed;
    j["threads"] = num_threads();
    if (!extra.is_null()) j["extra"] = extra;
    write_text(dir / ("run_" + command + ".json"), j.dump(2) + "\n");
}

std::vector<fs::path> list_pngs(const fs::path& p) {
    std::vector<fs::path> out;
    if (fs::is_directory(p)) {
        for (const auto& e : fs::directory_iterator(p))
            if (e.path().extension() == ".png") out.push_back(e.path());
        std::sort(out.begin(), out.end());
    } else if (fs::exists(p)) {
        out.push_back(p);
    }
    if (out.empty()) throw IoError("no PNG inputs found at '" + p.string() + "'");
    return out;
}

// reflect padding on the bottom/right up to the next multiple
Image pad_to_multiple_reflect(const Image& img, std::int64_t multiple) {
    const std::int64_t ph = (multiple - img.h % multiple) % multiple;
    const std::int64_t pw = (multiple - img.w % multiple) % multiple;
    if (ph == 0 && pw == 0) return img;
    if (ph >= img.h || pw >= img.w)
        throw ParamError("image " + std::to_string(img.w) + "x" + std::to_string(img.h) +
                         " too small to pad to a multiple of " + std::to_string(multiple));
    Image out(img.h + ph, img.w + pw);
    for (std::int64_t y = 0; y < out.h; ++y) {
        const std::int64_t sy = y < img.h ? y : 2 * img.h - 1 - y;
        for (std::int64_t x = 0; x < out.w; ++x) {
            const std::int64_t sx = x < img.w ? x : 2 * img.w - 1 - x;
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
        }
    }
    return out;
}

Image crop_image(const Image& img, std::int64_t h, std::int64_t w) {
    Image out(h, w);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, c);
    return out;
}

// deterministic smooth texture used by the synthetic dataset mode
Image synth_texture(std::int64_t size, std::uint64_t seed) {
    Rng rng(seed);
    Image img(size, size);
    const double pi = 3.14159265358979323846;
    double fy[3], fx[3], ph[3], amp[3];
    for (int k = 0; k < 3; ++k) {
        fy[k] = rng.uniform(0.5, 3.0);
        fx[k] = rng.uniform(0.5, 3.0);
        ph[k] = rng.uniform(0.0, 2.0 * pi);
        amp[k] = rng.uniform(0.08, 0.18);
    }
    const double base = rng.uniform(0.35, 0.65);
    for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = base + 0.1 * c / 3.0;
                for (int k = 0; k < 3; ++k)
                    v += amp[k] *
                         std::sin(2.0 * pi * (fy[k] * y + fx[k] * x) / static_cast<double>(size) +
                                  ph[k] + 0.7 * c);
                img.at(y, x, c) = static_cast<float>(std::min(0.95, std::max(0.05, v)));
            }
    return img;
}

// ---- train ---------------------------------------------------------------- //

struct TrainArgs {
    std::string config;
    std::string out_dir = "train_out";
    std::string resume;
    std::int64_t seed = -1;  // -1: use the config's seed
};

PairedImages load_dataset(const KvConfig& cfg, std::uint64_t seed) {
    PairedImages data;
    const std::string kind = cfg.get_str("dataset", "paired");
    if (kind == "paired") {
        const fs::path clean_dir = cfg.require_str("clean_dir");
        const fs::path noisy_dir = cfg.require_str("noisy_dir");
        for (const auto& p : list_pngs(clean_dir)) {
            const fs::path noisy = noisy_dir / p.filename();
            if (!fs::exists(noisy))
                throw IoError("paired dataset: missing noisy image '" + noisy.string() + "'");
            data.clean.push_back(load_png(p.string()));
            data.noisy.push_back(load_png(noisy.string()));
        }
    } else if (kind == "clean_plus_noise") {
        const fs::path clean_dir = cfg.require_str("clean_dir");
        auto spec = NoiseSpec::from_string(cfg.get_str("noise_kind", "awgn"),
                                           cfg.get_double("noise_sigma", 10.0),
                                           cfg.get_double("noise_peak", 255.0));
        std::uint64_t i = 0;
        for (const auto& p : list_pngs(clean_dir)) {
            auto clean = load_png(p.string());
            data.noisy.push_back(add_noise(clean, spec, seed + 1000 + i++));
            data.clean.push_back(std::move(clean));
        }
    } else if (kind == "synthetic_textures") {
        const std::int64_t n = cfg.get_int("synth_images", 32);
        const std::int64_t size = cfg.get_int("synth_size", 64);
        auto spec = NoiseSpec::from_string(cfg.get_str("noise_kind", "awgn"),
                                           cfg.get_double("noise_sigma", 25.0),
                                           cfg.get_double("noise_peak", 255.0));
        for (std::int64_t i = 0; i < n; ++i) {
            auto clean = synth_texture(size, seed + static_cast<std::uint64_t>(i));
            data.noisy.push_back(
                add_noise(clean, spec, seed + 1000 + static_cast<std::uint64_t>(i)));
            data.clean.push_back(std::move(clean));
        }
    } else {
        throw ConfigError("dataset must be paired | clean_plus_noise | synthetic_textures, got '" +
                          kind + "'");
    }
    return data;
}

TrainConfig train_config_from(const KvConfig& cfg) {
    TrainConfig t;
    t.iterations = cfg.get_int("iterations", t.iterations);
    t.batch = cfg.get_int("batch", t.batch);
    t.patch = cfg.get_int("patch", t.patch);
    t.base_lr = cfg.get_double("lr", t.base_lr);
    t.floor_lr = cfg.get_double("lr_floor", t.floor_lr);
    t.lr_total = cfg.get_int("lr_total", t.lr_total);
    t.lr_decay_start = cfg.get_int("lr_decay_start", t.lr_decay_start);
    t.weight_decay = cfg.get_double("weight_decay", t.weight_decay);
    t.clip_norm = cfg.get_double("clip_norm", t.clip_norm);
    t.loss = loss_kind_from_string(cfg.get_str("loss", "l1"));
    t.charb_eps = cfg.get_double("charbonnier_eps", t.charb_eps);
    t.log_every = cfg.get_int("log_every", t.log_every);
    t.checkpoint_every = cfg.get_int("checkpoint_every", t.checkpoint_every);
    t.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 7));
    t.augment = cfg.get_bool("augment", true);
    return t;
}

int cmd_train(const TrainArgs& args) {
    auto cfg = KvConfig::parse_file(args.config);
    auto model_cfg = ModelConfig::from_config(cfg);
    auto tcfg = train_config_from(cfg);
    if (args.seed >= 0) tcfg.seed = static_cast<std::uint64_t>(args.seed);
    fs::create_directories(args.out_dir);

    auto data = load_dataset(cfg, tcfg.seed);
    CrwkvModel<float> model(model_cfg, tcfg.seed);
    AdamW<float> opt(model.parameters());
    Rng rng(tcfg.seed, 2);

    if (!args.resume.empty()) {
        auto ckpt = load_checkpoint(args.resume);
        restore_model(model, ckpt);
        opt.restore(ckpt);
        Rng::State st{ckpt.meta.at("rng_state").get<std::uint64_t>(),
                      ckpt.meta.at("rng_inc").get<std::uint64_t>(),
                      ckpt.meta.at("rng_spare").get<double>(),
                      ckpt.meta.at("rng_has_spare").get<bool>()};
        rng.restore(st);
        std::cout << "resumed from " << args.resume << " at iteration " << opt.iteration() << "\n";
    }

    auto save = [&](std::int64_t iter, Rng& r, const std::string& name) {
        Checkpoint ckpt;
        snapshot_model(model, ckpt);
        opt.snapshot(ckpt);
        ckpt.meta["seed"] = tcfg.seed;
        ckpt.meta["iteration"] = iter;
        auto st = r.save();
        ckpt.meta["rng_state"] = st.state;
        ckpt.meta["rng_inc"] = st.inc;
        ckpt.meta["rng_spare"] = st.spare;
        ckpt.meta["rng_has_spare"] = st.has_spare;
        save_checkpoint((fs::path(args.out_dir) / name).string(), ckpt);
    };

    const double t0 = now_ms();
    auto report = train<float>(model, opt, data, tcfg, rng, [&](std::int64_t iter, Rng& r) {
        save(iter, r,
             iter >= tcfg.iterations ? std::string("ckpt_final.ckpt")
                                     : "ckpt_" + std::to_string(iter) + ".ckpt");
    });
    const double elapsed = (now_ms() - t0) / 1000.0;

    std::string csv = csv_header() + "\n";
    for (const auto& row : report.log) csv += csv_row(row) + "\n";
    write_text(fs::path(args.out_dir) / "metrics.csv", csv);
    write_run_meta(args.out_dir, "train", tcfg.seed,
                   {{"config_hash", model_cfg.hash()}, {"iterations", report.final_iteration}});

    std::cout << "trained " << report.final_iteration << " iterations in " << elapsed
              << " s; metrics.csv and ckpt_final.ckpt written to " << args.out_dir << "\n";
    return kExitOk;
}

// ---- denoise --------------------------------------------------------------- //

struct DenoiseArgs {
    std::string checkpoint, input, out_dir = "denoise_out", clean;
};

int cmd_denoise(const DenoiseArgs& args) {
    auto ckpt = load_checkpoint(args.checkpoint);
    auto model = model_from_checkpoint<float>(ckpt);
    model.set_train(false);
    fs::create_directories(args.out_dir);

    auto inputs = list_pngs(args.input);
    const bool have_clean = !args.clean.empty();
    std::string eval_csv = "image,psnr,ssim\n";
    double mean_psnr = 0, mean_ssim = 0;

    for (const auto& path : inputs) {
        auto img = load_png(path.string());
        const std::int64_t h = img.h, w = img.w;
        auto padded = pad_to_multiple_reflect(img, 8);
        auto out_t = model.forward(image_to_tensor<float>(padded));
        auto restored = crop_image(tensor_to_image(out_t), h, w);
        const fs::path out_path = fs::path(args.out_dir) / path.filename();
        save_png(restored, out_path.string());
        if (have_clean) {
            const fs::path clean_path = fs::is_directory(args.clean)
                                            ? fs::path(args.clean) / path.filename()
                                            : fs::path(args.clean);
            auto clean = load_png(clean_path.string());
            const double p = psnr(restored, clean);
            const double s = ssim(restored, clean);
            mean_psnr += p;
            mean_ssim += s;
            char buf[256];
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f", path.filename().string().c_str(), p,
                          s);
            eval_csv += std::string(buf) + "\n";
            std::cout << path.filename().string() << "  psnr=" << p << "  ssim=" << s << "\n";
        }
    }
    if (have_clean) {
        write_text(fs::path(args.out_dir) / "eval.csv", eval_csv);
        std::cout << "mean psnr=" << mean_psnr / static_cast<double>(inputs.size())
                  << "  mean ssim=" << mean_ssim / static_cast<double>(inputs.size()) << "\n";
    }
    const std::uint64_t seed =
        ckpt.meta.contains("seed") ? ckpt.meta["seed"].get<std::uint64_t>() : 0;
    write_run_meta(args.out_dir, "denoise", seed, {{"images", inputs.size()}});
    std::cout << inputs.size() << " image(s) written to " << args.out_dir << "\n";
    return kExitOk;
}

// ---- bench ------------------------------------------------------------------ //

struct BenchArgs {
    std::string mode;
    std::vector<std::int64_t> sizes;
    int repeats = 5;
    int channels = 4;
    std::int64_t ref_max = 4096;
    std::string config;
    std::string out_csv = "bench.csv";
    std::int64_t seed = 1;
    double mem_budget_mb = 0;  // 0 = unlimited
    int batch = 1;
};

double fit_loglog_slope(const std::vector<std::pair<double, double>>& pts) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : pts) {
        const double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(pts.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// median wall time of fn(); inner repetition keeps one sample at >= ~5 ms
template <typename F>
double time_median_ms(F&& fn, int repeats) {
    fn();  // warmup 1
    const double t0 = now_ms();
    fn();  // warmup 2, doubles as the probe
    const double probe = now_ms() - t0;
    const int inner = probe > 0.05 ? std::max(1, static_cast<int>(5.0 / probe)) : 100;
    fn();  // warmup 3
    std::vector<double> samples;
    for (int r = 0; r < repeats; ++r) {
        const double a = now_ms();
        for (int i = 0; i < inner; ++i) fn();
        samples.push_back((now_ms() - a) / inner);
    }
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
}

int cmd_bench(const BenchArgs& args) {
    for (std::size_t i = 1; i < args.sizes.size(); ++i)
        if (args.sizes[i] <= args.sizes[i - 1]) {
            std::cerr << "bench: --sizes must be strictly ascending\n";
            return kExitUsage;
        }
    std::string csv = "size,wall_ms,peak_bytes,variant\n";
    if (args.repeats <= 0) {
        write_text(args.out_csv, csv);
        std::cout << "repeats=0: wrote header-only " << args.out_csv << "\n";
        return kExitOk;
    }
    Rng rng(static_cast<std::uint64_t>(args.seed));

    if (args.mode == "wkv") {
        auto sizes = args.sizes;
        if (sizes.empty()) sizes = {1024, 2048, 4096, 8192, 16384};
        std::vector<std::pair<double, double>> scan_pts, ref_pts;
        for (std::int64_t t : sizes) {
            auto k = Tensor<float>::randn({1, t, args.channels}, rng);
            auto v = Tensor<float>::randn({1, t, args.channels}, rng);
            auto w = Tensor<float>::randn({args.channels}, rng);
            auto u = Tensor<float>::randn({args.channels}, rng);
            memstat::reset_peak();
            const double scan_ms = time_median_ms([&] { biwkv_scan(k, v, w, u); }, args.repeats);
            const std::int64_t scan_peak = memstat::peak_bytes.load();
            scan_pts.emplace_back(static_cast<double>(t), scan_ms);
            csv += std::to_string(t) + "," + std::to_string(scan_ms) + "," +
                   std::to_string(scan_peak) + ",scan\n";
            std::cout << "T=" << t << " scan " << scan_ms << " ms\n";
            if (t <= args.ref_max) {
                memstat::reset_peak();
                const double ref_ms =
                    time_median_ms([&] { biwkv_reference(k, v, w, u); }, args.repeats);
                ref_pts.emplace_back(static_cast<double>(t), ref_ms);
                csv += std::to_string(t) + "," + std::to_string(ref_ms) + "," +
                       std::to_string(memstat::peak_bytes.load()) + ",reference\n";
                std::cout << "T=" << t << " reference " << ref_ms << " ms\n";
            }
        }
        if (scan_pts.size() > 1)
            std::cout << "scan log-log time slope: " << fit_loglog_slope(scan_pts) << "\n";
        if (ref_pts.size() > 1)
            std::cout << "reference log-log time slope: " << fit_loglog_slope(ref_pts) << "\n";
    } else if (args.mode == "model") {
        ModelConfig mcfg;
        if (!args.config.empty()) {
            mcfg = ModelConfig::from_config(KvConfig::parse_file(args.config));
        } else {
            mcfg.base_channels = 8;  // small benchmark default
            mcfg.depths = {1, 1, 1, 1};
            mcfg.splits = {{{0, 1}, {0, 1}, {0, 1}, {1, 0}}};
        }
        CrwkvModel<float> model(mcfg, static_cast<std::uint64_t>(args.seed));
        model.set_train(false);
        auto sizes = args.sizes;
        if (sizes.empty()) sizes = {64, 128, 256, 512};
        std::vector<std::pair<double, double>> mem_pts, time_pts;
        double bytes_per_pixel = 0;
        for (std::int64_t s : sizes) {
            const double pixels = static_cast<double>(s) * static_cast<double>(s);
            if (args.mem_budget_mb > 0 && bytes_per_pixel > 0 &&
                bytes_per_pixel * pixels * 1.5 > args.mem_budget_mb * 1024.0 * 1024.0) {
                csv += std::to_string(s) + ",,,model(OOM)\n";
                std::cout << "size " << s << ": predicted to exceed --mem-budget-mb, skipped\n";
                continue;
            }
            try {
                auto x = Tensor<float>::randn({args.batch, 3, s, s}, rng, 0.3);
                memstat::reset_peak();
                model.forward(x);  // establishes the peak, doubles as warmup
                const std::int64_t peak = memstat::peak_bytes.load();
                const double ms =
                    time_median_ms([&] { model.forward(x); }, std::max(1, args.repeats / 2));
                csv += std::to_string(s) + "," + std::to_string(ms) + "," + std::to_string(peak) +
                       ",model\n";
                mem_pts.emplace_back(pixels, static_cast<double>(peak));
                time_pts.emplace_back(pixels, ms);
                if (bytes_per_pixel <= 0) bytes_per_pixel = static_cast<double>(peak) / pixels;
                std::cout << "size " << s << ": " << ms << " ms, peak " << peak << " bytes\n";
            } catch (const std::bad_alloc&) {
                csv += std::to_string(s) + ",,,model(OOM)\n";
                std::cout << "size " << s << ": out of memory, recorded and continuing\n";
            }
        }
        if (mem_pts.size() > 1) {
            std::cout << "model peak-memory slope vs pixel count: " << fit_loglog_slope(mem_pts)
                      << "\n";
            std::cout << "model forward-time slope vs pixel count: " << fit_loglog_slope(time_pts)
                      << "\n";
        }
    } else {
        std::cerr << "bench: --mode must be wkv or model\n";
        return kExitUsage;
    }
    write_text(args.out_csv, csv);
    std::cout << "wrote " << args.out_csv << "\n";
    return kExitOk;
}

// ---- spectrum ---------------------------------------------------------------- //

struct SpectrumArgs {
    std::string checkpoint, image, out_dir = "spectrum_out";
    std::vector<std::string> layers;
};

int cmd_spectrum(const SpectrumArgs& args) {
    static const std::vector<std::string> kAllTags = {"input_proj", "enc1", "enc2", "enc3",
                                                      "latent",     "dec3", "dec2", "dec1"};
    auto layers = args.layers.empty() ? kAllTags : args.layers;
    for (const auto& tag : layers) {
        if (std::find(kAllTags.begin(), kAllTags.end(), tag) == kAllTags.end()) {
            std::string all;
            for (const auto& t : kAllTags) all += (all.empty() ? "" : ", ") + t;
            throw ConfigError("unknown layer tag '" + tag + "'; available: " + all);
        }
    }
    auto ckpt = load_checkpoint(args.checkpoint);
    auto model = model_from_checkpoint<float>(ckpt);
    model.set_train(false);
    auto img = load_png(args.image);
    auto padded = pad_to_multiple_reflect(img, 8);
    std::vector<CrwkvModel<float>::TapPoint> taps;
    model.forward(image_to_tensor<float>(padded), &taps);
    fs::create_directories(args.out_dir);
    for (const auto& tag : layers) {
        const Tensor<float>* feat = nullptr;
        for (const auto& t : taps)
            if (t.tag == tag) feat = &t.feat;
        if (!feat) throw ConfigError("tap '" + tag + "' was not captured");
        auto prof = power_spectrum(*feat, tag);
        std::string csv = "bin,log_amplitude,layer\n";
        for (std::int64_t i = 0; i < prof.bins(); ++i) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%lld,%.9g,%s", static_cast<long long>(i),
                          prof.log_amplitude[static_cast<std::size_t>(i)], tag.c_str());
            csv += std::string(buf) + "\n";
        }
        write_text(fs::path(args.out_dir) / ("spectrum_" + tag + ".csv"), csv);
    }
    const std::uint64_t seed =
        ckpt.meta.contains("seed") ? ckpt.meta["seed"].get<std::uint64_t>() : 0;
    write_run_meta(args.out_dir, "spectrum", seed, {{"layers", layers}});
    std::cout << "wrote " << layers.size() << " spectrum CSV(s) to " << args.out_dir << "\n";
    return kExitOk;
}

// ---- selftest ------------------------------------------------------------------ //

struct SelftestArgs {
    std::string filter, csv, inject_fault;
};

int cmd_selftest(const SelftestArgs& args) {
    const double t0 = now_ms();
    auto results = run_selftest(args.filter, args.inject_fault);
    const double elapsed = (now_ms() - t0) / 1000.0;
    bool all_pass = true;
    std::size_t width = 4;
    for (const auto& r : results) width = std::max(width, r.name.size());
    for (const auto& r : results) {
        all_pass = all_pass && r.pass;
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name
                  << std::string(width - r.name.size() + 2, ' ') << r.detail << "\n";
    }
    std::cout << results.size() << " checks, " << (all_pass ? "all passed" : "FAILURES present")
              << " (" << elapsed << " s)\n";
    if (!args.csv.empty()) write_text(args.csv, selftest_csv(results));
    if (results.empty()) {
        std::cerr << "selftest: filter '" << args.filter << "' matched no checks\n";
        return kExitData;
    }
    return all_pass ? kExitOk : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "CRWKV image denoiser: linear-complexity bidirectional WKV, "
        "context-guided token shift and frequency mixing"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker threads (1 = fully deterministic serial mode)");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model from a key=value config file");
    train_cmd->add_option("--config", train_args.config, "config file")->required();
    train_cmd->add_option("--out", train_args.out_dir, "output directory");
    train_cmd->add_option("--seed", train_args.seed, "override the config seed");
    train_cmd->add_option("--resume", train_args.resume, "checkpoint to resume from");

    DenoiseArgs den_args;
    auto* den_cmd = app.add_subcommand("denoise", "restore PNG image(s) with a checkpoint");
    den_cmd->add_option("--checkpoint", den_args.checkpoint, "model checkpoint")->required();
    den_cmd->add_option("--input", den_args.input, "input PNG file or directory")->required();
    den_cmd->add_option("--out", den_args.out_dir, "output directory");
    den_cmd->add_option("--clean", den_args.clean,
                        "clean reference (file or directory) for PSNR/SSIM");

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "scaling benchmarks (wkv operator or model)");
    bench_cmd->add_option("--mode", bench_args.mode, "wkv | model")->required();
    bench_cmd->add_option("--sizes", bench_args.sizes, "ascending sizes (T or image side)")
        ->delimiter(',');
    bench_cmd->add_option("--repeats", bench_args.repeats, "timing repeats (0 = header only)");
    bench_cmd->add_option("--channels", bench_args.channels, "channels for wkv mode");
    bench_cmd->add_option("--ref-max", bench_args.ref_max,
                          "largest T for the quadratic reference");
    bench_cmd->add_option("--config", bench_args.config, "model config for model mode");
    bench_cmd->add_option("--out", bench_args.out_csv, "output CSV path");
    bench_cmd->add_option("--seed", bench_args.seed, "rng seed");
    bench_cmd->add_option("--batch", bench_args.batch, "batch size for model mode");
    bench_cmd->add_option("--mem-budget-mb", bench_args.mem_budget_mb,
                          "skip sizes predicted to exceed this many MB (0 = unlimited)");

    SpectrumArgs spec_args;
    auto* spec_cmd =
        app.add_subcommand("spectrum", "radially averaged power spectra of stage outputs");
    spec_cmd->add_option("--checkpoint", spec_args.checkpoint, "model checkpoint")->required();
    spec_cmd->add_option("--image", spec_args.image, "input PNG")->required();
    spec_cmd->add_option("--out", spec_args.out_dir, "output directory");
    spec_cmd->add_option("--layers", spec_args.layers, "layer tags (default: all)")
        ->delimiter(',');

    SelftestArgs self_args;
    auto* self_cmd = app.add_subcommand("selftest", "run the fast invariant suite");
    self_cmd->add_option("--filter", self_args.filter, "only run checks whose name contains this");
    self_cmd->add_option("--csv", self_args.csv, "write results as CSV");
    self_cmd->add_option("--inject-fault", self_args.inject_fault,
                         "corrupt a named path (negative control), e.g. wkv_scan");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    set_num_threads(threads);
    try {
        if (*train_cmd) return cmd_train(train_args);
        if (*den_cmd) return cmd_denoise(den_args);
        if (*bench_cmd) return cmd_bench(bench_args);
        if (*spec_cmd) return cmd_spectrum(spec_args);
        if (*self_cmd) return cmd_selftest(self_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
