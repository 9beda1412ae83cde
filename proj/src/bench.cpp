#include "pnn/bench.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "pnn/adapt.hpp"
#include "pnn/random.hpp"

namespace pnn::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Nearest jittered grid seed; cells are ~cell_size wide.
struct CellGrid {
    int cells;
    double pitch;
    std::vector<double> cx, cy;
    std::vector<int> primary, secondary;
    std::vector<double> mix;

    CellGrid(int size, double cell_size, int materials, Rng& rng) {
        cells = std::max(1, static_cast<int>(std::lround(size / cell_size)));
        pitch = static_cast<double>(size) / cells;
        const std::size_t n = static_cast<std::size_t>(cells) * cells;
        cx.resize(n);
        cy.resize(n);
        primary.resize(n);
        secondary.resize(n);
        mix.resize(n);
        for (int gy = 0; gy < cells; ++gy)
            for (int gx = 0; gx < cells; ++gx) {
                const std::size_t i = static_cast<std::size_t>(gy) * cells + gx;
                cx[i] = (gx + rng.uniform()) * pitch;
                cy[i] = (gy + rng.uniform()) * pitch;
                primary[i] = static_cast<int>(rng.index(static_cast<std::uint64_t>(materials)));
                secondary[i] = static_cast<int>(rng.index(static_cast<std::uint64_t>(materials)));
                mix[i] = 0.4 * rng.uniform();
            }
    }

    std::size_t nearest(double x, double y) const {
        const int gx = std::min(cells - 1, static_cast<int>(x / pitch));
        const int gy = std::min(cells - 1, static_cast<int>(y / pitch));
        std::size_t best = 0;
        double best_d = 1e300;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int ny = gy + dy, nx = gx + dx;
                if (ny < 0 || nx < 0 || ny >= cells || nx >= cells) continue;
                const std::size_t i = static_cast<std::size_t>(ny) * cells + nx;
                const double d = (cx[i] - x) * (cx[i] - x) + (cy[i] - y) * (cy[i] - y);
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
        return best;
    }
};

std::vector<double> parse_rates(const KeyValues& kv, const std::string& key) {
    return kv.has(key) ? kv.get_doubles(key) : std::vector<double>{};
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        std::ostringstream o;
        o.precision(17);
        o << v[i];
        s += o.str();
    }
    return s;
}

std::array<int, 3> rgb_bands(int bands) {
    if (bands >= 8) return {4, 2, 1};
    if (bands >= 3) return {2, 1, 0};
    return {0, 0, 0};
}

void zero_seconds(std::vector<HistoryRow>& rows) {
    for (auto& r : rows) r.seconds = 0.0;
}

}  // namespace

std::vector<std::vector<double>> family_spectra(const WorldModel& world) {
    Rng rng(Rng::mix(world.family, 7));
    std::vector<std::vector<double>> s(static_cast<std::size_t>(world.materials),
                                       std::vector<double>(static_cast<std::size_t>(world.profile.bands)));
    for (auto& m : s)
        for (auto& v : m) v = rng.uniform(world.spectrum_low, world.spectrum_high);
    return s;
}

std::vector<double> family_pan_weights(const WorldModel& world) {
    Rng rng(Rng::mix(world.family, 8));
    std::vector<double> w(static_cast<std::size_t>(world.profile.bands));
    double total = 0.0;
    for (auto& v : w) total += (v = rng.uniform(0.5, 1.5));
    for (auto& v : w) v /= total;
    return w;
}

SyntheticScene synth_scene(std::uint64_t seed, int size, int bands, const WorldModel& world) {
    world.profile.validate();
    if (bands != world.profile.bands)
        throw BenchError("bands " + std::to_string(bands) + " differ from the world profile's " +
                         std::to_string(world.profile.bands));
    const int ratio = world.profile.ratio;
    if (size <= 0 || size % ratio != 0)
        throw BenchError("size " + std::to_string(size) + " is not a positive multiple of ratio " +
                         std::to_string(ratio));
    if (world.materials < 1) throw BenchError("world needs at least one material");
    if (!(world.cell_size > 0.0)) throw BenchError("cell_size must be positive");

    const int M = world.materials;
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    Rng rng(Rng::mix(seed, 11));

    // Abundance maps: piecewise-constant cells plus Gaussian blobs.
    std::vector<float> abundance(plane * static_cast<std::size_t>(M), 0.0f);
    auto ab = [&](int m, std::size_t i) -> float& { return abundance[static_cast<std::size_t>(m) * plane + i]; };
    const CellGrid grid(size, world.cell_size, M, rng);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const std::size_t c = grid.nearest(x + 0.5, y + 0.5);
            const std::size_t i = static_cast<std::size_t>(y) * size + x;
            ab(grid.primary[c], i) += static_cast<float>(1.0 - grid.mix[c]);
            ab(grid.secondary[c], i) += static_cast<float>(grid.mix[c]);
        }
    const long long blobs = std::llround(world.blob_density * static_cast<double>(plane) / 400.0);
    for (long long k = 0; k < blobs; ++k) {
        const double bx = rng.uniform(0.0, size), by = rng.uniform(0.0, size);
        const double sigma = rng.uniform(1.5, 8.0);
        const double amp = rng.uniform(0.5, 1.5);
        const int m = static_cast<int>(rng.index(static_cast<std::uint64_t>(M)));
        const int r = static_cast<int>(std::ceil(3.0 * sigma));
        const int x0 = std::max(0, static_cast<int>(bx) - r), x1 = std::min(size - 1, static_cast<int>(bx) + r);
        const int y0 = std::max(0, static_cast<int>(by) - r), y1 = std::min(size - 1, static_cast<int>(by) + r);
        const double inv = 1.0 / (2.0 * sigma * sigma);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x + 0.5 - bx, dy = y + 0.5 - by;
                ab(m, static_cast<std::size_t>(y) * size + x) += static_cast<float>(amp * std::exp(-(dx * dx + dy * dy) * inv));
            }
    }

    // Illumination texture: 3x3 box-smoothed white noise.
    std::vector<float> noise(plane);
    for (auto& v : noise) v = static_cast<float>(rng.normal());
    std::vector<float> light(plane);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double s = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    s += noise[static_cast<std::size_t>(dsp::mirror_index(y + dy, size)) * size +
                               static_cast<std::size_t>(dsp::mirror_index(x + dx, size))];
            const double l = 1.0 + world.texture * s / 3.0;
            light[static_cast<std::size_t>(y) * size + x] = static_cast<float>(std::clamp(l, 0.5, 1.5));
        }

    const auto spectra = family_spectra(world);
    const auto weights = family_pan_weights(world);
    const double top = std::ldexp(1.0, world.profile.bit_depth) - 1.0;
    SyntheticScene scene;
    scene.gt = MultibandImage(size, size, bands, world.profile.bit_depth);
    scene.pan = MultibandImage(size, size, 1, world.profile.bit_depth);
    for (std::size_t i = 0; i < plane; ++i) {
        double total = 0.0;
        for (int m = 0; m < M; ++m) total += ab(m, i);
        double pan = 0.0;
        for (int b = 0; b < bands; ++b) {
            double v = 0.0;
            for (int m = 0; m < M; ++m) v += ab(m, i) * spectra[static_cast<std::size_t>(m)][static_cast<std::size_t>(b)];
            v = std::clamp(v / total * light[i], 0.0, top);
            scene.gt.band(b)[i] = static_cast<float>(v);
            pan += weights[static_cast<std::size_t>(b)] * scene.gt.band(b)[i];
        }
        scene.pan.band(0)[i] = static_cast<float>(pan);
    }

    std::vector<SeparableKernel> kernels;
    for (double g : world.profile.gnyq_ms) kernels.push_back(dsp::mtf_gaussian_kernel(ratio, g));
    scene.ms = dsp::lowpass_decimate(scene.gt, kernels, ratio);
    return scene;
}

MultibandImage exp_pansharpen(const MultibandImage& ms, int ratio) { return dsp::interp23(ms, ratio); }

MultibandImage gihs_pansharpen(const MultibandImage& ms, const MultibandImage& pan, int ratio) {
    if (pan.bands() != 1) throw BenchError("gihs: pan must have one band");
    if (pan.width() != ms.width() * ratio || pan.height() != ms.height() * ratio)
        throw BenchError("gihs: pan dimensions must equal ms dimensions times the ratio");
    MultibandImage out = dsp::interp23(ms, ratio);
    const auto p = pan.band(0);
    for (std::size_t i = 0; i < out.plane_size(); ++i) {
        double intensity = 0.0;
        for (int b = 0; b < out.bands(); ++b) intensity += out.band(b)[i];
        intensity /= out.bands();
        const float detail = static_cast<float>(p[i] - intensity);
        for (int b = 0; b < out.bands(); ++b) out.band(b)[i] += detail;
    }
    return out;
}

std::vector<TrainingSample> scene_training_set(const WorldModel& world, const NetworkSpec& spec,
                                               std::uint64_t seed, int scenes, int size, int tile, int count) {
    if (scenes < 1) throw BenchError("need at least one training scene");
    std::vector<TrainingSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int s = 0; s < scenes; ++s) {
        const int share = count / scenes + (s < count % scenes ? 1 : 0);
        if (share == 0) continue;
        const auto scene = synth_scene(Rng::mix(seed, static_cast<std::uint64_t>(s)), size, world.profile.bands, world);
        auto part = adapt::wald_training_set(scene.ms, scene.pan, world.profile, spec, tile, share,
                                             Rng::mix(seed, 1000 + static_cast<std::uint64_t>(s)));
        std::move(part.begin(), part.end(), std::back_inserter(out));
    }
    return out;
}

Recipe Recipe::from_config(const KeyValues& kv) {
    Recipe r;
    r.condition = kv.get("condition", r.condition);
    if (r.condition != "favourable" && r.condition != "typical" && r.condition != "challenging")
        throw BenchError("condition must be favourable, typical or challenging, got '" + r.condition + "'");
    r.sensor = kv.get("sensor", r.sensor);
    r.residual = kv.get_bool("residual", r.residual);
    r.augment = kv.get_bool("augment", r.augment);
    r.loss = nn::parse_loss_kind(kv.get("loss", std::string(nn::loss_kind_name(r.loss))));
    r.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(r.seed)));
    r.deterministic = kv.get_bool("deterministic", r.deterministic);
    r.train_scenes = static_cast<int>(kv.get_int("train_scenes", r.train_scenes));
    r.train_size = static_cast<int>(kv.get_int("train_size", r.train_size));
    r.tile = static_cast<int>(kv.get_int("tile", r.tile));
    r.train_tiles = static_cast<int>(kv.get_int("train_tiles", r.train_tiles));
    r.val_tiles = static_cast<int>(kv.get_int("val_tiles", r.val_tiles));
    r.iterations = kv.get_int("iterations", r.iterations);
    r.batch_size = static_cast<int>(kv.get_int("batch_size", r.batch_size));
    r.validation_every = kv.get_int("validation_every", r.validation_every);
    r.learning_rates = parse_rates(kv, "learning_rates");
    r.target_size = static_cast<int>(kv.get_int("target_size", r.target_size));
    r.finetune_iterations = kv.get_int("finetune_iterations", r.finetune_iterations);
    r.finetune_batch_size = static_cast<int>(kv.get_int("finetune_batch_size", r.finetune_batch_size));
    r.finetune_max_tiles = static_cast<int>(kv.get_int("finetune_max_tiles", r.finetune_max_tiles));
    r.finetune_learning_rates = parse_rates(kv, "finetune_learning_rates");
    if (kv.has("variants")) r.variants = kv.get_list("variants");
    return r;
}

KeyValues Recipe::to_config() const {
    KeyValues kv;
    kv.set("condition", condition);
    kv.set("sensor", sensor);
    kv.set("residual", residual ? "true" : "false");
    kv.set("augment", augment ? "true" : "false");
    kv.set("loss", std::string(nn::loss_kind_name(loss)));
    kv.set("seed", std::to_string(seed));
    kv.set("deterministic", deterministic ? "true" : "false");
    kv.set("train_scenes", std::to_string(train_scenes));
    kv.set("train_size", std::to_string(train_size));
    kv.set("tile", std::to_string(tile));
    kv.set("train_tiles", std::to_string(train_tiles));
    kv.set("val_tiles", std::to_string(val_tiles));
    kv.set("iterations", std::to_string(iterations));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("validation_every", std::to_string(validation_every));
    if (!learning_rates.empty()) kv.set("learning_rates", join(learning_rates));
    kv.set("target_size", std::to_string(target_size));
    kv.set("finetune_iterations", std::to_string(finetune_iterations));
    kv.set("finetune_batch_size", std::to_string(finetune_batch_size));
    kv.set("finetune_max_tiles", std::to_string(finetune_max_tiles));
    if (!finetune_learning_rates.empty()) kv.set("finetune_learning_rates", join(finetune_learning_rates));
    std::string v;
    for (std::size_t i = 0; i < variants.size(); ++i) v += (i ? "," : "") + variants[i];
    kv.set("variants", v);
    return kv;
}

WorldModel source_world(const Recipe& recipe) {
    WorldModel w;
    w.profile = dsp::sensor_preset(recipe.sensor);
    w.family = Rng::mix(recipe.seed, 500);
    return w;
}

WorldModel target_world(const Recipe& recipe) {
    WorldModel w = source_world(recipe);
    if (recipe.condition == "typical") {
        // Same materials, different spatial statistics.
        w.cell_size *= 0.5;
        w.blob_density *= 2.0;
        w.texture *= 1.5;
    } else if (recipe.condition == "challenging") {
        // Different spectral mixing and sensor MTF.
        w.family = Rng::mix(recipe.seed, 501);
        Rng rng(Rng::mix(recipe.seed, 502));
        for (auto& g : w.profile.gnyq_ms) g = rng.uniform(0.18, 0.26);
        w.profile.gnyq_pan = 0.11;
        w.profile.name += "-shifted";
    }
    return w;
}

void write_report_csv(const std::vector<std::pair<std::string, QualityReport>>& rows,
                      const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("bench.io", "cannot open " + path.string() + " for writing");
    out << "method," << quality::csv_header() << '\n';
    for (const auto& [name, report] : rows) out << name << ',' << quality::csv_row(report) << '\n';
}

void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("bench.io", "cannot open " + path.string() + " for writing");
    out << "phase,seconds\n";
    out.precision(6);
    out << std::fixed;
    for (const auto& r : rows) out << r.phase << ',' << r.seconds << '\n';
}

ExperimentResult run_experiment(const Recipe& recipe, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    ExperimentResult result;
    auto phase = [&](const std::string& name, Clock::time_point t0) {
        result.timing.push_back({name, recipe.deterministic ? 0.0 : seconds_since(t0)});
    };

    const NetworkSpec spec = nn::table1_spec(recipe.sensor, recipe.residual, recipe.augment);
    const WorldModel src = source_world(recipe);
    const WorldModel tgt = target_world(recipe);
    const int bands = src.profile.bands;
    const int ratio = src.profile.ratio;
    if (recipe.finetune_iterations > 0) {
        // Reduced-scale fine-tuning degrades the target twice.
        const int step = ratio * ratio * ratio;
        if (recipe.target_size % step != 0 || recipe.target_size / (ratio * ratio) < recipe.tile)
            throw BenchError("target_size " + std::to_string(recipe.target_size) + " must be a multiple of " +
                             std::to_string(step) + " and at least " + std::to_string(recipe.tile * ratio * ratio) +
                             " for fine-tuning at reduced scale");
    }

    auto t = Clock::now();
    const auto train_set = scene_training_set(src, spec, Rng::mix(recipe.seed, 1), recipe.train_scenes,
                                              recipe.train_size, recipe.tile, recipe.train_tiles);
    const auto val_scene = synth_scene(Rng::mix(recipe.seed, 2), recipe.train_size, bands, src);
    const auto val_set = adapt::wald_training_set(val_scene.ms, val_scene.pan, src.profile, spec, recipe.tile,
                                                  recipe.val_tiles, Rng::mix(recipe.seed, 3));
    const auto target = synth_scene(Rng::mix(recipe.seed, 4), recipe.target_size, bands, tgt);
    phase("synth", t);

    TrainConfig tc;
    tc.batch_size = recipe.batch_size;
    tc.iterations = recipe.iterations;
    tc.loss = recipe.loss;
    tc.validation_every = recipe.validation_every;
    tc.seed = Rng::mix(recipe.seed, 5);
    tc.learning_rates = recipe.learning_rates;
    t = Clock::now();
    TrainResult trained = optim::train(train_set, spec, tc, val_set);
    phase("pretrain", t);
    if (recipe.deterministic) zero_seconds(trained.history);
    optim::write_history_csv(trained.history, out_dir / "history_pretrain.csv");

    // Fine-tuning only ever sees the image being fused: at reduced scale that is
    // the degraded pair, so the reference stays out of the adaptation.
    const WaldTriplet wald = dsp::wald_degrade(target.ms, target.pan, tgt.profile);
    std::optional<NetworkParams> adapted, adapted_reduced;
    if (recipe.finetune_iterations > 0) {
        FinetuneConfig fc;
        fc.iterations = recipe.finetune_iterations;
        fc.batch_size = recipe.finetune_batch_size;
        fc.max_tiles = recipe.finetune_max_tiles;
        fc.tile = recipe.tile;
        fc.loss = recipe.loss;
        fc.learning_rates = recipe.finetune_learning_rates.empty() ? recipe.learning_rates
                                                                   : recipe.finetune_learning_rates;
        fc.seed = Rng::mix(recipe.seed, 6);
        t = Clock::now();
        adapted_reduced = adapt::finetune(trained.params, spec, wald.ms_lr, wald.pan_lr, tgt.profile, fc);
        phase("finetune_reduced", t);
        t = Clock::now();
        adapted = adapt::finetune(trained.params, spec, target.ms, target.pan, tgt.profile, fc);
        phase("finetune", t);
    }

    auto run_methods = [&](const MultibandImage& ms, const MultibandImage& pan, const std::optional<NetworkParams>& ft,
                           bool timed) {
        std::vector<std::pair<std::string, MultibandImage>> out;
        auto t0 = Clock::now();
        out.emplace_back("EXP", exp_pansharpen(ms, ratio));
        if (timed) phase("pansharpen_exp", t0);
        t0 = Clock::now();
        out.emplace_back("GIHS", gihs_pansharpen(ms, pan, ratio));
        if (timed) phase("pansharpen_gihs", t0);
        t0 = Clock::now();
        out.emplace_back("CNN", adapt::pansharpen(trained.params, spec, ms, pan, tgt.profile));
        if (timed) phase("pansharpen_cnn", t0);
        if (ft) {
            t0 = Clock::now();
            out.emplace_back("CNN-FT", adapt::pansharpen(*ft, spec, ms, pan, tgt.profile));
            if (timed) phase("pansharpen_cnn_ft", t0);
        }
        return out;
    };

    t = Clock::now();
    for (const auto& [name, fused] : run_methods(wald.ms_lr, wald.pan_lr, adapted_reduced, false))
        result.reduced.emplace_back(name, quality::evaluate_reduced(fused, wald.reference, ratio));
    phase("evaluate_reduced", t);

    const auto full = run_methods(target.ms, target.pan, adapted, true);
    t = Clock::now();
    for (const auto& [name, fused] : full) {
        result.full.emplace_back(name, quality::evaluate_full(fused, target.ms, target.pan, tgt.profile));
        std::string file = "preview_" + name + ".ppm";
        std::replace(file.begin(), file.end(), '-', '_');
        raster::export_rgb_preview(fused, rgb_bands(bands), 2.0, 98.0, out_dir / file);
    }
    raster::export_rgb_preview(target.gt, rgb_bands(bands), 2.0, 98.0, out_dir / "preview_reference.ppm");
    phase("evaluate_full", t);

    write_report_csv(result.reduced, out_dir / "report_reduced.csv");
    write_report_csv(result.full, out_dir / "report_full.csv");
    write_timing_csv(result.timing, out_dir / "timing.csv");
    return result;
}

std::map<std::string, HistoryRow> loss_study(const Recipe& recipe, const std::filesystem::path& out_dir,
                                             std::map<std::string, NetworkParams>* trained) {
    std::filesystem::create_directories(out_dir);
    const WorldModel world = source_world(recipe);
    std::map<std::string, HistoryRow> finals;
    for (const auto& variant : recipe.variants) {
        bool residual = false;
        LossKind loss;
        if (variant == "l1rl") {
            residual = true;
            loss = LossKind::l1;
        } else {
            loss = nn::parse_loss_kind(variant);
        }
        const NetworkSpec spec = nn::table1_spec(recipe.sensor, residual, recipe.augment);
        // Same seeds for every variant: identical tile positions and initialization.
        const auto train_set = scene_training_set(world, spec, Rng::mix(recipe.seed, 1), recipe.train_scenes,
                                                  recipe.train_size, recipe.tile, recipe.train_tiles);
        const auto val_scene = synth_scene(Rng::mix(recipe.seed, 2), recipe.train_size, world.profile.bands, world);
        const auto val_set = adapt::wald_training_set(val_scene.ms, val_scene.pan, world.profile, spec, recipe.tile,
                                                      recipe.val_tiles, Rng::mix(recipe.seed, 3));
        TrainConfig tc;
        tc.batch_size = recipe.batch_size;
        tc.iterations = recipe.iterations;
        tc.loss = loss;
        tc.validation_every = recipe.validation_every;
        tc.seed = Rng::mix(recipe.seed, 5);
        tc.learning_rates = recipe.learning_rates;
        TrainResult r = optim::train(train_set, spec, tc, val_set);
        if (recipe.deterministic) zero_seconds(r.history);
        optim::write_history_csv(r.history, out_dir / ("history_" + variant + ".csv"));
        if (!r.history.empty()) finals[variant] = r.history.back();
        if (trained) (*trained)[variant] = std::move(r.params);
    }
    return finals;
}

}  // namespace pnn::bench
