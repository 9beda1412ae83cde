#include "pnn/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>

#include "pnn/adapt.hpp"
#include "pnn/bench.hpp"
#include "pnn/dsp.hpp"
#include "pnn/nn.hpp"
#include "pnn/optim.hpp"
#include "pnn/parallel.hpp"
#include "pnn/quality.hpp"
#include "pnn/random.hpp"
#include "pnn/raster.hpp"

namespace pnn::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
    std::uint64_t seed = 1;
    bool deterministic = false;
    std::string profile;
    int threads = 1;
};

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return s;
}

SensorProfile resolve_profile(const Globals& g, const std::string& sensor) {
    SensorProfile p = g.profile.empty() ? dsp::sensor_preset(sensor) : dsp::read_profile(g.profile);
    p.validate();
    return p;
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw Error("cli.missing_file", what + " '" + path + "' does not exist");
}

MultibandImage load(const std::string& path, const std::string& what) {
    require_file(path, what);
    return raster::read_raster(path);
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void zero_seconds(std::vector<HistoryRow>& rows) {
    for (auto& r : rows) r.seconds = 0.0;
}

// ---- dataset directory: tiles stacked vertically in one raster per role ----

MultibandImage stack_tiles(const std::vector<TrainingSample>& samples, bool inputs) {
    const auto& first = inputs ? samples.front().input : samples.front().target;
    const int tile = first.width();
    MultibandImage out(tile, tile * static_cast<int>(samples.size()), first.bands(), first.bit_depth());
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto& src = inputs ? samples[k].input : samples[k].target;
        for (int b = 0; b < src.bands(); ++b)
            std::copy(src.band(b).begin(), src.band(b).end(),
                      out.band(b).begin() + static_cast<std::ptrdiff_t>(k * src.plane_size()));
    }
    return out;
}

std::vector<TrainingSample> unstack_tiles(const MultibandImage& inputs, const MultibandImage& targets, int tile,
                                          TargetKind kind) {
    if (inputs.width() != tile || targets.width() != tile || inputs.height() != targets.height() ||
        inputs.height() % tile != 0)
        throw Error("cli.dataset", "dataset rasters do not hold whole " + std::to_string(tile) + "-pixel tiles");
    std::vector<TrainingSample> out;
    const int count = inputs.height() / tile;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k)
        out.push_back({raster::crop(inputs, 0, k * tile, tile, tile), raster::crop(targets, 0, k * tile, tile, tile), kind});
    return out;
}

struct Dataset {
    KeyValues meta;
    std::vector<TrainingSample> train, val;
};

Dataset read_dataset(const fs::path& dir) {
    require_file((dir / "meta.txt").string(), "dataset metadata");
    Dataset d;
    d.meta = KeyValues::read(dir / "meta.txt");
    const int tile = static_cast<int>(d.meta.get_int("tile"));
    const TargetKind kind = d.meta.get("target_kind") == "residual" ? TargetKind::residual : TargetKind::full;
    d.train = unstack_tiles(load((dir / "train_input.mbir").string(), "dataset input"),
                            load((dir / "train_target.mbir").string(), "dataset target"), tile, kind);
    if (fs::exists(dir / "val_input.mbir"))
        d.val = unstack_tiles(load((dir / "val_input.mbir").string(), "validation input"),
                              load((dir / "val_target.mbir").string(), "validation target"), tile, kind);
    return d;
}

NetworkSpec network_spec(const std::string& sensor, const SensorProfile& profile, bool residual, bool augment,
                         int depth, int features, int kernel) {
    if (depth <= 0) return nn::table1_spec(sensor, residual, augment);
    return nn::deep_spec(profile.bands, depth, features, kernel, kernel, residual,
                         augment ? static_cast<int>(profile.indices.size()) : 0);
}

std::string default_sensor(int bands) { return bands == 8 ? "wv3" : "ge1"; }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Residual CNN pansharpening toolkit", "pnn"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_flag("--deterministic", g.deterministic, "Bit-reproducible outputs (wall-clock fields written as 0)");
    app.add_option("--profile", g.profile, "Sensor profile file (key=value); overrides --sensor presets");
    app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic scene (ms.mbir, pan.mbir, gt.mbir)");
    int synth_size = 256, synth_bands = 4;
    std::string synth_sensor, synth_out;
    std::uint64_t synth_family = 1;
    synth->add_option("--size", synth_size, "PAN size in pixels")->capture_default_str();
    synth->add_option("--bands", synth_bands, "MS band count")->capture_default_str();
    synth->add_option("--sensor", synth_sensor, "Sensor preset (ik, ge1, wv2, wv3); default by band count");
    synth->add_option("--family", synth_family, "World-model family (spectra and PAN response)")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory")->required();

    // make-dataset
    auto* mkds = app.add_subcommand("make-dataset", "Build Wald-protocol training tiles from a scene");
    std::string ds_ms, ds_pan, ds_val_ms, ds_val_pan, ds_sensor = "ge1", ds_out;
    int ds_tile = 33, ds_count = 2000, ds_val_count = 200;
    bool ds_residual = false, ds_augment = false;
    mkds->add_option("--ms", ds_ms, "MS raster")->required();
    mkds->add_option("--pan", ds_pan, "PAN raster")->required();
    mkds->add_option("--val-ms", ds_val_ms, "Validation MS raster (default: the training scene)");
    mkds->add_option("--val-pan", ds_val_pan, "Validation PAN raster");
    mkds->add_option("--sensor", ds_sensor, "Sensor preset")->capture_default_str();
    mkds->add_flag("--residual", ds_residual, "Store residual targets");
    mkds->add_flag("--augment", ds_augment, "Add radiometric index channels");
    mkds->add_option("--tile", ds_tile, "Tile size")->capture_default_str();
    mkds->add_option("--count", ds_count, "Training tiles")->capture_default_str();
    mkds->add_option("--val-count", ds_val_count, "Validation tiles")->capture_default_str();
    mkds->add_option("--out", ds_out, "Output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "Train a network on a dataset directory");
    std::string tr_dataset, tr_sensor = "ge1", tr_loss = "l1", tr_out, tr_history;
    bool tr_residual = false, tr_augment = false;
    long long tr_iters = 1000, tr_val_every = 100;
    int tr_batch = 128, tr_depth = 0, tr_features = 64, tr_kernel = 3;
    double tr_momentum = 0.9, tr_budget = 0.0;
    std::vector<double> tr_lr;
    std::string tr_init;
    train->add_option("--dataset", tr_dataset, "Dataset directory")->required();
    train->add_option("--sensor", tr_sensor, "Sensor preset selecting the layer table")->capture_default_str();
    train->add_option("--loss", tr_loss, "Loss: l2, l1, sam, sid")->capture_default_str();
    train->add_flag("--residual", tr_residual, "Residual learning (skip connection)");
    train->add_flag("--augment", tr_augment, "Radiometric index input channels");
    train->add_option("--iters", tr_iters, "Iterations")->capture_default_str();
    train->add_option("--batch", tr_batch, "Batch size")->capture_default_str();
    train->add_option("--lr", tr_lr, "Learning rate(s): one value or one per layer")->delimiter(',');
    train->add_option("--momentum", tr_momentum, "Momentum")->capture_default_str();
    train->add_option("--time-budget", tr_budget, "Stop after this many seconds (0 = off)")->capture_default_str();
    train->add_option("--val-every", tr_val_every, "Validation cadence in iterations")->capture_default_str();
    train->add_option("--depth", tr_depth, "Deep network depth (0 = three-layer table)")->capture_default_str();
    train->add_option("--features", tr_features, "Deep network feature maps")->capture_default_str();
    train->add_option("--kernel", tr_kernel, "Deep network kernel size")->capture_default_str();
    train->add_option("--init", tr_init, "Start from this checkpoint");
    train->add_option("--history", tr_history, "History CSV path (default: <out>.history.csv)");
    train->add_option("--out", tr_out, "Output checkpoint")->required();

    // finetune
    auto* ft = app.add_subcommand("finetune", "Adapt a checkpoint to a target image");
    std::string ft_ckpt, ft_ms, ft_pan, ft_out, ft_sensor = "ge1", ft_loss = "l1";
    FinetuneConfig ft_cfg;
    std::vector<double> ft_lr;
    ft->add_option("--checkpoint", ft_ckpt, "Input checkpoint")->required();
    ft->add_option("--target-ms", ft_ms, "Target MS raster")->required();
    ft->add_option("--target-pan", ft_pan, "Target PAN raster")->required();
    ft->add_option("--out", ft_out, "Output checkpoint")->required();
    ft->add_option("--sensor", ft_sensor, "Sensor preset")->capture_default_str();
    ft->add_option("--iters", ft_cfg.iterations, "Iterations")->capture_default_str();
    ft->add_option("--batch", ft_cfg.batch_size, "Batch size")->capture_default_str();
    ft->add_option("--max-tiles", ft_cfg.max_tiles, "Tile pool cap")->capture_default_str();
    ft->add_option("--tile", ft_cfg.tile, "Tile size")->capture_default_str();
    ft->add_option("--loss", ft_loss, "Loss: l2, l1, sam, sid")->capture_default_str();
    ft->add_option("--lr", ft_lr, "Learning rate(s)")->delimiter(',');

    // pansharpen
    auto* ps = app.add_subcommand("pansharpen", "Fuse MS and PAN with a checkpoint");
    std::string ps_ckpt, ps_ms, ps_pan, ps_out, ps_sensor = "ge1", ps_preview;
    int ps_tile = 0, ps_overlap = 24;
    std::vector<int> ps_bands{2, 1, 0};
    double ps_low = 2.0, ps_high = 98.0;
    ps->add_option("--checkpoint", ps_ckpt, "Checkpoint")->required();
    ps->add_option("--ms", ps_ms, "MS raster")->required();
    ps->add_option("--pan", ps_pan, "PAN raster")->required();
    ps->add_option("--out", ps_out, "Fused raster")->required();
    ps->add_option("--sensor", ps_sensor, "Sensor preset")->capture_default_str();
    ps->add_option("--tile", ps_tile, "Tile size (0 = whole image)")->capture_default_str();
    ps->add_option("--overlap", ps_overlap, "Tile overlap")->capture_default_str();
    ps->add_option("--preview", ps_preview, "Also write an RGB preview (PPM)");
    ps->add_option("--preview-bands", ps_bands, "Preview band triplet")->delimiter(',')->expected(3);
    ps->add_option("--low-pct", ps_low, "Preview low percentile")->capture_default_str();
    ps->add_option("--high-pct", ps_high, "Preview high percentile")->capture_default_str();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Quality indices as one CSV row");
    std::string ev_mode = "reduced", ev_fused, ev_ref, ev_ms, ev_pan, ev_sensor = "ge1";
    int ev_ratio = 4, ev_block = quality::kDefaultBlock, ev_lr_block = 0;
    ev->add_option("--mode", ev_mode, "reduced or full")->check(CLI::IsMember({"reduced", "full"}))->capture_default_str();
    ev->add_option("--fused", ev_fused, "Fused raster")->required();
    ev->add_option("--ref", ev_ref, "Reference raster (reduced mode)");
    ev->add_option("--ratio", ev_ratio, "Resolution ratio (reduced mode)")->capture_default_str();
    ev->add_option("--ms", ev_ms, "Low-resolution MS (full mode)");
    ev->add_option("--pan", ev_pan, "PAN (full mode)");
    ev->add_option("--sensor", ev_sensor, "Sensor preset (full mode)")->capture_default_str();
    ev->add_option("--block", ev_block, "Quality window size")->capture_default_str();
    ev->add_option("--lr-block", ev_lr_block, "Window on the MS grid in full mode (0 = same ground footprint)")
        ->capture_default_str();

    // compare
    auto* cmp = app.add_subcommand("compare", "Run a synthetic experiment and write report files");
    std::string cmp_recipe, cmp_condition, cmp_out;
    cmp->add_option("--recipe", cmp_recipe, "Recipe file (key=value)");
    cmp->add_option("--condition", cmp_condition, "favourable, typical or challenging");
    cmp->add_option("--out", cmp_out, "Run directory")->required();

    // loss-study
    auto* ls = app.add_subcommand("loss-study", "Train loss variants and write their histories");
    std::string ls_recipe, ls_out;
    ls->add_option("--recipe", ls_recipe, "Recipe file (key=value)");
    ls->add_option("--out", ls_out, "Run directory")->required();

    // kernel
    auto* kern = app.add_subcommand("kernel", "Print filter coefficients, one per line");
    std::string k_type = "mtf";
    int k_ratio = 4, k_size = dsp::kMtfKernelSize;
    double k_gnyq = 0.3;
    kern->add_option("--type", k_type, "mtf or interp23")->check(CLI::IsMember({"mtf", "interp23"}))->capture_default_str();
    kern->add_option("--ratio", k_ratio, "Resolution ratio")->capture_default_str();
    kern->add_option("--gnyq", k_gnyq, "Gain at Nyquist")->capture_default_str();
    kern->add_option("--size", k_size, "Taps")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: cli.usage: " << one_line(e.what()) << '\n';
        return 2;
    }

    try {
        set_thread_count(g.threads);
        if (*synth) {
            const std::string sensor = synth_sensor.empty() ? default_sensor(synth_bands) : synth_sensor;
            WorldModel world;
            world.profile = resolve_profile(g, sensor);
            world.family = synth_family;
            const auto scene = bench::synth_scene(g.seed, synth_size, synth_bands, world);
            fs::create_directories(synth_out);
            raster::write_raster(scene.ms, fs::path(synth_out) / "ms.mbir");
            raster::write_raster(scene.pan, fs::path(synth_out) / "pan.mbir");
            raster::write_raster(scene.gt, fs::path(synth_out) / "gt.mbir");
        } else if (*mkds) {
            const SensorProfile profile = resolve_profile(g, ds_sensor);
            const NetworkSpec spec = nn::table1_spec(ds_sensor, ds_residual, ds_augment);
            const auto ms = load(ds_ms, "MS"), pan = load(ds_pan, "PAN");
            const auto train_set =
                adapt::wald_training_set(ms, pan, profile, spec, ds_tile, ds_count, Rng::mix(g.seed, 1));
            std::vector<TrainingSample> val_set;
            if (ds_val_count > 0) {
                if (ds_val_ms.empty() != ds_val_pan.empty())
                    throw Error("cli.usage", "--val-ms and --val-pan must be given together");
                const auto vms = ds_val_ms.empty() ? ms : load(ds_val_ms, "validation MS");
                const auto vpan = ds_val_pan.empty() ? pan : load(ds_val_pan, "validation PAN");
                val_set = adapt::wald_training_set(vms, vpan, profile, spec, ds_tile, ds_val_count, Rng::mix(g.seed, 2));
            }
            const fs::path dir(ds_out);
            fs::create_directories(dir);
            raster::write_raster(stack_tiles(train_set, true), dir / "train_input.mbir");
            raster::write_raster(stack_tiles(train_set, false), dir / "train_target.mbir");
            if (!val_set.empty()) {
                raster::write_raster(stack_tiles(val_set, true), dir / "val_input.mbir");
                raster::write_raster(stack_tiles(val_set, false), dir / "val_target.mbir");
            }
            KeyValues meta;
            meta.set("tile", std::to_string(ds_tile));
            meta.set("count", std::to_string(ds_count));
            meta.set("val_count", std::to_string(val_set.size()));
            meta.set("target_kind", ds_residual ? "residual" : "full");
            meta.set("sensor", ds_sensor);
            meta.set("augment", ds_augment ? "true" : "false");
            meta.set("input_bands", std::to_string(spec.input.total()));
            meta.set("target_bands", std::to_string(spec.output_channels()));
            meta.write(dir / "meta.txt");
        } else if (*train) {
            if (g.deterministic && tr_budget > 0.0)
                throw Error("cli.conflict", "--time-budget cannot be combined with --deterministic");
            const SensorProfile profile = resolve_profile(g, tr_sensor);
            const Dataset ds = read_dataset(tr_dataset);
            const bool residual_data = ds.meta.get("target_kind") == "residual";
            if (residual_data != tr_residual)
                throw Error("cli.dataset", std::string("dataset holds ") + (residual_data ? "residual" : "full") +
                                               " targets; pass --residual accordingly");
            const NetworkSpec spec =
                network_spec(tr_sensor, profile, tr_residual, tr_augment, tr_depth, tr_features, tr_kernel);
            TrainConfig tc;
            tc.batch_size = tr_batch;
            tc.iterations = tr_iters;
            tc.time_budget_seconds = tr_budget;
            tc.loss = nn::parse_loss_kind(tr_loss);
            tc.validation_every = tr_val_every;
            tc.seed = g.seed;
            tc.momentum = tr_momentum;
            tc.learning_rates = tr_lr;
            std::optional<NetworkParams> init;
            if (!tr_init.empty()) {
                require_file(tr_init, "initial checkpoint");
                init = optim::load_checkpoint(tr_init, spec).params;
            }
            TrainResult r = optim::train(ds.train, spec, tc, ds.val, init);
            if (g.deterministic) zero_seconds(r.history);
            ensure_parent(tr_out);
            optim::save_checkpoint(r.params, spec, tr_out);
            optim::write_history_csv(r.history, tr_history.empty() ? tr_out + ".history.csv" : tr_history);
        } else if (*ft) {
            require_file(ft_ckpt, "checkpoint");
            const auto ck = optim::load_checkpoint(ft_ckpt);
            const SensorProfile profile = resolve_profile(g, ft_sensor);
            ft_cfg.loss = nn::parse_loss_kind(ft_loss);
            ft_cfg.learning_rates = ft_lr;
            ft_cfg.seed = g.seed;
            const auto adapted = adapt::finetune(ck.params, ck.spec, load(ft_ms, "target MS"),
                                                 load(ft_pan, "target PAN"), profile, ft_cfg);
            ensure_parent(ft_out);
            optim::save_checkpoint(adapted, ck.spec, ft_out);
        } else if (*ps) {
            require_file(ps_ckpt, "checkpoint");
            const auto ck = optim::load_checkpoint(ps_ckpt);
            const SensorProfile profile = resolve_profile(g, ps_sensor);
            const auto ms = load(ps_ms, "MS"), pan = load(ps_pan, "PAN");
            const MultibandImage fused =
                ps_tile > 0 ? adapt::pansharpen_tiled(ck.params, ck.spec, ms, pan, profile, ps_tile, ps_overlap)
                            : adapt::pansharpen(ck.params, ck.spec, ms, pan, profile);
            ensure_parent(ps_out);
            raster::write_raster(fused, ps_out);
            if (!ps_preview.empty())
                raster::export_rgb_preview(fused, {ps_bands[0], ps_bands[1], ps_bands[2]}, ps_low, ps_high, ps_preview);
        } else if (*ev) {
            const auto fused = load(ev_fused, "fused");
            QualityReport report;
            if (ev_mode == "reduced") {
                if (ev_ref.empty()) throw Error("cli.usage", "--mode reduced needs --ref");
                report = quality::evaluate_reduced(fused, load(ev_ref, "reference"), ev_ratio, ev_block);
            } else {
                if (ev_ms.empty() || ev_pan.empty()) throw Error("cli.usage", "--mode full needs --ms and --pan");
                report = quality::evaluate_full(fused, load(ev_ms, "MS"), load(ev_pan, "PAN"),
                                                resolve_profile(g, ev_sensor), ev_block, ev_lr_block);
            }
            out << quality::csv_header() << '\n' << quality::csv_row(report) << '\n';
        } else if (*cmp || *ls) {
            const std::string& recipe_path = *cmp ? cmp_recipe : ls_recipe;
            KeyValues kv;
            if (!recipe_path.empty()) {
                require_file(recipe_path, "recipe");
                kv = KeyValues::read(recipe_path);
            }
            if (!kv.has("seed")) kv.set("seed", std::to_string(g.seed));
            if (*cmp && !cmp_condition.empty()) kv.set("condition", cmp_condition);
            bench::Recipe recipe = bench::Recipe::from_config(kv);
            recipe.deterministic = recipe.deterministic || g.deterministic;
            if (*cmp) {
                const auto res = bench::run_experiment(recipe, cmp_out);
                out << "method," << quality::csv_header() << '\n';
                for (const auto& [name, report] : res.reduced) out << name << ',' << quality::csv_row(report) << '\n';
            } else {
                const auto finals = bench::loss_study(recipe, ls_out);
                out << "variant,iteration,loss,mse,mae\n";
                for (const auto& [name, row] : finals)
                    out << name << ',' << row.iteration << ',' << row.loss << ',' << row.val_mse << ',' << row.val_mae
                        << '\n';
            }
        } else if (*kern) {
            std::vector<double> taps = k_type == "mtf" ? dsp::mtf_gaussian_kernel(k_ratio, k_gnyq, k_size).taps
                                                       : dsp::interp23_kernel();
            out.precision(17);
            for (double t : taps) out << t << '\n';
        }
    } catch (const Error& e) {
        err << "error: " << e.code() << ": " << one_line(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: internal: " << one_line(e.what()) << '\n';
        return 1;
    }
    return 0;
}

}  // namespace pnn::cli
