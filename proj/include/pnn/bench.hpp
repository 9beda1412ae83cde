#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pnn/dsp.hpp"
#include "pnn/keyvalue.hpp"
#include "pnn/nn.hpp"
#include "pnn/optim.hpp"
#include "pnn/quality.hpp"
#include "pnn/raster.hpp"

namespace pnn {

// Generator settings for synthetic scenes. `family` fixes the material
// spectra and PAN response; the scene seed only moves the spatial layout.
struct WorldModel {
    SensorProfile profile = dsp::sensor_preset("ge1");
    std::uint64_t family = 1;
    int materials = 6;
    double cell_size = 24.0;       // mean side of the piecewise-constant regions, PAN pixels
    double blob_density = 1.0;     // Gaussian blobs per 400 PAN pixels
    double texture = 0.12;         // relative amplitude of the fine illumination texture
    double spectrum_low = 150.0;   // material radiance range, DN
    double spectrum_high = 1400.0;
};

struct SyntheticScene {
    MultibandImage ms;   // MTF-degraded, size / ratio
    MultibandImage pan;  // size x size
    MultibandImage gt;   // ground-truth MS at PAN resolution
};

class BenchError : public Error {
public:
    explicit BenchError(const std::string& what) : Error("bench.invalid", what) {}
};

namespace bench {

// `bands` must equal world.profile.bands; size must be a multiple of the ratio.
SyntheticScene synth_scene(std::uint64_t seed, int size, int bands, const WorldModel& world);

// Material spectra (materials x bands) and PAN weights (bands) of a family.
std::vector<std::vector<double>> family_spectra(const WorldModel& world);
std::vector<double> family_pan_weights(const WorldModel& world);

// u = interp23(ms); out_b = u_b + (pan - mean_b u_b)
MultibandImage gihs_pansharpen(const MultibandImage& ms, const MultibandImage& pan, int ratio);

// Plain interpolation baseline.
MultibandImage exp_pansharpen(const MultibandImage& ms, int ratio);

// Training pairs drawn from several scenes of one world.
std::vector<TrainingSample> scene_training_set(const WorldModel& world, const NetworkSpec& spec,
                                               std::uint64_t seed, int scenes, int size, int tile, int count);

struct Recipe {
    std::string condition = "favourable";  // favourable | typical | challenging
    std::string sensor = "ge1";
    bool residual = true;
    bool augment = false;
    LossKind loss = LossKind::l1;
    std::uint64_t seed = 1;
    bool deterministic = false;

    int train_scenes = 2;
    int train_size = 256;
    int tile = 33;
    int train_tiles = 2000;
    int val_tiles = 200;
    long long iterations = 400;
    int batch_size = 32;
    long long validation_every = 50;
    std::vector<double> learning_rates;

    int target_size = 1024;
    long long finetune_iterations = 50;
    int finetune_batch_size = 32;
    int finetune_max_tiles = 4096;
    std::vector<double> finetune_learning_rates;  // empty = the pre-training rates

    // Extra variants for loss_study: any of l2, l1, l1rl, sam, sid.
    std::vector<std::string> variants{"l2", "l1", "l1rl"};

    static Recipe from_config(const KeyValues& kv);
    KeyValues to_config() const;
};

// World models used for the source and the target of an experiment.
WorldModel source_world(const Recipe& recipe);
WorldModel target_world(const Recipe& recipe);

struct TimingRow {
    std::string phase;
    double seconds = 0.0;
};

struct ExperimentResult {
    std::vector<std::pair<std::string, QualityReport>> reduced;  // method, report
    std::vector<std::pair<std::string, QualityReport>> full;
    std::vector<TimingRow> timing;
};

// Writes report_reduced.csv, report_full.csv, history_*.csv, preview_*.ppm
// and timing.csv under out_dir.
ExperimentResult run_experiment(const Recipe& recipe, const std::filesystem::path& out_dir);

// One history_<variant>.csv per variant; returns the final validation rows.
// If `trained` is given it receives the parameters of every variant.
std::map<std::string, HistoryRow> loss_study(const Recipe& recipe, const std::filesystem::path& out_dir,
                                             std::map<std::string, NetworkParams>* trained = nullptr);

void write_report_csv(const std::vector<std::pair<std::string, QualityReport>>& rows,
                      const std::filesystem::path& path);
void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path);

}  // namespace bench
}  // namespace pnn
