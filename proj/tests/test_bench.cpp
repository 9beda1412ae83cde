#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pnn/bench.hpp"
#include "support.hpp"

using namespace pnn;

TEST_CASE("synth: determinism and shapes") {
    const WorldModel world;
    const auto a = bench::synth_scene(7, 128, 4, world);
    const auto b = bench::synth_scene(7, 128, 4, world);
    CHECK(a.ms == b.ms);
    CHECK(a.pan == b.pan);
    CHECK(a.gt == b.gt);
    CHECK_FALSE(bench::synth_scene(8, 128, 4, world).pan == a.pan);
    CHECK(a.pan.width() == a.ms.width() * 4);
    CHECK(a.pan.height() == a.ms.height() * 4);
    CHECK(a.pan.bands() == 1);
    CHECK(a.gt.width() == 128);
    CHECK(a.gt.bands() == 4);
    for (float v : a.gt.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 2047.0f);
    }
    CHECK_THROWS_AS(bench::synth_scene(7, 130, 4, world), BenchError);
    CHECK_THROWS_AS(bench::synth_scene(7, 128, 8, world), BenchError);

    WorldModel wv3;
    wv3.profile = dsp::sensor_preset("wv3");
    CHECK(bench::synth_scene(1, 64, 8, wv3).ms.bands() == 8);
}

TEST_CASE("synth: ground truth degrades to the emitted MS and PAN is a positive mix") {
    const WorldModel world;
    const auto s = bench::synth_scene(3, 128, 4, world);
    // Only the MS branch matters here; PAN is a placeholder of the right size.
    const auto w = dsp::wald_degrade(s.gt, MultibandImage(512, 512, 1), world.profile);
    CHECK(w.ms_lr == s.ms);

    const auto weights = bench::family_pan_weights(world);
    double total = 0.0;
    for (double v : weights) {
        CHECK(v > 0.0);
        total += v;
    }
    CHECK(total == doctest::Approx(1.0));
    for (std::size_t i = 0; i < s.pan.plane_size(); i += 97) {
        double p = 0.0;
        for (int b = 0; b < 4; ++b) p += weights[static_cast<std::size_t>(b)] * s.gt.band(b)[i];
        CHECK(s.pan.band(0)[i] == doctest::Approx(p).epsilon(1e-5));
    }

    const auto id = quality::evaluate_reduced(s.gt, s.gt, 4);
    CHECK(id.sam_deg == 0.0);
    CHECK(id.q_avg == doctest::Approx(1.0));
}

TEST_CASE("gihs") {
    // Single band on 4 pixels: the MS structure is replaced by PAN.
    MultibandImage ms(1, 1, 1, 11, 10.0f);
    MultibandImage pan(2, 2, 1);
    pan.band(0)[0] = 8.0f;
    pan.band(0)[1] = 12.0f;
    pan.band(0)[2] = 9.0f;
    pan.band(0)[3] = 11.0f;
    const auto out = bench::gihs_pansharpen(ms, pan, 2);
    for (int i = 0; i < 4; ++i) CHECK(out.band(0)[static_cast<std::size_t>(i)] == doctest::Approx(pan.band(0)[static_cast<std::size_t>(i)]));

    Rng rng(2);
    const auto m = testing::random_image(rng, 16, 16, 4);
    const auto u = dsp::interp23(m, 4);
    MultibandImage intensity(64, 64, 1);
    for (std::size_t i = 0; i < u.plane_size(); ++i) {
        double s = 0.0;
        for (int b = 0; b < 4; ++b) s += u.band(b)[i];
        intensity.band(0)[i] = static_cast<float>(s / 4.0);
    }
    const auto same = bench::gihs_pansharpen(m, intensity, 4);
    CHECK(same.data().size() == u.data().size());
    for (std::size_t i = 0; i < u.size(); ++i) CHECK(std::abs(same.data()[i] - u.data()[i]) <= 1e-3f);

    const auto p = testing::random_image(rng, 64, 64, 1);
    const auto g = bench::gihs_pansharpen(m, p, 4);
    for (std::size_t i = 0; i < g.plane_size(); i += 31) {
        double s = 0.0;
        for (int b = 0; b < 4; ++b) s += g.band(b)[i];
        CHECK(s / 4.0 == doctest::Approx(p.band(0)[i]).epsilon(1e-5));
    }
    CHECK_THROWS_AS(bench::gihs_pansharpen(m, testing::random_image(rng, 60, 64, 1), 4), BenchError);
    CHECK(bench::exp_pansharpen(m, 4) == u);
}

TEST_CASE("worlds: source and target") {
    bench::Recipe r;
    r.seed = 5;
    r.condition = "favourable";
    const auto src = bench::source_world(r);
    const auto fav = bench::target_world(r);
    CHECK(fav.family == src.family);
    CHECK(fav.profile == src.profile);
    CHECK(bench::family_spectra(fav) == bench::family_spectra(src));

    r.condition = "typical";
    const auto typ = bench::target_world(r);
    CHECK(typ.family == src.family);
    CHECK(typ.cell_size < src.cell_size);

    r.condition = "challenging";
    const auto ch = bench::target_world(r);
    CHECK(ch.family != src.family);
    CHECK(bench::family_spectra(ch) != bench::family_spectra(src));
    CHECK(ch.profile.gnyq_ms != src.profile.gnyq_ms);
    ch.profile.validate();
}

TEST_CASE("recipe: config round trip") {
    bench::Recipe r;
    r.condition = "challenging";
    r.sensor = "wv2";
    r.residual = false;
    r.augment = true;
    r.loss = LossKind::sam;
    r.seed = 42;
    r.iterations = 123;
    r.learning_rates = {1e-2, 2e-3, 5e-4};
    r.variants = {"l1rl", "sid"};
    r.finetune_max_tiles = 77;
    const auto kv = r.to_config();
    const auto back = bench::Recipe::from_config(KeyValues::parse(kv.to_string()));
    CHECK(back.to_config().to_string() == kv.to_string());
    CHECK(back.sensor == "wv2");
    CHECK(back.learning_rates == r.learning_rates);
    CHECK(back.variants == r.variants);
    CHECK(back.loss == LossKind::sam);
    CHECK_THROWS_AS(bench::Recipe::from_config(KeyValues::parse("condition=stormy\n")), Error);
}

TEST_CASE("scene training set") {
    const WorldModel world;
    const auto spec = nn::table1_spec("ge1", true);
    const auto a = bench::scene_training_set(world, spec, 1, 2, 256, 33, 50);
    REQUIRE(a.size() == 50);
    const auto b = bench::scene_training_set(world, spec, 1, 2, 256, 33, 50);
    for (std::size_t i = 0; i < a.size(); i += 7) CHECK(a[i].input == b[i].input);
    CHECK(a.front().input.bands() == 5);
    CHECK(a.front().target_kind == TargetKind::residual);
}

TEST_CASE("report files") {
    const auto dir = std::filesystem::temp_directory_path() / "pnn_tests";
    std::filesystem::create_directories(dir);
    QualityReport q;
    q.sam_deg = 1.5;
    bench::write_report_csv({{"EXP", q}}, dir / "r.csv");
    std::ifstream in(dir / "r.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "method,SAM,ERGAS,Q,Q2n,Dlambda,Ds,QNR");
    CHECK(row == "EXP,1.500000,nan,nan,nan,nan,nan,nan");

    bench::write_timing_csv({{"pretrain", 2.5}}, dir / "t.csv");
    std::ifstream t(dir / "t.csv");
    std::getline(t, header);
    CHECK(header.rfind("phase", 0) == 0);
}

TEST_CASE("run_experiment rejects targets too small for reduced-scale fine-tuning") {
    const auto dir = std::filesystem::temp_directory_path() / "pnn_tests" / "small_target";
    bench::Recipe r;
    for (int size : {528, 512, 600}) {
        r.target_size = size;
        CAPTURE(size);
        CHECK_THROWS_AS(bench::run_experiment(r, dir), BenchError);
    }
}
