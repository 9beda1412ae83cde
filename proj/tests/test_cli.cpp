#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pnn/cli.hpp"
#include "pnn/raster.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = pnn::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "pnn_cli_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

const std::vector<std::string> kSubcommands{"synth",    "make-dataset", "train",      "finetune", "pansharpen",
                                            "evaluate", "compare",      "loss-study", "kernel"};

}  // namespace

TEST_CASE("cli: help matches the golden files") {
    const fs::path golden = PNN_GOLDEN_DIR;
    auto top = run({"--help"});
    CHECK(top.code == 0);
    CHECK(top.out == slurp(golden / "help.txt"));
    for (const auto& s : kSubcommands) {
        CAPTURE(s);
        const auto r = run({s, "--help"});
        CHECK(r.code == 0);
        CHECK(r.out == slurp(golden / ("help_" + s + ".txt")));
    }
}

TEST_CASE("cli: help enumerates every flag") {
    const std::vector<std::pair<std::string, std::vector<std::string>>> flags{
        {"", {"--seed", "--deterministic", "--profile", "--threads"}},
        {"synth", {"--size", "--bands", "--sensor", "--family", "--out"}},
        {"make-dataset",
         {"--ms", "--pan", "--val-ms", "--val-pan", "--sensor", "--residual", "--augment", "--tile", "--count",
          "--val-count", "--out"}},
        {"train",
         {"--dataset", "--sensor", "--loss", "--residual", "--augment", "--iters", "--batch", "--lr", "--momentum",
          "--time-budget", "--val-every", "--depth", "--features", "--kernel", "--init", "--history", "--out"}},
        {"finetune",
         {"--checkpoint", "--target-ms", "--target-pan", "--out", "--sensor", "--iters", "--batch", "--max-tiles",
          "--tile", "--loss", "--lr"}},
        {"pansharpen",
         {"--checkpoint", "--ms", "--pan", "--out", "--sensor", "--tile", "--overlap", "--preview", "--preview-bands",
          "--low-pct", "--high-pct"}},
        {"evaluate",
         {"--mode", "--fused", "--ref", "--ratio", "--ms", "--pan", "--sensor", "--block", "--lr-block"}},
        {"compare", {"--recipe", "--condition", "--out"}},
        {"loss-study", {"--recipe", "--out"}},
        {"kernel", {"--type", "--ratio", "--gnyq", "--size"}},
    };
    for (const auto& [sub, names] : flags) {
        const auto r = sub.empty() ? run({"--help"}) : run({sub, "--help"});
        for (const auto& f : names) {
            CAPTURE(sub);
            CAPTURE(f);
            CHECK(r.out.find(f + " ") != std::string::npos);
        }
    }
}

TEST_CASE("cli: synth and evaluate contracts") {
    const auto d = fresh_dir("contract");
    auto r = run({"synth", "--seed", "7", "--size", "128", "--bands", "4", "--out", d.string()});
    REQUIRE(r.code == 0);
    const auto ms = pnn::raster::read_raster(d / "ms.mbir");
    const auto pan = pnn::raster::read_raster(d / "pan.mbir");
    const auto gt = pnn::raster::read_raster(d / "gt.mbir");
    CHECK(ms.width() == 32);
    CHECK(ms.bands() == 4);
    CHECK(pan.width() == 128);
    CHECK(gt.bands() == 4);

    r = run({"evaluate", "--mode", "reduced", "--fused", (d / "gt.mbir").string(), "--ref", (d / "gt.mbir").string(),
             "--ratio", "4"});
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(header == "SAM,ERGAS,Q,Q2n,Dlambda,Ds,QNR");
    CHECK(row == "0.000000,0.000000,1.000000,1.000000,nan,nan,nan");

    r = run({"kernel", "--type", "mtf", "--ratio", "4", "--gnyq", "0.3"});
    CHECK(r.code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 41);
}

TEST_CASE("cli: errors are one machine-parsable line") {
    auto expect = [](const Result& r, const std::string& code) {
        CHECK(r.code != 0);
        CHECK(r.err.rfind("error: " + code + ":", 0) == 0);
        CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    };
    expect(run({"synth", "--bogus"}), "cli.usage");
    expect(run({"frobnicate"}), "cli.usage");
    expect(run({}), "cli.usage");
    expect(run({"evaluate", "--fused", "/nonexistent/x.mbir", "--ref", "/nonexistent/y.mbir"}), "cli.missing_file");
    expect(run({"synth", "--size", "130", "--out", fresh_dir("bad").string()}), "bench.invalid");
    expect(run({"--deterministic", "train", "--dataset", "d", "--out", "n.pnnw", "--time-budget", "5"}), "cli.conflict");

    const auto d = fresh_dir("garbage");
    std::ofstream(d / "bad.mbir") << "not a raster";
    expect(run({"evaluate", "--fused", (d / "bad.mbir").string(), "--ref", (d / "bad.mbir").string()}), "raster.bad_magic");
}

TEST_CASE("cli: deterministic pipeline is byte-identical") {
    auto pipeline = [](const fs::path& d) {
        const std::string s = d.string();
        const std::vector<std::vector<std::string>> steps{
            {"synth", "--size", "256", "--out", s + "/scene"},
            {"make-dataset", "--ms", s + "/scene/ms.mbir", "--pan", s + "/scene/pan.mbir", "--residual", "--count",
             "64", "--val-count", "16", "--out", s + "/data"},
            {"train", "--dataset", s + "/data", "--residual", "--iters", "6", "--batch", "8", "--val-every", "3", "--lr",
             "0.01", "--out", s + "/net.pnnw"},
            {"finetune", "--checkpoint", s + "/net.pnnw", "--target-ms", s + "/scene/ms.mbir", "--target-pan",
             s + "/scene/pan.mbir", "--iters", "2", "--batch", "4", "--max-tiles", "32", "--lr", "0.01", "--out",
             s + "/ft.pnnw"},
            {"pansharpen", "--checkpoint", s + "/ft.pnnw", "--ms", s + "/scene/ms.mbir", "--pan", s + "/scene/pan.mbir",
             "--tile", "64", "--out", s + "/fused.mbir", "--preview", s + "/fused.ppm"},
        };
        for (auto args : steps) {
            args.insert(args.begin(), {"--deterministic", "--seed", "11"});
            const auto r = run(args);
            INFO(args[3], ": ", r.err);
            REQUIRE(r.code == 0);
        }
    };
    const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    pipeline(a);
    pipeline(b);
    int files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), a);
        CAPTURE(rel.string());
        REQUIRE(fs::exists(b / rel));
        CHECK(slurp(e.path()) == slurp(b / rel));
        ++files;
    }
    CHECK(files >= 12);
    // Wall-clock columns are zeroed.
    const auto hist = slurp(a / "net.pnnw.history.csv");
    CHECK(hist.find("\n3,0,") != std::string::npos);
}
