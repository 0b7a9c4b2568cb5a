#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hgan/cli.hpp"
#include "hgan/config.hpp"
#include "hgan/dataset.hpp"
#include "hgan/io.hpp"
#include "hgan/synthdata.hpp"

using namespace hgan;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("hgan_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct Invocation {
    int code = -1;
    std::string out;
    std::string err;
};

Invocation hgan_run(const fs::path& workspace, std::vector<std::string> args, const char* const* env = nullptr)
{
    args.insert(args.begin(), {"--workspace", workspace.string()});
    std::ostringstream out, err;
    Invocation r;
    r.code = cli::run(args, out, err, env);
    r.out = out.str();
    r.err = err.str();
    return r;
}

Json read(const fs::path& p)
{
    std::ifstream in(p);
    return Json::parse(in);
}

Image gaussian_slide(int side, double mu, double sigma, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(mu, sigma);
    Image img(side, side);
    for (auto& v : img.data)
        v = static_cast<float>(n(rng));
    return img;
}

const std::vector<std::string> kTinySynth = {
    "--set", "synth.patch_side=32", "--set", "synth.n_cells_min=3", "--set", "synth.n_cells_max=4",
    "--set", "split.n_patches=24",  "--set", "split.n_slides=3",    "--set", "split.n_train_slides=2"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b)
{
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

Json strip_times(Json j)
{
    j.erase("started_at");
    j.erase("finished_at");
    return j;
}

}  // namespace

TEST_CASE("fit-norm recovers a Gaussian slide's parameters and writes the histogram")
{
    const auto ws = scratch("fitnorm");
    write_image_u16(ws / "slide.tif", gaussian_slide(256, 2000.0, 150.0, 3));
    const auto r = hgan_run(ws, {"fit-norm", "--slide", "slide.tif", "--out", "model.json"});
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    const Json m = read(ws / "model.json");
    CHECK(m.at("mu").get<double>() == doctest::Approx(2000.0).epsilon(0.01));
    CHECK(m.at("sigma").get<double>() == doctest::Approx(150.0).epsilon(0.01));
    CHECK(fs::file_size(ws / "model.png") > 0);
    const Json manifest = read(ws / "model.json.run.json");
    CHECK(manifest.at("status") == "complete");
    CHECK(manifest.at("command") == "fit-norm");
}

TEST_CASE("fit-norm exit codes separate unreadable from degenerate inputs")
{
    const auto ws = scratch("fitnorm_codes");
    CHECK(hgan_run(ws, {"fit-norm", "--slide", "missing.tif", "--out", "m.json"}).code == cli::kUsageError);
    {
        std::ofstream(ws / "garbage.png") << "not an image";
    }
    CHECK(hgan_run(ws, {"fit-norm", "--slide", "garbage.png", "--out", "m.json"}).code == cli::kUsageError);

    Image flat(64, 64);
    for (auto& v : flat.data)
        v = 1200.0f;
    write_image_u16(ws / "flat.png", flat);
    const auto r = hgan_run(ws, {"fit-norm", "--slide", "flat.png", "--out", "m.json"});
    CHECK(r.code == cli::kDegenerateData);
    CHECK(r.err.find("variance") != std::string::npos);
}

TEST_CASE("argument errors exit with the usage code")
{
    const auto ws = scratch("usage");
    CHECK(hgan_run(ws, {}).code == cli::kUsageError);
    CHECK(hgan_run(ws, {"no-such-command"}).code == cli::kUsageError);
    CHECK(hgan_run(ws, {"fit-norm"}).code == cli::kUsageError);
    CHECK(hgan_run(ws, {"--help"}).code == cli::kOk);
    CHECK(hgan_run(ws, {"synth", "--out", "d", "--set", "nonsense"}).code == cli::kUsageError);
}

TEST_CASE("variant flags map onto the published configurations")
{
    CHECK(cli::variant_from_flags(true, true, true, false) == Variant::mcd);
    CHECK(cli::variant_from_flags(true, true, false, false) == Variant::mc);
    CHECK(cli::variant_from_flags(true, false, true, false) == Variant::md);
    CHECK(cli::variant_from_flags(true, false, false, false) == Variant::m);
    CHECK(cli::variant_from_flags(false, false, true, false) == Variant::d);
    CHECK(cli::variant_from_flags(false, false, false, false) == Variant::pix2pix);
    CHECK(cli::variant_from_flags(true, true, false, true) == Variant::regression_mc);
    CHECK_THROWS_AS(cli::variant_from_flags(false, true, false, false), UnknownVariant);
    CHECK_THROWS_AS(cli::variant_from_flags(true, true, true, true), UnknownVariant);

    const auto ws = scratch("variant_flags");
    CHECK(hgan_run(ws, {"train", "--data", "d", "--out", "o", "--compositing"}).code == cli::kUsageError);
    CHECK(hgan_run(ws, {"train", "--data", "d", "--out", "o", "--variant", "nope"}).code == cli::kUsageError);
}

TEST_CASE("synth is reproducible and its manifest is stable modulo timestamps")
{
    const auto ws = scratch("synth");
    REQUIRE(hgan_run(ws, concat({"synth", "--out", "a", "--seed", "5"}, kTinySynth)).code == cli::kOk);
    REQUIRE(hgan_run(ws, concat({"synth", "--out", "b", "--seed", "5"}, kTinySynth)).code == cli::kOk);
    const Dataset a = load_dataset(ws / "a");
    const Dataset b = load_dataset(ws / "b");
    CHECK(a.samples.size() == 24);
    CHECK(a.side() == 32);
    CHECK(fingerprint(a) == fingerprint(b));

    Json ma = strip_times(read(ws / "a" / "run_manifest.json"));
    Json mb = strip_times(read(ws / "b" / "run_manifest.json"));
    CHECK(ma.at("status") == "complete");
    CHECK(ma.at("seeds").at("root") == 5);
    CHECK(ma.at("dataset_fingerprint") == fingerprint(a));
    CHECK(ma.at("source_revision").get<std::string>() == cli::source_revision());
    ma.erase("arguments");
    mb.erase("arguments");
    ma.erase("artifacts");
    mb.erase("artifacts");
    CHECK(ma == mb);
}

TEST_CASE("configuration precedence: defaults < file < environment < --set")
{
    const auto ws = scratch("precedence");
    {
        std::ofstream(ws / "cfg.json") << R"({"synth": {"patch_side": 32, "n_cells_min": 3, "n_cells_max": 3},
                                              "split": {"n_patches": 12, "n_slides": 3, "n_train_slides": 2}})";
    }
    REQUIRE(hgan_run(ws, {"synth", "--out", "f", "--config", "cfg.json"}).code == cli::kOk);
    CHECK(load_dataset(ws / "f").samples.size() == 12);
    REQUIRE(hgan_run(ws, {"synth", "--out", "s", "--config", "cfg.json", "--set", "split.n_patches=9"}).code ==
            cli::kOk);
    CHECK(load_dataset(ws / "s").samples.size() == 9);

    REQUIRE(hgan_run(ws, {"synth", "--out", "d", "--config", "cfg.json"}).code == cli::kOk);
    // Train settings: file < environment < --set.
    {
        std::ofstream(ws / "train.json") << R"({"train": {"depth": 5, "batch_size": 4, "lambda_l1": 10}})";
    }
    const char* env[] = {"HGAN_BATCH_SIZE=6", "HGAN_LAMBDA_L1=20", "UNRELATED=1", nullptr};
    const auto r = hgan_run(ws,
                            {"train", "--data", "d", "--out", "run", "--config", "train.json", "--epochs", "1",
                             "--variant", "m", "--set", "lambda_l1=30"},
                            env);
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    const Json cfg = read(ws / "run" / "config.json");
    CHECK(cfg.at("depth") == 5);
    CHECK(cfg.at("batch_size") == 6);
    CHECK(cfg.at("lambda_l1").get<double>() == 30.0);
    CHECK(cfg.at("variant") == "HoechstGAN-M");
    CHECK(cfg.at("total_epochs") == 1);
}

TEST_CASE("extract cuts aligned slides into a dataset")
{
    const auto ws = scratch("extract");
    SynthParams p;
    p.patch_side = 32;
    p.n_cells_min = p.n_cells_max = 4;
    p.nucleus_radius = 3.0;
    Image slides[3] = {Image(64, 64), Image(64, 64), Image(64, 64)};
    for (int t = 0; t < 4; ++t) {
        p.seed = 100 + static_cast<std::uint64_t>(t);
        const SynthTriplet tri = generate_triplet(p);
        const Patch* parts[3] = {&tri.hoechst, &tri.cd3, &tri.cd8};
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    slides[c].at((t % 2) * 32 + x, (t / 2) * 32 + y) = 500.0f + 4000.0f * parts[c]->pixels.at(x, y);
    }
    write_image_u16(ws / "h.tif", slides[0]);
    write_image_u16(ws / "c3.tif", slides[1]);
    write_image_u16(ws / "c8.tif", slides[2]);
    const std::vector<std::string> base = {"extract",     "--hoechst",   "h.tif", "--cd3", "c3.tif", "--cd8",
                                           "c8.tif",      "--out",       "ds",    "--patch-side", "32",
                                           "--min-area",  "4",           "--slide-id", "s0"};
    const auto r = hgan_run(ws, base);
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    Dataset d = load_dataset(ws / "ds");
    CHECK(d.side() == 32);
    CHECK(d.samples.size() == 4);
    CHECK(d.samples[0].slide_id == "s0");
    CHECK(d.samples[0].truth.count() > 0);
    CHECK(read(ws / "ds" / "run_manifest.json").at("status") == "complete");

    auto appended = base;
    appended.back() = "s1";
    appended.push_back("--append");
    appended.push_back("--split");
    appended.push_back("test");
    REQUIRE(hgan_run(ws, appended).code == cli::kOk);
    d = load_dataset(ws / "ds");
    CHECK(d.samples.size() == 8);
    CHECK(d.indices(Split::test).size() == 4);

    CHECK(hgan_run(ws, {"extract", "--hoechst", "h.tif", "--cd3", "c3.tif", "--cd8", "c8.tif", "--out", "x",
                        "--patch-side", "128"})
              .code == cli::kDegenerateData);
    const auto stats = hgan_run(ws, {"stats", "--data", "ds", "--out", "stats.json"});
    REQUIRE(stats.code == cli::kOk);
    CHECK(read(ws / "stats.json").at("patches") == 8);
}

TEST_CASE("train, eval, ablate and render produce their artifacts")
{
    const auto ws = scratch("pipeline");
    REQUIRE(hgan_run(ws, concat({"synth", "--out", "ds", "--seed", "9"}, kTinySynth)).code == cli::kOk);
    const auto t = hgan_run(ws, {"train", "--data", "ds", "--out", "run", "--mutual", "--compositing",
                                 "--joint-discriminator", "--epochs", "2", "--set", "depth=5", "--set",
                                 "batch_size=8", "--seed", "4"});
    REQUIRE_MESSAGE(t.code == cli::kOk, t.err);
    CHECK(t.out.find("epoch   2/2") != std::string::npos);
    CHECK(fs::exists(ws / "run" / "checkpoints" / "epoch_002.ckpt"));
    CHECK(fs::exists(ws / "run" / "metrics.jsonl"));
    const Json tm = read(ws / "run" / "run_manifest.json");
    CHECK(tm.at("status") == "complete");
    CHECK(tm.at("seeds").at("root") == 4);
    CHECK(tm.at("config").at("variant") == "HoechstGAN-MCD");

    const std::string ckpt = "run/checkpoints/epoch_002.ckpt";
    const auto e = hgan_run(ws, {"eval", "--checkpoint", ckpt, "--data", "ds", "--out", "ev"});
    REQUIRE_MESSAGE(e.code == cli::kOk, e.err);
    CHECK(e.out.find("cd8") != std::string::npos);
    const Json summary = read(ws / "ev" / "eval.summary.json");
    CHECK(summary.at("aggregates").is_array());
    CHECK(summary.at("aggregates").size() == 2);
    REQUIRE(hgan_run(ws, {"eval", "--checkpoint", ckpt, "--data", "ds", "--out", "ev2"}).code == cli::kOk);
    CHECK(read(ws / "ev2" / "eval.summary.json") == summary);

    const auto a = hgan_run(ws, {"ablate", "--checkpoint", ckpt, "--data", "ds", "--out", "ab"});
    REQUIRE_MESSAGE(a.code == cli::kOk, a.err);
    const Json ab = read(ws / "ab" / "ablation.json");
    for (const char* mode : {"generated", "matched_real", "shuffled_real", "gaussian_noise"}) {
        CHECK(fs::exists(ws / "ab" / (std::string("ablate.") + mode + ".summary.json")));
        CHECK(a.out.find(mode) != std::string::npos);
    }
    CHECK(ab.dump().find("gaussian_noise") != std::string::npos);

    const auto rd = hgan_run(ws, {"render", "--checkpoint", ckpt, "--data", "ds", "--out", "grid.png", "--count",
                                  "3", "--tile", "64"});
    REQUIRE_MESSAGE(rd.code == cli::kOk, rd.err);
    CHECK(fs::file_size(ws / "grid.png") > 0);
    CHECK(read(ws / "grid.png.run.json").at("config").at("samples").size() == 3);
    CHECK(hgan_run(ws, {"render", "--checkpoint", ckpt, "--data", "ds", "--out", "grid"}).code == cli::kUsageError);

    // A pix2pix checkpoint has no e2 input to replace.
    REQUIRE(hgan_run(ws, {"train", "--data", "ds", "--out", "p2p", "--variant", "pix2pix", "--epochs", "1", "--set",
                          "depth=5", "--set", "batch_size=8"})
                .code == cli::kOk);
    CHECK(hgan_run(ws, {"ablate", "--checkpoint", "p2p/checkpoints/epoch_001.ckpt", "--data", "ds", "--out", "x",
                        "--mode", "shuffled_real"})
              .code == cli::kUsageError);

    // Mismatched geometry is rejected before training starts.
    CHECK(hgan_run(ws, {"train", "--data", "ds", "--out", "bad", "--variant", "m", "--epochs", "1"}).code ==
          cli::kUsageError);
}

TEST_CASE("resume continues from a checkpoint and reproduces the uninterrupted run")
{
    const auto ws = scratch("resume");
    REQUIRE(hgan_run(ws, concat({"synth", "--out", "ds", "--seed", "2"}, kTinySynth)).code == cli::kOk);
    const std::vector<std::string> train = {"train", "--data", "ds", "--variant", "mcd", "--epochs", "2",
                                            "--set", "depth=5", "--set", "batch_size=8"};
    REQUIRE(hgan_run(ws, concat(train, {"--out", "full"})).code == cli::kOk);
    REQUIRE(hgan_run(ws, concat(train, {"--out", "part"})).code == cli::kOk);
    fs::remove(ws / "part" / "checkpoints" / "epoch_002.ckpt");
    const auto r = hgan_run(ws, {"train", "--data", "ds", "--out", "part", "--resume",
                                 "part/checkpoints/epoch_001.ckpt"});
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    auto bytes = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(bytes(ws / "full" / "checkpoints" / "epoch_002.ckpt") ==
          bytes(ws / "part" / "checkpoints" / "epoch_002.ckpt"));
}
