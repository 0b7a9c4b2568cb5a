#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include <opencv2/imgcodecs.hpp>

#include "hgan/eval.hpp"
#include "hgan/train.hpp"

using namespace hgan;

namespace {

BinaryMask left_half(int side)
{
    BinaryMask m(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side / 2; ++x)
            m.at(x, y) = 1;
    return m;
}

Image two_level(const BinaryMask& m, float inside, float outside)
{
    Image img(m.width, m.height);
    for (std::size_t i = 0; i < img.size(); ++i)
        img.data[i] = m.data[i] ? inside : outside;
    return img;
}

double brute_mir(const Image& img, const BinaryMask& m)
{
    double in = 0, out = 0;
    int n_in = 0, n_out = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (m.at(x, y)) {
                in += img.at(x, y);
                ++n_in;
            } else {
                out += img.at(x, y);
                ++n_out;
            }
        }
    return (in / n_in) / std::max(out / n_out, 1e-6);
}

std::filesystem::path scratch(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("hgan_test_eval_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

Dataset small_dataset(int patches = 12)
{
    SynthParams p;
    p.patch_side = 32;
    p.n_cells_min = 3;
    p.n_cells_max = 4;
    p.seed = 8;
    SplitSpec split;
    split.n_patches = patches;
    split.n_slides = 3;
    split.n_train_slides = 2;
    return from_synthetic(generate_dataset(p, split));
}

MirRecord rec(double v, Marker m = Marker::cd3, Split s = Split::test, Exclusion e = Exclusion::none)
{
    MirRecord r;
    r.mir_rel = v;
    r.stain = m;
    r.split = s;
    r.excluded = e;
    return r;
}

}  // namespace

TEST_CASE("MIR analytic cases")
{
    const auto m = left_half(8);
    CHECK(mir(two_level(m, 0.8f, 0.2f), m) == doctest::Approx(4.0).epsilon(1e-7));
    CHECK(mir(Image(8, 8, 0.37f), m) == 1.0);
    CHECK(mir_rel(two_level(m, 0.9f, 0.1f), two_level(m, 0.8f, 0.2f), m) == doctest::Approx(2.25).epsilon(1e-7));
    const auto img = two_level(m, 0.6f, 0.3f);
    CHECK(mir_rel(img, img, m) == 1.0);
}

TEST_CASE("MIR mask errors and floor")
{
    CHECK_THROWS_AS(mir(Image(4, 4, 0.5f), BinaryMask(4, 4, 0)), EmptyMask);
    CHECK_THROWS_AS(mir(Image(4, 4, 0.5f), BinaryMask(4, 4, 1)), FullMask);
    CHECK_THROWS_AS(mir(Image(4, 4, 0.5f), BinaryMask(4, 3, 1)), ShapeMismatch);
    const auto m = left_half(4);
    const auto v = mir_checked(two_level(m, 0.5f, 0.0f), m);
    CHECK(v.floored);
    CHECK(v.value == doctest::Approx(0.5 / kMirEpsilon));
    CHECK_FALSE(mir_checked(two_level(m, 0.5f, 0.1f), m).floored);
    CHECK_THROWS_AS(mir_rel(two_level(m, 0.5f, 0.1f), two_level(m, 0.0f, 0.5f), m), DegenerateReal);
}

TEST_CASE("MIR agrees with a two-pass oracle and is scale invariant")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const int w = 8 + static_cast<int>(u(rng) * 40), h = 8 + static_cast<int>(u(rng) * 40);
        Image img(w, h), other(w, h);
        BinaryMask m(w, h);
        for (std::size_t i = 0; i < img.size(); ++i) {
            img.data[i] = static_cast<float>(u(rng));
            other.data[i] = static_cast<float>(u(rng));
            m.data[i] = u(rng) < 0.3 ? 1 : 0;
        }
        m.data[0] = 1;
        m.data[1] = 0;
        CHECK(std::abs(mir(img, m) - brute_mir(img, m)) < 1e-9);
        for (float c : {0.5f, 2.0f}) {
            Image a = img, b = other;
            for (auto& v : a.data)
                v *= c;
            for (auto& v : b.data)
                v *= c;
            CHECK(mir(a, m) == doctest::Approx(mir(img, m)).epsilon(1e-6));
            CHECK(mir_rel(a, b, m) == doctest::Approx(mir_rel(img, other, m)).epsilon(1e-6));
        }
        CHECK(mir_rel(img, img, m) == 1.0);
    }
}

TEST_CASE("patch scoring turns metric errors into exclusions")
{
    const auto m = left_half(8);
    const auto ok = score_patch(two_level(m, 0.9f, 0.1f), two_level(m, 0.8f, 0.2f), m);
    CHECK(ok.excluded == Exclusion::none);
    CHECK(ok.mir_rel == doctest::Approx(2.25));
    CHECK(score_patch(Image(8, 8), Image(8, 8), BinaryMask(8, 8)).excluded == Exclusion::empty_mask);
    CHECK(score_patch(Image(8, 8), Image(8, 8), BinaryMask(8, 8, 1)).excluded == Exclusion::full_mask);
    CHECK(score_patch(two_level(m, 0.5f, 0.5f), two_level(m, 0.0f, 0.5f), m).excluded ==
          Exclusion::degenerate_real);
}

TEST_CASE("aggregation")
{
    const MirRecord two[] = {rec(1.0), rec(3.0)};
    auto a = aggregate_mir(two);
    REQUIRE(a.size() == 1);
    CHECK(a[0].mean == 2.0);
    CHECK(a[0].std == 1.0);

    const MirRecord one[] = {rec(1.7)};
    a = aggregate_mir(one);
    CHECK(a[0].mean == 1.7);
    CHECK(a[0].std == 0.0);

    const MirRecord with_excl[] = {rec(1.2), rec(0, Marker::cd3, Split::test, Exclusion::empty_mask)};
    a = aggregate_mir(with_excl);
    CHECK(a[0].count == 1);
    CHECK(a[0].excluded_count == 1);
    CHECK(a[0].exclusions.at("empty_mask") == 1);

    const MirRecord mixed[] = {rec(1.0, Marker::cd8, Split::test), rec(2.0, Marker::cd3, Split::train),
                               rec(0, Marker::cd8, Split::test, Exclusion::degenerate_real),
                               rec(4.0, Marker::cd3, Split::train)};
    a = aggregate_mir(mixed);
    REQUIRE(a.size() == 2);
    CHECK(a[0].stain == Marker::cd3);
    CHECK(a[0].mean == 3.0);
    CHECK(a[1].stain == Marker::cd8);
    std::size_t total = 0;
    for (const auto& g : a)
        total += g.count + g.excluded_count;
    CHECK(total == std::size(mixed));

    const MirRecord none[] = {rec(0, Marker::cd8, Split::test, Exclusion::empty_mask)};
    CHECK_THROWS_AS(aggregate_mir(none), AllExcluded);
}

TEST_CASE("merging partial statistics is associative")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    MirStats all, a, b, c;
    for (int i = 0; i < 90; ++i) {
        const double v = u(rng);
        all.add(v);
        (i < 20 ? a : i < 50 ? b : c).add(v);
    }
    b.exclude(Exclusion::empty_mask);
    all.exclude(Exclusion::empty_mask);
    MirStats left = a;
    left.merge(b);
    left.merge(c);
    MirStats right = b;
    right.merge(c);
    MirStats right_all = a;
    right_all.merge(right);
    for (const MirStats* s : {&left, &right_all}) {
        CHECK(s->count() == all.count());
        CHECK(s->excluded_count() == 1);
        CHECK(s->mean() == doctest::Approx(all.mean()).epsilon(1e-12));
        CHECK(s->stddev() == doctest::Approx(all.stddev()).epsilon(1e-12));
    }
}

TEST_CASE("identical generated and real stains score 1")
{
    const auto data = small_dataset();
    const auto idx = data.indices(Split::test);
    std::vector<GeneratedStains> same;
    for (auto i : idx)
        same.push_back({data.samples[i].cd3, data.samples[i].cd8});
    const auto report = score_stains(data, idx, same);
    CHECK(report.records.size() == 2 * idx.size());
    for (const auto& a : report.aggregates) {
        CHECK(a.mean == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(a.std == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(a.count + a.excluded_count == idx.size());
    }
    const auto table = format_table(report.aggregates);
    CHECK(table.find("cd8") != std::string::npos);

    const auto dir = scratch("report");
    write_report(report, dir, "test");
    CHECK(std::filesystem::exists(dir / "test.records.jsonl"));
    CHECK(std::filesystem::exists(dir / "test.summary.json"));
}

TEST_CASE("encoder-input ablation")
{
    const auto data = small_dataset();
    auto cfg = TrainConfig::for_variant(Variant::mcd);
    cfg.depth = 5;
    cfg.total_epochs = 2;
    cfg.scale_schedules_to_epochs();
    Trainer t(cfg);
    InferenceOptions opts;
    opts.batch_size = 4;
    opts.dropout_root = 3;
    opts.ablation_seed = 4;

    const auto standard = evaluate(t.generator(), data, Split::test, opts);
    for (CodeMode m : all_code_modes()) {
        CAPTURE(to_string(m));
        const auto a = ablate_encoder_input(t.generator(), data, Split::test, m, opts);
        const auto b = ablate_encoder_input(t.generator(), data, Split::test, m, opts);
        REQUIRE(a.records.size() == b.records.size());
        for (std::size_t i = 0; i < a.records.size(); ++i)
            CHECK(a.records[i].mir_rel == b.records[i].mir_rel);
        // CD3 comes from e1/d1 alone and does not depend on the mode.
        CHECK(a.find(Marker::cd3, Split::test).mean == standard.find(Marker::cd3, Split::test).mean);
        if (m == CodeMode::generated)
            for (std::size_t i = 0; i < a.records.size(); ++i)
                CHECK(a.records[i].mir_rel == standard.records[i].mir_rel);
    }
    CHECK(parse_code_mode("shuffled_real") == CodeMode::shuffled_real);
    CHECK_THROWS_AS(parse_code_mode("zeros"), std::invalid_argument);

    auto shared = TrainConfig::for_variant(Variant::d);
    shared.depth = 5;
    shared.total_epochs = 2;
    shared.scale_schedules_to_epochs();
    Trainer s(shared);
    CHECK_THROWS_AS(ablate_encoder_input(s.generator(), data, Split::test, CodeMode::gaussian_noise, opts), NotMutual);
    CHECK_NOTHROW(evaluate(s.generator(), data, Split::test, opts));
}

TEST_CASE("shuffled partners differ from the matched sample")
{
    const auto data = small_dataset();
    auto cfg = TrainConfig::for_variant(Variant::mcd);
    cfg.depth = 5;
    cfg.total_epochs = 2;
    cfg.scale_schedules_to_epochs();
    Trainer t(cfg);
    InferenceOptions opts;
    opts.batch_size = 3;
    const auto idx = data.indices(Split::test);
    opts.mode = CodeMode::matched_real;
    const auto matched = generate_stains(t.generator(), data, idx, opts);
    opts.mode = CodeMode::shuffled_real;
    const auto shuffled = generate_stains(t.generator(), data, idx, opts);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        CHECK(matched[i].cd3 == shuffled[i].cd3);
        CHECK_FALSE(matched[i].cd8 == shuffled[i].cd8);
    }
}

TEST_CASE("result grid layout")
{
    const auto data = small_dataset();
    std::vector<GeneratedStains> gen;
    std::vector<GridRow> rows;
    for (std::size_t i = 0; i < 5; ++i)
        gen.push_back({data.samples[i].cd3, data.samples[i].cd8});
    for (std::size_t i = 0; i < 5; ++i)
        rows.push_back({&data.samples[i], &gen[i]});
    const auto dir = scratch("grid");
    const auto fig = render_grid(rows, dir / "grid.png", 64);
    CHECK(fig.rows == 5);
    CHECK(fig.image_columns == 6);
    CHECK(fig.width == 6 * 64 + 160);
    const cv::Mat png = cv::imread((dir / "grid.png").string());
    CHECK(png.cols == fig.width);
    CHECK(png.rows == fig.height);
    REQUIRE(fig.annotations.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        if (data.samples[i].truth.cd8_positive().empty())
            CHECK(fig.annotations[i].find("no CD8+ cells") != std::string::npos);
        else
            CHECK(fig.annotations[i].find("CD8 MIR_rel 1.00") != std::string::npos);
    }

    // A sample without CD8+ nuclei is annotated rather than scored.
    Sample bare = data.samples[0];
    bare.truth = bare.truth.with_positives(Marker::cd8, {});
    GeneratedStains g{bare.cd3, bare.cd8};
    const GridRow one[] = {{&bare, &g}};
    CHECK(render_grid(one, dir / "one.png", 32).annotations[0].find("no CD8+ cells") != std::string::npos);
    CHECK_THROWS_AS(render_grid(std::span<const GridRow>{}, dir / "none.png"), EmptyGrid);
}

TEST_CASE("intensity histogram markers")
{
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(100.0, 15.0);
    std::vector<double> xs(20000);
    for (auto& v : xs)
        v = n(rng);
    const auto model = fit_intensity_model(xs);
    const auto dir = scratch("hist");
    const auto fig = plot_intensity_histogram(xs, model, dir / "h.png");
    CHECK(fig.mu_marker == doctest::Approx(100.0).epsilon(0.01));
    CHECK(fig.upper_marker == doctest::Approx(145.0).epsilon(0.01));
    CHECK(fig.lo < fig.mu_marker);
    CHECK(fig.hi > fig.upper_marker);
    std::size_t total = 0;
    for (auto c : fig.counts)
        total += c;
    CHECK(total == xs.size());
    CHECK(std::filesystem::exists(dir / "h.png"));

    auto shifted = xs;
    for (auto& v : shifted)
        v += 25.0;
    const auto fig2 = plot_intensity_histogram(shifted, fit_intensity_model(shifted), dir / "h2.png");
    CHECK(fig2.mu_marker - fig.mu_marker == doctest::Approx(25.0).epsilon(1e-9));
    CHECK(fig2.upper_marker - fig.upper_marker == doctest::Approx(25.0).epsilon(1e-9));

    CHECK_THROWS_AS(plot_intensity_histogram(std::span<const double>{}, model, dir / "e.png"), std::invalid_argument);
}

TEST_CASE("stain L1 is the mean absolute error of the generated stains")
{
    const auto data = small_dataset();
    auto cfg = TrainConfig::for_variant(Variant::mcd);
    cfg.depth = 5;
    cfg.total_epochs = 2;
    cfg.scale_schedules_to_epochs();
    Trainer t(cfg);
    InferenceOptions opts;
    opts.batch_size = 4;
    opts.dropout_root = 5;

    const auto idx = data.indices(Split::test);
    const auto gen = generate_stains(t.generator(), data, idx, opts);
    double cd3 = 0.0, cd8 = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Sample& s = data.samples[idx[i]];
        for (std::size_t p = 0; p < s.cd3.size(); ++p) {
            cd3 += std::abs(double(gen[i].cd3.data[p]) - double(s.cd3.data[p]));
            cd8 += std::abs(double(gen[i].cd8.data[p]) - double(s.cd8.data[p]));
            ++n;
        }
    }
    const StainL1 l1 = mean_absolute_error(t.generator(), data, Split::test, opts);
    CHECK(l1.cd3 == doctest::Approx(cd3 / double(n)).epsilon(1e-12));
    CHECK(l1.cd8 == doctest::Approx(cd8 / double(n)).epsilon(1e-12));
    CHECK(l1.cd3 > 0.0);
    CHECK(l1.cd3 <= 1.0);

    // The ablation mode is ignored: the error always uses generated CD3.
    opts.mode = CodeMode::gaussian_noise;
    const StainL1 again = mean_absolute_error(t.generator(), data, Split::test, opts);
    CHECK(again.cd3 == l1.cd3);
    CHECK(again.cd8 == l1.cd8);

    Dataset train_only = data;
    std::erase_if(train_only.samples, [](const Sample& s) { return s.split == Split::test; });
    CHECK_THROWS_AS(mean_absolute_error(t.generator(), train_only, Split::test, opts), EmptyDataset);
}
