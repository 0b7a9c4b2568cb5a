#include "hgan/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "hgan/rng.hpp"

namespace hgan {

void SynthParams::validate() const
{
    auto fail = [](const std::string& what) { throw std::invalid_argument("SynthParams: " + what); };
    if (patch_side < 2 || (patch_side & (patch_side - 1)) != 0)
        fail("patch_side must be a power of two");
    if (n_cells_min < 0 || n_cells_max < n_cells_min)
        fail("cell count range must satisfy 0 <= min <= max");
    if (!(cd3_fraction >= 0.0 && cd3_fraction <= 1.0) || !(cd8_fraction_of_cd3 >= 0.0 && cd8_fraction_of_cd3 <= 1.0))
        fail("fractions must lie in [0, 1]");
    if (!(nucleus_radius > 0.0) || radius_jitter < 0.0 || radius_jitter >= nucleus_radius)
        fail("nucleus_radius must be positive and larger than its jitter");
    if (!(tcell_radius_scale > 0.0) || !(marker_radius_ratio > 0.0))
        fail("radius scales must be positive");
    if (background_noise_sigma < 0.0 || marker_offset < 0.0 || min_gap < 0.0)
        fail("noise, offset and gap must be non-negative");
    if (max_placement_attempts < 1)
        fail("max_placement_attempts must be positive");
}

namespace {

void splat(Image& img, double cx, double cy, double radius, double amplitude)
{
    // Gaussian profile with sigma = radius / 2, truncated at 3 sigma.
    const double s = radius / 2.0;
    const double reach = 3.0 * s;
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - reach)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - reach)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + reach)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            img.at(x, y) += static_cast<float>(amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * s * s)));
        }
}

void add_noise(Image& img, double level, double sigma, Rng& rng)
{
    std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
    for (auto& v : img.data) {
        const double n = sigma > 0.0 ? noise(rng) : 0.0;
        v = static_cast<float>(std::clamp(v + level + n, 0.0, 1.0));
    }
}

Patch make_patch(Image img)
{
    Patch p;
    p.pixels = std::move(img);
    p.range = RangeTag::unit;
    p.slide_id = "synthetic";
    return p;
}

}  // namespace

SynthTriplet generate_triplet(const SynthParams& params)
{
    params.validate();
    Rng rng(params.seed);
    const int side = params.patch_side;

    const int n = std::uniform_int_distribution<int>(params.n_cells_min, params.n_cells_max)(rng);
    const int n_cd3 = static_cast<int>(std::lround(params.cd3_fraction * n));
    const int n_cd8 = static_cast<int>(std::lround(params.cd8_fraction_of_cd3 * n_cd3));

    // Exact subset sampling: a random permutation decides who is CD3+ and,
    // among those, who is CD8+.
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<CellClass> cls(static_cast<std::size_t>(n), CellClass::negative);
    for (int i = 0; i < n_cd3; ++i)
        cls[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
            i < n_cd8 ? CellClass::cd3_cd8 : CellClass::cd3;

    std::uniform_real_distribution<double> jitter(-params.radius_jitter, params.radius_jitter);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::vector<SynthCell> cells;
    cells.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        SynthCell c;
        c.cls = cls[static_cast<std::size_t>(i)];
        c.label = i + 1;
        c.radius = params.nucleus_radius + jitter(rng);
        if (c.cls != CellClass::negative)
            c.radius *= params.tcell_radius_scale;
        std::uniform_real_distribution<double> pos(c.radius, side - 1 - c.radius);
        bool placed = false;
        for (int attempt = 0; attempt < params.max_placement_attempts && !placed; ++attempt) {
            c.x = pos(rng);
            c.y = pos(rng);
            placed = std::all_of(cells.begin(), cells.end(), [&](const SynthCell& o) {
                return std::hypot(c.x - o.x, c.y - o.y) >= c.radius + o.radius + params.min_gap;
            });
        }
        if (!placed)
            throw PlacementFailure("could not place nucleus " + std::to_string(i + 1) + " of " + std::to_string(n) +
                                   " without overlap after " + std::to_string(params.max_placement_attempts) +
                                   " attempts");
        cells.push_back(c);
    }

    Image hoechst(side, side);
    Image cd3(side, side);
    Image cd8(side, side);
    LabelImage labels(side, side);
    std::vector<int> cd3_pos;
    std::vector<int> cd8_pos;
    for (const auto& c : cells) {
        double gain = 1.0;
        if (c.cls == CellClass::cd3)
            gain = params.cd3_hoechst_gain;
        else if (c.cls == CellClass::cd3_cd8)
            gain = params.cd8_hoechst_gain;
        splat(hoechst, c.x, c.y, c.radius, params.nucleus_amplitude * gain);

        const int r = static_cast<int>(std::ceil(c.radius));
        for (int y = std::max(0, static_cast<int>(c.y) - r); y <= std::min(side - 1, static_cast<int>(c.y) + r + 1); ++y)
            for (int x = std::max(0, static_cast<int>(c.x) - r); x <= std::min(side - 1, static_cast<int>(c.x) + r + 1);
                 ++x)
                if (std::hypot(x - c.x, y - c.y) <= c.radius)
                    labels.at(x, y) = c.label;

        if (c.cls == CellClass::negative)
            continue;
        const double theta = angle(rng);
        const double mx = c.x + params.marker_offset * std::cos(theta);
        const double my = c.y + params.marker_offset * std::sin(theta);
        const double mr = c.radius * params.marker_radius_ratio;
        splat(cd3, mx, my, mr, params.marker_amplitude);
        cd3_pos.push_back(c.label);
        if (c.cls == CellClass::cd3_cd8) {
            splat(cd8, mx, my, mr, params.marker_amplitude);
            cd8_pos.push_back(c.label);
        }
    }

    add_noise(hoechst, params.background_level, params.background_noise_sigma, rng);
    add_noise(cd3, params.background_level, params.background_noise_sigma, rng);
    add_noise(cd8, params.background_level, params.background_noise_sigma, rng);

    SynthTriplet t;
    t.hoechst = make_patch(std::move(hoechst));
    t.cd3 = make_patch(std::move(cd3));
    t.cd8 = make_patch(std::move(cd8));
    t.truth = MaskSet(std::move(labels), std::move(cd3_pos), std::move(cd8_pos));
    t.cells = std::move(cells);
    return t;
}

std::string to_string(Split s)
{
    return s == Split::train ? "train" : "test";
}

Split parse_split(const std::string& s)
{
    if (s == "train")
        return Split::train;
    if (s == "test")
        return Split::test;
    throw std::invalid_argument("unknown split '" + s + "'");
}

SynthDataset generate_dataset(const SynthParams& params, const SplitSpec& split)
{
    params.validate();
    if (split.n_patches < 1)
        throw std::invalid_argument("dataset needs at least one patch");
    const int slides = std::min(split.n_slides, split.n_patches);
    if (slides < 2)
        throw InsufficientSlides("a slide-level split needs at least 2 pseudo-slides, got " + std::to_string(slides));
    if (split.n_train_slides < 1 || split.n_train_slides >= slides)
        throw InsufficientSlides("train slides must leave at least one test slide (" +
                                 std::to_string(split.n_train_slides) + " of " + std::to_string(slides) + ")");

    SynthDataset ds;
    ds.params = params;
    ds.split = split;
    ds.split.n_slides = slides;

    std::vector<int> ids(static_cast<std::size_t>(slides));
    std::iota(ids.begin(), ids.end(), 0);
    Rng split_rng(derive_seed(params.seed, "split"));
    std::shuffle(ids.begin(), ids.end(), split_rng);
    ds.train_slides.assign(ids.begin(), ids.begin() + split.n_train_slides);
    std::sort(ds.train_slides.begin(), ds.train_slides.end());

    ds.samples.resize(static_cast<std::size_t>(split.n_patches));
    std::vector<std::string> errors(ds.samples.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < split.n_patches; ++i) {
        auto& s = ds.samples[static_cast<std::size_t>(i)];
        SynthParams p = params;
        p.seed = mix_seed(params.seed, static_cast<std::uint64_t>(i));
        try {
            s.triplet = generate_triplet(p);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
            continue;
        }
        s.slide = static_cast<int>(static_cast<std::int64_t>(i) * slides / split.n_patches);
        s.split = std::binary_search(ds.train_slides.begin(), ds.train_slides.end(), s.slide) ? Split::train
                                                                                                : Split::test;
        const std::string id = "synth-" + std::to_string(s.slide);
        const int per_row = std::max(1, static_cast<int>(std::ceil(std::sqrt(split.n_patches / double(slides)))));
        const int local = i - static_cast<int>((static_cast<std::int64_t>(s.slide) * split.n_patches + slides - 1) / slides);
        for (Patch* patch : {&s.triplet.hoechst, &s.triplet.cd3, &s.triplet.cd8}) {
            patch->slide_id = id;
            patch->grid_x = local % per_row;
            patch->grid_y = local / per_row;
        }
    }
    for (const auto& e : errors)
        if (!e.empty())
            throw PlacementFailure(e);
    return ds;
}

}  // namespace hgan
