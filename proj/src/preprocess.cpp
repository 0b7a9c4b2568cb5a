#include "hgan/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "hgan/masks.hpp"

namespace hgan {

void IntensityModel::validate() const
{
    if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu))
        throw DegenerateSamples("intensity model needs a finite sigma > 0");
    if (sample_count < 2)
        throw DegenerateSamples("intensity model needs at least 2 samples");
}

void IntensityAccumulator::add(double x)
{
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
}

void IntensityAccumulator::add(std::span<const float> xs, double floor)
{
    for (float v : xs)
        if (v > floor)
            add(v);
}

void IntensityAccumulator::merge(const IntensityAccumulator& other)
{
    if (other.n_ == 0)
        return;
    if (n_ == 0) {
        *this = other;
        return;
    }
    const double na = static_cast<double>(n_);
    const double nb = static_cast<double>(other.n_);
    const double delta = other.mean_ - mean_;
    const double n = na + nb;
    mean_ += delta * nb / n;
    m2_ += other.m2_ + delta * delta * na * nb / n;
    n_ += other.n_;
}

IntensityModel IntensityAccumulator::model() const
{
    if (n_ < 2)
        throw DegenerateSamples("need at least 2 samples to fit an intensity model, got " + std::to_string(n_));
    const double var = m2_ / static_cast<double>(n_);
    if (!(var > 0.0))
        throw DegenerateSamples("samples have zero variance");
    return {mean_, std::sqrt(var), n_};
}

IntensityModel fit_intensity_model(std::span<const double> samples)
{
    IntensityAccumulator acc;
    for (double x : samples)
        acc.add(x);
    return acc.model();
}

IntensityModel fit_intensity_model(const Image& slide, double floor)
{
    IntensityAccumulator acc;
    acc.add(slide.data, floor);
    return acc.model();
}

double normalize_intensity(double x, const IntensityModel& model)
{
    // Compare against the boundaries as they would be computed by a caller so
    // that mu and mu + 3 sigma land on exactly 0 and 1 despite rounding. The
    // affine part is anchored at the rounded midpoint for the same reason:
    // mu + 1.5 sigma maps to exactly 0.5.
    if (x <= model.mu)
        return 0.0;
    if (x >= model.mu + 3.0 * model.sigma)
        return 1.0;
    const double mid = model.mu + 1.5 * model.sigma;
    return std::min(1.0, std::max(0.0, 0.5 + (x - mid) / (3.0 * model.sigma)));
}

Patch normalize_patch(const Patch& raw, const IntensityModel& model)
{
    model.validate();
    Patch out = raw;
    out.range = RangeTag::unit;
    std::transform(raw.pixels.data.begin(), raw.pixels.data.end(), out.pixels.data.begin(),
                   [&](float v) { return static_cast<float>(normalize_intensity(v, model)); });
    return out;
}

bool is_empty_patch(const Image& unit, const EmptinessCriterion& criterion)
{
    if (unit.empty())
        return true;
    const auto bright = std::count_if(unit.data.begin(), unit.data.end(),
                                      [&](float v) { return v > criterion.pixel_floor; });
    return static_cast<double>(bright) < criterion.min_fraction * static_cast<double>(unit.size());
}

std::vector<Patch> extract_patches(const Image& slide, int patch_side, const IntensityModel& model,
                                   const EmptinessCriterion& criterion, const std::string& slide_id)
{
    if (patch_side < 1)
        throw std::invalid_argument("patch side must be positive");
    if (slide.width < patch_side || slide.height < patch_side)
        throw SlideTooSmall("slide " + std::to_string(slide.width) + "x" + std::to_string(slide.height) +
                            " is smaller than the patch side " + std::to_string(patch_side));
    model.validate();

    std::vector<Patch> out;
    const int nx = slide.width / patch_side;
    const int ny = slide.height / patch_side;
    for (int gy = 0; gy < ny; ++gy)
        for (int gx = 0; gx < nx; ++gx) {
            Patch p;
            p.pixels = Image(patch_side, patch_side);
            p.range = RangeTag::unit;
            p.slide_id = slide_id;
            p.grid_x = gx;
            p.grid_y = gy;
            for (int y = 0; y < patch_side; ++y)
                for (int x = 0; x < patch_side; ++x)
                    p.pixels.at(x, y) = static_cast<float>(
                        normalize_intensity(slide.at(gx * patch_side + x, gy * patch_side + y), model));
            if (!is_empty_patch(p.pixels, criterion))
                out.push_back(std::move(p));
        }
    return out;
}

namespace {

void finish(StainStats& s, std::uint64_t with_cells, std::uint64_t covered, std::uint64_t patches,
            std::uint64_t pixels)
{
    s.cells_per_patch = static_cast<double>(s.total_cells) / static_cast<double>(patches);
    s.presence_percent = 100.0 * static_cast<double>(with_cells) / static_cast<double>(patches);
    s.area_coverage_percent = pixels ? 100.0 * static_cast<double>(covered) / static_cast<double>(pixels) : 0.0;
}

}  // namespace

DatasetStats compute_dataset_stats(std::span<const MaskSet> masks)
{
    if (masks.empty())
        throw EmptyDataset("dataset statistics need at least one patch");

    DatasetStats st;
    st.patches = masks.size();
    std::uint64_t pixels = 0;
    std::uint64_t present[3] = {0, 0, 0};
    std::uint64_t covered[3] = {0, 0, 0};
    for (const auto& m : masks) {
        pixels += m.nuclei().size();
        const auto areas = m.areas();
        const std::size_t counts[3] = {static_cast<std::size_t>(m.count()), m.cd3_positive().size(),
                                       m.cd8_positive().size()};
        StainStats* stains[3] = {&st.hoechst, &st.cd3, &st.cd8};
        for (int s = 0; s < 3; ++s) {
            stains[s]->total_cells += counts[s];
            if (counts[s] > 0)
                ++present[s];
        }
        for (std::size_t k = 1; k < areas.size(); ++k)
            covered[0] += areas[k];
        for (int k : m.cd3_positive())
            covered[1] += areas[static_cast<std::size_t>(k)];
        for (int k : m.cd8_positive())
            covered[2] += areas[static_cast<std::size_t>(k)];
    }
    finish(st.hoechst, present[0], covered[0], st.patches, pixels);
    finish(st.cd3, present[1], covered[1], st.patches, pixels);
    finish(st.cd8, present[2], covered[2], st.patches, pixels);
    return st;
}

}  // namespace hgan
