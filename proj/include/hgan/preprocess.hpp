#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgan/image.hpp"

namespace hgan {

class DegenerateSamples : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SlideTooSmall : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyDataset : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Gaussian fit of a slide's foreground intensity histogram.
struct IntensityModel {
    double mu = 0.0;
    double sigma = 1.0;
    std::uint64_t sample_count = 0;

    void validate() const;
};

/// Mergeable sufficient statistics (count, mean, sum of squared deviations),
/// so slides can be fitted tile by tile.
class IntensityAccumulator {
public:
    void add(double x);
    void add(std::span<const float> xs, double floor);
    void merge(const IntensityAccumulator& other);

    std::uint64_t count() const { return n_; }
    /// Maximum-likelihood fit: sample mean and population standard deviation.
    IntensityModel model() const;

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

IntensityModel fit_intensity_model(std::span<const double> samples);
/// Fits over pixels strictly above floor, dropping the near-zero background peak.
IntensityModel fit_intensity_model(const Image& slide, double floor = 0.0);

/// min(1, max(0, (x - mu) / (3 sigma))).
double normalize_intensity(double x, const IntensityModel& model);
Patch normalize_patch(const Patch& raw, const IntensityModel& model);

struct EmptinessCriterion {
    double pixel_floor = 0.05;   ///< on the normalized scale
    double min_fraction = 0.01;  ///< patches with fewer bright pixels are empty
};

bool is_empty_patch(const Image& unit, const EmptinessCriterion& criterion);

/// Non-overlapping grid anchored at the origin; the right/bottom remainder is
/// dropped. Emitted patches are normalized with model and tagged unit.
std::vector<Patch> extract_patches(const Image& slide, int patch_side, const IntensityModel& model,
                                   const EmptinessCriterion& criterion = {}, const std::string& slide_id = "slide");

class MaskSet;

struct StainStats {
    std::uint64_t total_cells = 0;
    double cells_per_patch = 0.0;
    double presence_percent = 0.0;
    double area_coverage_percent = 0.0;
};

struct DatasetStats {
    std::uint64_t patches = 0;
    StainStats hoechst;
    StainStats cd3;
    StainStats cd8;
};

DatasetStats compute_dataset_stats(std::span<const MaskSet> masks);

}  // namespace hgan
