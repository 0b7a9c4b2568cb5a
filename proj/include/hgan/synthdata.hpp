#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgan/image.hpp"
#include "hgan/masks.hpp"

namespace hgan {

class PlacementFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientSlides : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SynthParams {
    int patch_side = 64;
    int n_cells_min = 10;  ///< cell count is drawn uniformly from [min, max]
    int n_cells_max = 14;
    double cd3_fraction = 0.4;
    double cd8_fraction_of_cd3 = 0.5;
    double nucleus_radius = 4.0;
    double radius_jitter = 0.5;  ///< radius drawn uniformly from radius +/- jitter
    double min_gap = 1.0;        ///< minimum pixel gap between nucleus disks
    /// Marker spots sit marker_offset pixels from the nucleus centre in a random
    /// direction, imitating membrane/cytoplasm vs. nucleus misalignment.
    double marker_offset = 2.0;
    double marker_radius_ratio = 0.6;
    double nucleus_amplitude = 0.5;
    double marker_amplitude = 0.9;
    /// T cells have smaller, denser nuclei so positivity is inferable from the
    /// Hoechst channel alone; CD8+ cells are the brightest.
    double tcell_radius_scale = 0.8;
    double cd3_hoechst_gain = 1.5;
    double cd8_hoechst_gain = 1.9;
    double background_level = 0.04;
    double background_noise_sigma = 0.02;
    int max_placement_attempts = 2000;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class CellClass { negative, cd3, cd3_cd8 };

struct SynthCell {
    double x = 0.0;
    double y = 0.0;
    double radius = 0.0;
    CellClass cls = CellClass::negative;
    int label = 0;
};

struct SynthTriplet {
    Patch hoechst;
    Patch cd3;
    Patch cd8;
    MaskSet truth;
    std::vector<SynthCell> cells;
};

/// Deterministic in params (including seed). Nuclei are labeled 1..K in
/// placement order; positives are exact choose-k subsets.
SynthTriplet generate_triplet(const SynthParams& params);

enum class Split { train, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct SplitSpec {
    int n_patches = 2000;
    int n_slides = 10;
    int n_train_slides = 8;
};

struct SynthSample {
    SynthTriplet triplet;
    int slide = 0;
    Split split = Split::train;
};

struct SynthDataset {
    SynthParams params;
    SplitSpec split;
    std::vector<int> train_slides;
    std::vector<SynthSample> samples;
};

/// Patches are grouped into contiguous pseudo-slides and the train/test split
/// is drawn at slide granularity. Each patch uses seed mix(params.seed, index).
SynthDataset generate_dataset(const SynthParams& params, const SplitSpec& split);

}  // namespace hgan
