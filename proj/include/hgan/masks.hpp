#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgan/image.hpp"

namespace hgan {

class InvalidLabels : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MissingPrerequisite : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Marker { cd3, cd8 };

std::string to_string(Marker m);
Marker parse_marker(const std::string& s);

using BinaryMask = Grid<std::uint8_t>;

/// Labeled nuclei plus the CD3+ and CD8+ label sets. Every constructor
/// establishes cd8_positive ⊆ cd3_positive ⊆ {1..K}: out-of-range labels are
/// dropped and CD8 labels without CD3 positivity are removed.
class MaskSet {
public:
    MaskSet() = default;
    /// nuclei must already be labeled contiguously 1..K, each label nonempty.
    explicit MaskSet(LabelImage nuclei);
    MaskSet(LabelImage nuclei, std::vector<int> cd3_positive, std::vector<int> cd8_positive);

    const LabelImage& nuclei() const { return nuclei_; }
    int count() const { return count_; }
    int width() const { return nuclei_.width; }
    int height() const { return nuclei_.height; }

    const std::vector<int>& cd3_positive() const { return cd3_; }
    const std::vector<int>& cd8_positive() const { return cd8_; }
    const std::vector<int>& positives(Marker m) const { return m == Marker::cd3 ? cd3_ : cd8_; }
    bool classified(Marker m) const { return m == Marker::cd3 ? cd3_classified_ : cd8_classified_; }
    bool is_positive(int label, Marker m) const;

    /// Pixel area of each label; index 0 is background.
    std::vector<std::size_t> areas() const;
    BinaryMask nucleus_mask() const;
    BinaryMask positive_mask(Marker m) const;

    /// Returns a copy whose positive set for m is replaced (subset rule re-applied).
    MaskSet with_positives(Marker m, std::vector<int> labels) const;

    bool invariant_holds() const;

private:
    void establish_invariant();

    LabelImage nuclei_;
    int count_ = 0;
    std::vector<int> cd3_;
    std::vector<int> cd8_;
    bool cd3_classified_ = false;
    bool cd8_classified_ = false;
};

/// Relabels arbitrary non-negative labels to 1..K in increasing order of the
/// original value; background stays 0.
MaskSet ingest_nucleus_mask(const LabelImage& labeled);

/// Thresholds a unit-range Hoechst patch (pixel > intensity_floor), labels
/// 4-connected components in raster order and drops those below min_area.
MaskSet label_blobs(const Image& hoechst, double intensity_floor = 0.2, int min_area = 10);

/// Mean channel intensity over each nucleus region.
std::vector<double> region_means(const MaskSet& mask, const Image& channel);

/// A nucleus is positive iff its mean channel intensity is >= threshold.
/// CD8 positives are intersected with the CD3 positives.
MaskSet classify_positive(const MaskSet& mask, const Image& channel, double threshold, Marker target);

}  // namespace hgan
