#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "hgan/image.hpp"
#include "hgan/masks.hpp"
#include "hgan/synthdata.hpp"

namespace hgan {

/// One aligned (Hoechst, CD3, CD8) triple in unit range with its masks.
struct Sample {
    Image hoechst;
    Image cd3;
    Image cd8;
    MaskSet truth;
    std::string slide_id;
    int grid_x = 0;
    int grid_y = 0;
    Split split = Split::train;
};

struct Dataset {
    std::vector<Sample> samples;
    nlohmann::json provenance = nlohmann::json::object();  ///< e.g. generator parameters

    std::vector<std::size_t> indices(Split s) const;
    int side() const { return samples.empty() ? 0 : samples.front().hoechst.width; }
};

Dataset from_synthetic(const SynthDataset& synth);

/// Content hash (FNV-1a over pixels, labels, positives and split membership).
std::string fingerprint(const Dataset& data);

/// Directory layout: manifest.json (per-sample provenance, splits, positive
/// label sets), pixels.f32 (hoechst|cd3|cd8 per sample, little-endian float32)
/// and labels.i32 (nucleus labels per sample).
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace hgan
