#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hgan/dataset.hpp"
#include "hgan/masks.hpp"
#include "hgan/model.hpp"
#include "hgan/preprocess.hpp"

namespace hgan {

class EmptyMask : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FullMask : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateReal : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AllExcluded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyGrid : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Floor on the outside-mask mean (and on a real image's ratio in mir_rel).
constexpr double kMirEpsilon = 1e-6;

struct MirValue {
    double value = 0.0;
    bool floored = false;  ///< the outside-mask mean was below kMirEpsilon
};

/// Mean intensity inside the mask over mean intensity outside it.
MirValue mir_checked(const Image& unit, const BinaryMask& mask);
double mir(const Image& unit, const BinaryMask& mask);
/// mir(fake) / mir(real); throws DegenerateReal when mir(real) < kMirEpsilon.
double mir_rel(const Image& fake, const Image& real, const BinaryMask& mask);

enum class Exclusion { none, empty_mask, full_mask, degenerate_real };
std::string to_string(Exclusion e);

struct MirRecord {
    std::size_t patch = 0;  ///< sample index in the dataset
    std::string slide_id;
    Marker stain = Marker::cd3;
    Split split = Split::test;
    double mir_fake = 0.0;
    double mir_real = 0.0;
    double mir_rel = 0.0;
    Exclusion excluded = Exclusion::none;
    bool floored = false;
};

/// Scores one stain of one patch; metric errors become exclusions.
MirRecord score_patch(const Image& fake, const Image& real, const BinaryMask& mask);

/// Mergeable per-group accumulator (count, mean, squared deviations, exclusions).
class MirStats {
public:
    void add(double v);
    void exclude(Exclusion reason);
    void merge(const MirStats& other);

    std::size_t count() const { return n_; }
    std::size_t excluded_count() const;
    double mean() const { return mean_; }
    double stddev() const;  ///< population estimator
    const std::map<Exclusion, std::size_t>& exclusions() const { return excluded_; }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
    std::map<Exclusion, std::size_t> excluded_;
};

struct MirAggregate {
    Marker stain = Marker::cd3;
    Split split = Split::test;
    std::size_t count = 0;
    std::size_t excluded_count = 0;
    double mean = 0.0;
    double std = 0.0;
    std::map<std::string, std::size_t> exclusions;  ///< by reason
};

/// Groups records by stain x split (CD3 before CD8, train before test).
/// Throws AllExcluded when a group has no scorable record.
std::vector<MirAggregate> aggregate_mir(std::span<const MirRecord> records);

struct MirReport {
    std::vector<MirRecord> records;
    std::vector<MirAggregate> aggregates;

    const MirAggregate& find(Marker stain, Split split) const;
};

nlohmann::json to_json(const MirRecord& r);
nlohmann::json to_json(const MirAggregate& a);
/// Aligned text table of the aggregates (mean ± std, counts).
std::string format_table(std::span<const MirAggregate> aggregates);
/// Writes <stem>.records.jsonl and <stem>.summary.json.
void write_report(const MirReport& report, const std::filesystem::path& dir, const std::string& stem);

/// What encoder e2 receives when CD8 is generated.
enum class CodeMode { generated, matched_real, shuffled_real, gaussian_noise };
std::string to_string(CodeMode m);
CodeMode parse_code_mode(const std::string& s);
std::vector<CodeMode> all_code_modes();

struct InferenceOptions {
    std::size_t batch_size = 16;
    std::uint64_t dropout_root = 0;  ///< batch k uses mix_seed(dropout_root, k)
    std::uint64_t ablation_seed = 0;
    CodeMode mode = CodeMode::generated;
};

/// Generated stains of one sample in unit range.
struct GeneratedStains {
    Image cd3;
    Image cd8;
};

/// Runs the generator in inference mode (running batch-norm statistics,
/// dropout active with seeded masks) over the given samples.
std::vector<GeneratedStains> generate_stains(Generator<float>& g, const Dataset& data,
                                             std::span<const std::size_t> indices, const InferenceOptions& options);

/// MIR records for both stains of every listed sample.
MirReport score_stains(const Dataset& data, std::span<const std::size_t> indices,
                       std::span<const GeneratedStains> generated);

/// Standard evaluation of one split (e2 fed the generated CD3).
MirReport evaluate(Generator<float>& g, const Dataset& data, Split split, InferenceOptions options);

/// Mean absolute error between generated and real stains (unit range).
struct StainL1 {
    double cd3 = 0.0;
    double cd8 = 0.0;
};

/// Validation L1 of one split under the same inference mode as evaluate().
StainL1 mean_absolute_error(Generator<float>& g, const Dataset& data, Split split, const InferenceOptions& options);

/// Evaluation with e2's input replaced per mode; throws NotMutual otherwise.
MirReport ablate_encoder_input(Generator<float>& g, const Dataset& data, Split split, CodeMode mode,
                               InferenceOptions options);

/// One row of a result grid: a sample, its generated stains and MIR_rel per stain.
struct GridRow {
    const Sample* sample = nullptr;
    const GeneratedStains* generated = nullptr;
};

struct GridFigure {
    int rows = 0;
    int image_columns = 6;  ///< Hoechst | cell mask | real CD3 | fake CD3 | real CD8 | fake CD8
    int tile = 0;
    int width = 0;
    int height = 0;
    std::vector<std::string> annotations;  ///< per row, lines joined by '\n'
};

/// Renders rows plus an annotation column to a raster image. Mask colours:
/// white = negative nucleus, blue = CD3+, red = CD3+CD8+.
GridFigure render_grid(std::span<const GridRow> rows, const std::filesystem::path& out, int tile = 128);

struct HistogramFigure {
    double lo = 0.0;  ///< histogram range
    double hi = 0.0;
    int bins = 0;
    std::vector<std::size_t> counts;
    double mu_marker = 0.0;     ///< vertical markers in data units
    double upper_marker = 0.0;  ///< mu + 3 sigma
    int width = 0;
    int height = 0;
};

/// Histogram of intensities with the fitted normal density (right axis) and
/// markers at mu and mu + 3 sigma.
HistogramFigure plot_intensity_histogram(std::span<const double> samples, const IntensityModel& model,
                                         const std::filesystem::path& out, int bins = 64);

}  // namespace hgan
