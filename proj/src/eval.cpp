#include "hgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hgan/config.hpp"
#include "hgan/rng.hpp"
#include "hgan/train.hpp"

namespace hgan {

// ---------------------------------------------------------------------------
// Metric

MirValue mir_checked(const Image& unit, const BinaryMask& mask)
{
    if (unit.width != mask.width || unit.height != mask.height)
        throw ShapeMismatch("mir: mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                            ", image is " + std::to_string(unit.width) + "x" + std::to_string(unit.height));
    double in_sum = 0.0;
    double out_sum = 0.0;
    std::size_t in_n = 0;
    for (std::size_t i = 0; i < unit.size(); ++i) {
        if (mask.data[i]) {
            in_sum += unit.data[i];
            ++in_n;
        } else {
            out_sum += unit.data[i];
        }
    }
    const std::size_t out_n = unit.size() - in_n;
    if (in_n == 0)
        throw EmptyMask("mir: mask has no positive pixels");
    if (out_n == 0)
        throw FullMask("mir: mask covers every pixel");
    const double inside = in_sum / static_cast<double>(in_n);
    const double outside = out_sum / static_cast<double>(out_n);
    MirValue v;
    v.floored = outside < kMirEpsilon;
    v.value = inside / std::max(outside, kMirEpsilon);
    return v;
}

double mir(const Image& unit, const BinaryMask& mask) { return mir_checked(unit, mask).value; }

double mir_rel(const Image& fake, const Image& real, const BinaryMask& mask)
{
    const double r = mir(real, mask);
    if (r < kMirEpsilon)
        throw DegenerateReal("mir_rel: ground-truth MIR " + std::to_string(r) + " is below the floor");
    return mir(fake, mask) / r;
}

std::string to_string(Exclusion e)
{
    switch (e) {
    case Exclusion::none:
        return "none";
    case Exclusion::empty_mask:
        return "empty_mask";
    case Exclusion::full_mask:
        return "full_mask";
    case Exclusion::degenerate_real:
        return "degenerate_real";
    }
    return "?";
}

MirRecord score_patch(const Image& fake, const Image& real, const BinaryMask& mask)
{
    MirRecord r;
    try {
        const MirValue mr = mir_checked(real, mask);
        const MirValue mf = mir_checked(fake, mask);
        r.mir_real = mr.value;
        r.mir_fake = mf.value;
        r.floored = mr.floored || mf.floored;
        if (mr.value < kMirEpsilon)
            r.excluded = Exclusion::degenerate_real;
        else
            r.mir_rel = mf.value / mr.value;
    } catch (const EmptyMask&) {
        r.excluded = Exclusion::empty_mask;
    } catch (const FullMask&) {
        r.excluded = Exclusion::full_mask;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Aggregation

void MirStats::add(double v)
{
    ++n_;
    const double d = v - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (v - mean_);
}

void MirStats::exclude(Exclusion reason) { ++excluded_[reason]; }

void MirStats::merge(const MirStats& o)
{
    for (const auto& [k, v] : o.excluded_)
        excluded_[k] += v;
    if (o.n_ == 0)
        return;
    if (n_ == 0) {
        n_ = o.n_;
        mean_ = o.mean_;
        m2_ = o.m2_;
        return;
    }
    const double n = static_cast<double>(n_ + o.n_);
    const double d = o.mean_ - mean_;
    mean_ += d * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
}

std::size_t MirStats::excluded_count() const
{
    std::size_t s = 0;
    for (const auto& [k, v] : excluded_)
        s += v;
    return s;
}

double MirStats::stddev() const { return n_ == 0 ? 0.0 : std::sqrt(std::max(0.0, m2_ / static_cast<double>(n_))); }

std::vector<MirAggregate> aggregate_mir(std::span<const MirRecord> records)
{
    std::map<std::pair<int, int>, MirStats> groups;
    for (const auto& r : records) {
        auto& g = groups[{static_cast<int>(r.stain), r.split == Split::train ? 0 : 1}];
        if (r.excluded == Exclusion::none)
            g.add(r.mir_rel);
        else
            g.exclude(r.excluded);
    }
    std::vector<MirAggregate> out;
    for (const auto& [key, g] : groups) {
        MirAggregate a;
        a.stain = static_cast<Marker>(key.first);
        a.split = key.second == 0 ? Split::train : Split::test;
        if (g.count() == 0)
            throw AllExcluded("every " + to_string(a.stain) + " record of the " + to_string(a.split) +
                              " split is excluded");
        a.count = g.count();
        a.excluded_count = g.excluded_count();
        a.mean = g.mean();
        a.std = g.stddev();
        for (const auto& [reason, n] : g.exclusions())
            a.exclusions[to_string(reason)] = n;
        out.push_back(std::move(a));
    }
    return out;
}

const MirAggregate& MirReport::find(Marker stain, Split split) const
{
    for (const auto& a : aggregates)
        if (a.stain == stain && a.split == split)
            return a;
    throw std::out_of_range("no " + to_string(stain) + "/" + to_string(split) + " aggregate in report");
}

nlohmann::json to_json(const MirRecord& r)
{
    Json j{{"patch", r.patch},
           {"slide_id", r.slide_id},
           {"stain", to_string(r.stain)},
           {"split", to_string(r.split)},
           {"excluded", r.excluded == Exclusion::none ? Json(nullptr) : Json(to_string(r.excluded))},
           {"floored", r.floored}};
    if (r.excluded != Exclusion::empty_mask && r.excluded != Exclusion::full_mask) {
        j["mir_fake"] = r.mir_fake;
        j["mir_real"] = r.mir_real;
    }
    if (r.excluded == Exclusion::none)
        j["mir_rel"] = r.mir_rel;
    return j;
}

nlohmann::json to_json(const MirAggregate& a)
{
    return Json{{"stain", to_string(a.stain)},
                {"split", to_string(a.split)},
                {"mean", a.mean},
                {"std", a.std},
                {"count", a.count},
                {"excluded_count", a.excluded_count},
                {"exclusions", a.exclusions}};
}

std::string format_table(std::span<const MirAggregate> aggregates)
{
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-6s %-6s %18s %7s %9s\n", "stain", "split", "MIR_rel mean±std", "count",
                  "excluded");
    os << line;
    for (const auto& a : aggregates) {
        char cell[40];
        std::snprintf(cell, sizeof cell, "%.3f ± %.3f", a.mean, a.std);
        std::snprintf(line, sizeof line, "%-6s %-6s %18s %7zu %9zu\n", to_string(a.stain).c_str(),
                      to_string(a.split).c_str(), cell, a.count, a.excluded_count);
        os << line;
    }
    return os.str();
}

void write_report(const MirReport& report, const std::filesystem::path& dir, const std::string& stem)
{
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / (stem + ".records.jsonl"));
        if (!out)
            throw std::runtime_error("cannot write " + (dir / (stem + ".records.jsonl")).string());
        for (const auto& r : report.records)
            out << to_json(r).dump() << '\n';
    }
    Json summary = Json::array();
    for (const auto& a : report.aggregates)
        summary.push_back(to_json(a));
    write_json_atomic(dir / (stem + ".summary.json"), Json{{"aggregates", summary}});
}

// ---------------------------------------------------------------------------
// Inference

std::string to_string(CodeMode m)
{
    switch (m) {
    case CodeMode::generated:
        return "generated";
    case CodeMode::matched_real:
        return "matched_real";
    case CodeMode::shuffled_real:
        return "shuffled_real";
    case CodeMode::gaussian_noise:
        return "gaussian_noise";
    }
    return "?";
}

CodeMode parse_code_mode(const std::string& s)
{
    for (CodeMode m : all_code_modes())
        if (to_string(m) == s)
            return m;
    throw std::invalid_argument("unknown encoder-input mode '" + s +
                                "' (expected generated, matched_real, shuffled_real or gaussian_noise)");
}

std::vector<CodeMode> all_code_modes()
{
    return {CodeMode::generated, CodeMode::matched_real, CodeMode::shuffled_real, CodeMode::gaussian_noise};
}

namespace {

/// Permutation of positions 0..n-1 without fixed points (for n >= 2).
std::vector<std::size_t> shuffled_partners(std::size_t n, std::uint64_t seed)
{
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "shuffled_real"));
    std::shuffle(p.begin(), p.end(), rng);
    if (n >= 2)
        for (std::size_t i = 0; i < n; ++i)
            if (p[i] == i)
                std::swap(p[i], p[(i + 1) % n]);
    return p;
}

Image unit_plane(const Tensor<float>& t, int n)
{
    Image out(t.width(), t.height());
    const std::size_t plane = static_cast<std::size_t>(t.width()) * t.height();
    const float* src = t.data() + static_cast<std::size_t>(n) * plane;
    for (std::size_t i = 0; i < plane; ++i)
        out.data[i] = std::clamp(0.5f * (src[i] + 1.0f), 0.0f, 1.0f);
    return out;
}

}  // namespace

std::vector<GeneratedStains> generate_stains(Generator<float>& g, const Dataset& data,
                                             std::span<const std::size_t> indices, const InferenceOptions& options)
{
    if (options.batch_size == 0)
        throw std::invalid_argument("inference batch size must be positive");
    if (options.mode != CodeMode::generated && !g.spec().mutual())
        throw NotMutual("encoder-input substitution needs a mutual generator");
    const auto partners = shuffled_partners(indices.size(), options.ablation_seed);
    const std::uint64_t noise_seed = derive_seed(options.ablation_seed, "gaussian_noise");

    std::vector<GeneratedStains> out;
    out.reserve(indices.size());
    for (std::size_t start = 0, k = 0; start < indices.size(); start += options.batch_size, ++k) {
        const std::size_t end = std::min(indices.size(), start + options.batch_size);
        const auto chunk = indices.subspan(start, end - start);
        const Batch b = make_batch(data.samples, chunk);

        Tensor<float> substitute;
        switch (options.mode) {
        case CodeMode::generated:
            break;
        case CodeMode::matched_real:
            substitute = b.y1;
            break;
        case CodeMode::shuffled_real: {
            std::vector<std::size_t> other;
            for (std::size_t i = start; i < end; ++i)
                other.push_back(indices[partners[i]]);
            substitute = make_batch(data.samples, other).y1;
            break;
        }
        case CodeMode::gaussian_noise: {
            substitute = Tensor<float>(b.y1.shape());
            const std::size_t plane = static_cast<std::size_t>(b.y1.width()) * b.y1.height();
            for (std::size_t i = 0; i < chunk.size(); ++i) {
                Rng rng(mix_seed(noise_seed, chunk[i]));
                std::normal_distribution<double> normal(0.0, 1.0);
                float* dst = substitute.data() + i * plane;
                for (std::size_t p = 0; p < plane; ++p)
                    dst[p] = static_cast<float>(std::clamp(normal(rng), -1.0, 1.0));
            }
            break;
        }
        }
        const auto code = options.mode == CodeMode::generated ? CodeInput<float>::generated()
                                                              : CodeInput<float>::provided(substitute);
        const auto pass = g.forward(b.x, code, false, mix_seed(options.dropout_root, k));
        for (int n = 0; n < static_cast<int>(chunk.size()); ++n)
            out.push_back({unit_plane(pass.cd3(), n), unit_plane(pass.cd8(), n)});
    }
    return out;
}

MirReport score_stains(const Dataset& data, std::span<const std::size_t> indices,
                       std::span<const GeneratedStains> generated)
{
    if (generated.size() != indices.size())
        throw std::invalid_argument("score_stains: one generated pair per sample expected");
    MirReport report;
    report.records.resize(2 * indices.size());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(indices.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const Sample& s = data.samples[indices[static_cast<std::size_t>(i)]];
        const GeneratedStains& gen = generated[static_cast<std::size_t>(i)];
        for (int k = 0; k < 2; ++k) {
            const Marker m = k == 0 ? Marker::cd3 : Marker::cd8;
            MirRecord r = score_patch(k == 0 ? gen.cd3 : gen.cd8, k == 0 ? s.cd3 : s.cd8, s.truth.positive_mask(m));
            r.patch = indices[static_cast<std::size_t>(i)];
            r.slide_id = s.slide_id;
            r.stain = m;
            r.split = s.split;
            report.records[2 * static_cast<std::size_t>(i) + static_cast<std::size_t>(k)] = std::move(r);
        }
    }
    report.aggregates = aggregate_mir(report.records);
    return report;
}

MirReport evaluate(Generator<float>& g, const Dataset& data, Split split, InferenceOptions options)
{
    options.mode = CodeMode::generated;
    const auto idx = data.indices(split);
    if (idx.empty())
        throw EmptyDataset("the " + to_string(split) + " split is empty");
    const auto gen = generate_stains(g, data, idx, options);
    return score_stains(data, idx, gen);
}

StainL1 mean_absolute_error(Generator<float>& g, const Dataset& data, Split split, const InferenceOptions& options)
{
    auto opts = options;
    opts.mode = CodeMode::generated;
    const auto idx = data.indices(split);
    if (idx.empty())
        throw EmptyDataset("the " + to_string(split) + " split is empty");
    const auto gen = generate_stains(g, data, idx, opts);
    double cd3 = 0.0, cd8 = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Sample& s = data.samples[idx[i]];
        for (std::size_t p = 0; p < s.cd3.size(); ++p) {
            cd3 += std::abs(static_cast<double>(gen[i].cd3.data[p]) - s.cd3.data[p]);
            cd8 += std::abs(static_cast<double>(gen[i].cd8.data[p]) - s.cd8.data[p]);
        }
        n += s.cd3.size();
    }
    return {cd3 / static_cast<double>(n), cd8 / static_cast<double>(n)};
}

MirReport ablate_encoder_input(Generator<float>& g, const Dataset& data, Split split, CodeMode mode,
                               InferenceOptions options)
{
    if (!g.spec().mutual())
        throw NotMutual("the encoder-input ablation needs a mutual generator");
    options.mode = mode;
    const auto idx = data.indices(split);
    if (idx.empty())
        throw EmptyDataset("the " + to_string(split) + " split is empty");
    const auto gen = generate_stains(g, data, idx, options);
    return score_stains(data, idx, gen);
}

// ---------------------------------------------------------------------------
// Figures

namespace {

cv::Mat grey_tile(const Image& unit, int tile)
{
    cv::Mat m(unit.height, unit.width, CV_8UC3);
    for (int y = 0; y < unit.height; ++y)
        for (int x = 0; x < unit.width; ++x) {
            const auto v = static_cast<std::uint8_t>(std::clamp(std::lround(unit.at(x, y) * 255.0f), 0L, 255L));
            m.at<cv::Vec3b>(y, x) = {v, v, v};
        }
    cv::Mat out;
    cv::resize(m, out, {tile, tile}, 0, 0, cv::INTER_NEAREST);
    return out;
}

cv::Mat mask_tile(const MaskSet& truth, int tile)
{
    cv::Mat m(truth.height(), truth.width(), CV_8UC3, cv::Scalar(0, 0, 0));
    for (int y = 0; y < truth.height(); ++y)
        for (int x = 0; x < truth.width(); ++x) {
            const int l = truth.nuclei().at(x, y);
            if (l == 0)
                continue;
            cv::Vec3b c{255, 255, 255};  // BGR
            if (truth.is_positive(l, Marker::cd8))
                c = {0, 0, 255};
            else if (truth.is_positive(l, Marker::cd3))
                c = {255, 0, 0};
            m.at<cv::Vec3b>(y, x) = c;
        }
    cv::Mat out;
    cv::resize(m, out, {tile, tile}, 0, 0, cv::INTER_NEAREST);
    return out;
}

std::string annotate(const MirRecord& r, Marker m)
{
    const std::string name = m == Marker::cd3 ? "CD3" : "CD8";
    char buf[64];
    switch (r.excluded) {
    case Exclusion::none:
        std::snprintf(buf, sizeof buf, "%s MIR_rel %.2f", name.c_str(), r.mir_rel);
        return buf;
    case Exclusion::empty_mask:
        return "no " + name + "+ cells";
    case Exclusion::full_mask:
        return name + ": mask covers patch";
    case Exclusion::degenerate_real:
        return name + ": degenerate real";
    }
    return name;
}

}  // namespace

GridFigure render_grid(std::span<const GridRow> rows, const std::filesystem::path& out, int tile)
{
    if (rows.empty())
        throw EmptyGrid("render_grid: no samples to render");
    if (tile < 16)
        throw std::invalid_argument("render_grid: tile side must be at least 16 pixels");
    GridFigure fig;
    fig.rows = static_cast<int>(rows.size());
    fig.tile = tile;
    const int header = 28;
    const int annotation_width = std::max(2 * tile, 160);
    const double title_scale = std::min(0.45, tile / 170.0);
    fig.width = fig.image_columns * tile + annotation_width;
    fig.height = header + fig.rows * tile;
    cv::Mat canvas(fig.height, fig.width, CV_8UC3, cv::Scalar(32, 32, 32));

    const char* titles[] = {"Hoechst", "cell mask", "real CD3", "fake CD3", "real CD8", "fake CD8", "MIR_rel"};
    for (int c = 0; c < 7; ++c)
        cv::putText(canvas, titles[c], {c * tile + 3, header - 9}, cv::FONT_HERSHEY_SIMPLEX, title_scale,
                    cv::Scalar(230, 230, 230), 1, cv::LINE_AA);

    for (int r = 0; r < fig.rows; ++r) {
        const GridRow& row = rows[static_cast<std::size_t>(r)];
        if (!row.sample || !row.generated)
            throw std::invalid_argument("render_grid: row without sample or generated stains");
        const Sample& s = *row.sample;
        const cv::Mat tiles[] = {grey_tile(s.hoechst, tile),          mask_tile(s.truth, tile),
                                 grey_tile(s.cd3, tile),              grey_tile(row.generated->cd3, tile),
                                 grey_tile(s.cd8, tile),              grey_tile(row.generated->cd8, tile)};
        for (int c = 0; c < fig.image_columns; ++c)
            tiles[c].copyTo(canvas(cv::Rect(c * tile, header + r * tile, tile, tile)));

        const auto r3 = score_patch(row.generated->cd3, s.cd3, s.truth.positive_mask(Marker::cd3));
        const auto r8 = score_patch(row.generated->cd8, s.cd8, s.truth.positive_mask(Marker::cd8));
        const std::string lines[] = {annotate(r3, Marker::cd3), annotate(r8, Marker::cd8)};
        fig.annotations.push_back(lines[0] + "\n" + lines[1]);
        for (int k = 0; k < 2; ++k)
            cv::putText(canvas, lines[k], {fig.image_columns * tile + 6, header + r * tile + 22 + 20 * k},
                        cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(230, 230, 230), 1, cv::LINE_AA);
    }
    if (out.has_parent_path())
        std::filesystem::create_directories(out.parent_path());
    if (!cv::imwrite(out.string(), canvas))
        throw std::runtime_error("cannot write " + out.string());
    return fig;
}

HistogramFigure plot_intensity_histogram(std::span<const double> samples, const IntensityModel& model,
                                         const std::filesystem::path& out, int bins)
{
    if (samples.empty())
        throw std::invalid_argument("plot_intensity_histogram: no samples");
    if (bins < 1)
        throw std::invalid_argument("plot_intensity_histogram: bins must be positive");
    model.validate();
    HistogramFigure fig;
    fig.bins = bins;
    fig.mu_marker = model.mu;
    fig.upper_marker = model.mu + 3.0 * model.sigma;

    // Range: the fitted window plus the bulk of the data (the extreme
    // 0.1% tail is folded into the edge bins).
    std::vector<double> sorted(samples.begin(), samples.end());
    const auto q = [&](double p) {
        const auto k = static_cast<std::size_t>(p * static_cast<double>(sorted.size() - 1));
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
        return sorted[k];
    };
    fig.lo = std::min(q(0.001), model.mu - 4.0 * model.sigma);
    fig.hi = std::max(q(0.999), model.mu + 4.0 * model.sigma);
    const double width = (fig.hi - fig.lo) / bins;
    fig.counts.assign(static_cast<std::size_t>(bins), 0);
    for (double v : samples) {
        const int b = std::clamp(static_cast<int>(std::floor((v - fig.lo) / width)), 0, bins - 1);
        ++fig.counts[static_cast<std::size_t>(b)];
    }

    fig.width = 720;
    fig.height = 420;
    const int left = 60, right = 60, top = 30, bottom = 50;
    const int pw = fig.width - left - right;
    const int ph = fig.height - top - bottom;
    cv::Mat canvas(fig.height, fig.width, CV_8UC3, cv::Scalar(255, 255, 255));
    const auto xpix = [&](double v) { return left + static_cast<int>(std::lround((v - fig.lo) / (fig.hi - fig.lo) * pw)); };
    const std::size_t max_count = *std::max_element(fig.counts.begin(), fig.counts.end());
    for (int b = 0; b < bins; ++b) {
        const int h = static_cast<int>(std::lround(static_cast<double>(fig.counts[static_cast<std::size_t>(b)]) /
                                                   static_cast<double>(std::max<std::size_t>(max_count, 1)) * ph));
        const int x0 = xpix(fig.lo + b * width);
        const int x1 = std::max(x0 + 1, xpix(fig.lo + (b + 1) * width) - 1);
        cv::rectangle(canvas, {x0, top + ph - h}, {x1, top + ph}, cv::Scalar(170, 170, 170), cv::FILLED);
    }
    // Fitted density on its own (right) axis, peak at full height.
    std::vector<cv::Point> curve;
    for (int px = 0; px <= pw; ++px) {
        const double v = fig.lo + (fig.hi - fig.lo) * px / pw;
        const double z = (v - model.mu) / model.sigma;
        curve.emplace_back(left + px, top + ph - static_cast<int>(std::lround(std::exp(-0.5 * z * z) * ph)));
    }
    cv::polylines(canvas, curve, false, cv::Scalar(200, 80, 0), 2, cv::LINE_AA);
    for (double m : {fig.mu_marker, fig.upper_marker})
        cv::line(canvas, {xpix(m), top}, {xpix(m), top + ph}, cv::Scalar(0, 0, 220), 2, cv::LINE_AA);
    cv::rectangle(canvas, {left, top}, {left + pw, top + ph}, cv::Scalar(0, 0, 0), 1);

    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", fig.lo);
    cv::putText(canvas, buf, {left - 10, top + ph + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1);
    std::snprintf(buf, sizeof buf, "%.4g", fig.hi);
    cv::putText(canvas, buf, {left + pw - 30, top + ph + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1);
    cv::putText(canvas, "mu", {xpix(fig.mu_marker) + 4, top + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(0, 0, 220), 1);
    cv::putText(canvas, "mu+3sigma", {xpix(fig.upper_marker) + 4, top + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(0, 0, 220), 1);
    cv::putText(canvas, "intensity", {left + pw / 2 - 30, fig.height - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
                cv::Scalar(0, 0, 0), 1);
    cv::putText(canvas, "count", {6, top + 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(90, 90, 90), 1);
    cv::putText(canvas, "density", {left + pw + 4, top + 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(200, 80, 0), 1);

    if (out.has_parent_path())
        std::filesystem::create_directories(out.parent_path());
    if (!cv::imwrite(out.string(), canvas))
        throw std::runtime_error("cannot write " + out.string());
    return fig;
}

}  // namespace hgan
